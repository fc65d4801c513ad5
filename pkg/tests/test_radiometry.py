import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from hdrvgan.radiometry import (
    InvalidParameterError,
    LDRFrame,
    LinearHDRFrame,
    NoiseSpec,
    TonemappedFrame,
    add_noise,
    inverse_tonemap,
    linearize_ldr,
    mu_law,
    simulate_ldr,
    tonemap,
)

# mpmath, 30 digits: 0.25 ** (1 / 2.2) and log(2501) / log(5001)
EXPOSE_QUARTER = 0.532520544719981339
TONEMAP_HALF = 0.918643271879646331


def hdr(value, shape=(4, 4)):
    return LinearHDRFrame(np.full(shape + (3,), value, dtype=np.float32))


@pytest.mark.parametrize("value,expected", [(1.0, 1.0), (2.0, 1.0), (0.25, EXPOSE_QUARTER), (0.0, 0.0)])
def test_simulate_ldr_values(value, expected):
    out = simulate_ldr(hdr(value), 1.0, 2.2)
    np.testing.assert_allclose(out.data, expected, rtol=1e-6)
    assert out.exposure_time == 1.0


@pytest.mark.parametrize("t,gamma", [(0.0, 2.2), (-1.0, 2.2), (1.0, 0.0), (1.0, -2.0)])
def test_simulate_ldr_rejects_bad_parameters(t, gamma):
    with pytest.raises(InvalidParameterError):
        simulate_ldr(hdr(0.5), t, gamma)


def test_linearize_ldr_values():
    zero = LDRFrame(np.zeros((2, 2, 3)), exposure_time=8.0)
    assert np.all(linearize_ldr(zero).data == 0)
    one = LDRFrame(np.ones((2, 2, 3)), exposure_time=1.0)
    np.testing.assert_allclose(linearize_ldr(one).data, 1.0)
    back = linearize_ldr(simulate_ldr(hdr(0.25), 1.0))
    np.testing.assert_allclose(back.data, 0.25, atol=1e-6)


def test_linearize_is_lower_bound_on_clipped_pixels():
    h = hdr(0.5)
    back = linearize_ldr(simulate_ldr(h, 8.0))
    assert np.all(back.data <= h.data)


@settings(max_examples=50, deadline=None)
@given(st.floats(1.0, 64.0), st.integers(0, 10_000))
def test_round_trip_on_unclipped_pixels(t, seed):
    rng = np.random.default_rng(seed)
    h = LinearHDRFrame(rng.uniform(0, 1.0 / t, size=(8, 8, 3)))
    back = linearize_ldr(simulate_ldr(h, t))
    np.testing.assert_allclose(back.data, h.data, atol=1e-6)


def test_clip_is_idempotent():
    rng = np.random.default_rng(1)
    h = LinearHDRFrame(rng.uniform(0, 3, size=(8, 8, 3)))
    once = simulate_ldr(h, 1.0)
    twice = simulate_ldr(linearize_ldr(once), 1.0)
    np.testing.assert_allclose(twice.data, once.data, atol=1e-6)


def test_zero_noise_is_identity():
    ldr = simulate_ldr(hdr(0.3), 1.0)
    out = add_noise(ldr, NoiseSpec(0.0, (0.0, 0.0), seed=3))
    np.testing.assert_array_equal(out.data, ldr.data)


def test_noise_is_deterministic_under_seed():
    ldr = simulate_ldr(hdr(0.3, (16, 16)), 1.0)
    spec = NoiseSpec(0.0, (0.01, 0.05), seed=7)
    a, b = add_noise(ldr, spec), add_noise(ldr, spec)
    np.testing.assert_array_equal(a.data, b.data)
    c = add_noise(ldr, NoiseSpec(0.0, (0.01, 0.05), seed=8))
    assert not np.array_equal(a.data, c.data)


def test_noise_moment():
    ldr = LDRFrame(np.full((128, 128, 3), 0.5), exposure_time=1.0)
    out = add_noise(ldr, NoiseSpec(0.0, (0.03, 0.03), seed=0))
    std = float(np.std(out.data.astype(np.float64) - 0.5))
    assert abs(std - 0.03) < 0.003
    assert out.data.min() >= 0 and out.data.max() <= 1


def test_noise_spec_validates_range():
    with pytest.raises(InvalidParameterError):
        NoiseSpec(sigma_range=(0.05, 0.01))
    with pytest.raises(InvalidParameterError):
        NoiseSpec(sigma_range=(-0.1, 0.01))


def test_tonemap_values():
    assert np.all(tonemap(hdr(0.0)).data == 0)
    np.testing.assert_allclose(tonemap(hdr(1.0), 5000).data, 1.0, atol=1e-7)
    np.testing.assert_allclose(tonemap(hdr(0.5), 5000).data, TONEMAP_HALF, rtol=1e-6)


def test_tonemap_rejects_bad_mu():
    with pytest.raises(InvalidParameterError):
        tonemap(hdr(0.5), 0.0)
    with pytest.raises(InvalidParameterError):
        tonemap(hdr(0.5), -3.0)


def test_inverse_tonemap_endpoints_and_round_trip():
    assert np.all(inverse_tonemap(TonemappedFrame(np.zeros((2, 2, 3)))).data == 0)
    np.testing.assert_allclose(inverse_tonemap(TonemappedFrame(np.ones((2, 2, 3)))).data, 1.0, rtol=1e-6)
    rng = np.random.default_rng(0)
    t = TonemappedFrame(rng.uniform(0, 1, size=(32, 32, 3)), mu=5000)
    back = tonemap(inverse_tonemap(t), 5000)
    assert np.max(np.abs(back.data - t.data)) < 1e-6


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(1e-2, 1e5))
def test_tonemap_monotone(a, b, mu):
    lo, hi = min(a, b), max(a, b)
    if hi - lo < 1e-9:
        return
    # float64 check of the array-level transform
    assert mu_law(np.float64(lo), mu) < mu_law(np.float64(hi), mu)


def test_mu_law_torch_matches_numpy():
    x = np.linspace(0, 1, 17)
    np.testing.assert_allclose(mu_law(torch.from_numpy(x)).numpy(), mu_law(x), rtol=1e-12)


def test_frame_validation():
    with pytest.raises(ValueError):
        LinearHDRFrame(np.full((2, 2, 3), -1.0))
    with pytest.raises(ValueError):
        LinearHDRFrame(np.full((2, 2, 3), np.nan))
    with pytest.raises(ValueError):
        LDRFrame(np.full((2, 2, 3), 1.5), exposure_time=1.0)
    with pytest.raises(InvalidParameterError):
        LDRFrame(np.zeros((2, 2, 3)), exposure_time=0.0)
