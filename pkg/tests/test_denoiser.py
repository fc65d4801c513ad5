import numpy as np
import pytest
import torch

from hdrvgan.denoiser import (
    ConfigError,
    DenoiserConfig,
    build_denoiser,
    count_parameters,
    denoise,
    denoiser_loss,
)
from hdrvgan.radiometry import LDRFrame
from oracles import denoiser_param_table, finite_difference_check, mean_abs_loop


def test_same_seed_identical_parameters():
    a = build_denoiser(DenoiserConfig(2, 8), seed=3)
    b = build_denoiser(DenoiserConfig(2, 8), seed=3)
    c = build_denoiser(DenoiserConfig(2, 8), seed=4)
    for (na, pa), (nb, pb) in zip(a.state_dict().items(), b.state_dict().items()):
        assert na == nb and torch.equal(pa, pb)
    assert any(not torch.equal(p, q) for p, q in zip(a.parameters(), c.parameters()))


@pytest.mark.parametrize("depth,base", [(4, 32), (2, 8), (1, 16), (3, 12)])
def test_parameter_count_matches_layer_table(depth, base):
    expected = sum(n for _, n in denoiser_param_table(depth, base))
    assert count_parameters(build_denoiser(DenoiserConfig(depth, base))) == expected


def test_default_parameter_count_value():
    # depth 4, base 32, summed from the layer table by hand
    assert sum(n for _, n in denoiser_param_table(4, 32)) == 3_835_619


@pytest.mark.parametrize("kwargs", [dict(depth=0), dict(base_channels=4)])
def test_invalid_config(kwargs):
    with pytest.raises(ConfigError):
        DenoiserConfig(**kwargs)


def test_roles_share_architecture_not_parameters():
    low = build_denoiser(DenoiserConfig(2, 8), seed=0, exposure_role="low")
    high = build_denoiser(DenoiserConfig(2, 8), seed=1, exposure_role="high")
    assert count_parameters(low) == count_parameters(high)
    assert all(p.data_ptr() != q.data_ptr() for p, q in zip(low.parameters(), high.parameters()))


@pytest.mark.parametrize("shape", [(64, 64), (192, 320), (37, 50)])
def test_shape_and_range(shape):
    model = build_denoiser(DenoiserConfig(3, 8))
    rng = np.random.default_rng(0)
    frame = LDRFrame(rng.random(shape + (3,)), exposure_time=1.0, exposure_index=0)
    out = denoise(model, frame)
    assert out.data.shape == frame.data.shape
    assert out.data.min() >= 0 and out.data.max() <= 1
    assert out.exposure_time == frame.exposure_time


def test_role_mismatch():
    model = build_denoiser(DenoiserConfig(1, 8), exposure_role="high")
    with pytest.raises(ValueError, match="exposure index"):
        denoise(model, LDRFrame(np.zeros((16, 16, 3)), exposure_time=1.0, exposure_index=0))


def test_loss_values():
    rng = np.random.default_rng(0)
    clean = rng.random((8, 8, 3)) * 0.8
    assert denoiser_loss(clean, clean).item() == 0
    assert denoiser_loss(clean + 0.1, clean).item() == pytest.approx(0.1, abs=1e-12)
    pred = rng.random((8, 8, 3))
    assert abs(denoiser_loss(pred, clean).item() - mean_abs_loop(pred, clean)) < 1e-7
    with pytest.raises(ValueError):
        denoiser_loss(pred[:4], clean)


def test_loss_gradient():
    rng = np.random.default_rng(1)
    clean = torch.tensor(rng.random((1, 3, 6, 6)))
    pred = torch.tensor(rng.random((1, 3, 6, 6)))
    err, _, _ = finite_difference_check(lambda p: denoiser_loss(p, clean), pred)
    assert err < 1e-3


def test_training_steps_reduce_loss():
    torch.manual_seed(0)
    model = build_denoiser(DenoiserConfig(2, 8), seed=0)
    opt = torch.optim.Adam(model.parameters(), lr=1e-3)
    rng = np.random.default_rng(0)
    clean = torch.tensor(rng.random((4, 3, 32, 32)) * 0.5 + 0.25, dtype=torch.float32)
    noisy = (clean + 0.05 * torch.randn(clean.shape)).clamp(0, 1)
    losses = []
    for _ in range(11):
        loss = denoiser_loss(model(noisy), clean)
        losses.append(loss.item())
        opt.zero_grad()
        loss.backward()
        opt.step()
    assert losses[10] < losses[0]
