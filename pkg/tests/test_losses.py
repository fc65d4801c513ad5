import math

import numpy as np
import pytest
import torch

from hdrvgan.losses import (
    IdentityExtractor,
    LossParts,
    LossWeights,
    PointwiseExtractor,
    RandomConvExtractor,
    adversarial_losses,
    adversarial_losses_from_scores,
    content_loss,
    gram,
    l1_loss,
    reconstruction_loss,
    style_loss,
    temporal_reg,
    total_loss,
)
from hdrvgan.networks import DiscriminatorConfig, build_discriminator
from oracles import bilinear_warp_loops, finite_difference_check, gram_loops, mean_abs_loop

rng = np.random.default_rng(1234)


def rand(*shape):
    return torch.tensor(rng.random(shape), dtype=torch.float64)


# -- L1 -------------------------------------------------------------------------


def test_l1_values():
    a = rand(2, 3, 8, 8)
    assert l1_loss(a, a).item() == 0
    assert l1_loss(a + 0.25, a).item() == pytest.approx(0.25, abs=1e-12)
    b = rand(2, 3, 8, 8)
    assert abs(l1_loss(a, b).item() - mean_abs_loop(a.numpy(), b.numpy())) < 1e-7


def test_l1_shape_mismatch():
    with pytest.raises(ValueError):
        l1_loss(rand(1, 3, 4, 4), rand(1, 3, 4, 5))


# -- adversarial ----------------------------------------------------------------


def test_adversarial_symmetric_point():
    half = torch.full((4,), 0.5, dtype=torch.float64)
    d, g = adversarial_losses_from_scores(half, half)
    assert abs(d.item() - 2 * math.log(2)) < 1e-9
    assert abs(g.item() - math.log(2)) < 1e-9


def test_adversarial_perfect_discriminator():
    eps = 1e-7
    d, _ = adversarial_losses_from_scores(torch.tensor([1 - eps], dtype=torch.float64),
                                          torch.tensor([eps], dtype=torch.float64))
    assert d.item() < 1e-6
    # exact 1 and 0 are clamped rather than producing inf
    d, g = adversarial_losses_from_scores(torch.ones(3), torch.zeros(3))
    assert torch.isfinite(d) and torch.isfinite(g)


def test_adversarial_generator_gradient():
    D = build_discriminator(DiscriminatorConfig(base_channels=4)).double().eval()
    # four stride-2 stages need at least 16 pixels per side
    real = (rand(1, 3, 16, 16), rand(1, 3, 16, 16))
    prev = rand(1, 3, 16, 16)
    err, _, _ = finite_difference_check(lambda f: adversarial_losses(D, real, (f, prev))[1], rand(1, 3, 16, 16))
    assert err < 1e-3


# -- perceptual -----------------------------------------------------------------


def test_content_identity_and_symmetry():
    ex = RandomConvExtractor(seed=0).double()
    a, b = rand(1, 3, 16, 16), rand(1, 3, 16, 16)
    assert content_loss(ex, a, a).item() == 0
    assert content_loss(ex, a, b).item() == pytest.approx(content_loss(ex, b, a).item(), rel=1e-12)


def test_content_identity_extractor_is_scaled_l1():
    a, b = rand(2, 3, 8, 8), rand(2, 3, 8, 8)
    expected = mean_abs_loop(a.numpy(), b.numpy()) / 3
    assert abs(content_loss(IdentityExtractor(), a, b).item() - expected) < 1e-6
    assert abs(content_loss(IdentityExtractor(), a, b).item() - l1_loss(a, b).item() / 3) < 1e-12


def test_gram_fixed_point():
    g = gram(torch.ones(1, 4, 4, dtype=torch.float64))
    assert g.shape == (1, 1) and g.item() == pytest.approx(1.0)


def test_gram_orthogonal_channels():
    f = torch.zeros(2, 4, 4, dtype=torch.float64)
    f[0, :2] = 1.0
    f[1, 2:] = 3.0
    assert gram(f)[0, 1].item() == 0 and gram(f)[1, 0].item() == 0


def test_gram_matches_loops():
    f = rand(3, 5, 5)
    np.testing.assert_allclose(gram(f).numpy(), gram_loops(f.numpy()), atol=1e-6)
    batch = rand(2, 3, 4, 6)
    for k in range(2):
        np.testing.assert_allclose(gram(batch)[k].numpy(), gram_loops(batch[k].numpy()), atol=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_gram_symmetric_psd(seed):
    f = torch.tensor(np.random.default_rng(seed).normal(size=(6, 7, 5)))
    g = gram(f).numpy()
    assert np.abs(g - g.T).max() < 1e-6
    assert np.linalg.eigvalsh(g).min() > -1e-5


def test_style_zero_and_permutation_invariance():
    ex = PointwiseExtractor(seed=3).double()
    a, b = rand(1, 3, 8, 8), rand(1, 3, 8, 8)
    assert style_loss(ex, a, a).item() == 0
    perm = torch.from_numpy(np.random.default_rng(0).permutation(64))
    shuffle = lambda x: x.reshape(1, 3, 64)[..., perm].reshape(1, 3, 8, 8)  # noqa: E731
    assert style_loss(ex, shuffle(a), shuffle(b)).item() == pytest.approx(style_loss(ex, a, b).item(), rel=1e-9)


def test_style_matches_oracle_composition():
    ex = RandomConvExtractor(seed=1).double()
    a, b = rand(1, 3, 8, 8), rand(1, 3, 8, 8)
    with torch.no_grad():
        fa, fb = ex(a), ex(b)
    per_layer = [np.mean(np.abs(gram_loops(x[0].numpy()) - gram_loops(y[0].numpy()))) for x, y in zip(fb, fa)]
    assert abs(style_loss(ex, a, b).item() - np.mean(per_layer)) < 1e-6


def test_content_matches_oracle_composition():
    ex = RandomConvExtractor(seed=2).double()
    a, b = rand(1, 3, 8, 8), rand(1, 3, 8, 8)
    with torch.no_grad():
        fa, fb = ex(a), ex(b)
    per_layer = [mean_abs_loop(x.numpy(), y.numpy()) / x.shape[1] for x, y in zip(fb, fa)]
    assert abs(content_loss(ex, a, b).item() - np.mean(per_layer)) < 1e-6


@pytest.mark.parametrize("fn", [content_loss, style_loss])
def test_perceptual_gradients(fn):
    ex = RandomConvExtractor(channels=(4, 6, 6, 8, 8), seed=0).double()
    gt = rand(1, 3, 8, 8)
    err, _, _ = finite_difference_check(lambda x: fn(ex, x, gt), rand(1, 3, 8, 8))
    assert err < 1e-3


# -- temporal -------------------------------------------------------------------


def test_temporal_reg_static():
    t = rand(1, 3, 8, 8)
    assert temporal_reg(t, t.clone(), torch.zeros(1, 2, 8, 8, dtype=torch.float64)).item() == 0


def test_temporal_reg_zero_gradient_finite_at_zero():
    t = rand(1, 3, 8, 8).requires_grad_(True)
    temporal_reg(t, t.detach().clone(), torch.zeros(1, 2, 8, 8, dtype=torch.float64)).backward()
    assert torch.isfinite(t.grad).all()


def test_temporal_reg_exact_shift():
    prev = rand(1, 3, 12, 12)
    cur = torch.roll(prev, shifts=-2, dims=3)  # cur(x) = prev(x + 2)
    flow = torch.zeros(1, 2, 12, 12, dtype=torch.float64)
    flow[:, 0] = 2.0
    from hdrvgan.flowalign import warp_backward_tensor

    diff = cur - warp_backward_tensor(prev, flow)
    assert diff[..., :-2].abs().max().item() < 1e-12
    inner = temporal_reg(cur[..., :-2], warp_backward_tensor(prev, flow)[..., :-2],
                         torch.zeros(1, 2, 12, 10, dtype=torch.float64))
    assert inner.item() < 1e-3


def test_temporal_reg_matches_oracle():
    cur, prev = rand(1, 3, 7, 9), rand(1, 3, 7, 9)
    flow = torch.tensor(np.random.default_rng(5).uniform(-2, 2, size=(1, 2, 7, 9)))
    warped = bilinear_warp_loops(prev[0].numpy(), flow[0].numpy())
    expected = math.sqrt(np.mean((cur[0].numpy() - warped) ** 2))
    assert abs(temporal_reg(cur, prev, flow).item() - expected) < 1e-6


def test_temporal_reg_gradient():
    prev = rand(1, 3, 8, 8)
    flow = torch.tensor(np.random.default_rng(6).uniform(-1.5, 1.5, size=(1, 2, 8, 8)))
    err, _, _ = finite_difference_check(lambda x: temporal_reg(x, prev, flow), rand(1, 3, 8, 8))
    assert err < 1e-3


def test_l1_gradient():
    gt = rand(1, 3, 8, 8)
    err, _, _ = finite_difference_check(lambda x: l1_loss(x, gt), rand(1, 3, 8, 8))
    assert err < 1e-3


# -- compositions ---------------------------------------------------------------


def test_reconstruction_loss():
    w = LossWeights()
    assert reconstruction_loss(w, LossParts()) == 0
    assert reconstruction_loss(w, LossParts(1.0, 1.0, 1.0, 1.0)) == 1036.0
    p = LossParts(0.3, 0.7, 0.011, 0.2)
    double = LossParts(0.6, 1.4, 0.022, 0.4)
    assert reconstruction_loss(w, double) == pytest.approx(2 * reconstruction_loss(w, p), rel=1e-12)
    # the printed variant adds lambda_style * content
    assert reconstruction_loss(w, LossParts(1.0, 1.0, 1.0, 1.0), eq10_verbatim=True) == 2036.0


def test_total_loss():
    w = LossWeights()
    assert total_loss(w, 10.0, 0.0) == pytest.approx(3.0)
    assert total_loss(w, 2.0, 4.0) == pytest.approx(3.4)
    assert total_loss(LossWeights(alpha=1.0), 7.25, 3.0) == 7.25
    assert total_loss(LossWeights(alpha=0.0), 7.25, 3.0) == 3.0


def test_loss_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(alpha=1.5)
    with pytest.raises(ValueError):
        LossWeights(lambda_adv=-1)


def test_non_adversarial_losses_nonnegative():
    ex = RandomConvExtractor(seed=0).double()
    for _ in range(5):
        a, b = rand(1, 3, 16, 16), rand(1, 3, 16, 16)
        flow = torch.zeros(1, 2, 16, 16, dtype=torch.float64)
        for v in (l1_loss(a, b), content_loss(ex, a, b), style_loss(ex, a, b), temporal_reg(a, b, flow)):
            assert v.item() >= 0
