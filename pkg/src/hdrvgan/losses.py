"""Training objectives, all evaluated in the mu-law (tonemapped) domain.

Norms written as ||.||_1 / ||.||_2 below are means over elements (batch,
channels, pixels), so that loss magnitudes do not depend on patch size.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Protocol, Sequence, runtime_checkable

import torch
import torch.nn.functional as F
from torch import nn

from .flowalign import warp_backward_tensor

ADV_EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    lambda_adv: float = 5.0
    lambda_content: float = 1.0
    lambda_style: float = 1000.0
    lambda_l1: float = 30.0
    alpha: float = 0.3

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"{k} must be a finite non-negative number, got {v}")
        if self.alpha > 1:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")

    def to_dict(self) -> dict:
        return asdict(self)


def _check_same(a: torch.Tensor, b: torch.Tensor) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def l1_loss(t_gen: torch.Tensor, t_gt: torch.Tensor) -> torch.Tensor:
    _check_same(t_gen, t_gt)
    return (t_gen - t_gt).abs().mean()


# -- adversarial --------------------------------------------------------------


def adversarial_losses_from_scores(real_scores: torch.Tensor, fake_scores: torch.Tensor,
                                   eps: float = ADV_EPS) -> tuple[torch.Tensor, torch.Tensor]:
    """Discriminator loss and non-saturating generator loss from probabilities."""
    real = real_scores.clamp(eps, 1 - eps)
    fake = fake_scores.clamp(eps, 1 - eps)
    d_loss = -torch.log(real).mean() - torch.log(1 - fake).mean()
    return d_loss, generator_adversarial_loss(fake_scores, eps)


def generator_adversarial_loss(fake_scores: torch.Tensor, eps: float = ADV_EPS) -> torch.Tensor:
    """Non-saturating generator term -log D(fake)."""
    return -torch.log(fake_scores.clamp(eps, 1 - eps)).mean()


def adversarial_losses(D, real_pair: Sequence[torch.Tensor], fake_pair: Sequence[torch.Tensor],
                       eps: float = ADV_EPS) -> tuple[torch.Tensor, torch.Tensor]:
    """(d_loss, g_loss) for real pair (T_i, T_{i-1}) and fake pair of generated frames.

    ``D`` must return probabilities. Detach ``fake_pair`` yourself when only
    the discriminator should receive gradients.
    """
    return adversarial_losses_from_scores(D(*real_pair), D(*fake_pair), eps)


# -- feature extractors -------------------------------------------------------


@runtime_checkable
class FeatureExtractor(Protocol):
    def __call__(self, x: torch.Tensor) -> list[torch.Tensor]:
        """Activated feature maps (B, N_j, H_j, W_j) for each layer j."""


class IdentityExtractor(nn.Module):
    """Single 'layer' returning the input; reduces perceptual losses to pixel ones."""

    def forward(self, x):
        return [x]


class PointwiseExtractor(nn.Module):
    """Fixed random 1x1 convolutions: features with a one-pixel receptive field."""

    def __init__(self, channels: Sequence[int] = (8, 8), seed: int = 0, in_channels: int = 3):
        super().__init__()
        g = torch.Generator().manual_seed(seed)
        layers, cin = [], in_channels
        for c in channels:
            conv = nn.Conv2d(cin, c, 1)
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=g) / math.sqrt(cin))
                conv.bias.copy_(torch.randn(c, generator=g) * 0.1)
            layers.append(conv)
            cin = c
        self.layers = nn.ModuleList(layers)
        self.requires_grad_(False)

    def forward(self, x):
        feats = []
        for conv in self.layers:
            x = F.relu(conv(x))
            feats.append(x)
        return feats


class RandomConvExtractor(nn.Module):
    """Seeded, frozen five-stage conv network; hermetic stand-in for a pretrained net."""

    def __init__(self, channels: Sequence[int] = (16, 32, 32, 64, 64), seed: int = 0, in_channels: int = 3):
        super().__init__()
        g = torch.Generator().manual_seed(seed)
        layers, cin = [], in_channels
        for c in channels:
            conv = nn.Conv2d(cin, c, 3, padding=1)
            with torch.no_grad():
                # He-style scale keeps activations O(1) through the stack
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=g) * math.sqrt(2.0 / (cin * 9)))
                conv.bias.zero_()
            layers.append(conv)
            cin = c
        self.layers = nn.ModuleList(layers)
        self.requires_grad_(False)
        self.eval()

    def forward(self, x):
        feats = []
        for k, conv in enumerate(self.layers):
            if k > 0:
                x = F.avg_pool2d(x, 2) if min(x.shape[-2:]) >= 2 else x
            x = F.relu(conv(x))
            feats.append(x)
        return feats


class VGG19Extractor(nn.Module):
    """First five ReLU activations of an ImageNet-pretrained VGG-19 (torchvision)."""

    # indices of relu1_1, relu2_1, relu3_1, relu4_1, relu5_1 in vgg19().features
    LAYERS = (1, 6, 11, 20, 29)

    def __init__(self, weights_path: str | None = None):
        super().__init__()
        from torchvision.models import VGG19_Weights, vgg19

        if weights_path:
            net = vgg19()
            net.load_state_dict(torch.load(weights_path, map_location="cpu"))
        else:
            net = vgg19(weights=VGG19_Weights.IMAGENET1K_V1)
        self.features = net.features[: self.LAYERS[-1] + 1]
        self.requires_grad_(False)
        self.eval()
        self.register_buffer("mean", torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1))

    def forward(self, x):
        x = (x - self.mean) / self.std
        feats = []
        for k, layer in enumerate(self.features):
            x = layer(x)
            if k in self.LAYERS:
                feats.append(x)
        return feats


def make_extractor(name: str, seed: int = 0, weights_path: str | None = None) -> nn.Module:
    if name == "random":
        return RandomConvExtractor(seed=seed)
    if name == "vgg19":
        return VGG19Extractor(weights_path)
    if name == "identity":
        return IdentityExtractor()
    raise ValueError(f"unknown feature extractor {name!r}")


# -- perceptual losses --------------------------------------------------------


def gram(features: torch.Tensor) -> torch.Tensor:
    """Channel Gram matrix normalized by C*H*W; (C,H,W) -> (C,C) or (B,C,H,W) -> (B,C,C)."""
    squeeze = features.dim() == 3
    f = features.unsqueeze(0) if squeeze else features
    b, c, h, w = f.shape
    flat = f.reshape(b, c, h * w)
    g = flat @ flat.transpose(1, 2) / (c * h * w)
    return g[0] if squeeze else g


def content_loss(extractor, t_gen: torch.Tensor, t_gt: torch.Tensor) -> torch.Tensor:
    """Mean over layers j of mean|phi_j(gt) - phi_j(gen)| / N_j, N_j = channels of layer j."""
    _check_same(t_gen, t_gt)
    terms = [(fg - fp).abs().mean() / fg.shape[1] for fg, fp in zip(extractor(t_gt), extractor(t_gen))]
    return torch.stack(terms).mean()


def style_loss(extractor, t_gen: torch.Tensor, t_gt: torch.Tensor) -> torch.Tensor:
    """Mean over layers of mean|gram(phi_j(gt)) - gram(phi_j(gen))|."""
    _check_same(t_gen, t_gt)
    terms = [(gram(fg) - gram(fp)).abs().mean() for fg, fp in zip(extractor(t_gt), extractor(t_gen))]
    return torch.stack(terms).mean()


def temporal_reg(t_cur: torch.Tensor, t_prev: torch.Tensor, flow: torch.Tensor) -> torch.Tensor:
    """Root-mean-square difference between ``t_cur`` and ``t_prev`` warped by ``flow``.

    ``flow`` is (B, 2, H, W) and treated as a constant. Exactly zero (with a
    finite zero gradient) on identical inputs.
    """
    warped = warp_backward_tensor(t_prev, flow.detach())
    _check_same(t_cur, warped)
    ms = ((t_cur - warped) ** 2).mean()
    tiny = torch.finfo(ms.dtype).tiny
    positive = (ms > 0).to(ms.dtype)
    return torch.sqrt(ms.clamp_min(tiny)) * positive


# -- compositions -------------------------------------------------------------


@dataclass
class LossParts:
    adv: torch.Tensor | float = 0.0
    content: torch.Tensor | float = 0.0
    style: torch.Tensor | float = 0.0
    l1: torch.Tensor | float = 0.0


def reconstruction_loss(weights: LossWeights, parts: LossParts, eq10_verbatim: bool = False):
    """Weighted sum of adversarial, content, style and L1 terms.

    ``eq10_verbatim`` adds an extra ``lambda_style * content`` term, the
    printed form of the objective in the original write-up.
    """
    total = (weights.lambda_adv * parts.adv + weights.lambda_content * parts.content
             + weights.lambda_style * parts.style + weights.lambda_l1 * parts.l1)
    if eq10_verbatim:
        total = total + weights.lambda_style * parts.content
    return total


def total_loss(weights: LossWeights, l_rec, l_reg):
    return weights.alpha * l_rec + (1 - weights.alpha) * l_reg
