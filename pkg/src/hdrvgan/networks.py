"""Merge GAN: ResBlock generator and spectrally normalized pair discriminator."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.utils import parametrize

from .denoiser import ConfigError, frame_to_tensor, tensor_to_raster
from .radiometry import LDRFrame, TonemappedFrame, unexpose


@dataclass(frozen=True)
class GeneratorConfig:
    input_channels: int = 12
    base_channels: int = 64
    n_resblocks: int = 8
    output_channels: int = 3

    def __post_init__(self):
        if self.n_resblocks < 1:
            raise ConfigError("n_resblocks must be >= 1")
        if self.base_channels < 1 or self.input_channels < 1:
            raise ConfigError("channel counts must be positive")

    @property
    def downsample_factor(self) -> int:
        return 4

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class DiscriminatorConfig:
    input_channels: int = 6
    base_channels: int = 64
    n_conv_layers: int = 5
    n_dense_layers: int = 2
    negative_slope: float = 0.2
    head: str = "sigmoid"  # or "logit"
    power_iterations: int = 1

    def __post_init__(self):
        if self.n_conv_layers != 5 or self.n_dense_layers != 2:
            raise ConfigError("the discriminator has exactly 5 conv and 2 dense layers")
        if self.head not in ("sigmoid", "logit"):
            raise ConfigError(f"head must be sigmoid or logit, got {self.head!r}")
        if self.base_channels < 1:
            raise ConfigError("base_channels must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


# -- spectral normalization -------------------------------------------------


def power_iteration(w: torch.Tensor, u: torch.Tensor, n_iterations: int = 1, eps: float = 1e-12):
    """Run ``n_iterations`` power steps on 2-D ``w``; returns (sigma, u, v)."""
    v = None
    for _ in range(max(1, n_iterations)):
        v = F.normalize(w.t() @ u, dim=0, eps=eps)
        u = F.normalize(w @ v, dim=0, eps=eps)
    sigma = torch.dot(u, w @ v)
    return sigma, u, v


def spectral_normalize(weight, n_iterations: int = 10, u=None, eps: float = 1e-12, seed: int = 0):
    """Divide ``weight`` (reshaped to 2-D) by its power-iteration top singular value.

    Returns ``(normalized, u)`` so callers can persist the iteration vector.
    Numpy inputs produce numpy outputs. An all-zero weight stays zero.
    """
    is_np = isinstance(weight, np.ndarray)
    w = torch.as_tensor(weight, dtype=torch.float64 if is_np else None)
    w2 = w.reshape(w.shape[0], -1)
    if u is None:
        g = torch.Generator().manual_seed(seed)
        u = F.normalize(torch.randn(w2.shape[0], generator=g, dtype=w2.dtype), dim=0, eps=eps)
    else:
        u = torch.as_tensor(u, dtype=w2.dtype)
    with torch.no_grad():
        sigma, u, _ = power_iteration(w2, u, n_iterations, eps)
    out = w / torch.clamp(sigma, min=eps)
    if is_np:
        return out.numpy(), u.numpy()
    return out, u


class SpectralNorm(nn.Module):
    """Parametrization dividing a weight by its running top singular value.

    One power step per training-mode forward; the iteration vector ``u`` is a
    persistent buffer, so the estimate sharpens across steps.
    """

    def __init__(self, weight: torch.Tensor, n_iterations: int = 1, eps: float = 1e-12):
        super().__init__()
        rows = weight.shape[0]
        self.n_iterations = n_iterations
        self.eps = eps
        u = F.normalize(torch.randn(rows, dtype=weight.dtype), dim=0, eps=eps)
        self.register_buffer("u", u)
        self.register_buffer("sigma", torch.ones((), dtype=weight.dtype))

    def forward(self, weight: torch.Tensor) -> torch.Tensor:
        w2 = weight.reshape(weight.shape[0], -1)
        if self.training:
            with torch.no_grad():
                _, u, v = power_iteration(w2, self.u, self.n_iterations, self.eps)
                self.u.copy_(u)
            # the local u, not the buffer: a later forward mutates the buffer in place
            sigma = torch.dot(u, w2 @ v)
            self.sigma.copy_(sigma.detach())
        else:
            sigma = self.sigma
        return weight / torch.clamp(sigma, min=self.eps)


def add_spectral_norm(module: nn.Module, n_iterations: int = 1) -> nn.Module:
    parametrize.register_parametrization(module, "weight", SpectralNorm(module.weight.detach(), n_iterations))
    # warm up the singular-vector estimate so the very first forward is close to 1-Lipschitz
    sn = module.parametrizations.weight[0]
    with torch.no_grad():
        w2 = module.parametrizations.weight.original.reshape(module.weight.shape[0], -1)
        sigma, u, _ = power_iteration(w2, sn.u, 20)
        sn.u.copy_(u)
        sn.sigma.copy_(sigma)
    return module


# -- generator --------------------------------------------------------------


def basic_unit(cin: int, cout: int, kernel: int = 3, stride: int = 1) -> nn.Sequential:
    """conv -> instance norm -> ReLU."""
    return nn.Sequential(
        nn.Conv2d(cin, cout, kernel, stride=stride, padding=kernel // 2),
        nn.InstanceNorm2d(cout, affine=True),
        nn.ReLU(inplace=True),
    )


def up_unit(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(
        nn.ConvTranspose2d(cin, cout, 3, stride=2, padding=1, output_padding=1),
        nn.InstanceNorm2d(cout, affine=True),
        nn.ReLU(inplace=True),
    )


class ResBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(basic_unit(channels, channels), basic_unit(channels, channels))

    def forward(self, x):
        return x + self.body(x)


class Generator(nn.Module):
    def __init__(self, config: GeneratorConfig):
        super().__init__()
        self.config = config
        b = config.base_channels
        self.encoder = nn.Sequential(
            basic_unit(config.input_channels, b, kernel=7),
            basic_unit(b, 2 * b, stride=2),
            basic_unit(2 * b, 4 * b, stride=2),
        )
        self.resblocks = nn.Sequential(*(ResBlock(4 * b) for _ in range(config.n_resblocks)))
        self.decoder = nn.Sequential(up_unit(4 * b, 2 * b), up_unit(2 * b, b))
        self.head = nn.Conv2d(b, config.output_channels, 7, padding=3)

    def bottleneck(self, x: torch.Tensor) -> torch.Tensor:
        return self.resblocks(self.encoder(x))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h, w = x.shape[-2:]
        ph, pw = (-h) % 4, (-w) % 4
        if ph or pw:
            x = F.pad(x, (0, pw, 0, ph), mode="reflect")
        y = self.decoder(self.bottleneck(x))
        return torch.sigmoid(self.head(y))[..., :h, :w]


class Discriminator(nn.Module):
    """Scores a (current, previous) tonemapped pair; one scalar per sample."""

    def __init__(self, config: DiscriminatorConfig):
        super().__init__()
        self.config = config
        b = config.base_channels
        widths = [config.input_channels, b, 2 * b, 4 * b, 8 * b, 8 * b]
        convs = []
        for k in range(5):
            stride, kernel = (2, 4) if k < 4 else (1, 3)
            conv = nn.Conv2d(widths[k], widths[k + 1], kernel, stride=stride, padding=1)
            convs += [add_spectral_norm(conv, config.power_iterations), nn.LeakyReLU(config.negative_slope)]
        self.features = nn.Sequential(*convs)
        self.dense = nn.Sequential(
            add_spectral_norm(nn.Linear(8 * b, 8 * b), config.power_iterations),
            nn.LeakyReLU(config.negative_slope),
            add_spectral_norm(nn.Linear(8 * b, 1), config.power_iterations),
        )

    def forward(self, current: torch.Tensor, previous: torch.Tensor) -> torch.Tensor:
        if current.shape != previous.shape:
            raise ValueError(f"pair dims differ: {tuple(current.shape)} vs {tuple(previous.shape)}")
        y = self.features(torch.cat([current, previous], dim=1))
        y = y.mean(dim=(2, 3))
        logit = self.dense(y).squeeze(1)
        return torch.sigmoid(logit) if self.config.head == "sigmoid" else logit


def _seeded(seed: int, factory):
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return factory()


def build_generator(config: GeneratorConfig, seed: int = 0) -> Generator:
    return _seeded(seed, lambda: Generator(config))


def build_discriminator(config: DiscriminatorConfig, seed: int = 0) -> Discriminator:
    return _seeded(seed, lambda: Discriminator(config))


# -- frame-level entry points -----------------------------------------------


def generator_inputs(ref: torch.Tensor, nbr: torch.Tensor, ref_t, nbr_t, gamma: float) -> torch.Tensor:
    """Stack LDR reference, aligned neighbor and their linearized versions (12 channels).

    ``ref_t``/``nbr_t`` are exposure times, scalars or (B,) tensors.
    """
    def per_sample(t):
        t = torch.as_tensor(t, dtype=ref.dtype, device=ref.device)
        return t.view(-1, 1, 1, 1) if t.dim() else t

    ref_lin = unexpose(ref, 1.0, gamma) / per_sample(ref_t)
    nbr_lin = unexpose(nbr, 1.0, gamma) / per_sample(nbr_t)
    return torch.cat([ref, nbr, ref_lin, nbr_lin], dim=1)


def generate(G: Generator, ref: LDRFrame, aligned_nbr: LDRFrame, allow_same_exposure: bool = False
             ) -> TonemappedFrame:
    """Merge a reference and an aligned neighbor into a tonemapped HDR frame.

    ``allow_same_exposure`` is for the frame-0 fallback, where the reference
    doubles as its own neighbor.
    """
    if ref.data.shape != aligned_nbr.data.shape:
        raise ValueError(f"frame dims differ: {ref.data.shape} vs {aligned_nbr.data.shape}")
    if ref.exposure_time == aligned_nbr.exposure_time and not allow_same_exposure:
        raise ValueError("reference and neighbor must have different exposures")
    p = next(G.parameters())
    x = generator_inputs(frame_to_tensor(ref, p.device), frame_to_tensor(aligned_nbr, p.device),
                         ref.exposure_time, aligned_nbr.exposure_time, ref.gamma)
    was_training = G.training
    G.eval()
    try:
        with torch.no_grad():
            out = G(x)
    finally:
        G.train(was_training)
    return TonemappedFrame(np.clip(tensor_to_raster(out), 0.0, 1.0))


def discriminate(D: Discriminator, current, previous) -> torch.Tensor:
    """Scores for batches (B, 3, H, W) or single TonemappedFrames."""
    def as_batch(x):
        if isinstance(x, torch.Tensor):
            return x
        return frame_to_tensor(x.data, next(D.parameters()).device)

    return D(as_batch(current), as_batch(previous))
