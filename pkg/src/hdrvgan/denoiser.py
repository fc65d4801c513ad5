"""Per-exposure LDR denoisers: U-Net style encoder-decoders with skip connections."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .radiometry import LDRFrame, raster_of

ROLES = ("low", "high")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DenoiserConfig:
    depth: int = 4
    base_channels: int = 32
    in_channels: int = 3
    out_channels: int = 3

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if self.base_channels < 8:
            raise ConfigError(f"base_channels must be >= 8, got {self.base_channels}")

    def widths(self) -> list[int]:
        """Channel count per level, bottleneck last."""
        return [self.base_channels * 2**k for k in range(self.depth + 1)]

    def to_dict(self) -> dict:
        return asdict(self)


def _cbr(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(nn.Conv2d(cin, cout, 3, padding=1), nn.BatchNorm2d(cout), nn.ReLU(inplace=True))


class DenoiserNet(nn.Module):
    """conv-BN-ReLU + 2x2 max-pool encoder, transposed-conv decoder, residual output.

    Inputs of any size are reflect-padded up to a multiple of ``2**depth`` and
    cropped back after decoding. The output is clamped to [0, 1].
    """

    def __init__(self, config: DenoiserConfig, exposure_role: str = "low"):
        super().__init__()
        if exposure_role not in ROLES:
            raise ConfigError(f"exposure_role must be one of {ROLES}, got {exposure_role!r}")
        self.config = config
        self.exposure_role = exposure_role
        w = config.widths()
        self.encoders = nn.ModuleList(
            _cbr(config.in_channels if k == 0 else w[k - 1], w[k]) for k in range(config.depth))
        self.bottleneck = _cbr(w[config.depth - 1], w[config.depth])
        self.upsamplers = nn.ModuleList(
            nn.ConvTranspose2d(w[k + 1], w[k], 2, stride=2) for k in reversed(range(config.depth)))
        self.decoders = nn.ModuleList(_cbr(2 * w[k], w[k]) for k in reversed(range(config.depth)))
        self.head = nn.Conv2d(w[0], config.out_channels, 1)
        # an untrained denoiser is the identity map
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    @property
    def role_index(self) -> int:
        return ROLES.index(self.exposure_role)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h, w = x.shape[-2:]
        m = 2**self.config.depth
        ph, pw = (-h) % m, (-w) % m
        y = F.pad(x, (0, pw, 0, ph), mode="reflect") if (ph or pw) else x
        skips = []
        for enc in self.encoders:
            y = enc(y)
            skips.append(y)
            y = F.max_pool2d(y, 2)
        y = self.bottleneck(y)
        for up, dec, skip in zip(self.upsamplers, self.decoders, reversed(skips)):
            y = dec(torch.cat([up(y), skip], dim=1))
        y = self.head(y)[..., :h, :w]
        return (x + y).clamp(0.0, 1.0)


def build_denoiser(config: DenoiserConfig, seed: int = 0, exposure_role: str = "low") -> DenoiserNet:
    gen = torch.random.fork_rng(devices=[])
    with gen:
        torch.manual_seed(seed)
        model = DenoiserNet(config, exposure_role)
    return model


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def frame_to_tensor(frame: LDRFrame | np.ndarray, device=None) -> torch.Tensor:
    data = frame.data if isinstance(frame, LDRFrame) else frame
    return torch.from_numpy(np.ascontiguousarray(data, dtype=np.float32)).permute(2, 0, 1)[None].to(device)


def tensor_to_raster(t: torch.Tensor) -> np.ndarray:
    return t.detach()[0].permute(1, 2, 0).cpu().numpy().astype(np.float32)


def denoise(model: DenoiserNet, noisy: LDRFrame) -> LDRFrame:
    if noisy.exposure_index % 2 != model.role_index:
        raise ValueError(f"{model.exposure_role}-exposure denoiser cannot process a frame with "
                         f"exposure index {noisy.exposure_index}")
    if noisy.data.shape[2] != model.config.in_channels:
        raise ValueError(f"expected {model.config.in_channels} channels, got {noisy.data.shape[2]}")
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            p = next(model.parameters())
            out = model(frame_to_tensor(noisy, p.device))
    finally:
        model.train(was_training)
    return noisy.with_data(tensor_to_raster(out))


def denoiser_loss(pred, clean, kind: str = "l1") -> torch.Tensor:
    """Mean absolute (or squared, ``kind="l2"``) error over pixels and channels."""
    p = pred if isinstance(pred, torch.Tensor) else torch.as_tensor(np.asarray(raster_of(pred)))
    c = clean if isinstance(clean, torch.Tensor) else torch.as_tensor(np.asarray(raster_of(clean)))
    if p.shape != c.shape:
        raise ValueError(f"shape mismatch: {tuple(p.shape)} vs {tuple(c.shape)}")
    if kind == "l1":
        return (p - c).abs().mean()
    if kind == "l2":
        return ((p - c) ** 2).mean()
    raise ValueError(f"unknown denoiser loss {kind!r}")
