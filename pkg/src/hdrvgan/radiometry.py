"""Radiometric transforms between linear HDR, camera LDR and mu-law space.

Every function here is pure. Noise uses an explicit seed, so callers can run
these from any number of threads.

The array-level helpers (``expose``, ``unexpose``, ``mu_law``,
``inverse_mu_law``) accept either numpy arrays or torch tensors and keep the
input type; the frame-level functions wrap them with validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch

DEFAULT_GAMMA = 2.2
DEFAULT_MU = 5000.0


class InvalidParameterError(ValueError):
    """Raised for non-positive exposure times, gammas or mu values."""


def _check_positive(name: str, value: float) -> None:
    if not (value > 0) or not math.isfinite(value):
        raise InvalidParameterError(f"{name} must be a positive finite number, got {value!r}")


def _as_raster(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an H x W x 3 raster, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class LinearHDRFrame:
    """Non-negative linear radiance raster of shape (H, W, 3)."""

    data: np.ndarray

    def __post_init__(self):
        arr = _as_raster(self.data)
        if not np.all(np.isfinite(arr)):
            raise ValueError("HDR frame contains NaN or Inf")
        if arr.size and arr.min() < 0:
            raise ValueError("HDR frame contains negative radiance")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class LDRFrame:
    """Camera-domain raster in [0, 1] with its exposure metadata."""

    data: np.ndarray
    exposure_time: float
    exposure_index: int = 0
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        arr = _as_raster(self.data)
        _check_positive("exposure_time", self.exposure_time)
        _check_positive("gamma", self.gamma)
        if arr.size and (arr.min() < 0 or arr.max() > 1 or not np.all(np.isfinite(arr))):
            raise ValueError("LDR frame values must lie in [0, 1]")
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "exposure_time", float(self.exposure_time))
        object.__setattr__(self, "exposure_index", int(self.exposure_index))
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def with_data(self, data) -> "LDRFrame":
        return LDRFrame(data, self.exposure_time, self.exposure_index, self.gamma)


@dataclass(frozen=True)
class TonemappedFrame:
    data: np.ndarray
    mu: float = DEFAULT_MU

    def __post_init__(self):
        arr = _as_raster(self.data)
        _check_positive("mu", self.mu)
        if arr.size and (arr.min() < 0 or arr.max() > 1 or not np.all(np.isfinite(arr))):
            raise ValueError("tonemapped values must lie in [0, 1]")
        object.__setattr__(self, "data", arr)


@dataclass(frozen=True)
class NoiseSpec:
    """Zero-centred Gaussian noise whose sigma is drawn per frame from a range."""

    mean: float = 0.0
    sigma_range: tuple[float, float] = field(default=(0.01, 0.05))
    seed: int = 0

    def __post_init__(self):
        lo, hi = (float(v) for v in self.sigma_range)
        if not (0 <= lo <= hi):
            raise InvalidParameterError(f"sigma_range must satisfy 0 <= lo <= hi, got {self.sigma_range}")
        object.__setattr__(self, "sigma_range", (lo, hi))


# -- array level ------------------------------------------------------------


def raster_of(x):
    """The pixel array behind a frame object, or ``x`` itself for arrays."""
    if isinstance(x, (LinearHDRFrame, LDRFrame, TonemappedFrame)):
        return x.data
    return x


def _clip01(x):
    if isinstance(x, torch.Tensor):
        return x.clamp(0.0, 1.0)
    return np.clip(x, 0.0, 1.0)


def expose(hdr, exposure_time: float, gamma: float = DEFAULT_GAMMA):
    """clip((hdr * t) ** (1 / gamma)) on a raw array or tensor."""
    _check_positive("exposure_time", exposure_time)
    _check_positive("gamma", gamma)
    scaled = hdr * exposure_time
    if isinstance(scaled, torch.Tensor):
        return _clip01(scaled.clamp_min(0.0) ** (1.0 / gamma))
    return _clip01(np.power(np.maximum(scaled, 0.0), 1.0 / gamma))


def unexpose(ldr, exposure_time: float, gamma: float = DEFAULT_GAMMA):
    """ldr ** gamma / t; a lower bound on radiance where ``ldr`` was clipped."""
    _check_positive("exposure_time", exposure_time)
    _check_positive("gamma", gamma)
    return ldr**gamma / exposure_time


def mu_law(hdr, mu: float = DEFAULT_MU):
    _check_positive("mu", mu)
    denom = math.log1p(mu)
    if isinstance(hdr, torch.Tensor):
        return torch.log1p(mu * hdr) / denom
    return np.log1p(mu * hdr) / denom


def inverse_mu_law(tm, mu: float = DEFAULT_MU):
    _check_positive("mu", mu)
    if isinstance(tm, torch.Tensor):
        return torch.expm1(tm * math.log1p(mu)) / mu
    return np.expm1(tm * math.log1p(mu)) / mu


# -- frame level ------------------------------------------------------------


def simulate_ldr(hdr: LinearHDRFrame, exposure_time: float, gamma: float = DEFAULT_GAMMA,
                 exposure_index: int = 0) -> LDRFrame:
    _check_positive("exposure_time", exposure_time)
    _check_positive("gamma", gamma)
    data = expose(hdr.data.astype(np.float64), exposure_time, gamma)
    return LDRFrame(data.astype(np.float32), exposure_time, exposure_index, gamma)


def linearize_ldr(ldr: LDRFrame) -> LinearHDRFrame:
    data = unexpose(ldr.data.astype(np.float64), ldr.exposure_time, ldr.gamma)
    return LinearHDRFrame(data.astype(np.float32))


def noise_sigma(spec: NoiseSpec, rng: np.random.Generator) -> float:
    lo, hi = spec.sigma_range
    return float(rng.uniform(lo, hi)) if hi > lo else lo


def add_noise(ldr: LDRFrame, spec: NoiseSpec, rng: np.random.Generator | None = None) -> LDRFrame:
    """Add i.i.d. Gaussian noise with a per-frame sigma and clamp to [0, 1].

    ``rng`` overrides ``spec.seed``; the data pipeline passes generators seeded
    per (scene, frame) so that parallel workers stay reproducible.
    """
    lo, hi = spec.sigma_range
    if hi == 0 and spec.mean == 0:
        return ldr
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    sigma = noise_sigma(spec, rng)
    noise = rng.normal(spec.mean, sigma, size=ldr.data.shape)
    noisy = np.clip(ldr.data.astype(np.float64) + noise, 0.0, 1.0)
    return ldr.with_data(noisy.astype(np.float32))


def tonemap(hdr: LinearHDRFrame, mu: float = DEFAULT_MU) -> TonemappedFrame:
    """mu-law compression; ``hdr`` must already be range-normalized to [0, 1]."""
    _check_positive("mu", mu)
    if hdr.data.size and hdr.data.max() > 1.0:
        raise ValueError("tonemap expects range-normalized radiance in [0, 1]")
    data = mu_law(hdr.data.astype(np.float64), mu)
    return TonemappedFrame(np.clip(data, 0.0, 1.0).astype(np.float32), mu)


def inverse_tonemap(tm: TonemappedFrame) -> LinearHDRFrame:
    data = inverse_mu_law(tm.data.astype(np.float64), tm.mu)
    return LinearHDRFrame(np.clip(data, 0.0, None).astype(np.float32))


def normalize_hdr(hdr: LinearHDRFrame, scale: float) -> LinearHDRFrame:
    """Divide by the dataset scale and clip into [0, 1]."""
    _check_positive("scale", scale)
    return LinearHDRFrame(np.clip(hdr.data / scale, 0.0, 1.0))
