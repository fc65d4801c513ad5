"""Optical flow between alternating exposures and backward warping.

Sign convention: a flow vector (dx, dy) at pixel (x, y) says the neighbor
content seen at the reference pixel lives at (x + dx, y + dy) in the
neighbor, i.e. ``neighbor(x + dx, y + dy) ~ reference(x, y)``. Positive dx is
rightward, positive dy downward.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, runtime_checkable

import cv2
import numpy as np
import torch
from torch import nn

from .radiometry import LDRFrame, expose, unexpose


class ExposureMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class FlowField:
    data: np.ndarray  # (H, W, 2) float32, channels (dx, dy)

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[2] != 2:
            raise ValueError(f"flow must be H x W x 2, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("flow contains NaN or Inf")
        object.__setattr__(self, "data", arr)

    @classmethod
    def zeros(cls, height: int, width: int) -> "FlowField":
        return cls(np.zeros((height, width, 2), np.float32))

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]


@runtime_checkable
class FlowBackend(Protocol):
    trainable: bool

    def estimate(self, reference: np.ndarray, neighbor: np.ndarray) -> FlowField:
        """Flow from (H, W, 3) reference to neighbor rasters in [0, 1]."""


# -- warping ----------------------------------------------------------------


def warp_backward_tensor(frame: torch.Tensor, flow: torch.Tensor) -> torch.Tensor:
    """Bilinear backward warp of a (B, C, H, W) batch by a (B, 2, H, W) flow.

    Sample positions are clamped to the frame so out-of-bounds lookups repeat
    the edge pixel. Zero flow reproduces the input bit for bit.
    """
    if frame.dim() != 4 or flow.dim() != 4 or flow.shape[1] != 2:
        raise ValueError(f"expected (B,C,H,W) frame and (B,2,H,W) flow, got {tuple(frame.shape)}, {tuple(flow.shape)}")
    b, c, h, w = frame.shape
    if flow.shape[0] != b or flow.shape[2:] != frame.shape[2:]:
        raise ValueError(f"flow dims {tuple(flow.shape)} do not match frame dims {tuple(frame.shape)}")
    flow = flow.to(frame.dtype)
    ys = torch.arange(h, dtype=frame.dtype, device=frame.device).view(1, h, 1)
    xs = torch.arange(w, dtype=frame.dtype, device=frame.device).view(1, 1, w)
    sx = (xs + flow[:, 0]).clamp(0, w - 1)
    sy = (ys + flow[:, 1]).clamp(0, h - 1)
    x0f = sx.floor()
    y0f = sy.floor()
    wx = (sx - x0f).unsqueeze(1)
    wy = (sy - y0f).unsqueeze(1)
    x0 = x0f.long()
    y0 = y0f.long()
    x1 = (x0 + 1).clamp(max=w - 1)
    y1 = (y0 + 1).clamp(max=h - 1)

    flat = frame.reshape(b, c, h * w)

    def gather(yi, xi):
        idx = (yi * w + xi).view(b, 1, h * w).expand(b, c, h * w)
        return flat.gather(2, idx).view(b, c, h, w)

    top = gather(y0, x0) * (1 - wx) + gather(y0, x1) * wx
    bottom = gather(y1, x0) * (1 - wx) + gather(y1, x1) * wx
    return top * (1 - wy) + bottom * wy


def warp_backward(frame, flow: FlowField):
    """Warp an (H, W, C) raster or an LDRFrame by ``flow``; returns the same kind."""
    data = frame.data if isinstance(frame, LDRFrame) else np.asarray(frame)
    if data.shape[:2] != flow.shape:
        raise ValueError(f"frame dims {data.shape[:2]} do not match flow dims {flow.shape}")
    src = torch.from_numpy(np.ascontiguousarray(data, dtype=np.float64)).permute(2, 0, 1)[None]
    f = torch.from_numpy(flow.data.astype(np.float64)).permute(2, 0, 1)[None]
    out = warp_backward_tensor(src, f)[0].permute(1, 2, 0).numpy()
    if isinstance(frame, LDRFrame):
        return frame.with_data(np.clip(out, 0.0, 1.0).astype(np.float32))
    return out.astype(data.dtype, copy=False)


# -- exposure normalization -------------------------------------------------


def exposure_normalize(ref: LDRFrame, nbr: LDRFrame) -> tuple[np.ndarray, np.ndarray]:
    """Bring ``nbr`` to the reference exposure so the two rasters are comparable.

    Both frames are linearized and the neighbor is re-exposed at the
    reference exposure time. Clipped regions stay clipped.
    """
    if ref.exposure_time == nbr.exposure_time:
        raise ExposureMismatchError("exposure_normalize needs frames with different exposure times")
    if ref.data.shape != nbr.data.shape:
        raise ValueError(f"frame dims differ: {ref.data.shape} vs {nbr.data.shape}")
    ref_lin = unexpose(ref.data.astype(np.float64), ref.exposure_time, ref.gamma)
    nbr_lin = unexpose(nbr.data.astype(np.float64), nbr.exposure_time, nbr.gamma)
    ref_n = expose(ref_lin, ref.exposure_time, ref.gamma)
    nbr_n = expose(nbr_lin, ref.exposure_time, ref.gamma)
    return ref_n.astype(np.float32), nbr_n.astype(np.float32)


# -- backends ---------------------------------------------------------------


def _luma255(rgb: np.ndarray) -> np.ndarray:
    y = rgb[..., 0] * 0.299 + rgb[..., 1] * 0.587 + rgb[..., 2] * 0.114
    return np.ascontiguousarray(y * 255.0, dtype=np.float32)


class PyramidFlowBackend:
    """Fixed coarse-to-fine polynomial-expansion flow (OpenCV Farneback)."""

    trainable = False

    def __init__(self, levels: int = 4, pyr_scale: float = 0.5, window: int = 21,
                 iterations: int = 10, poly_n: int = 5, poly_sigma: float = 1.2):
        if not 3 <= levels <= 5:
            raise ValueError("levels must be between 3 and 5")
        self.levels = levels
        self.pyr_scale = pyr_scale
        self.window = window
        self.iterations = iterations
        self.poly_n = poly_n
        self.poly_sigma = poly_sigma

    def estimate(self, reference: np.ndarray, neighbor: np.ndarray) -> FlowField:
        if reference.shape != neighbor.shape:
            raise ValueError(f"dims differ: {reference.shape} vs {neighbor.shape}")
        h, w = reference.shape[:2]
        # pyramid depth limited by the frame size
        levels = max(0, min(self.levels, int(np.log(min(h, w) / 8) / np.log(1 / self.pyr_scale))))
        flow = cv2.calcOpticalFlowFarneback(
            _luma255(reference), _luma255(neighbor), None, self.pyr_scale, levels + 1,
            self.window, self.iterations, self.poly_n, self.poly_sigma, 0)
        return FlowField(np.nan_to_num(flow))


class ZeroFlowBackend:
    """Identity alignment; used for ablations and the frame-0 fallback."""

    trainable = False

    def estimate(self, reference: np.ndarray, neighbor: np.ndarray) -> FlowField:
        if reference.shape != neighbor.shape:
            raise ValueError(f"dims differ: {reference.shape} vs {neighbor.shape}")
        return FlowField.zeros(*reference.shape[:2])


class ResidualFlowNet(nn.Module):
    """Small trainable flow refiner satisfying the backend interface.

    Predicts a residual on top of an initial (by default zero) flow from the
    two normalized frames. Optional; the pipeline defaults to the fixed
    pyramid backend.
    """

    trainable = True

    def __init__(self, channels: int = 32, base: FlowBackend | None = None):
        super().__init__()
        self.base = base
        self.net = nn.Sequential(
            nn.Conv2d(8, channels, 3, padding=1), nn.LeakyReLU(0.1),
            nn.Conv2d(channels, channels, 3, padding=1), nn.LeakyReLU(0.1),
            nn.Conv2d(channels, 2, 3, padding=1),
        )
        nn.init.zeros_(self.net[-1].weight)
        nn.init.zeros_(self.net[-1].bias)

    def forward(self, reference: torch.Tensor, neighbor: torch.Tensor, init: torch.Tensor) -> torch.Tensor:
        warped = warp_backward_tensor(neighbor, init)
        return init + self.net(torch.cat([reference, warped, init], dim=1))

    def estimate(self, reference: np.ndarray, neighbor: np.ndarray) -> FlowField:
        if reference.shape != neighbor.shape:
            raise ValueError(f"dims differ: {reference.shape} vs {neighbor.shape}")
        init = (self.base or ZeroFlowBackend()).estimate(reference, neighbor)
        p = next(self.parameters())
        to_t = lambda a: torch.from_numpy(np.ascontiguousarray(a)).permute(2, 0, 1)[None].to(p)  # noqa: E731
        with torch.no_grad():
            out = self(to_t(reference), to_t(neighbor), to_t(init.data))
        return FlowField(out[0].permute(1, 2, 0).cpu().numpy())


def estimate_flow(backend: FlowBackend, ref, nbr) -> FlowField:
    ref_d = ref.data if isinstance(ref, LDRFrame) else np.asarray(ref)
    nbr_d = nbr.data if isinstance(nbr, LDRFrame) else np.asarray(nbr)
    if ref_d.shape != nbr_d.shape:
        raise ValueError(f"frame dims differ: {ref_d.shape} vs {nbr_d.shape}")
    flow = backend.estimate(ref_d, nbr_d)
    if flow.shape != ref_d.shape[:2]:
        raise ValueError(f"backend returned flow of dims {flow.shape} for frames of {ref_d.shape[:2]}")
    return flow


def align_neighbor(backend: FlowBackend, ref: LDRFrame, nbr: LDRFrame,
                   return_flow: bool = False):
    """Warp the original neighbor onto the reference geometry, keeping its exposure."""
    ref_n, nbr_n = exposure_normalize(ref, nbr)
    flow = estimate_flow(backend, ref_n, nbr_n)
    aligned = warp_backward(nbr, flow)
    return (aligned, flow) if return_flow else aligned


# -- debug dump -------------------------------------------------------------

_FLOW_MAGIC = b"HDRVFLO1"


def save_flow(path, flow: FlowField) -> None:
    """Write ``flow`` as magic, (height, width), sign-convention tag, float32 data."""
    h, w = flow.shape
    conv = b"nbr(x+dx,y+dy)~ref(x,y);+x right;+y down".ljust(48, b" ")
    with open(path, "wb") as fh:
        fh.write(_FLOW_MAGIC + struct.pack("<II", h, w) + conv)
        fh.write(np.ascontiguousarray(flow.data, dtype="<f4").tobytes())


def load_flow(path) -> FlowField:
    raw = Path(path).read_bytes()
    if raw[:8] != _FLOW_MAGIC:
        raise ValueError(f"{path}: not a flow dump")
    h, w = struct.unpack("<II", raw[8:16])
    data = np.frombuffer(raw[64:], dtype="<f4")
    if data.size != h * w * 2:
        raise ValueError(f"{path}: truncated flow dump")
    return FlowField(data.reshape(h, w, 2).copy())
