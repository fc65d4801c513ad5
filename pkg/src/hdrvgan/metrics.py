"""Full-reference quality metrics and the sequence evaluation report.

Metrics are computed in float64. ``psnr`` takes data in [0, 1] by default
and rescales to the 8-bit peak convention internally, which is numerically
the same quantity as a peak-1 PSNR.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .radiometry import DEFAULT_MU, mu_law, raster_of

PSNR_CAP = 99.0
REPORT_SCHEMA = "hdrvgan.eval-report/1"
REPORT_COLUMNS = ("frame_index", "psnr", "ssim", "hdr_vdp2")


def _pair(gt, pred) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(raster_of(gt), dtype=np.float64)
    b = np.asarray(raster_of(pred), dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(gt, pred) -> float:
    a, b = _pair(gt, pred)
    return float(np.mean((a - b) ** 2))


def psnr(gt, pred, data_range: float = 1.0, cap: float | None = PSNR_CAP) -> float:
    """10 log10(255^2 / MSE) after mapping ``data_range`` onto 255.

    Identical inputs return ``cap`` (or ``inf`` when ``cap`` is None).
    """
    a, b = _pair(gt, pred)
    scale = 255.0 / data_range
    err = float(np.mean((a * scale - b * scale) ** 2))
    if err == 0.0:
        return math.inf if cap is None else float(cap)
    value = 10.0 * math.log10(255.0**2 / err)
    return value if cap is None else min(value, float(cap))


def _gaussian_kernel(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2
    k = np.exp(-(r**2) / (2 * sigma**2))
    return k / k.sum()


def _filter_valid(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Separable 'valid' correlation of a 2-D image with a 1-D kernel."""
    n = k.size
    rows = sum(k[i] * img[i:img.shape[0] - n + 1 + i, :] for i in range(n))
    return sum(k[i] * rows[:, i:rows.shape[1] - n + 1 + i] for i in range(n))


def ssim(gt, pred, data_range: float = 1.0, win_size: int = 11, sigma: float = 1.5,
         k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean SSIM over fully-covered 11x11 Gaussian windows, averaged over channels."""
    a, b = _pair(gt, pred)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if min(a.shape[:2]) < win_size:
        raise ValueError(f"images must be at least {win_size}x{win_size} for SSIM")
    k = _gaussian_kernel(win_size, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    scores = []
    for ch in range(a.shape[2]):
        x, y = a[..., ch], b[..., ch]
        mx, my = _filter_valid(x, k), _filter_valid(y, k)
        sxx = _filter_valid(x * x, k) - mx * mx
        syy = _filter_valid(y * y, k) - my * my
        sxy = _filter_valid(x * y, k) - mx * my
        num = (2 * mx * my + c1) * (2 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        scores.append(float(np.mean(num / den)))
    return float(np.mean(scores))


# -- sequence evaluation ----------------------------------------------------


@dataclass
class FrameMetrics:
    frame_index: int
    psnr: float
    ssim: float
    hdr_vdp2: float | None = None


@dataclass
class EvalReport:
    frames: list[FrameMetrics]
    border_px: int = 10
    mu: float = DEFAULT_MU
    domain: str = "tonemapped"
    meta: dict = field(default_factory=dict)

    @property
    def mean_psnr(self) -> float:
        return float(np.mean([f.psnr for f in self.frames]))

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([f.ssim for f in self.frames]))

    def summary(self) -> dict:
        vdp = [f.hdr_vdp2 for f in self.frames if f.hdr_vdp2 is not None]
        return {
            "n_frames": len(self.frames),
            "mean_psnr": self.mean_psnr,
            "mean_ssim": self.mean_ssim,
            "mean_hdr_vdp2": float(np.mean(vdp)) if vdp else None,
        }

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "columns": list(REPORT_COLUMNS),
            "rows": [[f.frame_index, f.psnr, f.ssim, f.hdr_vdp2] for f in self.frames],
            "summary": self.summary(),
            "border_px": self.border_px,
            "mu": self.mu,
            "domain": self.domain,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        if d.get("schema") != REPORT_SCHEMA:
            raise ValueError(f"not an evaluation report (schema={d.get('schema')!r})")
        cols = d["columns"]
        frames = [FrameMetrics(**dict(zip(cols, row))) for row in d["rows"]]
        return cls(frames, int(d["border_px"]), float(d["mu"]), d["domain"], dict(d.get("meta", {})))

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "EvalReport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for f in self.frames:
            w.writerow([f.frame_index, repr(f.psnr), repr(f.ssim), "" if f.hdr_vdp2 is None else repr(f.hdr_vdp2)])
        return buf.getvalue()


def evaluate_sequence(gt_frames: Sequence, pred_frames: Sequence, border_px: int = 10,
                      mu: float = DEFAULT_MU, domain: str = "tonemapped",
                      frame_indices: Sequence[int] | None = None) -> EvalReport:
    """Per-frame PSNR/SSIM between range-normalized linear HDR sequences.

    Both sequences are border-cropped, clipped to [0, 1] and mu-law
    compressed before scoring; ``domain="linear"`` skips the compression for
    diagnostics.
    """
    from .dataio import crop_border

    if len(gt_frames) != len(pred_frames):
        raise ValueError(f"sequence lengths differ: {len(gt_frames)} vs {len(pred_frames)}")
    if domain not in ("tonemapped", "linear"):
        raise ValueError(f"unknown domain {domain!r}")
    if frame_indices is None:
        frame_indices = range(len(gt_frames))
    rows = []
    for idx, g, p in zip(frame_indices, gt_frames, pred_frames):
        g = np.clip(crop_border(np.asarray(raster_of(g), np.float64), border_px), 0, 1)
        p = np.clip(crop_border(np.asarray(raster_of(p), np.float64), border_px), 0, 1)
        if domain == "tonemapped":
            g, p = mu_law(g, mu), mu_law(p, mu)
        rows.append(FrameMetrics(int(idx), psnr(g, p), ssim(g, p)))
    return EvalReport(rows, border_px, mu, domain)
