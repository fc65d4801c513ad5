"""Procedural HDR video scenes for tests, smoke runs and the ``synth`` command.

A scene is an analytic radiance field evaluated on a pixel grid, so camera pans
and object motion are exact sub-pixel translations of the same function.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .frameio import write_hdr


@dataclass(frozen=True)
class SceneParams:
    log_base: float
    grad: tuple[float, float]
    tex_freq: tuple[float, float]
    tex_amp: float
    tint: tuple[float, float, float]
    sun_pos: tuple[float, float]
    sun_radius: float
    sun_peak: float
    obj_pos: tuple[float, float]
    obj_vel: tuple[float, float]
    obj_radius: float
    obj_radiance: float
    pan: tuple[float, float]

    @classmethod
    def random(cls, rng: np.random.Generator, height: int, width: int,
               pan: tuple[float, float] | None = None) -> "SceneParams":
        span = max(height, width)
        if pan is None:
            pan = (float(rng.uniform(-1.5, 1.5)), float(rng.uniform(-1.0, 1.0)))
        return cls(
            log_base=float(rng.uniform(-2.5, -1.5)),
            grad=(float(rng.uniform(1.5, 2.5)) / span, float(rng.uniform(-0.8, 0.8)) / span),
            tex_freq=(float(rng.uniform(0.05, 0.15)), float(rng.uniform(0.05, 0.15))),
            tex_amp=float(rng.uniform(0.2, 0.5)),
            tint=tuple(float(v) for v in rng.uniform(0.7, 1.2, size=3)),
            sun_pos=(float(rng.uniform(0.55, 0.85) * width), float(rng.uniform(0.15, 0.45) * height)),
            sun_radius=float(rng.uniform(0.06, 0.12) * span),
            sun_peak=float(rng.uniform(8.0, 20.0)),
            obj_pos=(float(rng.uniform(0.2, 0.5) * width), float(rng.uniform(0.4, 0.7) * height)),
            obj_vel=(float(rng.uniform(0.5, 2.0)), float(rng.uniform(-1.0, 1.0))),
            obj_radius=float(rng.uniform(0.1, 0.18) * span),
            obj_radiance=float(rng.uniform(0.02, 0.3)),
            pan=pan,
        )


def render_frame(p: SceneParams, index: float, height: int, width: int) -> np.ndarray:
    """Radiance raster (H, W, 3) of frame ``index``."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    # world coordinates: the camera pans, the scene is static apart from the object
    wx = xx + p.pan[0] * index
    wy = yy + p.pan[1] * index
    log_h = (p.log_base + p.grad[0] * wx + p.grad[1] * wy
             + p.tex_amp * np.sin(p.tex_freq[0] * wx) * np.cos(p.tex_freq[1] * wy))
    lum = 10.0 ** log_h
    r2 = (wx - p.sun_pos[0]) ** 2 + (wy - p.sun_pos[1]) ** 2
    lum = lum + p.sun_peak * np.exp(-r2 / (2 * p.sun_radius**2))
    ox = p.obj_pos[0] + p.obj_vel[0] * index
    oy = p.obj_pos[1] + p.obj_vel[1] * index
    d = np.sqrt((wx - ox) ** 2 + (wy - oy) ** 2)
    # soft-edged disc with a stripe texture
    mask = 1.0 / (1.0 + np.exp((d - p.obj_radius) / 0.75))
    stripes = 1.0 + 0.6 * np.sin(0.6 * (wx - ox))
    lum = lum * (1 - mask) + mask * p.obj_radiance * stripes
    rgb = lum[..., None] * np.asarray(p.tint)[None, None, :]
    return rgb.astype(np.float32)


def make_scene(seed: int, n_frames: int, height: int, width: int,
               pan: tuple[float, float] | None = None, static: bool = False) -> list[np.ndarray]:
    """Frames of one random scene; ``static`` freezes both camera and object."""
    rng = np.random.default_rng(seed)
    params = SceneParams.random(rng, height, width, pan)
    if static:
        params = replace(params, pan=(0.0, 0.0), obj_vel=(0.0, 0.0))
    return [render_frame(params, k, height, width) for k in range(n_frames)]


def write_synthetic_dataset(root, n_scenes: int = 2, n_frames: int = 6, height: int = 64,
                            width: int = 64, seed: int = 0, suffix: str = ".hdr", static: bool = False) -> Path:
    """Write ``n_scenes`` scene folders of ``frame_XXXX<suffix>`` files under ``root``."""
    root = Path(root)
    seeds = np.random.SeedSequence(seed).generate_state(n_scenes)
    for s in range(n_scenes):
        frames = make_scene(int(seeds[s]), n_frames, height, width, static=static)
        for k, frame in enumerate(frames):
            write_hdr(root / f"scene_{s:03d}" / f"frame_{k:04d}{suffix}", frame)
    return root
