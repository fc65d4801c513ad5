"""Image file I/O for linear HDR frames (.hdr / .exr) and 16-bit PNG LDR frames."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

os.environ.setdefault("OPENCV_IO_ENABLE_OPENEXR", "1")
import cv2  # noqa: E402

HDR_SUFFIXES = (".hdr", ".exr")


class FrameReadError(IOError):
    pass


def _read_exr(path: Path) -> np.ndarray:
    try:
        import OpenEXR  # type: ignore

        with OpenEXR.File(str(path)) as f:
            channels = f.channels()
            if "RGB" in channels:
                return np.asarray(channels["RGB"].pixels, dtype=np.float32)
            return np.stack([channels[c].pixels for c in "RGB"], axis=-1).astype(np.float32)
    except ImportError:
        pass
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise FrameReadError(f"cannot decode OpenEXR file {path}: no EXR codec available "
                             "(install the OpenEXR package)")
    return img[..., ::-1].astype(np.float32)


def read_hdr(path) -> np.ndarray:
    """Read an RGB float32 radiance raster (H, W, 3)."""
    path = Path(path)
    if not path.is_file():
        raise FrameReadError(f"HDR frame not found: {path}")
    if path.suffix.lower() == ".exr":
        img = _read_exr(path)
    else:
        img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
        if img is None:
            raise FrameReadError(f"unreadable HDR frame: {path}")
        img = img[..., ::-1]
    img = np.ascontiguousarray(img, dtype=np.float32)
    if img.ndim != 3 or img.shape[2] < 3:
        raise FrameReadError(f"{path}: expected an RGB raster, got shape {img.shape}")
    return img[..., :3]


def write_hdr(path, data: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    bgr = np.ascontiguousarray(np.asarray(data, dtype=np.float32)[..., ::-1])
    if path.suffix.lower() == ".exr":
        try:
            import OpenEXR  # type: ignore

            header = {"compression": OpenEXR.ZIP_COMPRESSION, "type": OpenEXR.scanlineimage}
            rgb = np.ascontiguousarray(bgr[..., ::-1])
            with OpenEXR.File(header, {"RGB": rgb}) as f:
                f.write(str(path))
            return
        except ImportError:
            pass
    try:
        ok = cv2.imwrite(str(path), bgr)
    except cv2.error as exc:
        raise IOError(f"cannot encode {path}: {exc}") from exc
    if not ok:
        raise IOError(f"cannot write {path}")


def read_ldr_png(path) -> np.ndarray:
    path = Path(path)
    img = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if img is None:
        raise FrameReadError(f"unreadable LDR frame: {path}")
    if img.dtype == np.uint16:
        scale = 65535.0
    elif img.dtype == np.uint8:
        scale = 255.0
    else:
        raise FrameReadError(f"{path}: unsupported PNG depth {img.dtype}")
    return (img[..., 2::-1].astype(np.float32) / scale)


def write_ldr_png(path, data: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    q = np.round(np.clip(data, 0.0, 1.0) * 65535.0).astype(np.uint16)
    if not cv2.imwrite(str(path), np.ascontiguousarray(q[..., ::-1])):
        raise IOError(f"cannot write {path}")
