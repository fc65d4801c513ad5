"""Scene ingestion, dataset manifests and alternating-exposure sample streams."""

from __future__ import annotations

import json
import logging
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .frameio import HDR_SUFFIXES, read_hdr, write_ldr_png
from .radiometry import (
    DEFAULT_GAMMA,
    LDRFrame,
    LinearHDRFrame,
    NoiseSpec,
    TonemappedFrame,
    add_noise,
    normalize_hdr,
    raster_of,
    simulate_ldr,
)

log = logging.getLogger(__name__)

MANIFEST_SCHEMA = "hdrvgan.manifest/1"
HDR_SCALE_PERCENTILE = 99.9


class DatasetError(ValueError):
    pass


class ManifestParseError(DatasetError):
    pass


@dataclass(frozen=True)
class ExposureSchedule:
    """Exposure times cycled frame by frame; frame k uses ``times[k % period]``."""

    times: tuple[float, ...] = (1.0, 8.0)
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        if len(times) < 2 or any(t <= 0 for t in times):
            raise DatasetError(f"need at least two positive exposure times, got {self.times}")
        if len(set(times)) != len(times):
            raise DatasetError("exposure times in the schedule must differ")
        object.__setattr__(self, "times", times)

    @classmethod
    def from_stops(cls, stops: float = 3.0, t_low: float = 1.0, gamma: float = DEFAULT_GAMMA):
        return cls((t_low, t_low * 2.0**stops), gamma)

    @property
    def period(self) -> int:
        return len(self.times)

    def index_of(self, frame_index: int) -> int:
        return frame_index % self.period

    def time_of(self, frame_index: int) -> float:
        return self.times[self.index_of(frame_index)]


@dataclass(frozen=True)
class SceneEntry:
    scene_id: str
    frames: tuple[str, ...]
    split: str

    def __post_init__(self):
        if self.split not in ("train", "test"):
            raise DatasetError(f"scene {self.scene_id}: split must be train or test, got {self.split!r}")
        if len(self.frames) < 2:
            raise DatasetError(f"scene {self.scene_id} has fewer than 2 frames")


@dataclass(frozen=True)
class DatasetManifest:
    root: str
    scenes: tuple[SceneEntry, ...]
    hdr_scale: float
    schedule: ExposureSchedule = field(default_factory=ExposureSchedule)
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self):
        if not self.scenes:
            raise DatasetError("manifest has no scenes")
        if not (self.hdr_scale > 0 and math.isfinite(self.hdr_scale)):
            raise DatasetError(f"hdr_scale must be positive, got {self.hdr_scale}")
        ids = [s.scene_id for s in self.scenes]
        if len(set(ids)) != len(ids):
            raise DatasetError("duplicate scene ids in manifest")

    def split(self, name: str) -> tuple[SceneEntry, ...]:
        return tuple(s for s in self.scenes if s.split == name)

    def scene(self, scene_id: str) -> SceneEntry:
        for s in self.scenes:
            if s.scene_id == scene_id:
                return s
        raise KeyError(scene_id)

    def frame_path(self, scene: SceneEntry, k: int) -> Path:
        return Path(self.root) / scene.frames[k]

    def load_hdr(self, scene: SceneEntry, k: int) -> LinearHDRFrame:
        """Frame ``k`` of ``scene``, normalized by ``hdr_scale`` (unclipped)."""
        return LinearHDRFrame(read_hdr(self.frame_path(scene, k)) / self.hdr_scale)

    def replace(self, **changes) -> "DatasetManifest":
        d = {f: getattr(self, f) for f in ("root", "scenes", "hdr_scale", "schedule", "noise")}
        d.update(changes)
        return DatasetManifest(**d)


@dataclass(frozen=True)
class PatchSpec:
    patch_size: int = 256
    patches_per_frame: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.patch_size < 32:
            raise DatasetError(f"patch_size must be >= 32, got {self.patch_size}")
        if self.patches_per_frame < 1:
            raise DatasetError("patches_per_frame must be >= 1")


@dataclass(frozen=True)
class SequenceSample:
    """Training/eval unit for frame ``frame_index`` of a scene.

    ``prev_*`` fields describe frame i-1 as a reference in its own right
    (its ground truth and its own previous neighbor, frame i-2). For
    ``frame_index == 1`` there is no frame i-2 and ``prev_neighbor_ldr`` is
    None; consumers duplicate frame i-1 with zero flow, as inference does for
    frame 0.
    """

    reference_ldr: LDRFrame
    neighbor_ldr: LDRFrame
    gt_hdr: LinearHDRFrame
    prev_gt_hdr: LinearHDRFrame
    prev_neighbor_ldr: LDRFrame | None
    scene_id: str
    frame_index: int
    crop: tuple[int, int, int, int]  # top, left, height, width in the full frame


# -- ingest -----------------------------------------------------------------


def _scene_frames(scene_dir: Path) -> list[Path]:
    return sorted(p for p in scene_dir.iterdir() if p.is_file() and p.suffix.lower() in HDR_SUFFIXES)


def ingest(root_dir, test_count: int = 3, schedule: ExposureSchedule | None = None,
           noise: NoiseSpec | None = None, seed: int = 0) -> DatasetManifest:
    """Scan ``root_dir/<scene>/<frames>`` and build a manifest.

    Test scenes are drawn with ``seed`` from the sorted scene list; the HDR
    scale is the 99.9th percentile of all train-split radiance values.
    """
    root = Path(root_dir)
    if not root.is_dir():
        raise DatasetError(f"dataset root does not exist or is not a directory: {root}")
    scene_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not scene_dirs:
        raise DatasetError(f"no scene subdirectories under {root}")
    if not (0 <= test_count < len(scene_dirs)):
        raise DatasetError(f"test_count={test_count} must leave at least one of "
                           f"{len(scene_dirs)} scenes for training")

    rng = np.random.default_rng(seed)
    test_ids = set(rng.choice(len(scene_dirs), size=test_count, replace=False).tolist())

    scenes = []
    train_values = []
    for idx, d in enumerate(scene_dirs):
        frames = _scene_frames(d)
        if not frames:
            raise DatasetError(f"scene {d.name} contains no HDR frames ({', '.join(HDR_SUFFIXES)})")
        if len(frames) < 2:
            raise DatasetError(f"scene {d.name} has a single frame; need at least 2")
        split = "test" if idx in test_ids else "train"
        shape = None
        for f in frames:
            img = read_hdr(f)
            if shape is None:
                shape = img.shape
            elif img.shape != shape:
                raise DatasetError(f"scene {d.name}: mixed resolutions ({shape[:2]} vs {img.shape[:2]} in {f.name})")
            if not np.all(np.isfinite(img)) or img.min() < 0:
                raise DatasetError(f"{f}: radiance must be finite and non-negative")
            if split == "train":
                train_values.append(img.ravel())
        scenes.append(SceneEntry(d.name, tuple(f"{d.name}/{f.name}" for f in frames), split))

    scale = float(np.percentile(np.concatenate(train_values), HDR_SCALE_PERCENTILE))
    if not scale > 0:
        raise DatasetError("train split radiance is all zero; cannot derive hdr_scale")
    return DatasetManifest(
        root=str(root.resolve()),
        scenes=tuple(scenes),
        hdr_scale=scale,
        schedule=schedule or ExposureSchedule(),
        noise=noise or NoiseSpec(seed=seed),
    )


# -- persistence ------------------------------------------------------------


def manifest_to_dict(m: DatasetManifest) -> dict:
    return {
        "schema": MANIFEST_SCHEMA,
        "root": m.root,
        "hdr_scale": m.hdr_scale,
        "schedule": {"exposure_times": list(m.schedule.times), "period": m.schedule.period,
                     "gamma": m.schedule.gamma},
        "noise": {"mean": m.noise.mean, "sigma_range": list(m.noise.sigma_range), "seed": m.noise.seed},
        "scenes": [{"id": s.scene_id, "split": s.split, "frames": list(s.frames)} for s in m.scenes],
    }


_KNOWN_KEYS = {"schema", "root", "hdr_scale", "schedule", "noise", "scenes"}


def manifest_from_dict(d: dict) -> DatasetManifest:
    if not isinstance(d, dict):
        raise ManifestParseError("manifest must be a mapping at top level")
    if d.get("schema") != MANIFEST_SCHEMA:
        raise ManifestParseError(f"field 'schema': expected {MANIFEST_SCHEMA!r}, got {d.get('schema')!r}")
    for key in sorted(set(d) - _KNOWN_KEYS):
        log.warning("manifest: ignoring unknown field %r", key)
    try:
        sched = d["schedule"]
        noise = d["noise"]
        scenes = tuple(SceneEntry(s["id"], tuple(s["frames"]), s["split"]) for s in d["scenes"])
        return DatasetManifest(
            root=d["root"],
            scenes=scenes,
            hdr_scale=float(d["hdr_scale"]),
            schedule=ExposureSchedule(tuple(sched["exposure_times"]), float(sched["gamma"])),
            noise=NoiseSpec(float(noise["mean"]), tuple(noise["sigma_range"]), int(noise["seed"])),
        )
    except KeyError as exc:
        raise ManifestParseError(f"missing field {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ManifestParseError(f"invalid manifest: {exc}") from exc


def dumps_manifest(m: DatasetManifest) -> str:
    return json.dumps(manifest_to_dict(m), indent=2, sort_keys=True) + "\n"


def save_manifest(m: DatasetManifest, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(dumps_manifest(m), encoding="utf-8")


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"manifest not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestParseError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    try:
        return manifest_from_dict(d)
    except ManifestParseError as exc:
        raise ManifestParseError(f"{path}: {exc}") from exc


# -- samples ----------------------------------------------------------------


def frame_rng(seed: int, scene_id: str, frame_index: int, epoch: int = 0) -> np.random.Generator:
    """Independent generator for one (scene, frame, epoch); stable across processes."""
    return np.random.default_rng([seed, zlib.crc32(scene_id.encode()), frame_index, epoch])


def synthesize_ldr(manifest: DatasetManifest, hdr: LinearHDRFrame, scene_id: str, k: int,
                   epoch: int = 0, noisy: bool = True) -> LDRFrame:
    sched = manifest.schedule
    clean = simulate_ldr(hdr, sched.time_of(k), sched.gamma, sched.index_of(k))
    if not noisy:
        return clean
    return add_noise(clean, manifest.noise, frame_rng(manifest.noise.seed, scene_id, k, epoch))


def crop_border(frame, border_px: int):
    """Remove ``border_px`` pixels from every side of a raster or frame."""
    data = raster_of(frame)
    h, w = data.shape[:2]
    if border_px < 0 or 2 * border_px >= min(h, w):
        raise ValueError(f"border of {border_px}px is too large for a {w}x{h} frame")
    if border_px == 0:
        return frame
    cropped = data[border_px:h - border_px, border_px:w - border_px]
    return _rewrap(frame, cropped)


def _rewrap(frame, data):
    if isinstance(frame, LDRFrame):
        return frame.with_data(data)
    if isinstance(frame, LinearHDRFrame):
        return LinearHDRFrame(data)
    if isinstance(frame, TonemappedFrame):
        return TonemappedFrame(data, frame.mu)
    return data


def _crop(frame, top, left, size):
    return _rewrap(frame, raster_of(frame)[top:top + size, left:left + size])


def build_samples(manifest: DatasetManifest, patch: PatchSpec | None = None, split: str = "train",
                  epoch: int = 0, noisy: bool = True, scene_ids: Sequence[str] | None = None
                  ) -> Iterator[SequenceSample]:
    """Yield samples for every consecutive frame pair of every scene in ``split``.

    ``patch=None`` yields full frames. Crop positions depend only on
    (patch.seed, scene, frame, epoch); noise only on (noise.seed, scene, frame,
    epoch), so the same noisy frame k is used wherever it appears.
    """
    scenes = manifest.split(split) if scene_ids is None else [manifest.scene(s) for s in scene_ids]
    for scene in scenes:
        hdr_cache: dict[int, LinearHDRFrame] = {}
        ldr_cache: dict[int, LDRFrame] = {}

        def hdr(k):
            if k not in hdr_cache:
                hdr_cache[k] = manifest.load_hdr(scene, k)
            return hdr_cache[k]

        def ldr(k):
            if k not in ldr_cache:
                ldr_cache[k] = synthesize_ldr(manifest, hdr(k), scene.scene_id, k, epoch, noisy)
            return ldr_cache[k]

        for i in range(1, len(scene.frames)):
            ref, nbr = ldr(i), ldr(i - 1)
            gt = normalize_hdr(hdr(i), 1.0)
            prev_gt = normalize_hdr(hdr(i - 1), 1.0)
            prev_nbr = ldr(i - 2) if i >= 2 else None
            h, w = gt.height, gt.width
            hdr_cache.pop(i - 2, None)
            ldr_cache.pop(i - 3, None)
            if patch is None:
                yield SequenceSample(ref, nbr, gt, prev_gt, prev_nbr, scene.scene_id, i, (0, 0, h, w))
                continue
            if patch.patch_size > min(h, w):
                raise DatasetError(f"patch_size {patch.patch_size} exceeds frame size {w}x{h}")
            rng = frame_rng(patch.seed, scene.scene_id, i, epoch)
            for _ in range(patch.patches_per_frame):
                top = int(rng.integers(0, h - patch.patch_size + 1))
                left = int(rng.integers(0, w - patch.patch_size + 1))
                s = patch.patch_size
                yield SequenceSample(
                    _crop(ref, top, left, s), _crop(nbr, top, left, s), _crop(gt, top, left, s),
                    _crop(prev_gt, top, left, s),
                    None if prev_nbr is None else _crop(prev_nbr, top, left, s),
                    scene.scene_id, i, (top, left, s, s),
                )


def export_ldr_sequence(manifest: DatasetManifest, scene_id: str, out_dir, noisy: bool = True,
                        epoch: int = 0) -> Path:
    """Materialize a scene's alternating-exposure LDR frames as 16-bit PNGs.

    Writes ``sequence.json`` next to the PNGs listing file, exposure time and
    exposure index per frame; ``infer`` reads this index.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scene = manifest.scene(scene_id)
    entries = []
    for k in range(len(scene.frames)):
        ldr = synthesize_ldr(manifest, manifest.load_hdr(scene, k), scene_id, k, epoch, noisy)
        name = f"ldr_{k:04d}.png"
        write_ldr_png(out / name, ldr.data)
        entries.append({"file": name, "exposure_time": ldr.exposure_time,
                        "exposure_index": ldr.exposure_index, "source_frame": scene.frames[k]})
    index = {"schema": "hdrvgan.ldr-sequence/1", "scene_id": scene_id, "gamma": manifest.schedule.gamma,
             "hdr_scale": manifest.hdr_scale, "frames": entries}
    (out / "sequence.json").write_text(json.dumps(index, indent=2) + "\n", encoding="utf-8")
    return out


def load_ldr_sequence(seq_dir) -> tuple[list[LDRFrame], dict]:
    from .frameio import read_ldr_png

    seq_dir = Path(seq_dir)
    index_path = seq_dir / "sequence.json"
    if not index_path.is_file():
        raise DatasetError(f"missing LDR sequence index: {index_path}")
    index = json.loads(index_path.read_text(encoding="utf-8"))
    gamma = float(index.get("gamma", DEFAULT_GAMMA))
    frames = [LDRFrame(read_ldr_png(seq_dir / e["file"]), e["exposure_time"], e["exposure_index"], gamma)
              for e in index["frames"]]
    return frames, index


__all__ = [
    "DatasetError", "DatasetManifest", "ExposureSchedule", "ManifestParseError", "PatchSpec",
    "SceneEntry", "SequenceSample", "build_samples", "crop_border", "export_ldr_sequence", "ingest",
    "load_ldr_sequence", "load_manifest", "save_manifest",
]
