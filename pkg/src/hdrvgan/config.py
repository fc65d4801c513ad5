"""Training configuration: defaults, file loading, validation and hashing."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .dataio import PatchSpec
from .denoiser import ConfigError, DenoiserConfig
from .losses import LossWeights
from .networks import DiscriminatorConfig, GeneratorConfig

CONFIG_SCHEMA = "hdrvgan.train-config/1"
FLOW_BACKENDS = ("pyramid", "zero")
EXTRACTORS = ("random", "vgg19", "identity")

_NESTED = {
    "weights": LossWeights,
    "denoiser": DenoiserConfig,
    "generator": GeneratorConfig,
    "discriminator": DiscriminatorConfig,
    "patch": PatchSpec,
}


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    deterministic: bool = True
    # denoiser pre-training
    denoiser_epochs: int = 100
    denoiser_batch: int = 20
    denoiser_loss: str = "l1"
    use_denoiser: bool = True
    # GAN stages: stage 1 optimizes L_rec, stage 2 L_total
    stage1_epochs: int = 70
    stage1_batch: int = 20
    stage2_epochs: int = 15
    stage2_batch: int = 35
    max_steps: int | None = None
    learning_rate: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    weights: LossWeights = field(default_factory=LossWeights)
    eq10_verbatim: bool = False
    extractor: str = "random"
    extractor_weights: str | None = None
    flow_backend: str = "pyramid"
    noisy_inputs: bool = True
    resample_patches: bool = True
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    patch: PatchSpec = field(default_factory=lambda: PatchSpec(256, 4, 0))

    def __post_init__(self):
        for name in ("denoiser_epochs", "stage1_epochs", "stage2_epochs"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("denoiser_batch", "stage1_batch", "stage2_batch"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.max_steps is not None and self.max_steps < 0:
            raise ConfigError("max_steps must be >= 0")
        b1, b2 = self.betas
        if not (0 <= b1 < 1 and 0 <= b2 < 1):
            raise ConfigError(f"betas must lie in [0, 1), got {self.betas}")
        if self.denoiser_loss not in ("l1", "l2"):
            raise ConfigError(f"denoiser_loss must be l1 or l2, got {self.denoiser_loss!r}")
        if self.flow_backend not in FLOW_BACKENDS:
            raise ConfigError(f"flow_backend must be one of {FLOW_BACKENDS}, got {self.flow_backend!r}")
        if self.extractor not in EXTRACTORS:
            raise ConfigError(f"extractor must be one of {EXTRACTORS}, got {self.extractor!r}")
        object.__setattr__(self, "betas", (float(b1), float(b2)))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def digest(self) -> str:
        """Stable hash of every field; identifies a configuration across runs."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(unknown)}")
    kwargs = {}
    for k, v in data.items():
        if cls is TrainConfig and k in _NESTED:
            kwargs[k] = v if isinstance(v, _NESTED[k]) else _build(_NESTED[k], v, f"{where}.{k}")
        elif k in ("betas", "sigma_range") and isinstance(v, list):
            kwargs[k] = tuple(v)
        else:
            kwargs[k] = v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    schema = d.pop("schema", CONFIG_SCHEMA)
    if schema != CONFIG_SCHEMA:
        raise ConfigError(f"unsupported config schema {schema!r}")
    return _build(TrainConfig, d, "config")


def config_to_dict(cfg: TrainConfig) -> dict:
    return {"schema": CONFIG_SCHEMA, **cfg.to_dict()}


def load_config(path) -> TrainConfig:
    """Read a YAML or JSON config file; missing fields take their defaults."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        return config_from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def save_config(cfg: TrainConfig, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    d = config_to_dict(cfg)
    if path.suffix.lower() == ".json":
        path.write_text(json.dumps(d, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    else:
        path.write_text(yaml.safe_dump(d, sort_keys=True), encoding="utf-8")


def toy_config(**overrides) -> TrainConfig:
    """Small networks and budgets that train in seconds on a CPU."""
    base = TrainConfig(
        denoiser_epochs=2, denoiser_batch=8,
        stage1_epochs=2, stage1_batch=4, stage2_epochs=1, stage2_batch=4,
        denoiser=DenoiserConfig(depth=2, base_channels=8),
        generator=GeneratorConfig(base_channels=8, n_resblocks=8),
        discriminator=DiscriminatorConfig(base_channels=8),
        patch=PatchSpec(32, 2, 0),
    )
    return _build(TrainConfig, {**{f.name: getattr(base, f.name) for f in fields(base)}, **overrides}, "config")
