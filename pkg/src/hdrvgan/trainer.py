"""Staged training: denoiser pre-training, then GAN training under L_rec and L_total.

Stage 1 optimizes the reconstruction objective, stage 2 fine-tunes with the
temporal term mixed in. Denoisers are frozen once the GAN stages start.
Every run writes an append-only JSONL event log next to its checkpoints.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .checkpoint import CheckpointError, load_checkpoint, restore_rng_state, save_checkpoint, state_digest
from .config import TrainConfig, config_from_dict, config_to_dict
from .dataio import DatasetError, DatasetManifest, build_samples, frame_rng, synthesize_ldr
from .denoiser import ROLES, DenoiserConfig, DenoiserNet, build_denoiser, denoise, denoiser_loss
from .flowalign import FlowBackend, PyramidFlowBackend, ZeroFlowBackend, align_neighbor
from .losses import (
    LossParts,
    adversarial_losses,
    content_loss,
    generator_adversarial_loss,
    l1_loss,
    make_extractor,
    reconstruction_loss,
    style_loss,
    temporal_reg,
    total_loss,
)
from .metrics import EvalReport, evaluate_sequence
from .networks import build_discriminator, build_generator, generate, generator_inputs
from .radiometry import LDRFrame, LinearHDRFrame, inverse_tonemap, mu_law

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class TrainingAborted(TrainingError):
    """A loss went non-finite; ``snapshot`` points at the diagnostic dump, if any."""

    def __init__(self, message: str, snapshot: Path | None = None):
        super().__init__(message)
        self.snapshot = snapshot


class EventLog:
    """Append-only JSON-lines event stream; also kept in memory."""

    def __init__(self, path=None):
        self.path = Path(path) if path else None
        self.events: list[dict] = []
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def emit(self, event: str, **fields) -> dict:
        rec = {"event": event, "time": time.time(), **fields}
        self.events.append(rec)
        if self.path:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        return rec

    def of(self, event: str) -> list[dict]:
        return [e for e in self.events if e["event"] == event]


def read_events(path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]


def resolve_device(name: str | None = None) -> torch.device:
    """``name`` or the HDRVGAN_DEVICE environment variable, defaulting to CPU."""
    name = name or os.environ.get("HDRVGAN_DEVICE", "cpu")
    try:
        dev = torch.device(name)
    except RuntimeError as exc:
        raise TrainingError(f"invalid device {name!r}") from exc
    if dev.type == "cuda" and not torch.cuda.is_available():
        raise TrainingError(f"device {name!r} requested but CUDA is not available")
    return dev


def set_determinism(seed: int, deterministic: bool) -> None:
    torch.manual_seed(seed)
    np.random.seed(seed % 2**32)
    torch.use_deterministic_algorithms(deterministic, warn_only=True)


def _adam(params, config: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(params, lr=config.learning_rate, betas=config.betas)


def _to_batch(arrays: Sequence[np.ndarray]) -> torch.Tensor:
    return torch.from_numpy(np.stack(arrays).astype(np.float32)).permute(0, 3, 1, 2).contiguous()


def _check_finite(values: dict, where: dict, snapshot_dir: Path | None, models: dict) -> None:
    bad = {k: v for k, v in values.items() if not math.isfinite(v)}
    if not bad:
        return
    snap = None
    if snapshot_dir is not None:
        snapshot_dir.mkdir(parents=True, exist_ok=True)
        snap = snapshot_dir / "nan_snapshot.pt"
        torch.save({"losses": values, "where": where,
                    "models": {k: m.state_dict() for k, m in models.items()}}, snap)
    raise TrainingAborted(f"non-finite loss {bad} at {where}", snap)


# -- denoisers ----------------------------------------------------------------


def denoiser_patches(manifest: DatasetManifest, role_index: int, config: TrainConfig, epoch: int,
                     noisy: bool = True) -> tuple[torch.Tensor, torch.Tensor]:
    """(noisy, clean) patch batches of every train frame shot at exposure ``role_index``.

    Noise is drawn afresh for each epoch.
    """
    if manifest.schedule.period != 2:
        raise DatasetError("denoiser training expects a two-exposure schedule")
    noisy_p, clean_p = [], []
    ps = config.patch
    for scene in manifest.split("train"):
        for k in range(len(scene.frames)):
            if manifest.schedule.index_of(k) != role_index:
                continue
            hdr = manifest.load_hdr(scene, k)
            clean = synthesize_ldr(manifest, hdr, scene.scene_id, k, epoch, noisy=False).data
            dirty = synthesize_ldr(manifest, hdr, scene.scene_id, k, epoch, noisy=noisy).data
            h, w = clean.shape[:2]
            s = min(ps.patch_size, h, w)
            rng = frame_rng(ps.seed, scene.scene_id, k, epoch)
            for _ in range(ps.patches_per_frame):
                top, left = int(rng.integers(0, h - s + 1)), int(rng.integers(0, w - s + 1))
                noisy_p.append(dirty[top:top + s, left:left + s])
                clean_p.append(clean[top:top + s, left:left + s])
    if not noisy_p:
        raise DatasetError(f"train split has no {ROLES[role_index]}-exposure frames")
    return _to_batch(noisy_p), _to_batch(clean_p)


@dataclass
class DenoiserRun:
    models: dict[str, DenoiserNet]
    losses: dict[str, list[float]]  # mean train loss per epoch
    paths: dict[str, Path] = field(default_factory=dict)


def train_denoisers(config: TrainConfig, manifest: DatasetManifest, out_dir=None,
                    events: EventLog | None = None, device=None) -> DenoiserRun:
    """Train the low- and high-exposure denoisers independently."""
    dev = resolve_device(device)
    if not manifest.split("train"):
        raise DatasetError("manifest has an empty train split")
    out = Path(out_dir) if out_dir else None
    events = events or EventLog(out / "events.jsonl" if out else None)
    set_determinism(config.seed, config.deterministic)
    run = DenoiserRun({}, {})
    for role_index, role in enumerate(ROLES):
        model = build_denoiser(config.denoiser, seed=config.seed + role_index, exposure_role=role).to(dev)
        opt = _adam(model.parameters(), config)
        curve = []
        for epoch in range(config.denoiser_epochs):
            noisy, clean = (t.to(dev) for t in denoiser_patches(manifest, role_index, config, epoch))
            order = np.random.default_rng([config.seed, role_index, epoch]).permutation(len(noisy))
            model.train()
            total, n = 0.0, 0
            for start in range(0, len(order), config.denoiser_batch):
                idx = torch.from_numpy(order[start:start + config.denoiser_batch]).to(dev)
                loss = denoiser_loss(model(noisy[idx]), clean[idx], config.denoiser_loss)
                _check_finite({"denoiser": loss.item()}, {"role": role, "epoch": epoch},
                              out, {"denoiser": model})
                opt.zero_grad(set_to_none=True)
                loss.backward()
                opt.step()
                total += loss.item() * len(idx)
                n += len(idx)
            curve.append(total / n)
            events.emit("denoiser_epoch", role=role, epoch=epoch, loss=curve[-1])
        model.eval()
        run.models[role] = model
        run.losses[role] = curve
        if out:
            run.paths[role] = save_checkpoint(
                out / f"denoiser_{role}.pt", stage="denoiser", config=config_to_dict(config),
                config_hash=config.digest(), models={"denoiser": model}, optimizers={"denoiser": opt},
                epoch=config.denoiser_epochs, meta={"role": role, "denoiser_config": config.denoiser.to_dict(),
                                                    "losses": curve})
    return run


def load_denoiser(path) -> DenoiserNet:
    ck = load_checkpoint(path)
    if ck["stage"] != "denoiser":
        raise CheckpointError(f"{path}: expected a denoiser checkpoint, found stage {ck['stage']!r}")
    meta = ck["meta"]
    model = DenoiserNet(DenoiserConfig(**meta["denoiser_config"]), meta["role"])
    model.load_state_dict(ck["models"]["denoiser"])
    return model.eval()


def resolve_denoisers(denoisers) -> dict[str, DenoiserNet]:
    """Accept a DenoiserRun, a role->model mapping or a role->checkpoint-path mapping."""
    if isinstance(denoisers, DenoiserRun):
        denoisers = denoisers.models
    out = {}
    for role in ROLES:
        if denoisers is None or role not in denoisers:
            raise CheckpointError(f"missing {role}-exposure denoiser checkpoint")
        d = denoisers[role]
        out[role] = d if isinstance(d, DenoiserNet) else load_denoiser(d)
        if out[role].exposure_role != role:
            raise CheckpointError(f"denoiser given for role {role} was trained for {out[role].exposure_role}")
        out[role].eval().requires_grad_(False)
    return out


# -- GAN data -----------------------------------------------------------------


def make_flow_backend(name: str) -> FlowBackend:
    return PyramidFlowBackend() if name == "pyramid" else ZeroFlowBackend()


def _maybe_denoise(denoisers, frame: LDRFrame) -> LDRFrame:
    if denoisers is None:
        return frame
    return denoise(denoisers[ROLES[frame.exposure_index % 2]], frame)


def _pair_inputs(backend, denoisers, ref: LDRFrame, nbr: LDRFrame | None, denoised: dict):
    """Generator input raster (H, W, 12) and flow (H, W, 2) for one (ref, nbr) pair.

    ``nbr=None`` is the first-frame fallback: the reference is its own
    neighbor with zero flow.
    """
    ref_d = denoised.get(id(ref)) or _maybe_denoise(denoisers, ref)
    denoised[id(ref)] = ref_d
    if nbr is None:
        aligned = ref_d
        flow = np.zeros(ref.data.shape[:2] + (2,), np.float32)
    else:
        nbr_d = denoised.get(id(nbr)) or _maybe_denoise(denoisers, nbr)
        denoised[id(nbr)] = nbr_d
        aligned, ff = align_neighbor(backend, ref_d, nbr_d, return_flow=True)
        flow = ff.data
    x = generator_inputs(torch.from_numpy(ref_d.data.transpose(2, 0, 1)[None]),
                         torch.from_numpy(aligned.data.transpose(2, 0, 1)[None]),
                         ref_d.exposure_time, aligned.exposure_time, ref_d.gamma)
    return x[0].permute(1, 2, 0).numpy(), flow


@dataclass
class GanData:
    """Stacked generator inputs and targets for current frames and their predecessors."""

    x_cur: torch.Tensor  # (N, 12, H, W)
    x_prev: torch.Tensor
    t_cur: torch.Tensor  # (N, 3, H, W) tonemapped ground truth
    t_prev: torch.Tensor
    flow: torch.Tensor  # (N, 2, H, W), aligns frame i-1 onto frame i

    def __len__(self):
        return self.x_cur.shape[0]

    def subset(self, idx) -> "GanData":
        return GanData(self.x_cur[idx], self.x_prev[idx], self.t_cur[idx], self.t_prev[idx], self.flow[idx])

    def to(self, device) -> "GanData":
        return GanData(*(t.to(device) for t in (self.x_cur, self.x_prev, self.t_cur, self.t_prev, self.flow)))


def prepare_gan_data(manifest: DatasetManifest, denoisers, backend: FlowBackend, patch=None,
                     split: str = "train", epoch: int = 0, noisy: bool = True,
                     scene_ids: Sequence[str] | None = None, limit: int | None = None) -> GanData:
    cols = {k: [] for k in ("x_cur", "x_prev", "t_cur", "t_prev", "flow")}
    for n, s in enumerate(build_samples(manifest, patch, split, epoch, noisy, scene_ids)):
        if limit is not None and n >= limit:
            break
        denoised: dict = {}
        x_cur, flow = _pair_inputs(backend, denoisers, s.reference_ldr, s.neighbor_ldr, denoised)
        x_prev, _ = _pair_inputs(backend, denoisers, s.neighbor_ldr, s.prev_neighbor_ldr, denoised)
        cols["x_cur"].append(x_cur)
        cols["x_prev"].append(x_prev)
        cols["t_cur"].append(mu_law(s.gt_hdr.data))
        cols["t_prev"].append(mu_law(s.prev_gt_hdr.data))
        cols["flow"].append(flow)
    if not cols["x_cur"]:
        raise DatasetError(f"no samples in split {split!r}")
    return GanData(**{k: _to_batch(v) for k, v in cols.items()})


# -- GAN training -------------------------------------------------------------


class GanTrainer:
    """Generator/discriminator pair with optimizers and the per-batch update rule."""

    def __init__(self, config: TrainConfig, snapshot_dir=None, device=None):
        self.config = config
        self.device = resolve_device(device)
        self.G = build_generator(config.generator, seed=config.seed).to(self.device)
        self.D = build_discriminator(config.discriminator, seed=config.seed + 1).to(self.device)
        if config.discriminator.head != "sigmoid":
            raise TrainingError("GAN training expects a sigmoid discriminator head")
        self.extractor = make_extractor(config.extractor, seed=config.seed,
                                        weights_path=config.extractor_weights).to(self.device)
        self.opt_g = _adam(self.G.parameters(), config)
        self.opt_d = _adam(self.D.parameters(), config)
        self.step = 0
        self.epoch = 0
        self.snapshot_dir = Path(snapshot_dir) if snapshot_dir else None

    def train_step(self, batch: GanData, stage: int) -> dict[str, float]:
        cfg = self.config
        batch = batch.to(self.device)
        self.G.train()
        with torch.no_grad():
            # previous output is a constant target
            fake_prev = self.G(batch.x_prev)
        fake = self.G(batch.x_cur)

        self.D.train()
        d_loss, _ = adversarial_losses(self.D, (batch.t_cur, batch.t_prev), (fake.detach(), fake_prev))
        self.opt_d.zero_grad(set_to_none=True)
        d_loss.backward()
        self.opt_d.step()

        # frozen spectral estimates for the generator step
        self.D.eval()
        adv = generator_adversarial_loss(self.D(fake, fake_prev))
        parts = LossParts(adv, content_loss(self.extractor, fake, batch.t_cur),
                          style_loss(self.extractor, fake, batch.t_cur), l1_loss(fake, batch.t_cur))
        rec = reconstruction_loss(cfg.weights, parts, cfg.eq10_verbatim)
        if stage == 2:
            reg = temporal_reg(fake, fake_prev, batch.flow)
            loss = total_loss(cfg.weights, rec, reg)
        else:
            reg = torch.zeros(())
            loss = rec
        values = {"d": d_loss.item(), "adv": adv.item(), "content": parts.content.item(),
                  "style": parts.style.item(), "l1": parts.l1.item(), "rec": rec.item(),
                  "reg": reg.item(), "g": loss.item()}
        _check_finite(values, {"step": self.step, "stage": stage, "epoch": self.epoch},
                      self.snapshot_dir, {"G": self.G, "D": self.D})
        self.opt_g.zero_grad(set_to_none=True)
        loss.backward()
        self.opt_g.step()
        self.step += 1
        return values

    def models(self) -> dict:
        return {"G": self.G, "D": self.D}

    def optimizers(self) -> dict:
        return {"G": self.opt_g, "D": self.opt_d}

    def load_state(self, ck: dict) -> None:
        self.G.load_state_dict(ck["models"]["G"])
        self.D.load_state_dict(ck["models"]["D"])
        self.opt_g.load_state_dict(ck["optimizers"]["G"])
        self.opt_d.load_state_dict(ck["optimizers"]["D"])
        self.step = ck["step"]
        self.epoch = ck["epoch"]


def stage_of(config: TrainConfig, epoch: int) -> int:
    return 1 if epoch < config.stage1_epochs else 2


@dataclass
class GanRun:
    trainer: GanTrainer
    losses: list[dict]
    checkpoint: Path | None
    events: EventLog
    denoisers: dict | None


def _save_pipeline(path, trainer: GanTrainer, denoisers, stage: str, meta: dict) -> Path:
    models = trainer.models()
    if denoisers:
        models.update({f"denoiser_{r}": m for r, m in denoisers.items()})
    return save_checkpoint(path, stage=stage, config=config_to_dict(trainer.config),
                           config_hash=trainer.config.digest(), models=models,
                           optimizers=trainer.optimizers(), step=trainer.step, epoch=trainer.epoch, meta=meta)


def train_gan(config: TrainConfig, manifest: DatasetManifest, denoisers=None,
              flow_backend: FlowBackend | None = None, out_dir=None, resume=None,
              events: EventLog | None = None, data: GanData | None = None,
              stop_epoch: int | None = None, device=None) -> GanRun:
    """Alternate D and G updates over the stage-1 then stage-2 epochs.

    ``data`` pins a fixed sample set (overfit runs); otherwise samples are
    rebuilt per epoch when ``config.resample_patches`` is set. ``stop_epoch``
    ends the run early (before that epoch), leaving a resumable checkpoint.
    """
    out = Path(out_dir) if out_dir else None
    events = events or EventLog(out / "events.jsonl" if out else None)
    dens = resolve_denoisers(denoisers) if config.use_denoiser else None
    digests = {r: state_digest(m) for r, m in dens.items()} if dens else {}
    backend = flow_backend or make_flow_backend(config.flow_backend)
    if getattr(backend, "trainable", False):
        raise TrainingError("trainable flow backends are not optimized by train_gan; pass a fixed backend")
    set_determinism(config.seed, config.deterministic)
    trainer = GanTrainer(config, snapshot_dir=out, device=device)
    if resume is not None:
        ck = load_checkpoint(resume, expected_hash=config.digest())
        trainer.load_state(ck)
        restore_rng_state(ck["rng"])
        events.emit("resume", epoch=trainer.epoch, step=trainer.step, checkpoint=str(resume))

    n_epochs = config.stage1_epochs + config.stage2_epochs
    end = n_epochs if stop_epoch is None else min(stop_epoch, n_epochs)
    cached = data
    losses: list[dict] = []
    ckpt = None
    for epoch in range(trainer.epoch, end):
        if config.max_steps is not None and trainer.step >= config.max_steps:
            break
        stage = stage_of(config, epoch)
        if epoch == config.stage1_epochs:
            events.emit("stage_transition", epoch=epoch, step=trainer.step, stage=stage)
        if data is None and (cached is None or config.resample_patches):
            cached = prepare_gan_data(manifest, dens, backend, config.patch, "train",
                                      epoch if config.resample_patches else 0, config.noisy_inputs)
        batch_size = config.stage1_batch if stage == 1 else config.stage2_batch
        order = np.random.default_rng([config.seed, epoch]).permutation(len(cached))
        trainer.epoch = epoch
        for start in range(0, len(order), batch_size):
            if config.max_steps is not None and trainer.step >= config.max_steps:
                break
            vals = trainer.train_step(cached.subset(torch.from_numpy(order[start:start + batch_size])), stage)
            rec = {"step": trainer.step, "epoch": epoch, "stage": stage, **vals}
            losses.append(rec)
            events.emit("step", **rec)
        trainer.epoch = epoch + 1
        if out:
            tag = "stage1" if stage == 1 else "stage2"
            ckpt = _save_pipeline(out / "gan_last.pt", trainer, dens, tag, {"denoiser_digests": digests})
        events.emit("epoch_end", epoch=epoch, stage=stage, step=trainer.step)

    if dens:
        after = {r: state_digest(m) for r, m in dens.items()}
        if after != digests:
            raise TrainingError("denoiser parameters changed during GAN training")
    if out:
        done = trainer.epoch >= n_epochs or (config.max_steps is not None and trainer.step >= config.max_steps)
        ckpt = _save_pipeline(out / ("gan_final.pt" if done else "gan_last.pt"), trainer, dens,
                              "done" if done else ("stage1" if stage_of(config, trainer.epoch) == 1 else "stage2"),
                              {"denoiser_digests": digests})
    events.emit("train_end", step=trainer.step, epoch=trainer.epoch)
    return GanRun(trainer, losses, ckpt, events, dens)


# -- inference ------------------------------------------------------------------


@dataclass
class Pipeline:
    config: TrainConfig
    G: torch.nn.Module
    denoisers: dict | None
    backend: FlowBackend

    @classmethod
    def from_run(cls, run: GanRun, backend: FlowBackend | None = None) -> "Pipeline":
        cfg = run.trainer.config
        return cls(cfg, run.trainer.G.eval(), run.denoisers, backend or make_flow_backend(cfg.flow_backend))


def load_pipeline(path, backend: FlowBackend | None = None, device=None) -> Pipeline:
    dev = resolve_device(device)
    ck = load_checkpoint(path)
    if ck["stage"] == "denoiser":
        raise CheckpointError(f"{path}: is a denoiser checkpoint; expected a trained GAN checkpoint")
    cfg = config_from_dict(ck["config"])
    G = build_generator(cfg.generator, seed=cfg.seed)
    G.load_state_dict(ck["models"]["G"])
    dens = None
    if cfg.use_denoiser:
        dens = {}
        for role in ROLES:
            m = DenoiserNet(cfg.denoiser, role)
            m.load_state_dict(ck["models"][f"denoiser_{role}"])
            dens[role] = m.eval()
    if dens:
        dens = {r: m.to(dev) for r, m in dens.items()}
    return Pipeline(cfg, G.to(dev).eval(), dens, backend or make_flow_backend(cfg.flow_backend))


def infer_video(pipeline: Pipeline | str | Path, frames: Sequence[LDRFrame],
                first_frame_fallback: bool = True) -> list[LinearHDRFrame]:
    """Reconstruct normalized linear HDR frames from alternating-exposure LDR frames.

    Frame i >= 1 merges frame i with aligned frame i-1. With
    ``first_frame_fallback`` frame 0 is merged with itself under zero flow,
    giving N outputs for N inputs; otherwise N-1 outputs for frames 1..N-1.
    """
    if not isinstance(pipeline, Pipeline):
        pipeline = load_pipeline(pipeline)
    if len(frames) < 2:
        raise ValueError(f"need at least 2 LDR frames, got {len(frames)}")
    dens = pipeline.denoisers
    clean = [_maybe_denoise(dens, f) for f in frames]
    outputs = []
    if first_frame_fallback:
        outputs.append(generate(pipeline.G, clean[0], clean[0], allow_same_exposure=True))
    for i in range(1, len(frames)):
        aligned = align_neighbor(pipeline.backend, clean[i], clean[i - 1])
        outputs.append(generate(pipeline.G, clean[i], aligned))
    return [inverse_tonemap(t) for t in outputs]


# -- evaluation and ablation ---------------------------------------------------


def scene_ldr_frames(manifest: DatasetManifest, scene_id: str, noisy: bool = True, epoch: int = 0):
    scene = manifest.scene(scene_id)
    return [synthesize_ldr(manifest, manifest.load_hdr(scene, k), scene_id, k, epoch, noisy)
            for k in range(len(scene.frames))]


def evaluate_pipeline(pipeline: Pipeline, manifest: DatasetManifest, split: str = "test",
                      noisy: bool = True, border_px: int = 10) -> EvalReport:
    """Per-frame metrics over every scene of ``split``, frames 1..N-1 of each scene."""
    rows = []
    scenes = manifest.split(split)
    if not scenes:
        raise DatasetError(f"manifest has an empty {split} split")
    for scene in scenes:
        frames = scene_ldr_frames(manifest, scene.scene_id, noisy)
        preds = infer_video(pipeline, frames, first_frame_fallback=False)
        gts = [np.clip(manifest.load_hdr(scene, k).data, 0, 1) for k in range(1, len(frames))]
        rep = evaluate_sequence(gts, preds, border_px=border_px, frame_indices=range(1, len(frames)))
        rows.extend(rep.frames)
    return EvalReport(rows, border_px, meta={"split": split, "noisy": noisy,
                                             "scenes": [s.scene_id for s in scenes]})


def run_ablation(config: TrainConfig, manifest: DatasetManifest, out_dir=None, noisy_eval: bool = True,
                 border_px: int = 10) -> dict:
    """Train and evaluate with and without denoisers under identical seeds and budgets."""
    out = Path(out_dir) if out_dir else None
    variants = {}
    shared = config.replace(use_denoiser=True).digest()
    for name, flag in (("with_denoiser", True), ("without_denoiser", False)):
        cfg = config.replace(use_denoiser=flag)
        sub = out / name if out else None
        dens = train_denoisers(cfg, manifest, sub) if flag else None
        run = train_gan(cfg, manifest, dens, out_dir=sub)
        rep = evaluate_pipeline(Pipeline.from_run(run), manifest, "test", noisy_eval, border_px)
        variants[name] = {"use_denoiser": flag, "config_hash": cfg.digest(), "shared_config_hash": shared,
                          "mean_psnr": rep.mean_psnr, "mean_ssim": rep.mean_ssim,
                          "frames": rep.to_dict()["rows"]}
    report = {
        "schema": "hdrvgan.ablation/1",
        "noisy_eval": noisy_eval,
        "variants": variants,
        "delta_psnr": variants["with_denoiser"]["mean_psnr"] - variants["without_denoiser"]["mean_psnr"],
        "delta_ssim": variants["with_denoiser"]["mean_ssim"] - variants["without_denoiser"]["mean_ssim"],
    }
    if out:
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    return report
