"""``hdrvgan`` command line: one binary, one subcommand per pipeline step.

Options given on the command line override values from ``--config``.
Set HDRVGAN_DEVICE (e.g. ``cpu``, ``cuda:0``) to choose the compute device.
"""

from __future__ import annotations

import csv
import functools
import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from .checkpoint import CheckpointError
from .config import TrainConfig, load_config, save_config, toy_config
from .dataio import (
    DatasetError,
    ExposureSchedule,
    dumps_manifest,
    export_ldr_sequence,
    ingest,
    load_ldr_sequence,
    load_manifest,
)
from .denoiser import ConfigError
from .frameio import FrameReadError, read_hdr, write_hdr
from .metrics import EvalReport, evaluate_sequence
from .radiometry import InvalidParameterError, NoiseSpec
from .trainer import (
    TrainingError,
    infer_video,
    load_pipeline,
    read_events,
    run_ablation,
    train_denoisers,
    train_gan,
)

_EXPECTED = (DatasetError, ConfigError, CheckpointError, FrameReadError, TrainingError, InvalidParameterError,
             FileNotFoundError)

_D = TrainConfig()


def _fail(msg: str) -> None:
    click.echo(f"error: {msg}", err=True)
    sys.exit(2)


def _guard(fn):
    """Turn expected pipeline errors into a one-line message and exit code 2."""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _EXPECTED as exc:
            _fail(str(exc))
    return wrapper


def _existing(kind: str, path: Path) -> Path:
    if not path.exists():
        _fail(f"{kind} not found: {path}")
    return path


def _resolve_config(config_path, toy: bool, **overrides) -> TrainConfig:
    if config_path and toy:
        raise ConfigError("--toy and --config are mutually exclusive")
    base = load_config(config_path) if config_path else (toy_config() if toy else TrainConfig())
    changes = {k: v for k, v in overrides.items() if v is not None}
    return base.replace(**changes) if changes else base


def _config_options(fn):
    opts = [
        click.option("--config", "config_path", type=click.Path(path_type=Path),
                     help="YAML/JSON training config; flags given here take precedence."),
        click.option("--toy", is_flag=True, help="Start from tiny networks and budgets (smoke runs)."),
        click.option("--seed", type=int, default=None, help=f"Seed for all randomness.  [default: {_D.seed}]"),
        click.option("--lr", type=float, default=None, help=f"Adam learning rate.  [default: {_D.learning_rate}]"),
        click.option("--nondeterministic", is_flag=True, help="Allow nondeterministic kernels."),
    ]
    for o in reversed(opts):
        fn = o(fn)
    return fn


@click.group(context_settings={"show_default": True, "help_option_names": ["-h", "--help"]})
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose: bool):
    """Alternating-exposure HDR video reconstruction toolkit."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


# -- data -------------------------------------------------------------------------


@main.command()
@click.argument("root", type=click.Path(path_type=Path))
@click.option("--scenes", default=2, help="Number of scenes.")
@click.option("--frames", default=6, help="Frames per scene.")
@click.option("--height", default=64)
@click.option("--width", default=64)
@click.option("--static", is_flag=True, help="No camera or object motion.")
@click.option("--seed", default=0, help="Seed for scene generation.")
@_guard
def synth(root, scenes, frames, height, width, static, seed):
    """Write a procedural linear-HDR scene tree under ROOT."""
    from .synthetic import write_synthetic_dataset

    write_synthetic_dataset(root, scenes, frames, height, width, seed, static=static)
    click.echo(f"wrote {scenes} scenes x {frames} frames to {root}")


@main.command("prepare-data")
@click.argument("root", type=click.Path(path_type=Path))
@click.argument("out_manifest", type=click.Path(path_type=Path))
@click.option("--test-count", default=3, help="Scenes held out for testing.")
@click.option("--stops", default=3.0, help="Exposure separation in stops.")
@click.option("--t-low", default=1.0, help="Short exposure time.")
@click.option("--gamma", default=2.2, help="Camera response exponent.")
@click.option("--sigma-range", nargs=2, type=float, default=(0.01, 0.05), help="Gaussian noise sigma range.")
@click.option("--seed", default=0, help="Seed for the split and the noise stream.")
@_guard
def prepare_data(root, out_manifest, test_count, stops, t_low, gamma, sigma_range, seed):
    """Scan ROOT/<scene>/<frames> and write a dataset manifest."""
    m = ingest(root, test_count, ExposureSchedule.from_stops(stops, t_low, gamma),
               NoiseSpec(0.0, tuple(sigma_range), seed), seed)
    out_manifest.parent.mkdir(parents=True, exist_ok=True)
    out_manifest.write_text(dumps_manifest(m), encoding="utf-8")
    tr, te = m.split("train"), m.split("test")
    click.echo(f"train: {len(tr)} scenes ({sum(len(s.frames) for s in tr)} frames); "
               f"test: {len(te)} scenes ({', '.join(s.scene_id for s in te) or '-'}); hdr_scale={m.hdr_scale:.6g}")


@main.command("export-ldr")
@click.argument("manifest", type=click.Path(path_type=Path))
@click.argument("scene_id")
@click.argument("out_dir", type=click.Path(path_type=Path))
@click.option("--clean", is_flag=True, help="Skip noise injection.")
@_guard
def export_ldr(manifest, scene_id, out_dir, clean):
    """Render SCENE_ID as an alternating-exposure 16-bit PNG sequence."""
    m = load_manifest(_existing("manifest", manifest))
    try:
        m.scene(scene_id)
    except KeyError:
        _fail(f"scene {scene_id!r} is not in {manifest}")
    export_ldr_sequence(m, scene_id, out_dir, noisy=not clean)
    click.echo(f"wrote {len(m.scene(scene_id).frames)} frames to {out_dir}")


# -- training ---------------------------------------------------------------------


@main.command("train-denoiser")
@click.argument("manifest", type=click.Path(path_type=Path))
@click.argument("out_dir", type=click.Path(path_type=Path))
@_config_options
@click.option("--epochs", type=int, default=None, help=f"Denoiser epochs.  [default: {_D.denoiser_epochs}]")
@click.option("--batch", type=int, default=None, help=f"Denoiser batch size.  [default: {_D.denoiser_batch}]")
@click.option("--loss", type=click.Choice(["l1", "l2"]), default=None,
              help=f"Pixel loss.  [default: {_D.denoiser_loss}]")
@_guard
def train_denoiser_cmd(manifest, out_dir, config_path, toy, seed, lr, nondeterministic, epochs, batch, loss):
    """Train the low- and high-exposure denoisers; writes denoiser_{low,high}.pt."""
    m = load_manifest(_existing("manifest", manifest))
    cfg = _resolve_config(config_path, toy, seed=seed, learning_rate=lr, denoiser_epochs=epochs,
                          denoiser_batch=batch, denoiser_loss=loss,
                          deterministic=False if nondeterministic else None)
    save_config(cfg, Path(out_dir) / "denoiser_config.yaml")
    run = train_denoisers(cfg, m, out_dir)
    for role, curve in run.losses.items():
        last = f"{curve[-1]:.5f}" if curve else "n/a"
        click.echo(f"{role}: {len(curve)} epochs, final loss {last} -> {run.paths[role]}")


@main.command("train")
@click.argument("manifest", type=click.Path(path_type=Path))
@click.argument("out_dir", type=click.Path(path_type=Path))
@_config_options
@click.option("--denoisers", "denoiser_dir", type=click.Path(path_type=Path), default=None,
              help="Directory holding denoiser_low.pt and denoiser_high.pt.")
@click.option("--no-denoiser", is_flag=True, help="Train the ablated pipeline without denoisers.")
@click.option("--stage1-epochs", type=int, default=None, help=f"[default: {_D.stage1_epochs}]")
@click.option("--stage1-batch", type=int, default=None, help=f"[default: {_D.stage1_batch}]")
@click.option("--stage2-epochs", type=int, default=None, help=f"[default: {_D.stage2_epochs}]")
@click.option("--stage2-batch", type=int, default=None, help=f"[default: {_D.stage2_batch}]")
@click.option("--max-steps", type=int, default=None, help="Stop after this many generator steps.")
@click.option("--flow-backend", type=click.Choice(["pyramid", "zero"]), default=None,
              help=f"[default: {_D.flow_backend}]")
@click.option("--extractor", type=click.Choice(["random", "vgg19", "identity"]), default=None,
              help=f"Perceptual feature network.  [default: {_D.extractor}]")
@click.option("--eq10-verbatim", is_flag=True, help="Add the extra lambda_style*content term to L_rec.")
@click.option("--resume", type=click.Path(path_type=Path), default=None, help="Checkpoint to continue from.")
@_guard
def train_cmd(manifest, out_dir, config_path, toy, seed, lr, nondeterministic, denoiser_dir, no_denoiser,
              stage1_epochs, stage1_batch, stage2_epochs, stage2_batch, max_steps, flow_backend, extractor,
              eq10_verbatim, resume):
    """Train the merge GAN (stage 1: L_rec, stage 2: L_total); writes gan_final.pt."""
    m = load_manifest(_existing("manifest", manifest))
    cfg = _resolve_config(
        config_path, toy, seed=seed, learning_rate=lr, stage1_epochs=stage1_epochs, stage1_batch=stage1_batch,
        stage2_epochs=stage2_epochs, stage2_batch=stage2_batch, max_steps=max_steps, flow_backend=flow_backend,
        extractor=extractor, eq10_verbatim=True if eq10_verbatim else None,
        use_denoiser=False if no_denoiser else None, deterministic=False if nondeterministic else None)
    dens = None
    if cfg.use_denoiser:
        if denoiser_dir is None:
            _fail("--denoisers DIR is required unless --no-denoiser is given")
        dens = {r: _existing("denoiser checkpoint", Path(denoiser_dir) / f"denoiser_{r}.pt") for r in ("low", "high")}
    if resume is not None:
        _existing("resume checkpoint", resume)
    save_config(cfg, Path(out_dir) / "config.yaml")
    run = train_gan(cfg, m, dens, out_dir=out_dir, resume=resume)
    last = run.losses[-1] if run.losses else {}
    click.echo(f"{run.trainer.step} steps; last g={last.get('g', float('nan')):.4f} "
               f"d={last.get('d', float('nan')):.4f} -> {run.checkpoint}")


# -- inference and evaluation ---------------------------------------------------------


@main.command()
@click.argument("checkpoint", type=click.Path(path_type=Path))
@click.argument("ldr_dir", type=click.Path(path_type=Path))
@click.argument("out_dir", type=click.Path(path_type=Path))
@click.option("--first-frame-fallback/--skip-first-frame", default=True,
              help="Reconstruct frame 0 by pairing it with itself.")
@_guard
def infer(checkpoint, ldr_dir, out_dir, first_frame_fallback):
    """Reconstruct HDR frames from an LDR sequence directory (with sequence.json)."""
    pipe = load_pipeline(_existing("checkpoint", checkpoint))
    frames, index = load_ldr_sequence(_existing("LDR sequence directory", ldr_dir))
    outs = infer_video(pipe, frames, first_frame_fallback)
    scale = float(index.get("hdr_scale", 1.0))
    first = 0 if first_frame_fallback else 1
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for k, hdr in enumerate(outs, start=first):
        name = f"hdr_{k:04d}.hdr"
        write_hdr(out_dir / name, hdr.data * scale)
        entries.append({"file": name, "frame_index": k})
    (out_dir / "outputs.json").write_text(json.dumps(
        {"schema": "hdrvgan.hdr-sequence/1", "scene_id": index.get("scene_id"), "hdr_scale": scale,
         "checkpoint": str(checkpoint), "frames": entries}, indent=2) + "\n", encoding="utf-8")
    click.echo(f"wrote {len(outs)} HDR frames to {out_dir}")


@main.command()
@click.argument("pred_dir", type=click.Path(path_type=Path))
@click.argument("manifest", type=click.Path(path_type=Path))
@click.option("--scene", "scene_id", default=None, help="Ground-truth scene; defaults to the one recorded by infer.")
@click.option("--border", default=10, help="Pixels cropped from every side before scoring.")
@click.option("--out", "out_path", type=click.Path(path_type=Path), default=None,
              help="Report path.  [default: PRED_DIR/eval.json]")
@_guard
def evaluate(pred_dir, manifest, scene_id, border, out_path):
    """Score predicted HDR frames against ground truth (PSNR/SSIM on mu-law values)."""
    m = load_manifest(_existing("manifest", manifest))
    idx_path = _existing("prediction index", Path(pred_dir) / "outputs.json")
    index = json.loads(idx_path.read_text(encoding="utf-8"))
    scene_id = scene_id or index.get("scene_id")
    try:
        scene = m.scene(scene_id)
    except KeyError:
        _fail(f"scene {scene_id!r} is not in {manifest}")
    gts, preds, ids = [], [], []
    for e in index["frames"]:
        k = int(e["frame_index"])
        if k >= len(scene.frames):
            _fail(f"prediction for frame {k} but scene {scene_id} has {len(scene.frames)} frames")
        preds.append(read_hdr(_existing("predicted frame", Path(pred_dir) / e["file"])) / m.hdr_scale)
        gts.append(m.load_hdr(scene, k).data)
        ids.append(k)
    rep = evaluate_sequence(gts, preds, border_px=border, frame_indices=ids)
    rep.meta.update({"scene_id": scene_id, "pred_dir": str(pred_dir)})
    out_path = out_path or Path(pred_dir) / "eval.json"
    rep.save(out_path)
    s = rep.summary()
    click.echo(f"{s['n_frames']} frames: PSNR {s['mean_psnr']:.3f} dB, SSIM {s['mean_ssim']:.4f} -> {out_path}")


@main.command()
@click.argument("manifest", type=click.Path(path_type=Path))
@click.argument("out_dir", type=click.Path(path_type=Path))
@_config_options
@click.option("--clean-eval", is_flag=True, help="Evaluate on noise-free inputs (control run).")
@click.option("--border", default=10, help="Pixels cropped from every side before scoring.")
@_guard
def ablate(manifest, out_dir, config_path, toy, seed, lr, nondeterministic, clean_eval, border):
    """Train and score the pipeline with and without denoisers."""
    m = load_manifest(_existing("manifest", manifest))
    cfg = _resolve_config(config_path, toy, seed=seed, learning_rate=lr,
                          deterministic=False if nondeterministic else None)
    rep = run_ablation(cfg, m, out_dir, noisy_eval=not clean_eval, border_px=border)
    for name, v in rep["variants"].items():
        click.echo(f"{name}: PSNR {v['mean_psnr']:.3f} dB, SSIM {v['mean_ssim']:.4f} (config {v['config_hash']})")
    click.echo(f"delta PSNR {rep['delta_psnr']:+.3f} dB, delta SSIM {rep['delta_ssim']:+.4f}")


@main.command()
@click.option("--events", "events_path", type=click.Path(path_type=Path), multiple=True,
              help="events.jsonl training logs (repeatable).")
@click.option("--eval", "eval_path", type=click.Path(path_type=Path), multiple=True,
              help="Evaluation reports from `evaluate` (repeatable).")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True, help="Output directory.")
@_guard
def report(events_path, eval_path, out_dir):
    """Plot loss curves and per-frame metrics; write metrics.csv."""
    if not events_path and not eval_path:
        _fail("give at least one --events or --eval file")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if events_path:
        fig, (ax_g, ax_d) = plt.subplots(1, 2, figsize=(10, 4))
        for p in events_path:
            ev = read_events(_existing("event log", p))
            steps = [e for e in ev if e["event"] == "step"]
            den = [e for e in ev if e["event"] == "denoiser_epoch"]
            if steps:
                x = [e["step"] for e in steps]
                ax_g.plot(x, [e["g"] for e in steps], label=f"{p.parent.name} G")
                ax_d.plot(x, [e["d"] for e in steps], label=f"{p.parent.name} D")
                for e in ev:
                    if e["event"] == "stage_transition":
                        ax_g.axvline(e["step"], color="grey", ls="--", lw=0.8)
            for role in ("low", "high"):
                pts = [e for e in den if e["role"] == role]
                if pts:
                    ax_d.plot([e["epoch"] for e in pts], [e["loss"] for e in pts], label=f"denoiser {role}")
        ax_g.set(xlabel="step", ylabel="generator loss", title="generator")
        ax_d.set(xlabel="step / epoch", ylabel="loss", title="discriminator and denoisers")
        for ax in (ax_g, ax_d):
            if ax.lines:
                ax.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(out_dir / "loss_curves.png", dpi=100)
        plt.close(fig)
        written.append(out_dir / "loss_curves.png")
    if eval_path:
        fig, (ax_p, ax_s) = plt.subplots(1, 2, figsize=(10, 4))
        rows = []
        for p in eval_path:
            rep = EvalReport.load(_existing("evaluation report", p))
            label = rep.meta.get("scene_id") or p.stem
            idx = [f.frame_index for f in rep.frames]
            ax_p.plot(idx, [f.psnr for f in rep.frames], marker="o", label=label)
            ax_s.plot(idx, [f.ssim for f in rep.frames], marker="o", label=label)
            rows += [[str(p), f.frame_index, f.psnr, f.ssim] for f in rep.frames]
        ax_p.set(xlabel="frame", ylabel="PSNR (dB)")
        ax_s.set(xlabel="frame", ylabel="SSIM")
        ax_p.legend(fontsize=7)
        fig.tight_layout()
        fig.savefig(out_dir / "metrics.png", dpi=100)
        plt.close(fig)
        with open(out_dir / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["report", "frame_index", "psnr", "ssim"])
            w.writerows(rows)
        written += [out_dir / "metrics.png", out_dir / "metrics.csv"]
        click.echo(f"mean PSNR {np.mean([r[2] for r in rows]):.3f} dB over {len(rows)} frames")
    for p in written:
        click.echo(f"wrote {p}")


if __name__ == "__main__":
    main()
