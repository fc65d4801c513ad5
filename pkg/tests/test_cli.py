import json

import numpy as np
import pytest
from click.testing import CliRunner

from hdrvgan.cli import main
from hdrvgan.config import save_config, toy_config
from hdrvgan.frameio import read_hdr

COMMANDS = ["synth", "prepare-data", "export-ldr", "train-denoiser", "train", "infer", "evaluate", "ablate", "report"]


def run(*args, ok=True):
    res = CliRunner().invoke(main, [str(a) for a in args])
    if ok:
        assert res.exit_code == 0, res.output + repr(res.exception)
    return res


@pytest.mark.parametrize("cmd", COMMANDS)
def test_help_lists_defaults(cmd):
    out = " ".join(run(cmd, "--help").output.split())
    assert "--help" in out
    if cmd in ("train", "train-denoiser", "ablate"):
        assert "--seed" in out and "[default: 0]" in out
    if cmd == "evaluate":
        assert "--border" in out and "[default: 10]" in out
    if cmd == "prepare-data":
        for flag in ("--test-count", "--stops", "--sigma-range", "--seed"):
            assert flag in out
        assert "0.01, 0.05" in out


def test_prepare_data_is_deterministic(tmp_path):
    run("synth", tmp_path / "data", "--scenes", 3, "--frames", 3, "--height", 32, "--width", 32)
    run("prepare-data", tmp_path / "data", tmp_path / "a.json", "--test-count", 1, "--seed", 4)
    res = run("prepare-data", tmp_path / "data", tmp_path / "b.json", "--test-count", 1, "--seed", 4)
    assert "train: 2 scenes" in res.output
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_missing_paths_are_named(tmp_path):
    missing = tmp_path / "no_such_dir"
    res = run("prepare-data", missing, tmp_path / "m.json", ok=False)
    assert res.exit_code != 0 and str(missing) in res.output
    res = run("train", tmp_path / "nope.json", tmp_path / "out", ok=False)
    assert res.exit_code != 0 and "nope.json" in res.output
    res = run("infer", tmp_path / "ck.pt", tmp_path, tmp_path / "o", ok=False)
    assert res.exit_code != 0 and "ck.pt" in res.output


def test_invalid_flag_values(tmp_path):
    run("synth", tmp_path / "d", "--scenes", 2, "--frames", 3, "--height", 32, "--width", 32)
    res = run("prepare-data", tmp_path / "d", tmp_path / "m.json", "--test-count", 5, ok=False)
    assert res.exit_code != 0 and "test_count" in res.output
    res = run("prepare-data", tmp_path / "d", tmp_path / "m.json", "--test-count", 1,
              "--sigma-range", 0.2, 0.1, ok=False)
    assert res.exit_code != 0


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    """prepare -> train-denoiser -> train -> export-ldr -> infer -> evaluate, with toy budgets."""
    d = tmp_path_factory.mktemp("cli")
    run("synth", d / "data", "--scenes", 2, "--frames", 4, "--height", 48, "--width", 48, "--seed", 2)
    run("prepare-data", d / "data", d / "manifest.json", "--test-count", 1)
    run("train-denoiser", d / "manifest.json", d / "den", "--toy", "--epochs", 1)
    run("train", d / "manifest.json", d / "gan", "--toy", "--denoisers", d / "den", "--stage1-epochs", 1,
        "--stage2-epochs", 1)
    test_scene = json.loads((d / "manifest.json").read_text())
    test_id = next(s["id"] for s in test_scene["scenes"] if s["split"] == "test")
    run("export-ldr", d / "manifest.json", test_id, d / "ldr")
    run("infer", d / "gan" / "gan_final.pt", d / "ldr", d / "pred")
    run("evaluate", d / "pred", d / "manifest.json", "--border", 10)
    return d


def test_pipeline_outputs(pipeline_dir):
    d = pipeline_dir
    outs = json.loads((d / "pred" / "outputs.json").read_text())
    assert [f["frame_index"] for f in outs["frames"]] == [0, 1, 2, 3]
    for f in outs["frames"]:
        img = read_hdr(d / "pred" / f["file"])
        assert img.shape == (48, 48, 3) and np.all(np.isfinite(img)) and img.min() >= 0
    rep = json.loads((d / "pred" / "eval.json").read_text())
    assert rep["schema"] == "hdrvgan.eval-report/1" and rep["border_px"] == 10
    assert len(rep["rows"]) == 4 and np.isfinite(rep["summary"]["mean_psnr"])
    events = (d / "gan" / "events.jsonl").read_text().splitlines()
    assert any('"stage_transition"' in e for e in events)


def test_train_requires_denoisers(pipeline_dir, tmp_path):
    res = run("train", pipeline_dir / "manifest.json", tmp_path / "g", "--toy", ok=False)
    assert res.exit_code != 0 and "--denoisers" in res.output
    res = run("train", pipeline_dir / "manifest.json", tmp_path / "g", "--toy", "--denoisers", tmp_path, ok=False)
    assert res.exit_code != 0 and "denoiser_low.pt" in res.output


def test_flags_override_config_file(pipeline_dir, tmp_path):
    save_config(toy_config(stage1_epochs=3, stage2_epochs=0, seed=1), tmp_path / "c.yaml")
    run("train", pipeline_dir / "manifest.json", tmp_path / "g", "--config", tmp_path / "c.yaml",
        "--no-denoiser", "--stage1-epochs", 1, "--seed", 8)
    written = (tmp_path / "g" / "config.yaml").read_text()
    assert "stage1_epochs: 1" in written and "seed: 8" in written and "use_denoiser: false" in written


def test_train_is_idempotent(pipeline_dir, tmp_path):
    args = ["train", pipeline_dir / "manifest.json", None, "--toy", "--no-denoiser", "--stage1-epochs", 1,
            "--stage2-epochs", 0]
    for name in ("a", "b"):
        args[2] = tmp_path / name
        run(*args)
    import torch

    a = torch.load(tmp_path / "a" / "gan_final.pt", weights_only=False)["models"]["G"]
    b = torch.load(tmp_path / "b" / "gan_final.pt", weights_only=False)["models"]["G"]
    assert all(torch.equal(a[k], b[k]) for k in a)


def test_report_renders_files(pipeline_dir, tmp_path):
    d = pipeline_dir
    run("report", "--events", d / "gan" / "events.jsonl", "--events", d / "den" / "events.jsonl",
        "--eval", d / "pred" / "eval.json", "--out", tmp_path / "rep")
    for name in ("loss_curves.png", "metrics.png", "metrics.csv"):
        assert (tmp_path / "rep" / name).stat().st_size > 0
    lines = (tmp_path / "rep" / "metrics.csv").read_text().splitlines()
    assert lines[0] == "report,frame_index,psnr,ssim" and len(lines) == 5
    res = run("report", "--out", tmp_path / "x", ok=False)
    assert res.exit_code != 0


def test_device_env_is_checked(pipeline_dir, tmp_path, monkeypatch):
    monkeypatch.setenv("HDRVGAN_DEVICE", "cuda:7")
    import torch

    if torch.cuda.is_available():
        pytest.skip("CUDA present")
    res = run("train", pipeline_dir / "manifest.json", tmp_path / "g", "--toy", "--no-denoiser", ok=False)
    assert res.exit_code != 0 and "CUDA is not available" in res.output


def test_eq10_flag(pipeline_dir, tmp_path):
    run("train", pipeline_dir / "manifest.json", tmp_path / "g", "--toy", "--no-denoiser", "--eq10-verbatim",
        "--stage1-epochs", 1, "--stage2-epochs", 0)
    assert "eq10_verbatim: true" in (tmp_path / "g" / "config.yaml").read_text()
