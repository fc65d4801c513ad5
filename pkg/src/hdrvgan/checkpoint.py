"""Versioned checkpoint files."""

from __future__ import annotations

import hashlib
import random
from pathlib import Path

import numpy as np
import torch

CHECKPOINT_SCHEMA = "hdrvgan.checkpoint/1"
STAGES = ("denoiser", "stage1", "stage2", "done")


class CheckpointError(IOError):
    pass


def state_digest(module_or_state) -> str:
    """SHA-256 over the names, shapes and bytes of every tensor in a state dict."""
    state = module_or_state.state_dict() if hasattr(module_or_state, "state_dict") else module_or_state
    h = hashlib.sha256()
    for name in sorted(state):
        t = state[name].detach().cpu().contiguous()
        h.update(name.encode())
        h.update(str(tuple(t.shape)).encode())
        h.update(str(t.dtype).encode())
        h.update(t.numpy().tobytes())
    return h.hexdigest()


def rng_state() -> dict:
    return {"torch": torch.get_rng_state(), "numpy": np.random.get_state(), "python": random.getstate()}


def restore_rng_state(state: dict) -> None:
    torch.set_rng_state(state["torch"])
    np.random.set_state(state["numpy"])
    random.setstate(state["python"])


def save_checkpoint(path, *, stage: str, config: dict, config_hash: str, models: dict,
                    optimizers: dict | None = None, step: int = 0, epoch: int = 0, meta: dict | None = None) -> Path:
    if stage not in STAGES:
        raise ValueError(f"unknown stage tag {stage!r}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "schema": CHECKPOINT_SCHEMA,
        "stage": stage,
        "step": int(step),
        "epoch": int(epoch),
        "config": config,
        "config_hash": config_hash,
        "models": {k: m.state_dict() if hasattr(m, "state_dict") else m for k, m in models.items()},
        "optimizers": {k: o.state_dict() for k, o in (optimizers or {}).items()},
        "rng": rng_state(),
        "meta": meta or {},
    }
    tmp = path.with_name(path.name + ".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)
    return path


def load_checkpoint(path, expected_hash: str | None = None) -> dict:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:  # torch raises several unrelated types on corrupt files
        raise CheckpointError(f"{path}: unreadable checkpoint ({exc})") from exc
    if not isinstance(payload, dict) or payload.get("schema") != CHECKPOINT_SCHEMA:
        raise CheckpointError(f"{path}: not a {CHECKPOINT_SCHEMA} checkpoint")
    if expected_hash is not None and payload["config_hash"] != expected_hash:
        raise CheckpointError(f"{path}: config hash {payload['config_hash']} does not match {expected_hash}")
    return payload
