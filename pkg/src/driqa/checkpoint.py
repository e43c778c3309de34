"""Checkpoint serialization.

A checkpoint stores the four named parameter groups of a model
(theta_e1, theta_e1h, theta_e2, theta_s) plus the model configuration, a
stage tag, optimizer state and enough bookkeeping to resume training
deterministically. Round-trips are bit-exact: saving and reloading a model
reproduces every parameter tensor byte for byte.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path

import torch

from driqa import __version__
from driqa.errors import DataError
from driqa.model import CKDN, ModelConfig

FORMAT_VERSION = 1

#: Stage tags, in training order.
STAGE_PRETRAINED = "pretrained-qse"
STAGE_CKDN = "ckdn"
STAGES = (STAGE_PRETRAINED, STAGE_CKDN)


def config_hash(config: ModelConfig) -> str:
    blob = json.dumps(dataclasses.asdict(config), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def group_state_dicts(model: CKDN) -> dict[str, dict[str, torch.Tensor]]:
    """Per-group state dicts. Clones, so later training can't mutate them."""
    out: dict[str, dict[str, torch.Tensor]] = {}
    for name, module in model.parameter_modules().items():
        out[name] = {k: v.detach().clone() for k, v in module.state_dict().items()}
    return out


def parameter_hash(model: CKDN, groups: tuple[str, ...] | None = None) -> str:
    """SHA-256 over the named groups' tensors (all groups by default)."""
    h = hashlib.sha256()
    state = group_state_dicts(model)
    for name in sorted(groups or state):
        for key in sorted(state[name]):
            t = state[name][key].detach().cpu().contiguous()
            h.update(name.encode())
            h.update(key.encode())
            h.update(str(t.dtype).encode())
            h.update(t.numpy().tobytes())
    return h.hexdigest()


def save_checkpoint(
    path: str | Path,
    model: CKDN,
    stage: str,
    optimizer: torch.optim.Optimizer | None = None,
    extra: dict | None = None,
) -> None:
    if stage not in STAGES:
        raise ValueError(f"stage must be one of {STAGES}, got {stage!r}")
    payload = {
        "format_version": FORMAT_VERSION,
        "toolkit_version": __version__,
        "model_config": dataclasses.asdict(model.config),
        "config_hash": config_hash(model.config),
        "stage": stage,
        "groups": group_state_dicts(model),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "extra": extra or {},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint {path} not found")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:  # torch raises a zoo of types on corrupt files
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format_version") != FORMAT_VERSION:
        raise DataError(
            f"checkpoint {path} has unsupported format "
            f"{payload.get('format_version') if isinstance(payload, dict) else type(payload)}"
        )
    return payload


def restore_model(payload: dict) -> tuple[CKDN, str]:
    """Rebuild a model from a checkpoint payload. Returns (model, stage)."""
    config = ModelConfig(**payload["model_config"])
    if config_hash(config) != payload["config_hash"]:
        raise DataError("checkpoint config hash mismatch; file is corrupt or hand-edited")
    model = CKDN(config)
    for name, module in model.parameter_modules().items():
        if name not in payload["groups"]:
            raise DataError(f"checkpoint missing parameter group {name!r}")
        module.load_state_dict(payload["groups"][name])
    model.eval()
    return model, payload["stage"]


def load_model(path: str | Path) -> tuple[CKDN, str]:
    return restore_model(load_checkpoint(path))
