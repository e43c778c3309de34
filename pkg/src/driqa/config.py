"""Run configuration: one YAML document driving a training run.

Schema::

    profile: paper | desk      # default "paper"
    dataset: ./dataset         # dataset directory, relative to this file
    out_dir: ./runs/exp1       # artifact directory, relative to this file
    model:                     # optional ModelConfig overrides
      channel_width: 16
    train:                     # optional TrainConfig overrides
      stage2_epochs: 6
      use_ckd: false

The "paper" profile is the full-scale preset (288 px, width 64, 10 + 20
epochs, lr 0.15); "desk" is the CPU-scale preset used by the bundled
experiments. Unknown keys anywhere are rejected before any work starts.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path

import yaml

from driqa.errors import UsageError
from driqa.model import ModelConfig, desk_model_config
from driqa.training import TrainConfig, train_config_snapshot

PROFILES = ("paper", "desk")

_TUPLE_FIELDS = {"fc_hidden_sizes", "norm_mean", "norm_std"}


@dataclass(frozen=True)
class RunConfig:
    dataset: Path
    out_dir: Path
    train: TrainConfig
    profile: str = "paper"


def paper_train_config(**overrides) -> TrainConfig:
    """Full-scale preset: every default of TrainConfig/ModelConfig."""
    return TrainConfig(**overrides)


def desk_train_config(**overrides) -> TrainConfig:
    """CPU-scale preset: small model, short schedule, gentler rate.

    Three desk-specific stabilizers, all load-bearing when training from
    random initialization: gradient clipping (the distillation term between
    freshly initialized embeddings produces gradient bursts that the
    full-scale schedule never sees), a sigmoid head on the pre-training
    regression (the raw-output variant leaves the score predictor calibrated
    to [0, 1] probabilities, which drags on the subsequent stage here), and
    a two-epoch warmup ramp (the early optimization is violent enough to
    destroy whatever structure pre-training put into the quality embedding
    before the reference embedding has caught up).
    """
    base = dict(
        model=desk_model_config(),
        stage1_epochs=2,
        stage2_epochs=6,
        base_lr=0.01,
        warmup_fraction=2.0,
        grad_clip=1.0,
        sigmoid_head=True,
    )
    base.update(overrides)
    return TrainConfig(**base)


def _merge_dataclass(base, overrides: dict, cls, what: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(overrides) - known
    if unknown:
        raise UsageError(f"unknown {what} keys: {sorted(unknown)}")
    clean = {
        k: tuple(v) if k in _TUPLE_FIELDS and isinstance(v, list) else v
        for k, v in overrides.items()
    }
    return replace(base, **clean)


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise UsageError(f"cannot read run config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise UsageError(f"run config {path} must be a mapping")
    allowed = {"profile", "dataset", "out_dir", "model", "train"}
    unknown = set(doc) - allowed
    if unknown:
        raise UsageError(f"unknown run config keys: {sorted(unknown)}")
    profile = doc.get("profile", "paper")
    if profile not in PROFILES:
        raise UsageError(f"profile must be one of {PROFILES}, got {profile!r}")
    for key in ("dataset", "out_dir"):
        if key not in doc:
            raise UsageError(f"run config is missing required key {key!r}")
    train = paper_train_config() if profile == "paper" else desk_train_config()
    model_overrides = doc.get("model") or {}
    train_overrides = dict(doc.get("train") or {})
    if "model" in train_overrides:
        raise UsageError("model settings belong under the top-level 'model' key")
    if not isinstance(model_overrides, dict) or not isinstance(train_overrides, dict):
        raise UsageError("'model' and 'train' sections must be mappings")
    model = _merge_dataclass(train.model, model_overrides, ModelConfig, "model")
    train = _merge_dataclass(train, train_overrides, TrainConfig, "train")
    train = replace(train, model=model)
    base_dir = path.parent
    return RunConfig(
        dataset=(base_dir / doc["dataset"]).resolve(),
        out_dir=(base_dir / doc["out_dir"]).resolve(),
        train=train,
        profile=profile,
    )


def run_config_hash(config: RunConfig) -> str:
    """Hash of the run's settings (dataset/output locations excluded)."""
    blob = json.dumps(train_config_snapshot(config.train), sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def variant_label(train: TrainConfig) -> str:
    """Human-readable ablation descriptor recorded in run logs."""
    parts = []
    parts.append("ckd" if train.use_ckd else "no-ckd")
    if train.use_pretrain:
        parts.append(f"pret[{train.pretrain_loss}]")
    else:
        parts.append("no-pret")
    if train.model.shared_embeddings:
        parts.append("shared")
    if train.teacher_stop_gradient:
        parts.append("stopgrad")
    if train.model.csp_input_downsample > 1:
        parts.append(f"cspdown{train.model.csp_input_downsample}")
    return "+".join(parts)
