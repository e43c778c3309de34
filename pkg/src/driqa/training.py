"""Two-stage optimization, evaluation, and the reference-quality sweep.

Stage 1 (``pretrain_qse``) fits the quality embedding and score predictor
with the relative pairwise loss; the reference embeddings are untouched.
Stage 2 (``train_ckdn``) fits all parameter groups with the distillation
objective (or the plain absolute loss when ``use_ckd`` is off).

Randomness is stateless: every source of nondeterminism (epoch shuffling,
pair sampling, crop/flip augmentation, fresh init) draws from a seed derived
from ``(config.seed, purpose, epoch)``, so an interrupted run resumed from
its latest checkpoint retraces the uninterrupted run exactly.

Each run owns an output directory::

    <out>/config.yaml        configuration snapshot
    <out>/metrics.csv        one row per epoch (format below)
    <out>/stage1-latest.pt   rolling stage-1 checkpoint (resume point)
    <out>/stage1.pt          finished stage-1 checkpoint
    <out>/stage2-latest.pt   rolling stage-2 checkpoint (resume point)
    <out>/stage2-best.pt     best validation SRCC (degraded-reference path)
    <out>/stage2.pt          finished stage-2 checkpoint

metrics.csv columns (comma-delimited, header row, one row per epoch):
``stage`` ("pretrain"/"ckdn"), ``epoch`` (1-based within the stage), ``lr``
(rate at the epoch's last step), ``train_loss`` (epoch mean), and
``val_srcc_dr``, ``val_plcc_dr``, ``val_srcc_fr``, ``val_plcc_fr``
(empty for pretrain rows; "nan" when a metric is undefined, e.g. constant
predictions from a collapsed epoch).
"""

from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
import yaml

from driqa.checkpoint import (
    STAGE_CKDN,
    STAGE_PRETRAINED,
    config_hash,
    load_checkpoint,
    restore_model,
    save_checkpoint,
)
from driqa.dataset import PairRecord, SampleRow, SyntheticDataset, derive_seed
from driqa.degradations import DegradationSpec, degrade
from driqa.errors import DataError, NumericError, UsageError
from driqa.images import to_tensor
from driqa.losses import Batch, LossWeights, PairBatch, absolute_loss, ckd_loss, relative_loss
from driqa.metrics import pairwise_accuracy, plcc, srcc
from driqa.model import CKDN, ModelConfig, build_model

PRETRAIN_LOSSES = ("relative", "absolute", "none")
EVAL_MODES = ("dr", "fr", "nr")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings. Defaults are the full-scale preset (10 + 20
    epochs, lr 0.15 with a one-epoch linear warmup, SGD momentum 0.9,
    batch 8, distillation weight 10, Elo scale 400)."""

    model: ModelConfig = field(default_factory=ModelConfig)
    stage1_epochs: int = 10
    stage2_epochs: int = 20
    base_lr: float = 0.15
    # ramp length in units of one epoch (may exceed 1 for a multi-epoch ramp)
    warmup_fraction: float = 1.0
    momentum: float = 0.9
    batch_size: int = 8
    lam: float = 10.0
    elo_m: float = 400.0
    seed: int = 0
    # variant switches
    use_ckd: bool = True
    use_pretrain: bool = True
    pretrain_loss: str = "relative"
    teacher_stop_gradient: bool = False
    sigmoid_head: bool = False
    # data handling
    steps_per_epoch: int | None = None  # None: one full pass over the train split
    pairs_per_epoch: int | None = None  # None: as many pairs as train samples
    normalize_mos: bool = True  # regress (mos - mu) / m instead of raw mos
    augment: bool = True
    eval_batch_size: int = 32
    # the distillation term between freshly initialized embeddings produces
    # gradient bursts that diverge under momentum; clipping tames them
    grad_clip: float | None = None

    def __post_init__(self):
        if self.stage1_epochs < 1 or self.stage2_epochs < 1:
            raise UsageError("epoch counts must be >= 1")
        if self.base_lr <= 0:
            raise UsageError(f"base_lr must be positive, got {self.base_lr}")
        if self.warmup_fraction < 0.0:
            raise UsageError(f"warmup_fraction must be >= 0, got {self.warmup_fraction}")
        if not 0.0 <= self.momentum < 1.0:
            raise UsageError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.batch_size < 1 or self.eval_batch_size < 1:
            raise UsageError("batch sizes must be >= 1")
        if self.lam < 0 or self.elo_m <= 0:
            raise UsageError("lam must be >= 0 and elo_m > 0")
        if self.pretrain_loss not in PRETRAIN_LOSSES:
            raise UsageError(f"pretrain_loss must be one of {PRETRAIN_LOSSES}, got {self.pretrain_loss!r}")
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            raise UsageError("steps_per_epoch must be >= 1 when given")
        if self.pairs_per_epoch is not None and self.pairs_per_epoch < 1:
            raise UsageError("pairs_per_epoch must be >= 1 when given")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise UsageError(f"grad_clip must be positive when given, got {self.grad_clip}")

    @property
    def weights(self) -> LossWeights:
        return LossWeights(lam=self.lam, elo_m=self.elo_m)


def train_config_snapshot(config: TrainConfig) -> dict:
    """JSON-safe dict form (tuples become lists)."""
    return json.loads(json.dumps(dataclasses.asdict(config)))


def learning_rate(step: int, base_lr: float, warmup_steps: int) -> float:
    """Rate at a 0-based global step: linear 0 -> base_lr over the warmup,
    constant afterwards. Pure function of its arguments."""
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    if warmup_steps > 0 and step < warmup_steps:
        return base_lr * (step / warmup_steps)
    return base_lr


# -- batch assembly -----------------------------------------------------------


def _crop_flip(
    arrays: Sequence[np.ndarray], out: int, rng: np.random.Generator | None
) -> list[np.ndarray]:
    """One crop (+ optional horizontal flip) applied identically to every
    array, preserving spatial correspondence. ``rng=None`` means the
    deterministic center crop with no flip."""
    h, w = arrays[0].shape[:2]
    if any(a.shape[:2] != (h, w) for a in arrays):
        raise DataError("images of one sample have mismatched shapes")
    if h < out or w < out:
        raise UsageError(f"stored patch {h}x{w} is smaller than input resolution {out}")
    if rng is None:
        top, left, flip = (h - out) // 2, (w - out) // 2, False
    else:
        top = int(rng.integers(0, h - out + 1))
        left = int(rng.integers(0, w - out + 1))
        flip = bool(rng.integers(0, 2))
    views = [a[top : top + out, left : left + out] for a in arrays]
    if flip:
        views = [v[:, ::-1] for v in views]
    return views


def _targets(rows: Sequence[SampleRow], dataset: SyntheticDataset, config: TrainConfig) -> list[float]:
    if config.normalize_mos:
        mu, m = dataset.mos_scale.mu, dataset.mos_scale.m
        return [(r.mos - mu) / m for r in rows]
    return [r.mos for r in rows]


def _make_batch(
    dataset: SyntheticDataset,
    rows: Sequence[SampleRow],
    config: TrainConfig,
    rng: np.random.Generator | None,
) -> Batch:
    res = config.model.input_resolution
    pristine, degraded, restored = [], [], []
    for row in rows:
        h, d, r = _crop_flip(dataset.load_sample(row), res, rng)
        pristine.append(to_tensor(h))
        degraded.append(to_tensor(d))
        restored.append(to_tensor(r))
    return Batch(pristine, degraded, restored, _targets(rows, dataset, config))


def _make_pair_batch(
    dataset: SyntheticDataset,
    pairs: Sequence[PairRecord],
    config: TrainConfig,
    rng: np.random.Generator | None,
) -> PairBatch:
    res = config.model.input_resolution
    left, right = [], []
    for pair in pairs:
        a, b = _crop_flip(
            [dataset.restored(pair.row_i), dataset.restored(pair.row_j)], res, rng
        )
        left.append(to_tensor(a))
        right.append(to_tensor(b))
    mos_i = [p.row_i.mos for p in pairs]
    mos_j = [p.row_j.mos for p in pairs]
    return PairBatch(left, right, mos_i, mos_j)


def _chunks(items: list, size: int, n_chunks: int) -> list[list]:
    return [items[i * size : (i + 1) * size] or items[:size] for i in range(n_chunks)]


# -- artifact plumbing --------------------------------------------------------

_METRIC_COLUMNS = (
    "stage",
    "epoch",
    "lr",
    "train_loss",
    "val_srcc_dr",
    "val_plcc_dr",
    "val_srcc_fr",
    "val_plcc_fr",
)


def _append_metrics(out_dir: Path, row: dict) -> None:
    path = out_dir / "metrics.csv"
    new = not path.exists()
    with path.open("a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_METRIC_COLUMNS)
        if new:
            writer.writeheader()
        writer.writerow({k: row.get(k, "") for k in _METRIC_COLUMNS})


def _write_config_snapshot(out_dir: Path, config: TrainConfig, dataset: SyntheticDataset) -> None:
    path = out_dir / "config.yaml"
    if path.exists():
        return
    snapshot = {
        "train_config": train_config_snapshot(config),
        "model_config_hash": config_hash(config.model),
        "dataset": str(dataset.root),
        "dataset_index_hash": dataset.index_hash(),
    }
    path.write_text(yaml.safe_dump(snapshot, sort_keys=True))


def _check_finite(value: float, stage: str, epoch: int, step: int) -> None:
    if not math.isfinite(value):
        raise NumericError(f"non-finite loss at stage {stage} epoch {epoch} step {step}: {value}")


def _safe_metric(fn, predictions, targets) -> float:
    try:
        return fn(predictions, targets)
    except ValueError:
        return float("nan")


# -- evaluation ---------------------------------------------------------------


def split_pair_index(rows: Sequence[SampleRow]) -> list[tuple[int, int]]:
    """All unordered index pairs of rows sharing (content, degradation)."""
    groups: dict[tuple[str, str], list[int]] = {}
    for idx, row in enumerate(rows):
        groups.setdefault((row.content_id, row.degradation_id), []).append(idx)
    pairs = []
    for members in groups.values():
        pairs.extend(itertools.combinations(members, 2))
    return pairs


def _scores_for_rows(
    model: CKDN,
    dataset: SyntheticDataset,
    rows: Sequence[SampleRow],
    mode: str,
    batch_size: int,
) -> np.ndarray:
    res = model.config.input_resolution
    preds = np.empty(len(rows), dtype=np.float64)
    model.eval()
    with torch.no_grad():
        for start in range(0, len(rows), batch_size):
            chunk = rows[start : start + batch_size]
            refs, rests = [], []
            for row in chunk:
                h, d, r = dataset.load_sample(row)
                ref = {"dr": d, "fr": h, "nr": r}[mode]
                ref_c, rest_c = _crop_flip([ref, r], res, None)
                refs.append(to_tensor(ref_c))
                rests.append(to_tensor(rest_c))
            ref_t = torch.stack(refs)
            rest_t = torch.stack(rests)
            scores = model.teacher_score(ref_t, rest_t) if mode == "fr" else model.score(ref_t, rest_t)
            preds[start : start + len(chunk)] = scores.double().numpy()
    return preds


def evaluate(
    model: CKDN,
    dataset: SyntheticDataset,
    split: str = "val",
    mode: str = "dr",
    batch_size: int = 32,
    scorer: Callable[[SampleRow], float] | None = None,
) -> dict:
    """SRCC / PLCC / pairwise judgment accuracy of a model on one split.

    ``mode`` picks the reference branch input: "dr" the stored degraded
    image, "fr" the pristine image through the teacher path, "nr" the
    restored image itself. ``scorer`` replaces the model with an arbitrary
    per-row scoring function (used to sanity-check the protocol against
    oracles). Accuracy counts each unordered same-(content, degradation)
    pair once; target ties are excluded, prediction ties count as wrong.
    """
    if mode not in EVAL_MODES:
        raise UsageError(f"mode must be one of {EVAL_MODES}, got {mode!r}")
    rows = dataset.split_rows(split)
    if not rows:
        raise DataError(f"split {split!r} is empty")
    if scorer is not None:
        preds = np.array([float(scorer(row)) for row in rows], dtype=np.float64)
    else:
        preds = _scores_for_rows(model, dataset, rows, mode, batch_size)
    if not np.all(np.isfinite(preds)):
        raise NumericError("non-finite prediction during evaluation")
    targets = np.array([row.mos for row in rows], dtype=np.float64)
    pair_index = split_pair_index(rows)
    try:
        return {
            "srcc": srcc(preds, targets),
            "plcc": plcc(preds, targets),
            "accuracy": pairwise_accuracy(preds, targets, pair_index),
            "n_samples": len(rows),
            "n_pairs": len(pair_index),
        }
    except ValueError as exc:  # constant inputs / no comparable pairs
        raise DataError(f"metrics undefined on split {split!r}: {exc}") from exc


def reference_sweep(
    model: CKDN,
    dataset: SyntheticDataset,
    specs: Sequence[DegradationSpec],
    split: str = "val",
    batch_size: int = 32,
) -> list[dict]:
    """Score every split row against a single synthetic reference per spec.

    For each spec the pristine image of each content is re-degraded with
    that spec (same seed derivation the dataset builder used, so a spec
    matching a stored degradation reproduces its reference pixels exactly)
    and used as the universal reference. Returns one {reference, srcc,
    plcc, n_samples} row per spec, in input order.
    """
    rows = dataset.split_rows(split)
    if not rows:
        raise DataError(f"split {split!r} is empty")
    targets = np.array([row.mos for row in rows], dtype=np.float64)
    res = model.config.input_resolution
    table = []
    model.eval()
    for spec in specs:
        refs: dict[str, np.ndarray] = {}
        preds = np.empty(len(rows), dtype=np.float64)
        with torch.no_grad():
            for start in range(0, len(rows), batch_size):
                chunk = rows[start : start + batch_size]
                ref_list, rest_list = [], []
                for row in chunk:
                    if row.content_id not in refs:
                        seeded = spec.with_seed(
                            derive_seed(dataset.global_seed, "degrade", row.content_id, spec.label)
                        )
                        refs[row.content_id] = degrade(dataset.pristine(row.content_id), seeded)
                    ref_c, rest_c = _crop_flip(
                        [refs[row.content_id], dataset.restored(row)], res, None
                    )
                    ref_list.append(to_tensor(ref_c))
                    rest_list.append(to_tensor(rest_c))
                scores = model.score(torch.stack(ref_list), torch.stack(rest_list))
                preds[start : start + len(chunk)] = scores.double().numpy()
        if not np.all(np.isfinite(preds)):
            raise NumericError(f"non-finite prediction in reference sweep at {spec.label}")
        table.append(
            {
                "reference": spec.label,
                "srcc": _safe_metric(srcc, preds, targets),
                "plcc": _safe_metric(plcc, preds, targets),
                "n_samples": len(rows),
            }
        )
    return table


# -- stage 1 ------------------------------------------------------------------


def pretrain_qse(
    config: TrainConfig,
    dataset: SyntheticDataset,
    out_dir: str | Path,
    resume: bool = False,
) -> Path:
    """Stage 1: fit theta_e2 and theta_s only. Returns the checkpoint path.

    The reference embeddings (student and teacher) receive no gradients and
    stay bit-identical to their initialization.
    """
    if config.pretrain_loss == "none":
        raise UsageError("pretrain_loss='none' leaves nothing to pretrain")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_config_snapshot(out_dir, config, dataset)
    final_path = out_dir / "stage1.pt"
    latest_path = out_dir / "stage1-latest.pt"

    train_rows = dataset.split_rows("train")
    if not train_rows:
        raise DataError("train split is empty")
    n_pairs = config.pairs_per_epoch or len(train_rows)
    n_steps = max(1, n_pairs // config.batch_size) if config.pretrain_loss == "relative" else None
    if config.pretrain_loss == "absolute":
        n_steps = max(1, len(train_rows) // config.batch_size)
        if config.steps_per_epoch is not None:
            n_steps = min(n_steps, config.steps_per_epoch)
    warmup_steps = round(config.warmup_fraction * n_steps)

    start_epoch = 0
    history: list[dict] = []
    optimizer_state = None
    if resume and latest_path.exists():
        payload = load_checkpoint(latest_path)
        if payload["config_hash"] != config_hash(config.model):
            raise DataError("resume checkpoint was trained with a different model config")
        model, _ = restore_model(payload)
        start_epoch = payload["extra"]["epoch"]
        history = payload["extra"]["history"]
        optimizer_state = payload["optimizer"]
    else:
        model = build_model(config.model, seed=derive_seed(config.seed, "init"))

    params = model.trainable_parameters(["theta_e2", "theta_s"])
    optimizer = torch.optim.SGD(params, lr=0.0, momentum=config.momentum)
    if optimizer_state is not None:
        optimizer.load_state_dict(optimizer_state)

    model.train()
    for epoch in range(start_epoch, config.stage1_epochs):
        aug_rng = np.random.default_rng(derive_seed(config.seed, "augment", "pretrain", epoch))
        if config.pretrain_loss == "relative":
            pairs = dataset.sample_pairs(
                n_pairs, derive_seed(config.seed, "pairs", epoch), split="train"
            )
            batches = _chunks(pairs, config.batch_size, n_steps)
        else:
            order_rng = np.random.default_rng(derive_seed(config.seed, "order", "pretrain", epoch))
            shuffled = [train_rows[i] for i in order_rng.permutation(len(train_rows))]
            batches = _chunks(shuffled, config.batch_size, n_steps)
        losses = []
        lr = 0.0
        for step, chunk in enumerate(batches):
            lr = learning_rate(epoch * n_steps + step, config.base_lr, warmup_steps)
            for group in optimizer.param_groups:
                group["lr"] = lr
            if config.pretrain_loss == "relative":
                batch = _make_pair_batch(dataset, chunk, config, aug_rng if config.augment else None)
                loss = relative_loss(model, batch, m=config.elo_m, sigmoid_head=config.sigmoid_head)
            else:
                batch = _make_batch(dataset, chunk, config, aug_rng if config.augment else None)
                loss = absolute_loss(model, batch)
            optimizer.zero_grad()
            loss.backward()
            if config.grad_clip is not None:
                torch.nn.utils.clip_grad_norm_(params, config.grad_clip)
            optimizer.step()
            value = loss.item()
            _check_finite(value, "pretrain", epoch + 1, step)
            losses.append(value)
        record = {"stage": "pretrain", "epoch": epoch + 1, "lr": lr, "train_loss": float(np.mean(losses))}
        history.append(record)
        _append_metrics(out_dir, record)
        save_checkpoint(
            latest_path,
            model,
            STAGE_PRETRAINED,
            optimizer=optimizer,
            extra={"epoch": epoch + 1, "history": history, "train_config": train_config_snapshot(config)},
        )

    save_checkpoint(
        final_path,
        model,
        STAGE_PRETRAINED,
        extra={
            "epoch": config.stage1_epochs,
            "history": history,
            "final_train_loss": history[-1]["train_loss"] if history else None,
            "train_config": train_config_snapshot(config),
        },
    )
    return final_path


# -- stage 2 ------------------------------------------------------------------


def train_ckdn(
    config: TrainConfig,
    dataset: SyntheticDataset,
    out_dir: str | Path,
    init: str | Path | dict | None = None,
    resume: bool = False,
) -> Path:
    """Stage 2: fit all parameter groups. Returns the final checkpoint path.

    ``init`` is the stage-1 checkpoint (path or loaded payload); required
    when ``config.use_pretrain`` and rejected otherwise. With
    ``config.use_ckd`` the distillation objective is optimized, otherwise
    the absolute loss alone.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_config_snapshot(out_dir, config, dataset)
    final_path = out_dir / "stage2.pt"
    latest_path = out_dir / "stage2-latest.pt"
    best_path = out_dir / "stage2-best.pt"

    train_rows = dataset.split_rows("train")
    if not train_rows:
        raise DataError("train split is empty")
    n_steps = max(1, len(train_rows) // config.batch_size)
    if config.steps_per_epoch is not None:
        n_steps = min(n_steps, config.steps_per_epoch)
    warmup_steps = round(config.warmup_fraction * n_steps)

    start_epoch = 0
    history: list[dict] = []
    best_val = -math.inf
    optimizer_state = None
    if resume and latest_path.exists():
        payload = load_checkpoint(latest_path)
        if payload["config_hash"] != config_hash(config.model):
            raise DataError("resume checkpoint was trained with a different model config")
        model, _ = restore_model(payload)
        start_epoch = payload["extra"]["epoch"]
        history = payload["extra"]["history"]
        best_val = payload["extra"].get("best_val_srcc_dr", -math.inf)
        optimizer_state = payload["optimizer"]
    elif config.use_pretrain:
        if init is None:
            raise UsageError("use_pretrain requires a stage-1 checkpoint (init)")
        payload = init if isinstance(init, dict) else load_checkpoint(init)
        if payload["stage"] != STAGE_PRETRAINED:
            raise UsageError(f"init checkpoint has stage {payload['stage']!r}, expected {STAGE_PRETRAINED!r}")
        if payload["config_hash"] != config_hash(config.model):
            raise DataError("init checkpoint was trained with a different model config")
        model, _ = restore_model(payload)
    else:
        if init is not None:
            raise UsageError("init checkpoint given but use_pretrain is off")
        model = build_model(config.model, seed=derive_seed(config.seed, "init"))

    params = model.trainable_parameters()
    optimizer = torch.optim.SGD(params, lr=0.0, momentum=config.momentum)
    if optimizer_state is not None:
        optimizer.load_state_dict(optimizer_state)

    for epoch in range(start_epoch, config.stage2_epochs):
        model.train()
        order_rng = np.random.default_rng(derive_seed(config.seed, "order", "ckdn", epoch))
        aug_rng = np.random.default_rng(derive_seed(config.seed, "augment", "ckdn", epoch))
        shuffled = [train_rows[i] for i in order_rng.permutation(len(train_rows))]
        batches = _chunks(shuffled, config.batch_size, n_steps)
        losses = []
        lr = 0.0
        for step, chunk in enumerate(batches):
            lr = learning_rate(epoch * n_steps + step, config.base_lr, warmup_steps)
            for group in optimizer.param_groups:
                group["lr"] = lr
            batch = _make_batch(dataset, chunk, config, aug_rng if config.augment else None)
            if config.use_ckd:
                loss = ckd_loss(model, batch, config.weights, config.teacher_stop_gradient)
            else:
                loss = absolute_loss(model, batch)
            optimizer.zero_grad()
            loss.backward()
            if config.grad_clip is not None:
                torch.nn.utils.clip_grad_norm_(params, config.grad_clip)
            optimizer.step()
            value = loss.item()
            _check_finite(value, "ckdn", epoch + 1, step)
            losses.append(value)

        val_rows = dataset.split_rows("val")
        record = {"stage": "ckdn", "epoch": epoch + 1, "lr": lr, "train_loss": float(np.mean(losses))}
        if val_rows:
            preds_dr = _scores_for_rows(model, dataset, val_rows, "dr", config.eval_batch_size)
            preds_fr = _scores_for_rows(model, dataset, val_rows, "fr", config.eval_batch_size)
            targets = np.array([r.mos for r in val_rows], dtype=np.float64)
            record.update(
                val_srcc_dr=_safe_metric(srcc, preds_dr, targets),
                val_plcc_dr=_safe_metric(plcc, preds_dr, targets),
                val_srcc_fr=_safe_metric(srcc, preds_fr, targets),
                val_plcc_fr=_safe_metric(plcc, preds_fr, targets),
            )
        history.append(record)
        _append_metrics(out_dir, record)

        val_srcc_dr = record.get("val_srcc_dr")
        if val_srcc_dr is not None and not math.isnan(val_srcc_dr) and val_srcc_dr > best_val:
            best_val = val_srcc_dr
            save_checkpoint(
                best_path,
                model,
                STAGE_CKDN,
                extra={"epoch": epoch + 1, "val_srcc_dr": val_srcc_dr,
                       "train_config": train_config_snapshot(config)},
            )
        save_checkpoint(
            latest_path,
            model,
            STAGE_CKDN,
            optimizer=optimizer,
            extra={"epoch": epoch + 1, "history": history, "best_val_srcc_dr": best_val,
                   "train_config": train_config_snapshot(config)},
        )

    save_checkpoint(
        final_path,
        model,
        STAGE_CKDN,
        extra={"epoch": config.stage2_epochs, "history": history, "best_val_srcc_dr": best_val,
               "train_config": train_config_snapshot(config)},
    )
    return final_path
