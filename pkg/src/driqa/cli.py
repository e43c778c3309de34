"""Command-line interface.

Commands::

    driqa synth <manifest.yaml> [--out DIR]
    driqa train <run-config.yaml> --stage {pretrain,ckdn,both} [--resume]
    driqa eval <checkpoint> <dataset> [--split S] [--mode {dr,fr,nr}]
               [--sweep [SPECS]] [--out FILE]
    driqa score <checkpoint> <degraded> <restored>
    driqa compare <checkpoint> <degraded> <restored-a> <restored-b>

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric
failure (non-finite loss or score).

Ad-hoc images (score/compare) are resized bicubically to the checkpoint's
input resolution before scoring; PNG and JPEG containers are accepted.
Sweep specs are comma-separated labels like ``down4x,noise25,jpeg30``
(default: the seven-entry preset ``down2x ... jpeg10``).
"""

from __future__ import annotations

import argparse
import math
import re
import sys
from pathlib import Path

import torch
import yaml

from driqa import __version__
from driqa.checkpoint import load_checkpoint, load_model, restore_model
from driqa.config import load_run_config, run_config_hash, variant_label
from driqa.dataset import SyntheticDataset, build_dataset, load_manifest
from driqa.degradations import DegradationSpec, paper_degradations
from driqa.errors import DataError, DriqaError, NumericError, UsageError
from driqa.images import bicubic_resize, load_image, to_tensor
from driqa.model import CKDN
from driqa.training import evaluate, pretrain_qse, reference_sweep, train_ckdn


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems via the exit-code contract."""

    def error(self, message):
        raise UsageError(message)


def _parse_sweep_specs(text: str) -> list[DegradationSpec]:
    if text in ("", "paper"):
        return list(paper_degradations())
    specs = []
    for label in text.split(","):
        label = label.strip()
        m = re.fullmatch(r"down(\d+)x", label)
        if m:
            specs.append(DegradationSpec("downsample", int(m.group(1))))
            continue
        m = re.fullmatch(r"noise(\d+(?:\.\d+)?)", label)
        if m:
            specs.append(DegradationSpec("gaussian_noise", float(m.group(1))))
            continue
        m = re.fullmatch(r"jpeg(\d+)", label)
        if m:
            specs.append(DegradationSpec("jpeg", int(m.group(1))))
            continue
        raise UsageError(
            f"cannot parse sweep spec {label!r} (expected downNx, noiseN or jpegN)"
        )
    return specs


def _load_for_scoring(model: CKDN, path: str) -> torch.Tensor:
    image = load_image(path)
    res = model.config.input_resolution
    if image.shape[:2] != (res, res):
        image = bicubic_resize(image, res, res)
    return to_tensor(image)


def _score_pair(model: CKDN, degraded_path: str, restored_path: str) -> float:
    degraded = _load_for_scoring(model, degraded_path)
    restored = _load_for_scoring(model, restored_path)
    with torch.no_grad():
        value = float(model.score(degraded, restored))
    if not math.isfinite(value):
        raise NumericError(f"non-finite score for {restored_path}")
    return value


# -- commands -----------------------------------------------------------------


def cmd_synth(args) -> int:
    manifest_path = Path(args.manifest)
    manifest = load_manifest(manifest_path)
    out_dir = Path(args.out) if args.out else manifest_path.parent / "dataset"
    result = build_dataset(manifest, out_dir)
    status = "up to date" if result.skipped else "built"
    print(f"dataset {status}: {result.dataset_dir}")
    print(f"samples: {result.n_samples}")
    print(f"index_hash: {result.index_hash}")
    print(f"toolkit_version: {__version__}")
    return 0


def cmd_train(args) -> int:
    run = load_run_config(args.config)
    dataset = SyntheticDataset(run.dataset)
    train = run.train
    print(f"variant: {variant_label(train)}")
    print(f"run_config_hash: {run_config_hash(run)}")
    out_dir = run.out_dir

    stage1_path = out_dir / "stage1.pt"
    if args.stage in ("pretrain", "both") and train.use_pretrain:
        stage1_path = pretrain_qse(train, dataset, out_dir, resume=args.resume)
        print(f"stage-1 checkpoint: {stage1_path}")
    elif args.stage == "pretrain":
        raise UsageError("--stage pretrain with use_pretrain=false has nothing to do")

    if args.stage in ("ckdn", "both"):
        init = None
        if train.use_pretrain:
            if not stage1_path.exists():
                raise UsageError(
                    f"stage-1 checkpoint {stage1_path} not found; run --stage pretrain first"
                )
            init = stage1_path
        final = train_ckdn(train, dataset, out_dir, init=init, resume=args.resume)
        print(f"stage-2 checkpoint: {final}")
        model, _ = load_model(final)
        for mode in ("dr", "fr"):
            result = evaluate(model, dataset, split="val", mode=mode,
                              batch_size=train.eval_batch_size)
            print(f"final val ({mode}): srcc={result['srcc']:.6f} plcc={result['plcc']:.6f} "
                  f"accuracy={result['accuracy']:.6f}")
    return 0


def cmd_eval(args) -> int:
    model, stage = load_model(args.checkpoint)
    payload = load_checkpoint(args.checkpoint)
    dataset = SyntheticDataset(args.dataset)
    report: dict = {
        "checkpoint": str(args.checkpoint),
        "stage": stage,
        "config_hash": payload["config_hash"],
        "toolkit_version": __version__,
        "split": args.split,
    }
    if args.sweep is not None:
        specs = _parse_sweep_specs(args.sweep)
        table = reference_sweep(model, dataset, specs, split=args.split)
        print(f"{'reference':<12} {'srcc':>10} {'plcc':>10} {'n':>6}")
        for row in table:
            print(f"{row['reference']:<12} {row['srcc']:>10.6f} {row['plcc']:>10.6f} "
                  f"{row['n_samples']:>6d}")
        report["sweep"] = table
    else:
        result = evaluate(model, dataset, split=args.split, mode=args.mode)
        for key in ("srcc", "plcc", "accuracy"):
            print(f"{key}: {result[key]:.6f}")
        report["mode"] = args.mode
        report["metrics"] = result
    if args.out:
        Path(args.out).write_text(yaml.safe_dump(report, sort_keys=False))
        print(f"report written: {args.out}")
    return 0


def cmd_score(args) -> int:
    model, _ = load_model(args.checkpoint)
    print(f"{_score_pair(model, args.degraded, args.restored):.6f}")
    return 0


def cmd_compare(args) -> int:
    model, _ = load_model(args.checkpoint)
    score_a = _score_pair(model, args.degraded, args.restored_a)
    score_b = _score_pair(model, args.degraded, args.restored_b)
    tie = score_a == score_b
    verdict = "A" if score_a >= score_b else "B"
    print(f"score_a: {score_a:.6f}")
    print(f"score_b: {score_b:.6f}")
    print(f"verdict: {verdict}")
    print(f"tie: {'true' if tie else 'false'}")
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="driqa", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"driqa {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="build a synthetic dataset from a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", help="dataset directory (default: <manifest dir>/dataset)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="run one or both training stages")
    p.add_argument("config")
    p.add_argument("--stage", choices=("pretrain", "ckdn", "both"), default="both")
    p.add_argument("--resume", action="store_true",
                   help="resume from the run directory's rolling checkpoints")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    p.add_argument("--split", default="val")
    p.add_argument("--mode", choices=("dr", "fr", "nr"), default="dr")
    p.add_argument("--sweep", nargs="?", const="paper", default=None,
                   help="reference-quality sweep; optional comma-separated specs")
    p.add_argument("--out", help="write the report to this YAML file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("score", help="score one restored image against its degraded reference")
    p.add_argument("checkpoint")
    p.add_argument("degraded")
    p.add_argument("restored")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("compare", help="compare two restorations of one degraded image")
    p.add_argument("checkpoint")
    p.add_argument("degraded")
    p.add_argument("restored_a")
    p.add_argument("restored_b")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except DriqaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
