"""Synthetic corpus construction and access.

A dataset is built from a manifest (YAML, schema below) plus a directory of
pristine source images, and is reproducible byte-for-byte from those two
inputs. Validation uses unseen contents AND unseen restorers: the content
and restorer splits are both disjoint partitions.

Manifest schema (version 1)::

    version: 1
    corpus:
      dir: corpus                # relative to the manifest file
      generate:                  # optional; materialize procedurally if absent
        n_images: 175
        size: 128
        seed: 7
    patch_size: 112              # center crop applied to every pristine image
    n_contents: 175
    content_split: [150, 25]     # counts, or fractions of n_contents
    degradations:
      - {kind: downsample, strength: 2}
      - {kind: gaussian_noise, strength: 25}
      - {kind: jpeg, strength: 30}
    restorers:
      - {kind: identity, id: identity}
      - {kind: median_denoise, id: median_denoise, params: {size: 3}}
    restorer_split:
      train: [identity]
      val: [median_denoise]
    global_seed: 17
    mos_scale: {mu: 1500.0, m: 400.0}

Layout on disk::

    <out>/meta.yaml                                  manifest echo + hashes
    <out>/index.csv                                  sample table
    <out>/images/<content>/pristine.png
    <out>/images/<content>/<degradation>/degraded.png
    <out>/images/<content>/<degradation>/<restorer>.png

index.csv columns: sample_id, content_id, degradation_id, restorer_id,
split, mos. Split is "train" (train content x train restorer), "val"
(val content x val restorer) or "extra" (all remaining combinations).
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
import PIL

from driqa import __version__
from driqa.corpus import write_corpus
from driqa.degradations import DegradationSpec, degrade, paper_degradations
from driqa.errors import DataError, UsageError
from driqa.images import PSNR_CEILING_DB, PSNR_FLOOR_DB, center_crop, load_image, psnr, save_png
from driqa.restorers import RestorerSpec, default_restorers, restore

MANIFEST_VERSION = 1

#: Exact closed form of the pseudo-MOS oracle, recorded in every dataset's
#: meta file. Strictly increasing in PSNR between the floor and ceiling.
PSEUDO_MOS_FORMULA = (
    f"mos = mu + m * log10(clamp(psnr_db, {PSNR_FLOOR_DB}, {PSNR_CEILING_DB}) / 20)"
)


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from a tuple of labels."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def pseudo_mos(pristine: np.ndarray, restored: np.ndarray, mu: float, m: float) -> float:
    """Deterministic PSNR-monotone stand-in for a human opinion score.

    Perfect reconstructions (infinite PSNR) clamp at the documented ceiling.
    """
    p = psnr(pristine, restored)
    p = min(max(p, PSNR_FLOOR_DB), PSNR_CEILING_DB)
    return mu + m * math.log10(p / 20.0)


@dataclass(frozen=True)
class MosScale:
    mu: float = 1500.0
    m: float = 400.0

    def __post_init__(self):
        if self.m <= 0:
            raise UsageError(f"mos_scale.m must be positive, got {self.m}")


@dataclass
class DatasetManifest:
    corpus_dir: Path
    patch_size: int
    n_contents: int
    content_split: tuple[int, int]
    degradations: list[DegradationSpec]
    restorers: list[RestorerSpec]
    restorer_split: dict[str, list[str]]
    global_seed: int = 0
    mos_scale: MosScale = field(default_factory=MosScale)
    corpus_generate: dict | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.patch_size < 8 or self.patch_size % 4 != 0:
            raise UsageError(f"patch_size must be >= 8 and divisible by 4, got {self.patch_size}")
        for spec in self.degradations:
            if spec.kind == "downsample" and self.patch_size % int(spec.strength) != 0:
                raise UsageError(
                    f"patch_size {self.patch_size} not divisible by downsample factor {spec.strength}"
                )
        if self.n_contents < 1:
            raise UsageError("n_contents must be positive")
        n_train, n_val = self.content_split
        if n_train < 1 or n_val < 0 or n_train + n_val > self.n_contents:
            raise UsageError(
                f"content_split {self.content_split} incompatible with n_contents {self.n_contents}"
            )
        if not self.degradations:
            raise UsageError("at least one degradation required")
        if not self.restorers:
            raise UsageError("at least one restorer required")
        ids = [r.id for r in self.restorers]
        if len(set(ids)) != len(ids):
            raise UsageError(f"duplicate restorer ids in {ids}")
        labels = [d.label for d in self.degradations]
        if len(set(labels)) != len(labels):
            raise UsageError(f"duplicate degradation labels in {labels}")
        train_ids = self.restorer_split.get("train", [])
        val_ids = self.restorer_split.get("val", [])
        if not train_ids or not val_ids:
            raise UsageError("restorer_split must list train and val ids")
        unknown = (set(train_ids) | set(val_ids)) - set(ids)
        if unknown:
            raise UsageError(f"restorer_split references unknown ids {sorted(unknown)}")
        if set(train_ids) & set(val_ids):
            raise UsageError(
                f"restorer_split not disjoint: {sorted(set(train_ids) & set(val_ids))}"
            )


def _split_counts(raw, n_contents: int) -> tuple[int, int]:
    if not isinstance(raw, (list, tuple)) or len(raw) != 2:
        raise UsageError(f"content_split must be a two-element list, got {raw!r}")
    a, b = raw
    if all(isinstance(v, (int, np.integer)) and v >= 1 for v in (a, b)):
        return int(a), int(b)
    if all(isinstance(v, float) and 0 < v <= 1 for v in (a, b)):
        return int(round(a * n_contents)), int(round(b * n_contents))
    raise UsageError(f"content_split entries must be counts >= 1 or fractions in (0, 1], got {raw!r}")


def manifest_from_dict(doc: dict, base_dir: Path) -> DatasetManifest:
    if not isinstance(doc, dict):
        raise UsageError("manifest must be a mapping")
    version = doc.get("version")
    if version != MANIFEST_VERSION:
        raise UsageError(f"unsupported manifest version {version!r} (expected {MANIFEST_VERSION})")
    try:
        corpus = doc["corpus"]
        degradations = [
            DegradationSpec(d["kind"], d["strength"]) for d in doc["degradations"]
        ]
        restorers = [
            RestorerSpec(
                r["kind"],
                r["id"],
                tuple(sorted((k, float(v)) for k, v in r.get("params", {}).items())),
            )
            for r in doc["restorers"]
        ]
        scale_doc = doc.get("mos_scale", {})
        manifest = DatasetManifest(
            corpus_dir=(base_dir / corpus["dir"]).resolve(),
            patch_size=int(doc["patch_size"]),
            n_contents=int(doc["n_contents"]),
            content_split=_split_counts(doc["content_split"], int(doc["n_contents"])),
            degradations=degradations,
            restorers=restorers,
            restorer_split={
                "train": list(doc["restorer_split"]["train"]),
                "val": list(doc["restorer_split"]["val"]),
            },
            global_seed=int(doc.get("global_seed", 0)),
            mos_scale=MosScale(float(scale_doc.get("mu", 1500.0)), float(scale_doc.get("m", 400.0))),
            corpus_generate=corpus.get("generate"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"malformed manifest: {exc!r}") from exc
    manifest.validate()
    return manifest


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise UsageError(f"cannot read manifest {path}: {exc}") from exc
    return manifest_from_dict(doc, path.parent)


def manifest_to_dict(manifest: DatasetManifest) -> dict:
    return {
        "version": MANIFEST_VERSION,
        "corpus": {
            "dir": str(manifest.corpus_dir),
            **({"generate": manifest.corpus_generate} if manifest.corpus_generate else {}),
        },
        "patch_size": manifest.patch_size,
        "n_contents": manifest.n_contents,
        "content_split": list(manifest.content_split),
        "degradations": [
            {"kind": d.kind, "strength": d.strength} for d in manifest.degradations
        ],
        "restorers": [
            {"kind": r.kind, "id": r.id, "params": dict(r.params)} for r in manifest.restorers
        ],
        "restorer_split": {
            "train": list(manifest.restorer_split["train"]),
            "val": list(manifest.restorer_split["val"]),
        },
        "global_seed": manifest.global_seed,
        "mos_scale": {"mu": manifest.mos_scale.mu, "m": manifest.mos_scale.m},
    }


def manifest_hash(manifest: DatasetManifest) -> str:
    doc = manifest_to_dict(manifest)
    doc["corpus"]["dir"] = Path(doc["corpus"]["dir"]).name  # location-independent
    blob = yaml.safe_dump(doc, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def desk_manifest(corpus_dir: str | Path) -> DatasetManifest:
    """The bundled CPU-scale experiment protocol.

    150 train / 25 val contents at 96x96, the full seven-entry degradation
    menu, and seven restorers split four train / three val, so validation
    sees unseen contents AND unseen restorers. The corpus is generated on
    demand.
    """
    return DatasetManifest(
        corpus_dir=Path(corpus_dir),
        patch_size=96,
        n_contents=175,
        content_split=(150, 25),
        degradations=list(paper_degradations()),
        restorers=default_restorers(),
        restorer_split={
            "train": ["identity", "bicubic_up", "median_denoise", "gaussian_denoise"],
            "val": ["box_blur_up", "sharpen_up", "noise_injecting"],
        },
        global_seed=0,
        mos_scale=MosScale(),
        corpus_generate={"n_images": 175, "size": 96, "seed": 1},
    )


@dataclass(frozen=True)
class SampleRow:
    sample_id: str
    content_id: str
    degradation_id: str
    restorer_id: str
    split: str
    mos: float


@dataclass
class BuildResult:
    dataset_dir: Path
    n_samples: int
    index_hash: str
    skipped: bool


def _index_bytes(rows: list[SampleRow]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["sample_id", "content_id", "degradation_id", "restorer_id", "split", "mos"])
    for r in rows:
        writer.writerow([r.sample_id, r.content_id, r.degradation_id, r.restorer_id, r.split, repr(r.mos)])
    return buf.getvalue().encode("utf-8")


def _ensure_corpus(manifest: DatasetManifest) -> list[Path]:
    gen = manifest.corpus_generate
    existing = sorted(manifest.corpus_dir.glob("*.png")) if manifest.corpus_dir.is_dir() else []
    if len(existing) < manifest.n_contents and gen:
        write_corpus(manifest.corpus_dir, int(gen["n_images"]), int(gen["size"]), int(gen.get("seed", 0)))
        existing = sorted(manifest.corpus_dir.glob("*.png"))
    if len(existing) < manifest.n_contents:
        raise DataError(
            f"corpus {manifest.corpus_dir} has {len(existing)} images, need {manifest.n_contents}"
        )
    return existing[: manifest.n_contents]


def build_dataset(manifest: DatasetManifest, out_dir: str | Path) -> BuildResult:
    """Materialize every (content x degradation x restorer) sample.

    Reproducible: the same manifest and corpus always produce the same
    pixels, index bytes and hash. If ``out_dir`` already holds a dataset
    built from an identical manifest, the build is skipped.
    """
    manifest.validate()
    out_dir = Path(out_dir)
    meta_path = out_dir / "meta.yaml"
    mhash = manifest_hash(manifest)
    if meta_path.exists():
        meta = yaml.safe_load(meta_path.read_text())
        if meta.get("manifest_hash") == mhash and (out_dir / "index.csv").exists():
            stored = meta.get("index_hash")
            actual = hashlib.sha256((out_dir / "index.csv").read_bytes()).hexdigest()
            if stored == actual:
                n = sum(1 for _ in (out_dir / "index.csv").open()) - 1
                return BuildResult(out_dir, n, actual, skipped=True)
        raise DataError(f"{out_dir} already holds a different or corrupt dataset; refusing to overwrite")

    corpus_files = _ensure_corpus(manifest)
    content_ids = [p.stem for p in corpus_files]

    rng = np.random.default_rng(derive_seed(manifest.global_seed, "content_split"))
    order = rng.permutation(len(content_ids))
    n_train, n_val = manifest.content_split
    train_contents = {content_ids[i] for i in order[:n_train]}
    val_contents = {content_ids[i] for i in order[n_train : n_train + n_val]}
    train_restorers = set(manifest.restorer_split["train"])
    val_restorers = set(manifest.restorer_split["val"])

    rows: list[SampleRow] = []
    images_dir = out_dir / "images"
    for path, content in zip(corpus_files, content_ids):
        pristine = center_crop(load_image(path), manifest.patch_size)
        save_png(images_dir / content / "pristine.png", pristine)
        for dspec in manifest.degradations:
            seeded = dspec.with_seed(derive_seed(manifest.global_seed, "degrade", content, dspec.label))
            degraded = degrade(pristine, seeded)
            save_png(images_dir / content / dspec.label / "degraded.png", degraded)
            for rspec in manifest.restorers:
                seed = derive_seed(manifest.global_seed, "restore", content, dspec.label, rspec.id)
                restored = restore(degraded, rspec, seed=seed)
                save_png(images_dir / content / dspec.label / f"{rspec.id}.png", restored)
                mos = pseudo_mos(pristine, restored, manifest.mos_scale.mu, manifest.mos_scale.m)
                if content in train_contents and rspec.id in train_restorers:
                    split = "train"
                elif content in val_contents and rspec.id in val_restorers:
                    split = "val"
                else:
                    split = "extra"
                rows.append(
                    SampleRow(
                        sample_id=f"{content}_{dspec.label}_{rspec.id}",
                        content_id=content,
                        degradation_id=dspec.label,
                        restorer_id=rspec.id,
                        split=split,
                        mos=mos,
                    )
                )

    rows.sort(key=lambda r: r.sample_id)
    index = _index_bytes(rows)
    index_hash = hashlib.sha256(index).hexdigest()
    (out_dir / "index.csv").write_bytes(index)
    meta = {
        "toolkit_version": __version__,
        "manifest_hash": mhash,
        "index_hash": index_hash,
        "pseudo_mos_formula": PSEUDO_MOS_FORMULA,
        "jpeg_codec": f"Pillow {PIL.__version__}",
        "manifest": manifest_to_dict(manifest),
        "contents": {
            "train": sorted(train_contents),
            "val": sorted(val_contents),
        },
    }
    meta_path.write_text(yaml.safe_dump(meta, sort_keys=True))
    return BuildResult(out_dir, len(rows), index_hash, skipped=False)


@dataclass(frozen=True)
class PairRecord:
    row_i: SampleRow
    row_j: SampleRow


class SyntheticDataset:
    """Read access to a built dataset, with an in-memory uint8 image cache."""

    def __init__(self, root: str | Path, cache_images: bool = True):
        self.root = Path(root)
        index_path = self.root / "index.csv"
        meta_path = self.root / "meta.yaml"
        if not index_path.exists() or not meta_path.exists():
            raise DataError(f"{self.root} is not a dataset (missing index.csv or meta.yaml)")
        self.meta = yaml.safe_load(meta_path.read_text())
        scale = self.meta["manifest"]["mos_scale"]
        self.mos_scale = MosScale(float(scale["mu"]), float(scale["m"]))
        self.patch_size = int(self.meta["manifest"]["patch_size"])
        self.global_seed = int(self.meta["manifest"]["global_seed"])
        self.rows: list[SampleRow] = []
        with index_path.open(newline="") as fh:
            for rec in csv.DictReader(fh):
                self.rows.append(
                    SampleRow(
                        sample_id=rec["sample_id"],
                        content_id=rec["content_id"],
                        degradation_id=rec["degradation_id"],
                        restorer_id=rec["restorer_id"],
                        split=rec["split"],
                        mos=float(rec["mos"]),
                    )
                )
        if not self.rows:
            raise DataError(f"{index_path} holds no samples")
        self._cache: dict[Path, np.ndarray] | None = {} if cache_images else None

    # -- image access --------------------------------------------------------

    def _load(self, path: Path) -> np.ndarray:
        if self._cache is not None and path in self._cache:
            return self._cache[path]
        img = load_image(path)
        if self._cache is not None:
            self._cache[path] = img
        return img

    def pristine(self, content_id: str) -> np.ndarray:
        return self._load(self.root / "images" / content_id / "pristine.png")

    def degraded(self, content_id: str, degradation_id: str) -> np.ndarray:
        return self._load(self.root / "images" / content_id / degradation_id / "degraded.png")

    def restored(self, row: SampleRow) -> np.ndarray:
        return self._load(
            self.root / "images" / row.content_id / row.degradation_id / f"{row.restorer_id}.png"
        )

    def load_sample(self, row: SampleRow) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(pristine, degraded, restored) uint8 triplet for one row."""
        return (
            self.pristine(row.content_id),
            self.degraded(row.content_id, row.degradation_id),
            self.restored(row),
        )

    # -- structure -----------------------------------------------------------

    def split_rows(self, split: str) -> list[SampleRow]:
        return [r for r in self.rows if r.split == split]

    def cells(self, split: str) -> dict[tuple[str, str], list[SampleRow]]:
        """Rows grouped by (content, degradation), insertion-ordered."""
        out: dict[tuple[str, str], list[SampleRow]] = {}
        for r in self.split_rows(split):
            out.setdefault((r.content_id, r.degradation_id), []).append(r)
        return out

    def sample_pairs(self, n_pairs: int, seed: int, split: str = "train") -> list[PairRecord]:
        """Uniformly sample restoration pairs of the same content.

        A cell is one (content, degradation) group; cells with a single
        restoration cannot form pairs. Cell choice is uniform; within a
        cell the ordered pair of distinct restorations is uniform.
        """
        cells = [rows for rows in self.cells(split).values() if len(rows) >= 2]
        if not cells:
            raise DataError(f"no (content, degradation) cell in split {split!r} has >= 2 restorations")
        rng = np.random.default_rng(seed)
        pairs = []
        for _ in range(n_pairs):
            cell = cells[int(rng.integers(len(cells)))]
            i, j = rng.choice(len(cell), size=2, replace=False)
            pairs.append(PairRecord(cell[int(i)], cell[int(j)]))
        return pairs

    def index_hash(self) -> str:
        return hashlib.sha256((self.root / "index.csv").read_bytes()).hexdigest()
