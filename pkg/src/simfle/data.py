"""Datasets: folder ingestion, normalization statistics, balanced sampling.

A dataset is an in-memory array of square images plus optional labels,
optional landmark masks (synthetic data only), and a train/test split
assignment. Desk-scale corpora are a few thousand small images, so
everything stays resident.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from simfle.rng import RNGStream

log = logging.getLogger(__name__)

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp"}
STD_FLOOR = 1e-6


@dataclass
class Sample:
    """One image with optional class label and landmark mask."""

    image: np.ndarray  # H,W,3 uint8 or float32 in [0,1]
    label: int | None = None
    landmark_mask: np.ndarray | None = None  # H,W bool

    def __post_init__(self):
        h, w = self.image.shape[:2]
        if h != w:
            raise ValueError(f"sample image must be square, got {h}x{w}")
        if self.landmark_mask is not None and self.landmark_mask.shape != (h, w):
            raise ValueError(
                f"landmark mask shape {self.landmark_mask.shape} != image {h}x{w}"
            )


def hflip_sample(sample: Sample) -> Sample:
    """Mirror image and landmark mask together."""
    return Sample(
        image=sample.image[:, ::-1].copy(),
        label=sample.label,
        landmark_mask=None
        if sample.landmark_mask is None
        else sample.landmark_mask[:, ::-1].copy(),
    )


@dataclass
class ImageDataset:
    """Read-only after construction; safe for concurrent readers."""

    images: np.ndarray  # N,H,W,3
    labels: np.ndarray | None  # N int64
    masks: np.ndarray | None  # N,H,W bool
    splits: np.ndarray  # N of 'train' / 'test'
    class_names: tuple[str, ...]
    fingerprint: str
    root: Path | None = None
    skipped: int = 0
    paths: list[str] | None = None

    def __len__(self) -> int:
        return len(self.images)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def image_size(self) -> int:
        return self.images.shape[1]

    def indices(self, split: str | None = None) -> np.ndarray:
        if split is None:
            return np.arange(len(self))
        return np.nonzero(self.splits == split)[0]

    def sample(self, i: int) -> Sample:
        return Sample(
            image=self.images[i],
            label=None if self.labels is None else int(self.labels[i]),
            landmark_mask=None if self.masks is None else self.masks[i],
        )


def to_tensor(images: np.ndarray) -> torch.Tensor:
    """N,H,W,3 (uint8 or float in [0,1]) -> float32 tensor N,3,H,W in [0,1]."""
    arr = np.asarray(images)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float32) / 255.0
    else:
        arr = arr.astype(np.float32)
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(0, 3, 1, 2)))


# ---------------------------------------------------------------------------
# folder ingestion


def _dataset_fingerprint(entries: list[tuple[str, int]]) -> str:
    """Hash of sorted relative paths + file sizes; keys the stats cache."""
    h = hashlib.sha256()
    for rel, size in sorted(entries):
        h.update(rel.encode("utf-8"))
        h.update(b":")
        h.update(str(size).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def _load_image(path: Path, image_size: int) -> np.ndarray | None:
    try:
        with Image.open(path) as im:
            im = im.convert("RGB").resize((image_size, image_size), Image.BILINEAR)
            return np.asarray(im, dtype=np.uint8)
    except Exception as exc:  # unreadable file: skip with warning, count it
        warnings.warn(f"skipping unreadable image {path}: {exc}", stacklevel=2)
        return None


def _discover(root: Path) -> list[Path]:
    return sorted(
        p for p in root.rglob("*")
        if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
    )


def _labels_from_csv(root: Path, csv_path: Path, files: list[Path]) -> dict[Path, str]:
    table: dict[str, str] = {}
    with open(csv_path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().lower() == "filename":
                continue
            if len(row) < 2:
                raise ValueError(f"label row {row!r} needs 'filename,label'")
            table[row[0].strip()] = row[1].strip()
    out = {}
    for f in files:
        rel = f.relative_to(root).as_posix()
        if rel not in table:
            raise ValueError(f"no label entry for file {rel!r} in {csv_path}")
        out[f] = table[rel]
    return out


def _stratified_split(labels: np.ndarray, test_fraction: float,
                      rng: np.random.Generator) -> np.ndarray:
    splits = np.full(len(labels), "train", dtype="<U5")
    for cls in np.unique(labels):
        idx = np.nonzero(labels == cls)[0]
        perm = rng.permutation(idx)
        n_test = max(1, int(round(test_fraction * len(idx)))) if len(idx) > 1 else 0
        splits[perm[:n_test]] = "test"
    return splits


def ingest_folder(
    root: str | Path,
    labels: str | Path | None = None,
    image_size: int = 64,
    seed: int = 0,
    test_fraction: float = 0.2,
    manifest_path: str | Path | None = None,
) -> ImageDataset:
    """Load a labeled image folder.

    Labels come from class subfolders, or from a CSV of ``filename,label``
    rows (paths relative to ``root``). A pre-existing ``train/`` + ``test/``
    top-level layout is honored; otherwise a seed-deterministic stratified
    split is drawn. The split manifest is written next to the data.
    """
    root = Path(root)
    files = _discover(root)
    if not files:
        raise ValueError(f"no samples under {root}")

    has_split_dirs = (root / "train").is_dir() and (root / "test").is_dir()

    if labels is not None:
        label_names = _labels_from_csv(root, Path(labels), files)
    else:
        label_names = {}
        for f in files:
            rel = f.relative_to(root)
            parts = rel.parts
            if has_split_dirs:
                if len(parts) < 3:
                    raise ValueError(f"file {rel} not under <split>/<class>/")
                label_names[f] = parts[1]
            else:
                if len(parts) < 2:
                    raise ValueError(
                        f"file {rel} is not inside a class subfolder and no "
                        "label CSV was given"
                    )
                label_names[f] = parts[0]

    class_names = tuple(sorted(set(label_names.values())))
    class_index = {c: i for i, c in enumerate(class_names)}

    images, labels_out, kept, entries = [], [], [], []
    skipped = 0
    for f in files:
        arr = _load_image(f, image_size)
        if arr is None:
            skipped += 1
            continue
        images.append(arr)
        labels_out.append(class_index[label_names[f]])
        kept.append(f.relative_to(root).as_posix())
        entries.append((kept[-1], f.stat().st_size))
    if not images:
        raise ValueError(f"no decodable samples under {root}")

    labels_arr = np.asarray(labels_out, dtype=np.int64)
    if has_split_dirs:
        splits = np.asarray(
            ["test" if p.startswith("test/") else "train" for p in kept], dtype="<U5"
        )
    else:
        splits = _stratified_split(
            labels_arr, test_fraction, RNGStream(seed, "data").generator()
        )

    ds = ImageDataset(
        images=np.stack(images),
        labels=labels_arr,
        masks=None,
        splits=splits,
        class_names=class_names,
        fingerprint=_dataset_fingerprint(entries),
        root=root,
        skipped=skipped,
        paths=kept,
    )
    manifest = Path(manifest_path) if manifest_path else root / "split_manifest.csv"
    write_split_manifest(ds, manifest)
    return ds


def write_split_manifest(ds: ImageDataset, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "label", "split"])
        for i in range(len(ds)):
            name = ds.paths[i] if ds.paths else f"sample_{i:06d}"
            label = "" if ds.labels is None else ds.class_names[ds.labels[i]]
            w.writerow([name, label, ds.splits[i]])


# ---------------------------------------------------------------------------
# normalization statistics


@dataclass(frozen=True)
class NormStats:
    mean: tuple[float, float, float]
    std: tuple[float, float, float]
    source_split: str

    def __post_init__(self):
        if min(self.std) <= 0:
            raise ValueError("std components must be strictly positive")


def compute_norm_stats(
    ds: ImageDataset, split: str = "train", cache_dir: str | Path | None = None
) -> NormStats:
    """Per-channel mean/std over the given split, cached by dataset fingerprint.

    Std is floored at 1e-6 so constant channels never divide by zero.
    """
    cache_file = None
    if cache_dir is not None:
        cache_file = Path(cache_dir) / f"normstats-{ds.fingerprint[:16]}-{split}.json"
        if cache_file.exists():
            payload = json.loads(cache_file.read_text())
            return NormStats(tuple(payload["mean"]), tuple(payload["std"]), split)

    idx = ds.indices(split)
    if len(idx) == 0:
        raise ValueError(f"split {split!r} is empty")

    total = np.zeros(3, dtype=np.float64)
    total_sq = np.zeros(3, dtype=np.float64)
    count = 0
    for i in idx:
        img = ds.images[i]
        flat = (
            img.reshape(-1, 3).astype(np.float64) / 255.0
            if img.dtype == np.uint8
            else img.reshape(-1, 3).astype(np.float64)
        )
        total += flat.sum(axis=0)
        total_sq += (flat**2).sum(axis=0)
        count += flat.shape[0]
    mean = total / count
    var = np.maximum(total_sq / count - mean**2, 0.0)
    std = np.maximum(np.sqrt(var), STD_FLOOR)
    stats = NormStats(tuple(mean.tolist()), tuple(std.tolist()), split)

    if cache_file is not None:
        cache_file.parent.mkdir(parents=True, exist_ok=True)
        cache_file.write_text(
            json.dumps({"mean": stats.mean, "std": stats.std, "split": split})
        )
    return stats


def normalize(batch: torch.Tensor, stats: NormStats) -> torch.Tensor:
    """(B,3,H,W) in [0,1] -> standardized."""
    mean = torch.tensor(stats.mean, dtype=batch.dtype).view(1, 3, 1, 1)
    std = torch.tensor(stats.std, dtype=batch.dtype).view(1, 3, 1, 1)
    return (batch - mean) / std


def denormalize(batch: torch.Tensor, stats: NormStats) -> torch.Tensor:
    mean = torch.tensor(stats.mean, dtype=batch.dtype).view(1, 3, 1, 1)
    std = torch.tensor(stats.std, dtype=batch.dtype).view(1, 3, 1, 1)
    return batch * std + mean


# ---------------------------------------------------------------------------
# sampling


@dataclass
class SamplingSchedule:
    """Index source for the training loop; consumed by a single consumer."""

    indices_by_class: list[np.ndarray] = field(repr=False)
    pool: np.ndarray = field(repr=False)
    balanced: bool = True
    _rng: np.random.Generator = field(repr=False, default=None)

    def draw(self, n: int) -> np.ndarray:
        if self.balanced:
            classes = self._rng.integers(0, len(self.indices_by_class), size=n)
            return np.array(
                [
                    self.indices_by_class[c][self._rng.integers(len(self.indices_by_class[c]))]
                    for c in classes
                ],
                dtype=np.int64,
            )
        return self.pool[self._rng.integers(0, len(self.pool), size=n)]


def balanced_sampler(
    ds: ImageDataset,
    enable: bool,
    rng: RNGStream,
    split: str | None = "train",
) -> SamplingSchedule:
    """Equal per-class draw probability when enabled, else uniform over samples."""
    if enable and ds.labels is None:
        raise ValueError("balanced sampling requires labels")
    pool = ds.indices(split)
    if len(pool) == 0:
        raise ValueError(f"split {split!r} is empty")
    by_class: list[np.ndarray] = []
    if ds.labels is not None:
        for c in range(ds.num_classes):
            members = pool[ds.labels[pool] == c]
            if len(members):
                by_class.append(members)
    # one effective class degenerates to plain uniform sampling
    balanced = enable and len(by_class) > 1
    return SamplingSchedule(
        indices_by_class=by_class,
        pool=pool,
        balanced=balanced,
        _rng=rng.generator(),
    )
