"""Datasets: a seeded synthetic shapes generator, an IDX reader, splitting,
and per-channel standardization."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxError(ValueError):
    pass


class BadMagicError(IdxError):
    pass


class TruncatedError(IdxError):
    pass


class CountMismatchError(IdxError):
    pass


@dataclass
class Dataset:
    images: np.ndarray  # (N, C, H, W) float64
    labels: np.ndarray  # (N,) int64
    class_count: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ValueError(f"labels must lie in [0, {self.class_count})")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> "Dataset":
        return replace(self, images=self.images[idx], labels=self.labels[idx])


@dataclass(frozen=True)
class SplitSpec:
    val_fraction: float = 0.10
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")


# ----------------------------------------------------------------- synthetic


def _render(cls: int, size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    jitter = size / 8
    cy = (size - 1) / 2 + rng.uniform(-jitter, jitter)
    cx = (size - 1) / 2 + rng.uniform(-jitter, jitter)
    dy, dx = yy - cy, xx - cx
    r = size * rng.uniform(0.22, 0.32)
    t = size * rng.uniform(0.07, 0.11)
    rad = np.hypot(dy, dx)
    if cls == 0:    # horizontal bar
        img = (np.abs(dy) < t) & (np.abs(dx) < r)
    elif cls == 1:  # vertical bar
        img = (np.abs(dx) < t) & (np.abs(dy) < r)
    elif cls == 2:  # plus
        img = ((np.abs(dy) < t) & (np.abs(dx) < r)) | ((np.abs(dx) < t) & (np.abs(dy) < r))
    elif cls == 3:  # disk
        img = rad < r * 0.8
    elif cls == 4:  # ring
        img = np.abs(rad - r) < t * 0.8
    elif cls == 5:  # diagonal
        img = (np.abs(dy - dx) < t * 1.2) & (rad < r)
    elif cls == 6:  # anti-diagonal
        img = (np.abs(dy + dx) < t * 1.2) & (rad < r)
    elif cls == 7:  # square outline
        cheb = np.maximum(np.abs(dy), np.abs(dx))
        img = np.abs(cheb - r * 0.8) < t * 0.7
    elif cls == 8:  # X
        img = ((np.abs(dy - dx) < t) | (np.abs(dy + dx) < t)) & (rad < r)
    else:           # two dots
        off = r * 0.6
        img = (np.hypot(dy, dx - off) < t * 1.5) | (np.hypot(dy, dx + off) < t * 1.5)
    return img.astype(np.float64) * rng.uniform(0.6, 1.0)


def synth_shapes(n: int, classes: int, size: int, seed: int, noise: float = 0.25) -> Dataset:
    """Grayscale images of class-specific shapes with random placement,
    size, intensity and additive Gaussian noise, clipped to [0, 1].

    Labels are balanced within one (class i % classes, then shuffled).
    """
    if not 2 <= classes <= 10:
        raise ValueError("classes must lie in 2..10")
    if size < 16:
        raise ValueError("size must be at least 16")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % classes).astype(np.int64)
    images = np.empty((n, 1, size, size))
    for i, cls in enumerate(labels):
        img = _render(int(cls), size, rng)
        if noise:
            img = img + rng.normal(0.0, noise, img.shape)
        images[i, 0] = np.clip(img, 0.0, 1.0)
    meta = {"generator": "synth_shapes", "n": n, "classes": classes, "size": size,
            "seed": seed, "noise": noise}
    return Dataset(images, labels, classes, meta)


# ----------------------------------------------------------------------- IDX


def _open(path: Path):
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def _read_idx_file(path: Path, magic: int):
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise TruncatedError(f"{path}: file shorter than the 4-byte magic")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise BadMagicError(f"{path}: bad magic 0x{found:08x}, expected 0x{magic:08x}")
    ndim = magic & 0xFF
    head = 4 + 4 * ndim
    if len(raw) < head:
        raise TruncatedError(f"{path}: truncated header")
    dims = struct.unpack(">" + "I" * ndim, raw[4:head])
    count = int(np.prod(dims))
    if len(raw) - head < count:
        raise TruncatedError(f"{path}: payload has {len(raw) - head} bytes, header promises {count}")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=head).reshape(dims)


def read_idx(images_path, labels_path, class_count: int | None = None) -> Dataset:
    """Unsigned-byte IDX image/label pair; pixels scaled to [0, 1]."""
    images = _read_idx_file(Path(images_path), IDX_IMAGES_MAGIC)
    labels = _read_idx_file(Path(labels_path), IDX_LABELS_MAGIC)
    if len(images) != len(labels):
        raise CountMismatchError(f"{len(images)} images but {len(labels)} labels")
    labels = labels.astype(np.int64)
    if class_count is None:
        class_count = int(labels.max()) + 1 if len(labels) else 0
    meta = {"reader": "idx", "images": str(images_path), "labels": str(labels_path)}
    return Dataset(images[:, None].astype(np.float64) / 255.0, labels, class_count, meta)


def write_idx(images_path, labels_path, images_u8: np.ndarray, labels_u8: np.ndarray) -> None:
    """Inverse of read_idx for uint8 (N, H, W) images and (N,) labels."""
    images_u8 = np.asarray(images_u8, dtype=np.uint8)
    labels_u8 = np.asarray(labels_u8, dtype=np.uint8)
    Path(images_path).write_bytes(struct.pack(">IIII", IDX_IMAGES_MAGIC, *images_u8.shape)
                                  + images_u8.tobytes())
    Path(labels_path).write_bytes(struct.pack(">II", IDX_LABELS_MAGIC, len(labels_u8))
                                  + labels_u8.tobytes())


# --------------------------------------------------------------- splitting


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def split(dataset: Dataset, spec: SplitSpec = SplitSpec()) -> tuple[Dataset, Dataset]:
    """Disjoint, exhaustive (train, val) split, seeded."""
    n = len(dataset)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    n_val = _round_half_up(spec.val_fraction * n)
    if n_val == 0:
        raise ValueError(f"val_fraction={spec.val_fraction} leaves the validation split empty for {n} samples")
    if n_val >= n:
        raise ValueError("validation split would consume the whole dataset")
    rng = np.random.default_rng(spec.seed)
    if spec.stratified:
        classes = np.unique(dataset.labels)
        members = [rng.permutation(np.flatnonzero(dataset.labels == c)) for c in classes]
        quota = np.array([spec.val_fraction * len(m) for m in members])
        take = np.floor(quota).astype(int)
        # largest remainders get the leftover slots; ties go to the lower class id
        order = np.lexsort((np.arange(len(quota)), -(quota - take)))
        for i in order[:n_val - take.sum()]:
            take[i] += 1
        val_idx = np.concatenate([m[:t] for m, t in zip(members, take)])
    else:
        val_idx = rng.permutation(n)[:n_val]
    val_idx = np.sort(val_idx)
    train_mask = np.ones(n, dtype=bool)
    train_mask[val_idx] = False
    return dataset.subset(np.flatnonzero(train_mask)), dataset.subset(val_idx)


def channel_stats(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    mean = dataset.images.mean(axis=(0, 2, 3))
    std = dataset.images.std(axis=(0, 2, 3))
    return mean, np.where(std > 0, std, 1.0)


def standardize(train: Dataset, *others: Dataset, stats=None) -> list[Dataset]:
    """Per-channel (x - mean) / std with statistics from ``train`` only."""
    mean, std = channel_stats(train) if stats is None else stats
    out = []
    for ds in (train, *others):
        images = (ds.images - mean[None, :, None, None]) / std[None, :, None, None]
        out.append(replace(ds, images=images, meta={**ds.meta, "standardized": True}))
    return out
