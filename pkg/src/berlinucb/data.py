"""Dataset loading and preprocessing.

Supported sources are IDX binary files (the MNIST distribution format,
optionally gzip-compressed) and header-first labelled CSV tables with
numeric, already-encoded feature columns.
"""

from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, ConsistencyError, DataError, FormatError, InvalidArgumentError

IDX_LABELS_MAGIC = 0x00000801
IDX_IMAGES_MAGIC = 0x00000803
DEFAULT_LIMIT = 5000


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    class_count: int
    name: str = "dataset"
    class_names: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "features", np.ascontiguousarray(self.features, dtype=np.float64))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        self.features.setflags(write=False)
        self.labels.setflags(write=False)

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def dimension(self) -> int:
        return self.features.shape[1]

    def validate(self, unit_range: bool = True) -> "Dataset":
        """Check the structural invariants; return ``self`` for chaining."""
        f, y = self.features, self.labels
        if f.ndim != 2:
            raise DataError(f"{self.name}: features must be 2-d, got shape {f.shape}")
        if f.shape[0] != y.shape[0]:
            raise ConsistencyError(f"{self.name}: {f.shape[0]} feature rows but {y.shape[0]} labels")
        if y.size and (y.min() < 0 or y.max() >= self.class_count):
            raise DataError(f"{self.name}: labels outside 0..{self.class_count - 1}")
        if not np.all(np.isfinite(f)):
            raise DataError(f"{self.name}: non-finite feature values")
        if unit_range and f.size and (f.min() < 0.0 or f.max() > 1.0):
            raise DataError(f"{self.name}: features outside [0, 1]")
        return self

    def head(self, n: int) -> "Dataset":
        return replace(self, features=self.features[:n], labels=self.labels[:n])

    def summary(self) -> dict:
        counts = np.bincount(self.labels, minlength=self.class_count)
        return {
            "name": self.name,
            "samples": len(self),
            "dimension": self.dimension,
            "classes": self.class_count,
            "class_counts": counts.tolist(),
            "feature_min": float(self.features.min()) if self.features.size else None,
            "feature_max": float(self.features.max()) if self.features.size else None,
            "nonzero_fraction": float(np.count_nonzero(self.features) / max(self.features.size, 1)),
        }


# -- IDX ------------------------------------------------------------------

def _read_bytes(path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _parse_idx(raw: bytes, expected_magic: int, ndim: int, path) -> np.ndarray:
    header = 4 + 4 * ndim
    if len(raw) < 4:
        raise FormatError(f"{path}: file too short for an IDX magic number", offset=len(raw))
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise FormatError(f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}", offset=0)
    if len(raw) < header:
        raise FormatError(f"{path}: truncated IDX header", offset=len(raw))
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    need = int(np.prod(dims, dtype=np.int64))
    if len(raw) - header < need:
        raise FormatError(f"{path}: truncated payload, expected {need} bytes after header, found {len(raw) - header}",
                          offset=len(raw))
    return np.frombuffer(raw, dtype=np.uint8, count=need, offset=header).reshape(dims)


def load_idx(images_path, labels_path, limit: int | None = DEFAULT_LIMIT, name: str = "mnist") -> Dataset:
    """Load an IDX image/label pair, scaling pixels to [0, 1] and flattening rows.

    Only the first ``limit`` records are kept, in file order.
    """
    images = _parse_idx(_read_bytes(images_path), IDX_IMAGES_MAGIC, 3, images_path)
    labels = _parse_idx(_read_bytes(labels_path), IDX_LABELS_MAGIC, 1, labels_path)
    if images.shape[0] != labels.shape[0]:
        raise ConsistencyError(f"{images_path} has {images.shape[0]} images but {labels_path} has {labels.shape[0]} labels")
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    n, rows, cols = images.shape
    features = images.reshape(n, rows * cols).astype(np.float64) / 255.0
    k = int(labels.max()) + 1 if labels.size else 0
    return Dataset(features, labels.astype(np.int64), max(k, 1), name=name).validate()


def idx_bytes(array: np.ndarray) -> bytes:
    """Serialize a uint8 array (1-d labels or 3-d images) to raw IDX bytes."""
    a = np.ascontiguousarray(array, dtype=np.uint8)
    magic = {1: IDX_LABELS_MAGIC, 3: IDX_IMAGES_MAGIC}.get(a.ndim)
    if magic is None:
        raise InvalidArgumentError(f"IDX writer supports 1-d labels or 3-d images, got {a.ndim}-d")
    return struct.pack(f">I{a.ndim}I", magic, *a.shape) + a.tobytes()


def write_idx(dataset: Dataset, images_path, labels_path, shape: tuple[int, int] | None = None,
              compress: bool = False) -> None:
    """Write ``dataset`` as an IDX pair; lossless for features that came from bytes."""
    if shape is None:
        side = int(round(np.sqrt(dataset.dimension)))
        if side * side != dataset.dimension:
            raise InvalidArgumentError("pass shape= for non-square feature vectors")
        shape = (side, side)
    pixels = np.rint(dataset.features * 255.0).astype(np.uint8).reshape(len(dataset), *shape)
    for path, payload in ((images_path, idx_bytes(pixels)), (labels_path, idx_bytes(dataset.labels))):
        if compress:
            payload = gzip.compress(payload, mtime=0)
        Path(path).write_bytes(payload)


# -- CSV ------------------------------------------------------------------

def load_labelled_csv(path, label_column: str, limit: int | None = DEFAULT_LIMIT,
                      name: str | None = None) -> Dataset:
    """Load a header-first CSV; min-max scale every feature column to [0, 1].

    Label values become contiguous class ids in order of first appearance.
    Constant columns map to 0. Feature cells must already be numeric.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row") from None
        if label_column not in header:
            raise ConfigError(f"{path}: label column {label_column!r} not in header {header}")
        li = header.index(label_column)
        rows, raw_labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if limit is not None and len(rows) >= limit:
                break
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {lineno} has {len(row)} cells, header has {len(header)}")
            try:
                rows.append([float(c) for i, c in enumerate(row) if i != li])
            except ValueError:
                raise DataError(f"{path}: row {lineno} has a non-numeric feature cell") from None
            raw_labels.append(row[li].strip())
    if not rows:
        raise DataError(f"{path}: no data rows")
    features = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(features)):
        raise DataError(f"{path}: non-finite feature values")
    lo, hi = features.min(axis=0), features.max(axis=0)
    span = hi - lo
    scaled = np.zeros_like(features)
    ok = span > 0
    scaled[:, ok] = (features[:, ok] - lo[ok]) / span[ok]
    np.clip(scaled, 0.0, 1.0, out=scaled)
    classes: dict[str, int] = {}
    labels = np.array([classes.setdefault(v, len(classes)) for v in raw_labels], dtype=np.int64)
    return Dataset(scaled, labels, len(classes), name=name or path.stem,
                   class_names=tuple(classes)).validate()


def write_labelled_csv(path, features: np.ndarray, labels, label_column: str = "label") -> None:
    features = np.asarray(features, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{i}" for i in range(features.shape[1])] + [label_column])
        for row, y in zip(features, labels):
            w.writerow([repr(float(v)) for v in row] + [y])


# -- transforms -----------------------------------------------------------

def pool_downsample(dataset: Dataset, factor: int) -> Dataset:
    """Non-overlapping ``factor x factor`` average pooling of square images."""
    if factor < 1:
        raise InvalidArgumentError("pool factor must be >= 1")
    if factor == 1:
        return dataset
    d = dataset.dimension
    side = int(round(np.sqrt(d)))
    if side * side != d:
        raise InvalidArgumentError(f"dimension {d} is not a perfect square")
    if side % factor:
        raise InvalidArgumentError(f"image side {side} is not divisible by {factor}")
    s = side // factor
    imgs = dataset.features.reshape(len(dataset), s, factor, s, factor)
    pooled = imgs.mean(axis=(2, 4)).reshape(len(dataset), s * s)
    return replace(dataset, features=pooled, name=f"{dataset.name}-pool{factor}")


def stretch_concat(a: Dataset, b: Dataset) -> tuple[Dataset, Dataset]:
    """Embed both datasets in dimension ``d_a + d_b`` with disjoint coordinates.

    ``a`` occupies the leading ``d_a`` coordinates, ``b`` the trailing ``d_b``;
    ``b``'s labels are offset by ``a.class_count``.
    """
    da, db = a.dimension, b.dimension
    k = a.class_count + b.class_count
    fa = np.zeros((len(a), da + db))
    fa[:, :da] = a.features
    fb = np.zeros((len(b), da + db))
    fb[:, da:] = b.features
    names = tuple(a.class_names or range(a.class_count)) + tuple(b.class_names or range(b.class_count))
    return (Dataset(fa, a.labels, k, name=f"{a.name}+{b.name}", class_names=names),
            Dataset(fb, b.labels + a.class_count, k, name=f"{a.name}+{b.name}", class_names=names))


def synthetic_feature_table(n_classes: int, frames_per_class: int, dimension: int, separation: float,
                            noise: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian class clusters standing in for pre-extracted audio frames.

    Class centres are drawn uniformly on a sphere of radius ``separation / 2``
    so typical centre gaps are about ``separation / sqrt(2)``. Rows are
    grouped by class.
    """
    rng = np.random.default_rng(seed)
    centres = rng.normal(size=(n_classes, dimension))
    centres *= (separation / 2.0) / np.linalg.norm(centres, axis=1, keepdims=True)
    labels = np.repeat(np.arange(n_classes), frames_per_class)
    features = centres[labels] + noise * rng.normal(size=(labels.size, dimension))
    return features, labels
