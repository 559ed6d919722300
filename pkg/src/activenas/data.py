"""Dataset loading, synthetic generation, and pool construction.

Labels live behind an OracleView once a pool is built: the loop pays for a
label by querying the oracle, and reading an unrevealed label is an error.
That contract is what lets the tests prove no label leaks into querying.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

DEFAULT_TEST_FRACTION = 0.25


@dataclass
class Dataset:
    """Feature matrix plus dense integer labels.

    features is (n, d) for the dense family; image data loads as
    (n, H, W, C) and must be flattened before reaching a dense model.
    label_map records any remapping applied at load time
    (original label -> dense id).
    """

    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    name: str = "dataset"
    label_map: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.shape[0] < 1:
            raise DataError("dataset must contain at least one sample")
        if self.labels.shape != (self.features.shape[0],):
            raise DataError(
                f"labels shape {self.labels.shape} does not match "
                f"{self.features.shape[0]} samples"
            )
        if not np.all(np.isfinite(self.features)):
            raise DataError("features contain non-finite values")
        if self.labels.size and (
            self.labels.min() < 0 or self.labels.max() >= self.n_classes
        ):
            raise DataError(
                f"labels must lie in [0, {self.n_classes}), "
                f"got range [{self.labels.min()}, {self.labels.max()}]"
            )

    @property
    def n(self) -> int:
        return self.features.shape[0]

    def flattened(self) -> "Dataset":
        """Copy with features reshaped to (n, d); no-op for 2-D data."""
        if self.features.ndim == 2:
            return self
        flat = self.features.reshape(self.n, -1)
        return Dataset(flat, self.labels, self.n_classes, self.name, dict(self.label_map))

    def subset(self, indices, name=None) -> "Dataset":
        idx = np.asarray(indices)
        return Dataset(
            self.features[idx],
            self.labels[idx],
            self.n_classes,
            name or self.name,
            dict(self.label_map),
        )


class OracleView:
    """Label gate over a dataset: labels are readable only once queried.

    query() reveals (and returns) labels, charging the budget ledger once
    per distinct index.  read() returns labels for already-revealed indices
    and raises on anything else, which is how leakage shows up as a fault.
    """

    def __init__(self, dataset: Dataset):
        self.dataset = dataset
        self._revealed = set()

    @property
    def revealed(self) -> frozenset:
        return frozenset(self._revealed)

    @property
    def n_revealed(self) -> int:
        return len(self._revealed)

    def _check_range(self, idx: np.ndarray):
        if idx.size and (idx.min() < 0 or idx.max() >= self.dataset.n):
            raise DataError(f"oracle index out of range for pool of {self.dataset.n}")

    def query(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64).ravel()
        self._check_range(idx)
        self._revealed.update(idx.tolist())
        return self.dataset.labels[idx].copy()

    def read(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.int64).ravel()
        self._check_range(idx)
        missing = [i for i in idx.tolist() if i not in self._revealed]
        if missing:
            raise DataError(
                f"label read before reveal at indices {sorted(set(missing))[:8]}"
            )
        return self.dataset.labels[idx].copy()


def load_csv(path) -> Dataset:
    """Read a headered CSV with a `label` column; remap labels densely."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = rows[0]
    if "label" not in header:
        raise DataError(f"{path}: no column named 'label'")
    label_col = header.index("label")
    width = len(header)
    feats, raw_labels = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise DataError(f"{path}:{lineno}: expected {width} columns, got {len(row)}")
        try:
            raw_labels.append(int(row[label_col]))
            feats.append(
                [float(v) for c, v in enumerate(row) if c != label_col]
            )
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    if not feats:
        raise DataError(f"{path}: header but no data rows")
    raw = np.array(raw_labels)
    uniq = np.unique(raw)
    label_map = {int(orig): dense for dense, orig in enumerate(uniq.tolist())}
    labels = np.array([label_map[int(v)] for v in raw_labels])
    return Dataset(np.array(feats), labels, len(uniq), name=str(path), label_map=label_map)


def _read_exact(fh, count, what):
    buf = fh.read(count)
    if len(buf) != count:
        raise DataError(f"truncated file while reading {what}")
    return buf


def load_idx(images_path, labels_path) -> Dataset:
    """Read an IDX image/label pair; pixels scaled to [0, 1]."""
    with open(images_path, "rb") as fh:
        magic, n, h, w = struct.unpack(">IIII", _read_exact(fh, 16, "image header"))
        if magic != IDX_IMAGES_MAGIC:
            raise DataError(f"{images_path}: bad image magic 0x{magic:08x}")
        raw = _read_exact(fh, n * h * w, "image data")
    images = np.frombuffer(raw, dtype=np.uint8).reshape(n, h, w, 1)
    with open(labels_path, "rb") as fh:
        magic, n_labels = struct.unpack(">II", _read_exact(fh, 8, "label header"))
        if magic != IDX_LABELS_MAGIC:
            raise DataError(f"{labels_path}: bad label magic 0x{magic:08x}")
        labels = np.frombuffer(_read_exact(fh, n_labels, "label data"), dtype=np.uint8)
    if n != n_labels:
        raise DataError(f"image count {n} != label count {n_labels}")
    features = images.astype(np.float32) / 255.0
    n_classes = int(labels.max()) + 1 if labels.size else 1
    return Dataset(features, labels.astype(np.int64), n_classes, name=str(images_path))


def save_idx(images_u8, labels_u8, images_path, labels_path):
    """Write uint8 images (n, H, W) or (n, H, W, 1) and labels as an IDX pair."""
    images = np.asarray(images_u8, dtype=np.uint8)
    labels = np.asarray(labels_u8, dtype=np.uint8)
    if images.ndim == 4 and images.shape[3] == 1:
        images = images[..., 0]
    if images.ndim != 3:
        raise DataError(f"expected (n, H, W) images, got shape {images.shape}")
    if labels.shape != (images.shape[0],):
        raise DataError("label count does not match image count")
    n, h, w = images.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, h, w))
        fh.write(images.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        fh.write(labels.tobytes())


def synth_blobs(n_classes, dim, n_per_class, spread, seed) -> Dataset:
    """Isotropic Gaussian blobs around seeded random class centers."""
    if min(n_classes, dim, n_per_class) < 1 or spread < 0:
        raise DataError("blob parameters must be positive (spread may be 0)")
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, 1.0, size=(n_classes, dim))
    n = n_classes * n_per_class
    labels = np.repeat(np.arange(n_classes), n_per_class)
    points = centers[labels] + spread * rng.normal(size=(n, dim))
    order = rng.permutation(n)
    return Dataset(
        points[order],
        labels[order],
        n_classes,
        name=f"blobs{n_classes}x{n_per_class}d{dim}",
    )


def stratified_split(labels, second_count, seed) -> tuple[np.ndarray, np.ndarray]:
    """Split positions 0..n-1 into (first, second) with |second| = second_count,
    class proportions preserved by largest-remainder apportionment, and at
    least one sample per class on each side.  Raises DataError when that is
    not satisfiable."""
    labels = np.asarray(labels)
    n = labels.size
    if not 0 < second_count < n:
        raise DataError(f"cannot carve {second_count} of {n} samples")
    classes, counts = np.unique(labels, return_counts=True)
    quotas = second_count * counts / n
    takes = np.floor(quotas).astype(np.int64)
    remainder = second_count - int(takes.sum())
    if remainder:
        frac_order = np.lexsort((np.arange(classes.size), -(quotas - takes)))
        takes[frac_order[:remainder]] += 1
    bad = (takes < 1) | (takes > counts - 1)
    if np.any(bad):
        raise DataError(
            f"infeasible stratification: class(es) {classes[bad].tolist()} "
            f"cannot give {takes[bad].tolist()} of {counts[bad].tolist()} samples"
        )
    rng = np.random.default_rng(seed)
    first, second = [], []
    for cls, take in zip(classes, takes):
        pos = np.flatnonzero(labels == cls)
        perm = rng.permutation(pos.size)
        second.append(pos[perm[:take]])
        first.append(pos[perm[take:]])
    return np.sort(np.concatenate(first)), np.sort(np.concatenate(second))


def make_pool(dataset: Dataset, seed, test_fraction=DEFAULT_TEST_FRACTION):
    """Carve a stratified test split, then wrap the remainder as an
    all-unlabeled pool behind an oracle.  Returns (PoolState, OracleView,
    test Dataset)."""
    from .loop import PoolState

    data = dataset.flattened()
    test_count = int(round(test_fraction * data.n))
    pool_pos, test_pos = stratified_split(data.labels, test_count, seed)
    pool = data.subset(pool_pos, name=f"{data.name}/pool")
    test = data.subset(test_pos, name=f"{data.name}/test")
    state = PoolState(
        dataset=pool,
        labeled_idx=np.empty(0, dtype=np.int64),
        unlabeled_idx=np.arange(pool.n, dtype=np.int64),
        round=0,
    )
    return state, OracleView(pool), test
