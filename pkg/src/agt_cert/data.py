"""Datasets, loaders, and preprocessing for the experiment harness.

Everything is deterministic given a seed, and every normalization stores
its scalers so predictions can be mapped back to original units.
"""

from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass, field

import numpy as np


class DatasetError(ValueError):
    """Raised for malformed files or inconsistent dataset contents."""


@dataclass
class MinMaxScaler:
    """Per-column map x -> (x - lo) / (hi - lo), constant columns -> 0."""

    lo: np.ndarray
    span: np.ndarray

    @classmethod
    def fit(cls, values: np.ndarray) -> "MinMaxScaler":
        lo = values.min(axis=0)
        span = values.max(axis=0) - lo
        return cls(lo=lo, span=span)

    def transform(self, values: np.ndarray) -> np.ndarray:
        safe = np.where(self.span == 0, 1.0, self.span)
        out = (values - self.lo) / safe
        return np.where(self.span == 0, 0.0, out)

    def inverse(self, values: np.ndarray) -> np.ndarray:
        return values * self.span + self.lo


@dataclass
class Dataset:
    """Features, labels, and the per-row poisonable mask.

    labels are an integer vector (classification) or a float matrix
    (regression); the mask marks rows the adversary may touch.
    """

    X: np.ndarray
    y: np.ndarray
    poisonable: np.ndarray = None
    feature_scaler: MinMaxScaler | None = None
    label_scaler: MinMaxScaler | None = None
    name: str = ""

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise DatasetError("features must be a 2-D matrix")
        if not np.all(np.isfinite(self.X)):
            raise DatasetError("features must be finite")
        self.y = np.asarray(self.y)
        if self.y.shape[0] != self.X.shape[0]:
            raise DatasetError("feature and label row counts differ")
        if self.poisonable is None:
            self.poisonable = np.ones(self.X.shape[0], dtype=bool)
        else:
            self.poisonable = np.asarray(self.poisonable, dtype=bool)
            if self.poisonable.shape != (self.X.shape[0],):
                raise DatasetError("poisonable mask length mismatch")

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def is_classification(self) -> bool:
        return np.issubdtype(self.y.dtype, np.integer)

    @property
    def n_classes(self) -> int:
        if not self.is_classification:
            raise DatasetError("n_classes undefined for regression labels")
        return int(self.y.max()) + 1

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], self.poisonable[idx],
                       self.feature_scaler, self.label_scaler, self.name)

    def split(self, test_fraction: float, seed: int):
        """Seeded shuffle split into (train, test)."""
        if not 0.0 < test_fraction < 1.0:
            raise DatasetError("test_fraction must be in (0, 1)")
        rng = np.random.default_rng(seed)
        perm = rng.permutation(self.n_samples)
        n_test = max(1, int(round(test_fraction * self.n_samples)))
        return self.subset(perm[n_test:]), self.subset(perm[:n_test])


def gen_halfmoons(n: int, noise: float, seed: int) -> Dataset:
    """Two interleaved half circles: class 0 on the upper unit arc around
    the origin, class 1 on the lower arc around (1, 0.5)."""
    if n < 2:
        raise DatasetError("need at least 2 samples")
    if noise < 0:
        raise DatasetError("noise must be nonnegative")
    rng = np.random.default_rng(seed)
    n0 = n // 2
    n1 = n - n0
    t0 = rng.uniform(0.0, np.pi, size=n0)
    t1 = rng.uniform(0.0, np.pi, size=n1)
    pts0 = np.stack([np.cos(t0), np.sin(t0)], axis=1)
    pts1 = np.stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)], axis=1)
    X = np.concatenate([pts0, pts1])
    if noise > 0:
        X = X + rng.normal(scale=noise, size=X.shape)
    y = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    perm = rng.permutation(n)
    return Dataset(X[perm], y[perm], name="halfmoons")


HALFMOON_CENTERS = (np.array([0.0, 0.0]), np.array([1.0, 0.5]))


def load_csv_regression(path, label_columns, normalize: bool = True,
                        max_rows: int | None = None) -> Dataset:
    """Numeric CSV with a header row; label_columns name the targets.

    Rejects ragged rows and non-numeric cells with row/column diagnostics.
    Features and labels are min-max normalized to [0, 1] with the scalers
    stored on the dataset.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        rows = []
        for r, row in enumerate(reader):
            if max_rows is not None and len(rows) >= max_rows:
                break
            if len(row) != len(header):
                raise DatasetError(
                    f"{path}: row {r + 2} has {len(row)} cells, expected {len(header)}")
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                bad = next(i for i, cell in enumerate(row)
                           if not _is_number(cell))
                raise DatasetError(
                    f"{path}: non-numeric cell at row {r + 2}, column "
                    f"{header[bad]!r}") from None
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    label_idx = []
    for name in label_columns:
        if name not in header:
            raise DatasetError(f"{path}: no column named {name!r}")
        label_idx.append(header.index(name))
    data = np.asarray(rows, dtype=np.float64)
    feat_idx = [i for i in range(len(header)) if i not in label_idx]
    X = data[:, feat_idx]
    Y = data[:, label_idx]
    fs = ls = None
    if normalize:
        fs = MinMaxScaler.fit(X)
        ls = MinMaxScaler.fit(Y)
        X = fs.transform(X)
        Y = ls.transform(Y)
    return Dataset(X, Y, feature_scaler=fs, label_scaler=ls, name="csv")


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def _open_maybe_gzip(path, mode="rb"):
    path = str(path)
    if path.endswith(".gz"):
        return gzip.open(path, mode)
    return open(path, mode)


def load_idx_images(images_path, labels_path) -> Dataset:
    """IDX image/label container pair: big-endian magic + dims + raw bytes.

    Pixels are scaled to [0, 1]; labels load as integers.  Bad magic or a
    truncated payload is rejected with the failing byte offset.
    """
    with _open_maybe_gzip(images_path) as fh:
        head = fh.read(16)
        if len(head) < 16:
            raise DatasetError(f"{images_path}: truncated header at offset {len(head)}")
        magic, count, rows, cols = struct.unpack(">IIII", head)
        if magic != IDX_IMAGES_MAGIC:
            raise DatasetError(
                f"{images_path}: bad magic 0x{magic:08x} at offset 0, "
                f"expected 0x{IDX_IMAGES_MAGIC:08x}")
        payload = fh.read(count * rows * cols)
        if len(payload) != count * rows * cols:
            raise DatasetError(
                f"{images_path}: truncated pixel data at offset {16 + len(payload)}")
        images = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows * cols)
    with _open_maybe_gzip(labels_path) as fh:
        head = fh.read(8)
        if len(head) < 8:
            raise DatasetError(f"{labels_path}: truncated header at offset {len(head)}")
        magic, n_labels = struct.unpack(">II", head)
        if magic != IDX_LABELS_MAGIC:
            raise DatasetError(
                f"{labels_path}: bad magic 0x{magic:08x} at offset 0, "
                f"expected 0x{IDX_LABELS_MAGIC:08x}")
        payload = fh.read(n_labels)
        if len(payload) != n_labels:
            raise DatasetError(
                f"{labels_path}: truncated labels at offset {8 + len(payload)}")
        labels = np.frombuffer(payload, dtype=np.uint8).astype(np.int64)
    if count != n_labels:
        raise DatasetError(
            f"image count {count} does not match label count {n_labels}")
    return Dataset(images.astype(np.float64) / 255.0, labels, name="idx")


def save_idx_images(images_path, labels_path, images: np.ndarray,
                    labels: np.ndarray, rows: int, cols: int) -> None:
    """Write an IDX pair; images are uint8 (count, rows*cols)."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    if images.shape[0] != labels.shape[0]:
        raise DatasetError("image and label counts differ")
    if images.shape[1] != rows * cols:
        raise DatasetError(f"image payload is not {rows}x{cols}")
    with _open_maybe_gzip(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, images.shape[0], rows, cols))
        fh.write(images.tobytes())
    with _open_maybe_gzip(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]))
        fh.write(labels.tobytes())


@dataclass
class PcaProjection:
    mean: np.ndarray
    components: np.ndarray        # (k, n_features), rows orthonormal
    explained_variance: np.ndarray

    def project(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) @ self.components.T

    def reconstruct(self, Z: np.ndarray) -> np.ndarray:
        return Z @ self.components + self.mean


def pca_fit(X: np.ndarray, k: int) -> PcaProjection:
    """Top-k principal components via eigendecomposition of the covariance."""
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if not 1 <= k <= min(n, d):
        raise DatasetError(f"k={k} out of range for {n}x{d} data")
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / max(n - 1, 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:k]
    return PcaProjection(mean=mean, components=eigvecs[:, order].T.copy(),
                         explained_variance=eigvals[order].copy())


def pca_project(dataset: Dataset, k: int):
    """Fit on the dataset's features and return (projection, projected)."""
    proj = pca_fit(dataset.X, k)
    return proj, Dataset(proj.project(dataset.X), dataset.y, dataset.poisonable,
                         name=f"{dataset.name}-pca{k}")


def gen_synthetic_digits(n: int, seed: int, image_size: int = 28,
                         n_classes: int = 10) -> Dataset:
    """Digit-recognition stand-in: each class is a fixed random blob
    template, samples are shifted and noised copies, uint8 pixel range.

    Shapes and value ranges match the classic 28x28 grayscale digit sets
    so the IDX plumbing and PCA pipeline are exercised unmodified.
    """
    rng = np.random.default_rng(seed)
    side = image_size
    templates = []
    for _ in range(n_classes):
        base = np.zeros((side, side))
        for _ in range(6):
            r, c = rng.integers(4, side - 4, size=2)
            h, w = rng.integers(3, 8, size=2)
            base[r - h // 2:r + h // 2 + 1, c - w // 2:c + w // 2 + 1] = rng.uniform(0.6, 1.0)
        templates.append(base)
    labels = rng.integers(0, n_classes, size=n)
    images = np.zeros((n, side * side), dtype=np.uint8)
    for i, lab in enumerate(labels):
        img = templates[lab]
        dr, dc = rng.integers(-2, 3, size=2)
        img = np.roll(np.roll(img, dr, axis=0), dc, axis=1)
        img = img + rng.normal(scale=0.08, size=img.shape)
        images[i] = (np.clip(img, 0.0, 1.0) * 255).astype(np.uint8).ravel()
    return Dataset(images.astype(np.float64) / 255.0, labels.astype(np.int64),
                   name="synthetic-digits")


def make_interleaved_batches(poisonable: np.ndarray, batch_size: int,
                             ratio: float, epochs: int, seed: int) -> list:
    """Explicit batch schedule giving every batch a fixed share of
    poisonable rows (fine-tuning mixes: `ratio` of each batch comes from
    the poisonable pool).  Pools are reshuffled each epoch; batches stop
    when either pool runs dry, mirroring dropped trailing batches.
    """
    if not 0.0 <= ratio <= 1.0:
        raise DatasetError("ratio must be within [0, 1]")
    poisonable = np.asarray(poisonable, dtype=bool)
    rng = np.random.default_rng(seed)
    k = int(round(ratio * batch_size))
    batches = []
    for _ in range(epochs):
        pois = rng.permutation(np.flatnonzero(poisonable))
        clean = rng.permutation(np.flatnonzero(~poisonable))
        p = c = 0
        while p + k <= len(pois) and c + (batch_size - k) <= len(clean):
            batch = np.concatenate([pois[p:p + k], clean[c:c + (batch_size - k)]])
            batches.append(rng.permutation(batch))
            p += k
            c += batch_size - k
    if not batches:
        raise DatasetError("pools too small for even one mixed batch")
    return batches
