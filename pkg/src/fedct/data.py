"""Datasets, splits and client partitioning.

Labels are always contiguous integers ``0..C-1``.  Label vectors shared in
the protocol use :data:`ABSTAIN` (``-1``) for entries without a consensus.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ABSTAIN = -1


class DataError(ValueError):
    """Raised for malformed datasets or impossible splits."""


class MissingFileError(DataError, FileNotFoundError):
    pass


class NonNumericFeatureError(DataError):
    pass


class EmptyDatasetError(DataError):
    pass


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    label_names: tuple = field(default=())

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if X.ndim != 2:
            raise DataError("features must be a 2-d matrix")
        if y.ndim != 1 or len(y) != len(X):
            raise DataError("labels length must equal the feature row count")
        if self.num_classes < 2:
            raise DataError("num_classes must be at least 2")
        if len(y) and (y.min() < 0 or y.max() >= self.num_classes):
            raise DataError("labels must lie in [0, num_classes)")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> LabeledDataset:
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(self.features[idx], self.labels[idx], self.num_classes, self.label_names)

    def concat(self, other: LabeledDataset) -> LabeledDataset:
        if other.num_classes != self.num_classes:
            raise DataError("cannot concatenate datasets with different class counts")
        return LabeledDataset(
            np.vstack([self.features, other.features]),
            np.concatenate([self.labels, other.labels]),
            self.num_classes,
            self.label_names,
        )


@dataclass(frozen=True, eq=False)
class UnlabeledDataset:
    """Shared unlabeled pool.

    ``hidden_truth`` is kept for evaluation only; protocol code reads
    ``features`` and never touches it.
    """

    features: np.ndarray
    hidden_truth: np.ndarray | None = None
    num_classes: int | None = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        if X.ndim != 2:
            raise DataError("features must be a 2-d matrix")
        X.setflags(write=False)
        object.__setattr__(self, "features", X)
        if self.hidden_truth is not None:
            h = np.asarray(self.hidden_truth, dtype=np.int64)
            if h.shape != (len(X),):
                raise DataError("hidden_truth must have one entry per row")
            if len(h) and h.min() < 0:
                raise DataError("hidden_truth entries must be non-negative")
            if self.num_classes is not None and len(h) and h.max() >= self.num_classes:
                raise DataError("hidden_truth entries must lie in [0, C)")
            h.setflags(write=False)
            object.__setattr__(self, "hidden_truth", h)

    def __len__(self):
        return self.features.shape[0]


@dataclass(frozen=True)
class PartitionSpec:
    m: int
    scheme: str = "iid"
    alpha1: float | None = None
    alpha2: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise DataError("m must be at least 1")
        if self.scheme not in ("iid", "dirichlet"):
            raise DataError(f"unknown partition scheme {self.scheme!r}")
        if self.scheme == "dirichlet":
            if self.alpha1 is None or self.alpha2 is None or self.alpha1 <= 0 or self.alpha2 <= 0:
                raise DataError("dirichlet partition needs alpha1 > 0 and alpha2 > 0")


def load_csv(path, label_column: str) -> LabeledDataset:
    """Read a headered CSV; labels are re-encoded by order of first appearance."""
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDatasetError(f"{path} is empty") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise DataError(f"label column not found: {label_column!r}")
        li = header.index(label_column)
        rows, raw_labels = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataError(f"line {lineno}: expected {len(header)} fields, got {len(rec)}")
            feats = []
            for j, cell in enumerate(rec):
                if j == li:
                    continue
                try:
                    feats.append(float(cell))
                except ValueError:
                    raise NonNumericFeatureError(
                        f"line {lineno}, column {header[j]!r}: non-numeric value {cell!r}"
                    ) from None
            rows.append(feats)
            raw_labels.append(rec[li].strip())
    if not rows:
        raise EmptyDatasetError(f"{path} contains no data rows")
    mapping: dict[str, int] = {}
    for lab in raw_labels:
        mapping.setdefault(lab, len(mapping))
    labels = np.array([mapping[lab] for lab in raw_labels], dtype=np.int64)
    return LabeledDataset(
        np.array(rows, dtype=np.float64).reshape(len(rows), len(header) - 1),
        labels,
        max(2, len(mapping)),
        tuple(mapping),
    )


def largest_remainder(n: int, fractions) -> list[int]:
    """Apportion ``n`` items by ``fractions``; the counts sum to exactly ``n``.

    Leftover items go to the largest fractional remainders, earlier entries
    first on equal remainders.
    """
    quotas = [n * f for f in fractions]
    counts = [math.floor(q) for q in quotas]
    rest = n - sum(counts)
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:rest]:
        counts[i] += 1
    return counts


def split_indices(n: int, fractions, seed) -> list[np.ndarray]:
    sizes = largest_remainder(n, fractions)
    perm = np.random.default_rng(seed).permutation(n)
    out, start = [], 0
    for s in sizes:
        out.append(np.sort(perm[start:start + s]))
        start += s
    return out


def split_train_test_unlabeled(ds: LabeledDataset, train_frac: float, test_frac: float,
                               unlabeled_frac: float, seed):
    fr = (train_frac, test_frac, unlabeled_frac)
    if any(f <= 0 for f in fr):
        raise DataError("split fractions must be positive")
    if abs(sum(fr) - 1.0) > 1e-9:
        raise DataError(f"split fractions must sum to 1, got {sum(fr)!r}")
    tr, te, un = split_indices(len(ds), fr, seed)
    if min(len(tr), len(te), len(un)) == 0:
        raise DataError("a split came out empty; dataset too small for these fractions")
    unlabeled = UnlabeledDataset(ds.features[un], ds.labels[un], ds.num_classes)
    return ds.subset(tr), ds.subset(te), unlabeled


def partition_iid_indices(n: int, m: int, seed) -> list[np.ndarray]:
    if m < 1:
        raise DataError("m must be at least 1")
    if n < m:
        raise DataError(f"cannot partition {n} examples among {m} clients")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, m)]


def partition_iid(train: LabeledDataset, m: int, seed) -> list[LabeledDataset]:
    return [train.subset(ix) for ix in partition_iid_indices(len(train), m, seed)]


def _log_dirichlet(rng, alpha: float, k: int) -> np.ndarray:
    """Log of a Dirichlet(alpha * 1_k) draw, via G(a) = G(a+1) * U**(1/a)."""
    g = np.log(rng.standard_gamma(alpha + 1.0, size=k)) + np.log1p(-rng.random(k)) / alpha
    top = g.max()
    return g - (top + np.log(np.exp(g - top).sum()))


def partition_dirichlet_indices(labels, num_classes: int, m: int, alpha1: float, alpha2: float,
                                seed) -> list[np.ndarray]:
    """Label-skewed partition.

    Clients ``0..m//2-1`` draw a class-proportion vector from
    ``Dirichlet(alpha1)``, the remaining clients from ``Dirichlet(alpha2)``.
    Each class pool is then dealt out, without replacement, in proportion to
    the clients' weights for that class.
    """
    if m < 1:
        raise DataError("m must be at least 1")
    if alpha1 <= 0 or alpha2 <= 0:
        raise DataError("Dirichlet concentrations must be positive")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    half = m // 2
    alphas = [alpha1] * half + [alpha2] * (m - half)
    # log-space draws: tiny concentrations underflow plain gamma samples to 0
    logw = np.stack([_log_dirichlet(rng, a, num_classes) for a in alphas])
    buckets: list[list[np.ndarray]] = [[] for _ in range(m)]
    for c in range(num_classes):
        pool = np.flatnonzero(labels == c)
        if len(pool) == 0:
            continue
        pool = rng.permutation(pool)
        col = np.exp(logw[:, c] - logw[:, c].max())
        counts = largest_remainder(len(pool), col / col.sum())
        start = 0
        for i, k in enumerate(counts):
            buckets[i].append(pool[start:start + k])
            start += k
        if start != len(pool):
            raise DataError(f"class {c}: {len(pool) - start} examples left unassigned")
    return [np.sort(np.concatenate(b)) if b else np.empty(0, dtype=np.int64) for b in buckets]


def partition_dirichlet(train: LabeledDataset, m: int, alpha1: float, alpha2: float,
                        seed) -> list[LabeledDataset]:
    parts = partition_dirichlet_indices(train.labels, train.num_classes, m, alpha1, alpha2, seed)
    return [train.subset(ix) for ix in parts]


def partition(train: LabeledDataset, spec: PartitionSpec) -> list[LabeledDataset]:
    if spec.scheme == "iid":
        return partition_iid(train, spec.m, spec.seed)
    return partition_dirichlet(train, spec.m, spec.alpha1, spec.alpha2, spec.seed)


def make_blobs(n: int, d: int, C: int, separation: float, seed, scale: float = 1.0) -> LabeledDataset:
    """Isotropic Gaussian clusters with unit-variance noise (times ``scale``).

    Class ``c`` is centred at ``separation * e_{c mod d}``, pushed out by a
    further ``separation`` for every wrap past ``d`` so means stay distinct
    when ``C > d``; class 0 sits at the origin.
    """
    if n < C:
        raise DataError("need at least one point per class")
    if separation <= 0:
        raise DataError("separation must be positive")
    if C < 2 or d < 1:
        raise DataError("need C >= 2 and d >= 1")
    means = np.zeros((C, d))
    for c in range(1, C):
        k = c - 1
        means[c, k % d] = separation * (1 + k // d)
    labels = np.array([i % C for i in range(n)], dtype=np.int64)
    rng = np.random.default_rng(seed)
    labels = labels[rng.permutation(n)]
    X = means[labels] + scale * rng.standard_normal((n, d))
    return LabeledDataset(X, labels, C)


def one_hot(lv, C: int) -> np.ndarray:
    lv = np.asarray(lv, dtype=np.int64)
    if np.any(lv == ABSTAIN):
        raise DataError("one_hot: input contains ABSTAIN entries; filter them first")
    if len(lv) and (lv.min() < 0 or lv.max() >= C):
        raise DataError("one_hot: labels must lie in [0, C)")
    out = np.zeros((len(lv), C), dtype=np.uint8)
    out[np.arange(len(lv)), lv] = 1
    return out


def decode_one_hot(bits) -> np.ndarray:
    """Row-argmax of a strict one-hot matrix."""
    bits = np.asarray(bits)
    if np.any(bits.sum(axis=1) != 1):
        raise DataError("decode_one_hot expects exactly one set bit per row")
    return bits.argmax(axis=1).astype(np.int64)
