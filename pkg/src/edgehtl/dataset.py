"""CovType ingestion, class balancing, splitting and per-window streaming."""

from __future__ import annotations

import gzip
import hashlib
import io
import os
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ConfigurationError, DomainError

NUM_FEATURES = 54
NUM_CLASSES = 7
BALANCED_TOTAL = 19229


class DatasetError(DomainError):
    """Domain error: data violates a precondition (labels, classes, sizes)."""


class ParseError(DatasetError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass
class Dataset:
    """Feature matrix ``X`` (n x d) with 0-based labels ``y`` in ``[0, num_classes)``."""

    X: np.ndarray
    y: np.ndarray
    num_classes: int = NUM_CLASSES

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2:
            self.X = self.X.reshape(len(self.y), -1)
        if len(self.X) != len(self.y):
            raise DatasetError("features and labels differ in length")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= self.num_classes):
            raise DatasetError("label out of range")

    def __len__(self) -> int:
        return len(self.y)

    @property
    def feature_dim(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.X[idx], self.y[idx], self.num_classes)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.num_classes)

    @classmethod
    def empty(cls, feature_dim: int, num_classes: int = NUM_CLASSES) -> "Dataset":
        return cls(np.empty((0, feature_dim)), np.empty(0, dtype=np.int64), num_classes)

    @classmethod
    def concat(cls, parts: list["Dataset"]) -> "Dataset":
        if not parts:
            raise DatasetError("nothing to concatenate")
        return cls(
            np.concatenate([p.X for p in parts]),
            np.concatenate([p.y for p in parts]),
            parts[0].num_classes,
        )


@dataclass
class StandardizationStats:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, d: Dataset) -> Dataset:
        safe = np.where(self.std > 0, self.std, 1.0)
        Z = (d.X - self.mean) / safe
        Z[:, self.std == 0] = 0.0
        return Dataset(Z, d.y.copy(), d.num_classes)


def _open_text(path: Path):
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="ascii")
    return open(path, encoding="ascii")


def load_covtype(path: str | os.PathLike, num_features: int = NUM_FEATURES) -> Dataset:
    """Parse the UCI Covertype CSV (optionally gzipped).

    Each line holds ``num_features`` integer features followed by a label in
    1..7; labels are remapped to 0..6.
    """
    path = Path(path)
    width = num_features + 1
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)  # empty file
            arr = np.loadtxt(path, delimiter=",", dtype=np.int64, ndmin=2)
    except ValueError:
        arr = None  # rescan below to report the offending line
    else:
        if arr.size == 0:
            return Dataset.empty(num_features)
        if arr.shape[1] == width and arr[:, -1].min() >= 1 and arr[:, -1].max() <= NUM_CLASSES:
            return Dataset(arr[:, :-1].astype(np.float64), arr[:, -1] - 1)
    rows = []
    with _open_text(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != width:
                raise ParseError(lineno, f"expected {width} fields, got {len(fields)}")
            try:
                rows.append([int(f) for f in fields])
            except ValueError:
                raise ParseError(lineno, "non-integer field") from None
            label = rows[-1][-1]
            if not 1 <= label <= NUM_CLASSES:
                raise DatasetError(f"line {lineno}: label {label} outside 1..{NUM_CLASSES}")
    if not rows:
        return Dataset.empty(num_features)
    arr = np.asarray(rows, dtype=np.int64)
    return Dataset(arr[:, :-1].astype(np.float64), arr[:, -1] - 1)


def write_covtype(d: Dataset, fh) -> None:
    """Inverse of :func:`load_covtype` for integer-valued feature matrices."""
    for x, label in zip(d.X, d.y):
        fh.write(",".join(str(int(v)) for v in x) + f",{int(label) + 1}\n")


def balance_classes(
    d: Dataset,
    rng: np.random.Generator,
    total: int = BALANCED_TOTAL,
    per_class: int | None = None,
) -> Dataset:
    """Subsample every class to the same size and shuffle.

    The per-class size is the smallest class count, capped at
    ``total // num_classes`` (2747 for CovType, 19229 points overall).
    """
    counts = d.class_counts()
    missing = np.flatnonzero(counts == 0)
    if len(missing):
        raise DatasetError(f"classes absent from input: {missing.tolist()}")
    if per_class is None:
        per_class = int(min(counts.min(), total // d.num_classes))
    if per_class > counts.min():
        raise DatasetError(f"class too small for per-class target {per_class}")
    keep = [
        rng.choice(np.flatnonzero(d.y == c), size=per_class, replace=False)
        for c in range(d.num_classes)
    ]
    idx = np.concatenate(keep)
    return d.subset(rng.permutation(idx))


def split(d: Dataset, train_fraction: float, rng: np.random.Generator) -> tuple[Dataset, Dataset]:
    """Stratified train/test split; each class is split at ``round(frac * n_c)``."""
    if not 0 < train_fraction < 1:
        raise DatasetError("train_fraction must be in (0, 1)")
    train_idx, test_idx = [], []
    for c in range(d.num_classes):
        members = rng.permutation(np.flatnonzero(d.y == c))
        k = int(round(train_fraction * len(members)))
        train_idx.append(members[:k])
        test_idx.append(members[k:])
    tr = rng.permutation(np.concatenate(train_idx))
    te = rng.permutation(np.concatenate(test_idx))
    return d.subset(tr), d.subset(te)


def standardize(train: Dataset, test: Dataset) -> tuple[Dataset, Dataset, StandardizationStats]:
    if len(train) == 0:
        raise DatasetError("cannot standardize with an empty training set")
    stats = StandardizationStats(train.X.mean(axis=0), train.X.std(axis=0))
    return stats.apply(train), stats.apply(test), stats


def window_stream(
    train: Dataset, obs_per_window: int, windows: int, rng: np.random.Generator
) -> Iterator[Dataset]:
    """Yield ``windows`` disjoint batches drawn without replacement from ``train``."""
    need = obs_per_window * windows
    if need > len(train):
        raise ConfigurationError(
            f"{windows} windows x {obs_per_window} observations exceed the {len(train)} training points"
        )
    order = rng.permutation(len(train))[:need]
    for w in range(windows):
        yield train.subset(order[w * obs_per_window:(w + 1) * obs_per_window])


def synthetic_covtype(
    n: int = 24000,
    rng: np.random.Generator | None = None,
    num_features: int = NUM_FEATURES,
    num_classes: int = NUM_CLASSES,
    separation: float = 0.35,
) -> Dataset:
    """Gaussian-mixture stand-in with the CovType shape (54 features, 7 classes).

    Only for demos and for checks that depend on counts rather than on the
    feature values; it says nothing about accuracy on the real data.
    """
    rng = rng or np.random.default_rng(0)
    centers = rng.normal(scale=separation, size=(num_classes, num_features))
    y = rng.integers(num_classes, size=n)
    X = centers[y] + rng.normal(size=(n, num_features))
    # Integer-valued so the CSV round trip through load_covtype is lossless.
    X = np.round(X * 100)
    return Dataset(X, y, num_classes)


@dataclass
class PreparedData:
    train: Dataset
    test: Dataset
    stats: StandardizationStats


def prepare(
    source: Dataset,
    seed: int,
    train_fraction: float = 0.8,
    total: int = BALANCED_TOTAL,
) -> PreparedData:
    """Balance, split and standardize ``source`` with a generator seeded by ``seed``."""
    rng = np.random.default_rng(seed)
    balanced = balance_classes(source, rng, total=total)
    train, test = split(balanced, train_fraction, rng)
    train, test, stats = standardize(train, test)
    return PreparedData(train, test, stats)


def prepare_cached(
    path: str | os.PathLike,
    seed: int,
    cache_dir: str | os.PathLike | None = None,
    train_fraction: float = 0.8,
    total: int = BALANCED_TOTAL,
) -> PreparedData:
    """:func:`prepare` on a CovType file, memoized as an ``.npz`` snapshot per seed."""
    path = Path(path)
    cache_file = None
    if cache_dir is not None:
        key = hashlib.sha1(
            f"{path.resolve()}|{path.stat().st_size}|{seed}|{train_fraction}|{total}".encode()
        ).hexdigest()[:16]
        cache_file = Path(cache_dir) / f"covtype-{key}.npz"
        if cache_file.exists():
            z = np.load(cache_file)
            return PreparedData(
                Dataset(z["Xtr"], z["ytr"]),
                Dataset(z["Xte"], z["yte"]),
                StandardizationStats(z["mean"], z["std"]),
            )
    prepared = prepare(load_covtype(path), seed, train_fraction, total)
    if cache_file is not None:
        cache_file.parent.mkdir(parents=True, exist_ok=True)
        np.savez(
            cache_file,
            Xtr=prepared.train.X, ytr=prepared.train.y,
            Xte=prepared.test.X, yte=prepared.test.y,
            mean=prepared.stats.mean, std=prepared.stats.std,
        )
    return prepared
