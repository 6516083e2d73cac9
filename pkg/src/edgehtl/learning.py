"""Linear one-vs-rest models: Pegasos base learner, GreedyTL re-training, averaging."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .dataset import Dataset
from .errors import DomainError

_MAGIC = b"HTLMODEL"
_HEADER = struct.Struct("<8sII")


@dataclass
class LinearModel:
    """One-vs-rest linear classifier; ``weights`` is K x (d+1) with the bias last."""

    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape[1] < 1:
            raise DomainError("weights must be a K x (d+1) matrix")
        if not np.all(np.isfinite(self.weights)):
            raise DomainError("model weights must be finite")

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[1] - 1

    @property
    def shape(self) -> tuple[int, int]:
        return self.num_classes, self.feature_dim

    def scores(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.feature_dim:
            raise DomainError(f"expected {self.feature_dim} features, got {X.shape[1]}")
        return X @ self.weights[:, :-1].T + self.weights[:, -1]

    def predict(self, X: np.ndarray) -> np.ndarray:
        # np.argmax keeps the first maximum, i.e. ties go to the lowest class id.
        return np.argmax(self.scores(X), axis=1)

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(_MAGIC, self.num_classes, self.feature_dim)
        return header + self.weights.astype("<f8").tobytes(order="C")

    @classmethod
    def from_bytes(cls, blob: bytes) -> "LinearModel":
        magic, k, d = _HEADER.unpack_from(blob)
        if magic != _MAGIC:
            raise DomainError("not a serialized LinearModel")
        body = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
        if body.size != k * (d + 1):
            raise DomainError("truncated model payload")
        return cls(body.reshape(k, d + 1).copy())

    @property
    def bits(self) -> int:
        return len(self.to_bytes()) * 8

    @classmethod
    def zeros(cls, num_classes: int, feature_dim: int) -> "LinearModel":
        return cls(np.zeros((num_classes, feature_dim + 1)))


def predict(m: LinearModel, x: np.ndarray) -> int:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != m.feature_dim:
        raise DomainError(f"expected a vector of {m.feature_dim} features")
    return int(m.predict(x[None, :])[0])


@dataclass
class BaseTrainerConfig:
    svm_lambda: float = 1e-4
    epochs: int = 20
    project: bool = True
    average_last_epoch: bool = True

    def __post_init__(self):
        if self.svm_lambda <= 0:
            raise DomainError("svm_lambda must be positive")
        if self.epochs < 1:
            raise DomainError("epochs must be >= 1")


@dataclass
class GreedyTLConfig:
    budget: int | None = None  # None: every atom may be selected
    tl_lambda: float = 1.0
    per_class_sample: int | None = None

    def __post_init__(self):
        if self.budget is not None and self.budget < 0:
            raise DomainError("budget must be >= 0")
        if self.tl_lambda <= 0:
            raise DomainError("tl_lambda must be positive")
        if self.per_class_sample is not None and self.per_class_sample < 1:
            raise DomainError("per_class_sample must be >= 1")


def _ovr_targets(y: np.ndarray, num_classes: int) -> np.ndarray:
    T = -np.ones((len(y), num_classes))
    T[np.arange(len(y)), y] = 1.0
    return T


@njit(cache=True)
def _pegasos_ovr(Xa, T, lam, order, project, avg_from):
    n_cls = T.shape[1]
    p = Xa.shape[1]
    W = np.zeros((n_cls, p))
    W_avg = np.zeros((n_cls, p))
    radius = 1.0 / math.sqrt(lam)
    for t in range(order.shape[0]):
        i = order[t]
        eta = 1.0 / (lam * (t + 1))
        shrink = 1.0 - eta * lam
        for c in range(n_cls):
            margin = 0.0
            for j in range(p):
                margin += W[c, j] * Xa[i, j]
            margin *= T[i, c]
            for j in range(p):
                W[c, j] *= shrink
            if margin < 1.0:
                step = eta * T[i, c]
                for j in range(p):
                    W[c, j] += step * Xa[i, j]
            if project:
                sq = 0.0
                for j in range(p):
                    sq += W[c, j] * W[c, j]
                norm = math.sqrt(sq)
                if norm > radius:
                    f = radius / norm
                    for j in range(p):
                        W[c, j] *= f
        if t >= avg_from:
            W_avg += W
    return W_avg / (order.shape[0] - avg_from)


def train_base(data: Dataset, cfg: BaseTrainerConfig, rng: np.random.Generator) -> LinearModel:
    """One-vs-rest linear SVM trained with Pegasos (step size 1 / (lambda t)).

    Every epoch visits the points in a fresh random order; the bias is the last
    coordinate of the augmented input and is regularized with the rest. With
    ``average_last_epoch`` the returned weights are the mean iterate of the
    final epoch, otherwise the last iterate.
    """
    n = len(data)
    if n == 0:
        raise DomainError("cannot train on an empty dataset")
    K, d = data.num_classes, data.feature_dim
    present = np.flatnonzero(data.class_counts())
    if len(present) == 1:
        W = np.zeros((K, d + 1))
        W[:, -1] = -1.0
        W[present[0], -1] = 1.0
        return LinearModel(W)
    Xa = np.hstack([data.X, np.ones((n, 1))])
    T = _ovr_targets(data.y, K)
    order = np.concatenate([rng.permutation(n) for _ in range(cfg.epochs)])
    avg_from = len(order) - n if cfg.average_last_epoch else len(order) - 1
    return LinearModel(_pegasos_ovr(Xa, T, cfg.svm_lambda, order, cfg.project, avg_from))


def svm_objective(m: LinearModel, data: Dataset, svm_lambda: float) -> float:
    """Sum over classes of lambda/2 ||w_c||^2 + mean hinge loss (bias included in w_c)."""
    T = _ovr_targets(data.y, m.num_classes)
    hinge = np.maximum(0.0, 1.0 - T * m.scores(data.X)).mean(axis=0)
    return float(np.sum(0.5 * svm_lambda * np.sum(m.weights**2, axis=1) + hinge))


def entropy(data: Dataset | np.ndarray, num_classes: int) -> float:
    """Label entropy with logarithm base ``num_classes``; 0 for empty data."""
    if num_classes < 2:
        raise DomainError("entropy needs at least two classes")
    y = data.y if isinstance(data, Dataset) else np.asarray(data, dtype=np.int64)
    if len(y) == 0:
        return 0.0
    p = np.bincount(y, minlength=num_classes) / len(y)
    p = p[p > 0]
    return float(max(0.0, -np.sum(p * np.log(p)) / np.log(num_classes)))


def subsample_per_class(data: Dataset, n: int, rng: np.random.Generator) -> Dataset:
    if n < 1:
        raise DomainError("per-class sample size must be >= 1")
    keep = []
    for c in range(data.num_classes):
        members = np.flatnonzero(data.y == c)
        if len(members) > n:
            members = np.sort(rng.choice(members, size=n, replace=False))
        keep.append(members)
    return data.subset(np.sort(np.concatenate(keep)))


def average_models(models: list[LinearModel]) -> LinearModel:
    if not models:
        raise DomainError("cannot average an empty list of models")
    shape = models[0].weights.shape
    if any(m.weights.shape != shape for m in models):
        raise DomainError("models differ in shape")
    return LinearModel(np.mean(np.stack([m.weights for m in models]), axis=0))


@dataclass
class GreedyPath:
    """Forward-selection trace for one binary (one-vs-rest) problem."""

    selected: list[int]
    coef: np.ndarray
    intercept: float
    risks: list[float] = field(default_factory=list)


@njit(cache=True)
def _greedy_core(G, g, lam, budget, tol):
    # Rows of W hold L^-1 G[S, :] for the Cholesky factor L of G_SS + lam I,
    # so each candidate's risk decrease is updated in O(|S|) per step.
    p = G.shape[0]
    W = np.zeros((budget, p))
    diag = np.empty(budget)
    h = np.empty(budget)
    v = np.empty(p)
    q = np.empty(p)
    for c in range(p):
        v[c] = G[c, c] + lam
        q[c] = g[c]
    available = np.ones(p, dtype=np.bool_)
    selected = np.empty(budget, dtype=np.int64)
    gains = np.empty(budget)
    k = 0
    while k < budget:
        best = -1
        best_gain = tol
        for c in range(p):
            if available[c]:
                gain = q[c] * q[c] / v[c]
                if gain > best_gain:
                    best_gain = gain
                    best = c
        if best < 0:
            break
        root = math.sqrt(v[best])
        for c in range(p):
            acc = G[best, c]
            for m in range(k):
                acc -= W[m, best] * W[m, c]
            W[k, c] = acc / root
        acc = g[best]
        for m in range(k):
            acc -= W[m, best] * h[m]
        h[k] = acc / root
        diag[k] = root
        for c in range(p):
            v[c] -= W[k, c] * W[k, c]
            q[c] -= W[k, c] * h[k]
        available[best] = False
        selected[k] = best
        gains[k] = best_gain
        k += 1
    # back-substitution L^T coef = h
    coef = np.zeros(k)
    for i in range(k - 1, -1, -1):
        acc = h[i]
        for m in range(i + 1, k):
            acc -= W[i, selected[m]] * coef[m]
        coef[i] = acc / diag[i]
    return selected[:k], coef, gains[:k]


def greedy_ridge(A: np.ndarray, t: np.ndarray, lam: float, budget: int) -> GreedyPath:
    """Greedy forward selection minimizing ||t - b - A_S w||^2 + lam ||w||^2.

    The intercept ``b`` is unpenalized (handled by centering). Each step adds
    the atom with the largest risk decrease, lowest index on ties, and stops
    at ``budget`` atoms or when nothing decreases the risk.
    """
    A = np.asarray(A, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    a_mean = A.mean(axis=0)
    t_mean = float(t.mean())
    Ac = A - a_mean
    tc = t - t_mean
    risk = float(tc @ tc)
    selected, coef, gains = _greedy_core(
        Ac.T @ Ac, Ac.T @ tc, float(lam), int(min(budget, A.shape[1])), 1e-12 * max(risk, 1.0)
    )
    risks = [risk]
    for gain in gains:
        risks.append(risks[-1] - float(gain))
    selected = [int(j) for j in selected]
    intercept = t_mean - float(a_mean[selected] @ coef) if selected else t_mean
    return GreedyPath(selected, coef, intercept, risks)


def ridge_risk(A: np.ndarray, t: np.ndarray, lam: float, cols: list[int]) -> float:
    """Optimal centered ridge risk on ``cols`` solved directly (reference for tests)."""
    tc = t - t.mean()
    if not cols:
        return float(tc @ tc)
    Ac = A[:, cols] - A[:, cols].mean(axis=0)
    w = np.linalg.solve(Ac.T @ Ac + lam * np.eye(len(cols)), Ac.T @ tc)
    r = tc - Ac @ w
    return float(r @ r + lam * w @ w)


def _dedupe(sources: list[LinearModel]) -> list[LinearModel]:
    unique: list[LinearModel] = []
    for s in sources:
        if not any(np.array_equal(s.weights, u.weights) for u in unique):
            unique.append(s)
    return unique


def source_atoms(X: np.ndarray, sources: list[LinearModel], cls: int) -> np.ndarray:
    """Atom matrix for class ``cls``: raw features followed by each source's class score."""
    if not sources:
        return X
    F = np.column_stack([s.scores(X)[:, cls] for s in sources])
    return np.hstack([X, F])


@dataclass
class GreedyTLResult:
    model: LinearModel
    paths: list[GreedyPath]
    sources: list[LinearModel]
    data: Dataset


def greedy_tl_fit(
    data: Dataset,
    sources: list[LinearModel],
    cfg: GreedyTLConfig,
    rng: np.random.Generator | None = None,
) -> GreedyTLResult:
    """GreedyTL with its per-class selection traces; see :func:`greedy_tl`."""
    if len(data) == 0:
        raise DomainError("GreedyTL needs at least one observation")
    K, d = data.num_classes, data.feature_dim
    for s in sources:
        if s.shape != (K, d):
            raise DomainError(f"source shape {s.shape} does not match data ({K}, {d})")
    if cfg.per_class_sample is not None:
        if rng is None:
            raise DomainError("per-class subsampling needs a random generator")
        data = subsample_per_class(data, cfg.per_class_sample, rng)
    sources = _dedupe(sources)
    budget = cfg.budget if cfg.budget is not None else d + len(sources)
    T = _ovr_targets(data.y, K)
    W = np.zeros((K, d + 1))
    paths = []
    for c in range(K):
        A = source_atoms(data.X, sources, c)
        path = greedy_ridge(A, T[:, c], cfg.tl_lambda, budget)
        paths.append(path)
        W[c, -1] = path.intercept
        for atom, w in zip(path.selected, path.coef):
            if atom < d:
                W[c, atom] += w
            else:
                # A source atom is linear in x, so fold its class-c row in directly.
                W[c] += w * sources[atom - d].weights[c]
    return GreedyTLResult(LinearModel(W), paths, sources, data)


def greedy_tl(
    data: Dataset,
    sources: list[LinearModel],
    cfg: GreedyTLConfig,
    rng: np.random.Generator | None = None,
) -> LinearModel:
    """Re-train a linear model on ``data`` on top of source hypotheses.

    For each class, atoms are the raw features plus every source's score for
    that class. Atoms are chosen greedily for a ridge fit to +-1 targets and
    the result is collapsed back into a K x (d+1) linear model. Identical
    sources are counted once.
    """
    return greedy_tl_fit(data, sources, cfg, rng).model
