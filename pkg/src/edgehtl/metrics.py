"""Prediction-quality metrics and replication statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .dataset import Dataset
from .errors import DomainError
from .learning import LinearModel

# Windows 50..100 (1-based) are the convergence interval.
CONVERGENCE_START = 49
CONVERGENCE_STOP = 100


@dataclass
class EvaluationResult:
    precision: float
    recall: float
    f_measure: float
    window_index: int = 0


def precision_from_labels(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Fraction of correct predictions (the overall-correctness index)."""
    if len(y_true) == 0:
        raise DomainError("empty test set")
    return float(np.mean(y_true == y_pred))


def recall_from_labels(y_true: np.ndarray, y_pred: np.ndarray, num_classes: int) -> float:
    """Per-class correct fraction averaged over classes (macro recall)."""
    per_class = []
    for c in range(num_classes):
        members = y_true == c
        if not members.any():
            raise DomainError(f"class {c} has no test members")
        per_class.append(np.mean(y_pred[members] == c))
    return float(np.mean(per_class))


def precision(model: LinearModel, test: Dataset) -> float:
    return precision_from_labels(test.y, model.predict(test.X))


def recall(model: LinearModel, test: Dataset) -> float:
    return recall_from_labels(test.y, model.predict(test.X), test.num_classes)


def f_measure(p: float, r: float) -> float:
    if p + r == 0:
        return 0.0
    return 2.0 * p * r / (p + r)


def evaluate(model: LinearModel, test: Dataset, window_index: int = 0) -> EvaluationResult:
    y_pred = model.predict(test.X)
    p = precision_from_labels(test.y, y_pred)
    r = recall_from_labels(test.y, y_pred, test.num_classes)
    return EvaluationResult(p, r, f_measure(p, r), window_index)


def convergence_window(n: int) -> slice:
    """Index range averaged for convergence figures.

    Windows 50..100 for runs of at least 100 windows, otherwise the second half.
    """
    if n >= CONVERGENCE_STOP:
        return slice(CONVERGENCE_START, CONVERGENCE_STOP)
    return slice(n // 2, n)


def convergence_mean(series) -> float:
    series = np.asarray(series, dtype=np.float64)
    return float(series[convergence_window(len(series))].mean())


def convergence_loss(run_f1, benchmark_f1, strict: bool = True) -> float:
    """Mean benchmark F1 minus mean run F1 over windows 50..100, in percentage points."""
    run_f1 = np.asarray(run_f1, dtype=np.float64)
    benchmark_f1 = np.asarray(benchmark_f1, dtype=np.float64)
    if strict and min(len(run_f1), len(benchmark_f1)) < CONVERGENCE_STOP:
        raise DomainError("convergence loss needs series of at least 100 windows")
    return 100.0 * (convergence_mean(benchmark_f1) - convergence_mean(run_f1))


def replication_summary(series, confidence: float = 0.95) -> tuple[np.ndarray, np.ndarray]:
    """Per-window mean and Student-t half-width across replications (rows)."""
    arr = np.asarray(series, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    n = arr.shape[0]
    if n < 2:
        raise DomainError("need at least two replications for an interval")
    mean = arr.mean(axis=0)
    sem = arr.std(axis=0, ddof=1) / np.sqrt(n)
    half = stats.t.ppf(0.5 + confidence / 2.0, n - 1) * sem
    return mean, half
