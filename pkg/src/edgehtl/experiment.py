"""Replicated experiment runs and their on-disk artifacts."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, to_flat, to_toml
from .dataset import PreparedData, prepare, prepare_cached, synthetic_covtype
from .energy import write_messages_csv
from .errors import ConfigurationError
from .metrics import convergence_loss, convergence_mean, replication_summary
from .simulation import ReplicationResult, run_replication

log = logging.getLogger(__name__)

SYNTHETIC = "synthetic"

# (column stem, ReplicationResult series, with interval)
_SERIES = (
    ("f1", "f1", True),
    ("precision", "precision", True),
    ("recall", "recall", True),
    ("collection_short_mJ", "collection_short_mJ", False),
    ("collection_long_mJ", "collection_long_mJ", False),
    ("learning_tx_mJ", "learning_tx_mJ", False),
    ("learning_rx_mJ", "learning_rx_mJ", False),
    ("session_mJ", "session_mJ", True),
    ("cumulative_mJ", None, True),
    ("mules", "mules", False),
    ("participants", "participants", False),
    ("collection_bits", "collection_bits", False),
    ("learning_bits", "learning_bits", False),
    ("model_transfers", "model_transfers", False),
)


def window_columns() -> list[str]:
    cols = ["window"]
    for stem, _, ci in _SERIES:
        cols.append(f"{stem}_mean")
        if ci:
            cols.append(f"{stem}_ci95")
    return cols


WINDOW_COLUMNS = tuple(window_columns())


def replication_seeds(cfg: ExperimentConfig) -> list[int]:
    return [cfg.seed + r for r in range(cfg.replications)]


def load_data(cfg: ExperimentConfig) -> PreparedData:
    """Balanced, split and standardized data; the split is drawn from the base seed."""
    if cfg.dataset_path == SYNTHETIC:
        source = synthetic_covtype(cfg.synthetic_size, np.random.default_rng(cfg.seed))
        return prepare(source, cfg.seed, cfg.train_fraction, cfg.balance_total)
    path = Path(cfg.dataset_path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset not found: {path}")
    return prepare_cached(path, cfg.seed, cfg.cache_dir, cfg.train_fraction, cfg.balance_total)


def _run_one(args) -> ReplicationResult:
    data, cfg, seed, keep = args
    return run_replication(data, cfg.scenario, cfg.learning, seed, keep_messages=keep)


def run_replications(
    cfg: ExperimentConfig, data: PreparedData | None = None, keep_messages: bool = False, jobs: int = 1
) -> list[ReplicationResult]:
    data = load_data(cfg) if data is None else data
    needed = cfg.scenario.windows * cfg.scenario.obs_per_window
    if needed > len(data.train):
        raise ConfigurationError(
            f"{cfg.scenario.windows} windows of {cfg.scenario.obs_per_window} need {needed} "
            f"training points, have {len(data.train)}"
        )
    tasks = [(data, cfg, s, keep_messages) for s in replication_seeds(cfg)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_one, tasks))
    results = []
    for t in tasks:
        log.info("replication seed=%d", t[2])
        results.append(_run_one(t))
    return results


def _matrix(results: list[ReplicationResult], series: str | None) -> np.ndarray:
    if series is None:
        return np.cumsum(_matrix(results, "session_mJ"), axis=1)
    return np.vstack([r.series(series) for r in results]).astype(np.float64)


def _interval(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
    if mat.shape[0] < 2:
        return mat.mean(axis=0), None
    return replication_summary(mat)


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def write_windows_csv(results: list[ReplicationResult], path: Path) -> None:
    stats = []
    for _, series, ci in _SERIES:
        mean, half = _interval(_matrix(results, series))
        stats.append((mean, half if ci else False))
    n = len(results[0].reports)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(WINDOW_COLUMNS)
        for i in range(n):
            row = [i + 1]
            for mean, half in stats:
                row.append(_fmt(mean[i]))
                if half is not False:
                    row.append(_fmt(None if half is None else half[i]))
            w.writerow(row)


def write_raw_csv(result: ReplicationResult, path: Path) -> None:
    names = [s for _, s, _ in _SERIES if s is not None]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["window", *names])
        cols = [result.series(s) for s in names]
        for i in range(len(result.reports)):
            w.writerow([i + 1, *(_fmt(c[i]) for c in cols)])


def summarize(cfg: ExperimentConfig, results: list[ReplicationResult], baseline: dict | None = None) -> dict:
    f1 = _matrix(results, "f1")
    conv = {m: np.array([convergence_mean(r.series(m)) for r in results]) for m in ("f1", "precision", "recall")}
    totals = np.array([r.total_ledger().total() for r in results])
    ledgers = [r.total_ledger().as_dict() for r in results]
    energy = {k: float(np.mean([d[k] for d in ledgers])) for k in ledgers[0]}

    def ci(values):
        return None if len(values) < 2 else float(replication_summary(values)[1][0])

    summary = {
        "name": cfg.name,
        "seed": cfg.seed,
        "replications": cfg.replications,
        "replication_seeds": replication_seeds(cfg),
        "windows": cfg.scenario.windows,
        "f1": float(conv["f1"].mean()),
        "f1_ci95": ci(conv["f1"]),
        "precision": float(conv["precision"].mean()),
        "recall": float(conv["recall"].mean()),
        "f1_final": float(f1[:, -1].mean()),
        "total_mJ": float(totals.mean()),
        "total_mJ_ci95": ci(totals),
        "energy_mJ": energy,
        "mules_mean": float(_matrix(results, "mules").mean()),
        "participants_mean": float(_matrix(results, "participants").mean()),
        "model_transfers_mean": float(_matrix(results, "model_transfers").mean()),
        "f1_series": [float(x) for x in f1.mean(axis=0)],
        "config": to_flat(cfg),
    }
    if baseline is not None:
        summary["baseline"] = {"name": baseline.get("name"), **compare(baseline, summary)}
    return summary


def compare(a: dict, b: dict) -> dict:
    """Energy gain of ``b`` over ``a`` in percent and accuracy lost by ``b`` in points."""
    e_a, e_b = float(a["total_mJ"]), float(b["total_mJ"])
    if e_a <= 0:
        raise ConfigurationError("reference summary has non-positive total_mJ")
    if "f1_series" in a and "f1_series" in b:
        loss = convergence_loss(b["f1_series"], a["f1_series"], strict=False)
    else:
        loss = 100.0 * (float(a["f1"]) - float(b["f1"]))
    return {
        "total_mJ_a": e_a,
        "total_mJ_b": e_b,
        "gain_pct": (e_a - e_b) / e_a * 100.0,
        "f1_a": float(a["f1"]),
        "f1_b": float(b["f1"]),
        "accuracy_loss_pp": loss,
    }


def read_summary(path: str | Path) -> dict:
    try:
        summary = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not a summary file ({exc})") from exc
    for key in ("total_mJ", "f1"):
        if key not in summary:
            raise ConfigurationError(f"{path}: summary lacks {key!r}")
    return summary


@dataclass
class ExperimentOutput:
    summary: dict
    results: list[ReplicationResult]
    out_dir: Path


def run_experiment(
    cfg: ExperimentConfig,
    out_dir: str | Path | None = None,
    emit_messages: bool = False,
    emit_raw: bool = False,
    baseline: dict | None = None,
    data: PreparedData | None = None,
    jobs: int = 1,
) -> ExperimentOutput:
    """Run every replication and write ``windows.csv``, ``summary.json`` and optional logs."""
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    results = run_replications(cfg, data, keep_messages=emit_messages, jobs=jobs)
    summary = summarize(cfg, results, baseline)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(to_toml(cfg))
    write_windows_csv(results, out / "windows.csv")
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    for r, res in enumerate(results):
        if emit_messages:
            with open(out / f"messages_rep{r}.csv", "w", newline="") as fh:
                write_messages_csv(res.messages, fh)
        if emit_raw:
            write_raw_csv(res, out / f"windows_rep{r}.csv")
    return ExperimentOutput(summary, results, out)
