"""Experiment configuration: flat dotted keys, TOML on disk, and the canned presets."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigurationError
from .learning import BaseTrainerConfig, GreedyTLConfig
from .protocol import LearningConfig
from .scenario import Allocation, Protocol, ScenarioConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass
class ExperimentConfig:
    name: str = "custom"
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    learning: LearningConfig = field(default_factory=LearningConfig)
    seed: int = 1
    replications: int = 10
    dataset_path: str = "data/covtype.data.gz"
    output_dir: str = "out"
    train_fraction: float = 0.8
    balance_total: int = 19229
    cache_dir: str | None = None
    synthetic_size: int = 24000

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigurationError("replications must be >= 1")
        self.learning.learning_tech = self.scenario.learning_tech


def _optional_int(v):
    if v in (None, "", "none", "all", 0):
        return None
    return int(v)


def _bool(v):
    if isinstance(v, bool):
        return v
    if str(v).lower() in ("1", "true", "yes", "on"):
        return True
    if str(v).lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


# dotted key -> (getter, setter-with-conversion)
_KEYS = {
    "name": (lambda c: c.name, lambda c, v: setattr(c, "name", str(v))),
    "seed": (lambda c: c.seed, lambda c, v: setattr(c, "seed", int(v))),
    "replications": (lambda c: c.replications, lambda c, v: setattr(c, "replications", int(v))),
    "dataset_path": (lambda c: c.dataset_path, lambda c, v: setattr(c, "dataset_path", str(v))),
    "output_dir": (lambda c: c.output_dir, lambda c, v: setattr(c, "output_dir", str(v))),
    "dataset.train_fraction": (lambda c: c.train_fraction, lambda c, v: setattr(c, "train_fraction", float(v))),
    "dataset.balance_total": (lambda c: c.balance_total, lambda c, v: setattr(c, "balance_total", int(v))),
    "dataset.cache_dir": (lambda c: c.cache_dir or "", lambda c, v: setattr(c, "cache_dir", str(v) or None)),
    "dataset.synthetic_size": (lambda c: c.synthetic_size, lambda c, v: setattr(c, "synthetic_size", int(v))),
    "scenario.windows": (lambda c: c.scenario.windows, lambda c, v: setattr(c.scenario, "windows", int(v))),
    "scenario.obs_per_window": (
        lambda c: c.scenario.obs_per_window, lambda c, v: setattr(c.scenario, "obs_per_window", int(v))),
    "scenario.lambda": (lambda c: c.scenario.lam, lambda c, v: setattr(c.scenario, "lam", float(v))),
    "scenario.allocation": (
        lambda c: c.scenario.allocation.value, lambda c, v: setattr(c.scenario, "allocation", Allocation(v))),
    "scenario.alpha": (lambda c: c.scenario.alpha, lambda c, v: setattr(c.scenario, "alpha", float(v))),
    "scenario.edge_fraction": (
        lambda c: c.scenario.edge_fraction, lambda c, v: setattr(c.scenario, "edge_fraction", float(v))),
    "scenario.aggregation": (
        lambda c: c.scenario.aggregation, lambda c, v: setattr(c.scenario, "aggregation", _bool(v))),
    "scenario.protocol": (
        lambda c: c.scenario.protocol.value, lambda c, v: setattr(c.scenario, "protocol", Protocol(v))),
    "scenario.learning_tech": (
        lambda c: c.scenario.learning_tech, lambda c, v: setattr(c.scenario, "learning_tech", str(v))),
    "scenario.gtl_per_class_sample": (
        lambda c: c.scenario.gtl_per_class_sample or 0,
        lambda c, v: setattr(c.scenario, "gtl_per_class_sample", _optional_int(v))),
    "learning.svm_lambda": (
        lambda c: c.learning.base.svm_lambda, lambda c, v: setattr(c.learning.base, "svm_lambda", float(v))),
    "learning.epochs": (lambda c: c.learning.base.epochs, lambda c, v: setattr(c.learning.base, "epochs", int(v))),
    "learning.average_last_epoch": (
        lambda c: c.learning.base.average_last_epoch,
        lambda c, v: setattr(c.learning.base, "average_last_epoch", _bool(v))),
    "learning.tl_lambda": (
        lambda c: c.learning.gtl.tl_lambda, lambda c, v: setattr(c.learning.gtl, "tl_lambda", float(v))),
    "learning.budget": (
        lambda c: c.learning.gtl.budget or 0,
        lambda c, v: setattr(c.learning.gtl, "budget", _optional_int(v))),
    "learning.carry": (lambda c: c.learning.carry, lambda c, v: setattr(c.learning, "carry", str(v))),
}

KNOWN_KEYS = tuple(_KEYS)


def _flatten(tree: dict, prefix: str = "") -> dict:
    flat = {}
    for k, v in tree.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            flat.update(_flatten(v, key + "."))
        else:
            flat[key] = v
    return flat


def _revalidate(cfg: ExperimentConfig) -> ExperimentConfig:
    try:
        sc = cfg.scenario
        scenario = ScenarioConfig(
            sc.windows, sc.obs_per_window, sc.lam, sc.allocation, sc.alpha, sc.edge_fraction,
            sc.aggregation, sc.protocol, sc.learning_tech, sc.gtl_per_class_sample,
        )
        lc = cfg.learning
        learning = LearningConfig(
            BaseTrainerConfig(lc.base.svm_lambda, lc.base.epochs, lc.base.project, lc.base.average_last_epoch),
            GreedyTLConfig(lc.gtl.budget, lc.gtl.tl_lambda, scenario.gtl_per_class_sample),
            scenario.learning_tech,
            lc.carry,
        )
        from .energy import get_tech
        get_tech(scenario.learning_tech)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    return replace(cfg, scenario=scenario, learning=learning)


def apply_overrides(cfg: ExperimentConfig, values: dict) -> ExperimentConfig:
    """Return a copy of ``cfg`` with flat dotted-key ``values`` applied and validated."""
    cfg = _revalidate(cfg)
    for key, value in values.items():
        if key not in _KEYS:
            raise ConfigurationError(f"unknown configuration key {key!r}")
        try:
            _KEYS[key][1](cfg, value)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"invalid value for {key!r}: {value!r}") from exc
    return _revalidate(cfg)


def parse_config_text(text: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    try:
        tree = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"malformed configuration: {exc}") from exc
    return apply_overrides(base or ExperimentConfig(), _flatten(tree))


def load_config(path: str | Path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text(), base)


def to_flat(cfg: ExperimentConfig) -> dict:
    return {k: get(cfg) for k, (get, _) in _KEYS.items()}


def to_toml(cfg: ExperimentConfig) -> str:
    lines = []
    for k, v in to_flat(cfg).items():
        if isinstance(v, bool):
            lines.append(f"{k} = {'true' if v else 'false'}")
        elif isinstance(v, (int, float)):
            lines.append(f"{k} = {v!r}")
        else:
            lines.append(f'{k} = "{v}"')
    return "\n".join(lines) + "\n"


def _preset_table() -> dict[str, dict]:
    presets: dict[str, dict] = {"edge_only": {"scenario.protocol": "edge_only", "scenario.edge_fraction": 1.0}}
    for pct in (50, 15, 3):
        presets[f"scenario1_{pct}pct"] = {
            "scenario.protocol": "shtl",
            "scenario.edge_fraction": pct / 100,
            "scenario.learning_tech": "4g",
        }
    for num, alloc in ((2, "zipf"), (3, "uniform")):
        for algo, proto in (("a2a", "a2ahtl"), ("shtl", "shtl")):
            for tech in ("4g", "wifi"):
                for aggr in (False, True):
                    name = f"scenario{num}_{algo}_{tech}" + ("_aggr" if aggr else "")
                    presets[name] = {
                        "scenario.protocol": proto,
                        "scenario.allocation": alloc,
                        "scenario.learning_tech": tech,
                        "scenario.aggregation": aggr,
                    }
            for n in (2, 5, 10):
                name = f"complexity_{algo}_n{n}" + ("_uniform" if alloc == "uniform" else "")
                presets[name] = {
                    "scenario.protocol": proto,
                    "scenario.allocation": alloc,
                    "scenario.learning_tech": "4g",
                    "scenario.gtl_per_class_sample": n,
                }
    return presets


PRESETS = _preset_table()


def list_presets() -> list[str]:
    return list(PRESETS)


def preset(name: str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}")
    return apply_overrides(base or ExperimentConfig(), {"name": name, **PRESETS[name]})
