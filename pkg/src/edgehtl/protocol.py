"""One collection window, end to end, for EdgeOnly, A2AHTL and SHTL.

Every radio exchange goes through a :class:`~edgehtl.energy.MessageLog`, so
the ledger of a window is exactly the replay of its messages.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .energy import (
    IEEE_802_11G,
    IEEE_802_15_4,
    NB_IOT,
    FLOAT_BITS,
    MessageLog,
    NodeKind,
    PayloadKind,
    get_tech,
    model_bits,
    observation_bits,
)
from .errors import ConfigurationError
from .learning import (
    BaseTrainerConfig,
    GreedyTLConfig,
    LinearModel,
    average_models,
    entropy,
    greedy_tl,
    train_base,
)
from .scenario import (
    Allocation,
    Protocol,
    ScenarioConfig,
    aggregation_heuristic,
    allocate,
    draw_mule_count,
    route_edge_fraction,
)

SENSOR_ID = -2
EDGE_ID = -1


@dataclass
class Collector:
    id: int
    kind: NodeKind
    local_data: Dataset


@dataclass
class LearningConfig:
    base: BaseTrainerConfig = field(default_factory=BaseTrainerConfig)
    gtl: GreedyTLConfig = field(default_factory=GreedyTLConfig)
    learning_tech: str = "4g"
    # "source": the previous global model is a GreedyTL source only.
    # "average": additionally, the new global model is the running mean of all window models.
    carry: str = "average"

    def __post_init__(self):
        if self.carry not in ("source", "average"):
            raise ConfigurationError(f"unknown carry mode {self.carry!r}")


@dataclass
class WindowState:
    window_index: int = 0
    previous_global_model: LinearModel | None = None
    edge_accumulated_data: Dataset | None = None
    htl_windows: int = 0


@dataclass
class RoundResult:
    model: LinearModel
    log: MessageLog
    participants: int = 0
    mules: int = 0
    center: int | None = None


class Radio:
    """Sends learning-phase messages, relaying through the access point on WiFi.

    On 802.11g the mules form a star around one access-point mule; a message
    between two other mules costs two hops.
    """

    def __init__(self, log: MessageLog, tech: str, ap_id: int | None = None):
        self.log = log
        self.tech = get_tech(tech)
        self.ap_id = ap_id

    def _relayed(self, src: Collector, dst: Collector) -> bool:
        return (
            self.tech is IEEE_802_11G
            and self.ap_id is not None
            and src.kind is NodeKind.MULE
            and dst.kind is NodeKind.MULE
            and self.ap_id not in (src.id, dst.id)
        )

    def send(self, src: Collector, dst: Collector, kind: PayloadKind, bits: int) -> None:
        if self._relayed(src, dst):
            first = self.log.send(src.id, src.kind, self.ap_id, NodeKind.MULE, kind, bits, self.tech)
            self.log.send(self.ap_id, NodeKind.MULE, dst.id, dst.kind, kind, bits, self.tech,
                          hop=1, msg_id=first.msg_id)
        else:
            self.log.send(src.id, src.kind, dst.id, dst.kind, kind, bits, self.tech)


def _model_bits(data: Dataset) -> int:
    return model_bits(data.num_classes, data.feature_dim)


def elect_center(collectors: list[Collector]) -> Collector:
    """Collector with maximum label entropy; ties go to the lowest id."""
    K = collectors[0].local_data.num_classes
    return max(collectors, key=lambda c: (entropy(c.local_data, K), -c.id))


def _sources(own: LinearModel, received: list[LinearModel], state: WindowState) -> list[LinearModel]:
    sources = [own, *received]
    if state.previous_global_model is not None:
        sources.append(state.previous_global_model)
    return sources


def _base_models(collectors, cfg: LearningConfig, rng: np.random.Generator) -> list[LinearModel]:
    child = rng.spawn(len(collectors))
    return [train_base(c.local_data, cfg.base, r) for c, r in zip(collectors, child)]


def _check(collectors: list[Collector]) -> list[Collector]:
    collectors = sorted((c for c in collectors if len(c.local_data)), key=lambda c: c.id)
    if not collectors:
        raise ConfigurationError("no collector holds data in this window")
    return collectors


def run_a2ahtl(
    state: WindowState,
    collectors: list[Collector],
    cfg: LearningConfig,
    rng: np.random.Generator,
    log: MessageLog | None = None,
) -> RoundResult:
    """All-to-all HTL: everyone exchanges base models, re-trains, the lowest id averages."""
    log = log if log is not None else MessageLog(state.window_index)
    collectors = _check(collectors)
    aggregator = collectors[0]
    radio = Radio(log, cfg.learning_tech, ap_id=aggregator.id)
    bits = _model_bits(aggregator.local_data)

    base = _base_models(collectors, cfg, rng)
    for i, src in enumerate(collectors):
        for dst in collectors:
            if dst is not src:
                radio.send(src, dst, PayloadKind.MODEL, bits)

    child = rng.spawn(len(collectors))
    refined = []
    for i, c in enumerate(collectors):
        received = [m for j, m in enumerate(base) if j != i]
        refined.append(greedy_tl(c.local_data, _sources(base[i], received, state), cfg.gtl, child[i]))

    for c in collectors[1:]:
        radio.send(c, aggregator, PayloadKind.MODEL, bits)
    model = average_models(refined)
    return RoundResult(model, log, participants=len(collectors), center=aggregator.id)


def run_shtl(
    state: WindowState,
    collectors: list[Collector],
    cfg: LearningConfig,
    rng: np.random.Generator,
    log: MessageLog | None = None,
) -> RoundResult:
    """Star HTL: entropy election, base models to the center, one GreedyTL run there."""
    log = log if log is not None else MessageLog(state.window_index)
    collectors = _check(collectors)
    center = elect_center(collectors)
    radio = Radio(log, cfg.learning_tech, ap_id=center.id if center.kind is NodeKind.MULE else None)
    bits = _model_bits(center.local_data)

    base = _base_models(collectors, cfg, rng)
    for src in collectors:
        for dst in collectors:
            if dst is not src:
                radio.send(src, dst, PayloadKind.SCALAR_INDEX, FLOAT_BITS)
    for dst in collectors:
        if dst is not center:
            radio.send(center, dst, PayloadKind.CENTER_ID, FLOAT_BITS)

    k = collectors.index(center)
    for c in collectors:
        if c is not center:
            radio.send(c, center, PayloadKind.MODEL, bits)
    received = [m for j, m in enumerate(base) if j != k]
    (child,) = rng.spawn(1)
    model = greedy_tl(center.local_data, _sources(base[k], received, state), cfg.gtl, child)
    return RoundResult(model, log, participants=len(collectors), center=center.id)


def _collect(log: MessageLog, data: Dataset, dst: Collector) -> None:
    if len(data) == 0:
        return
    tech = NB_IOT if dst.kind is NodeKind.EDGE else IEEE_802_15_4
    log.send(SENSOR_ID, NodeKind.SENSOR, dst.id, dst.kind, PayloadKind.OBSERVATIONS,
             len(data) * observation_bits(data.feature_dim), tech)


def run_edge_only(
    state: WindowState, batch: Dataset, cfg: LearningConfig, rng: np.random.Generator
) -> RoundResult:
    """Every observation goes to the edge over NB-IoT; the edge retrains on all data so far."""
    log = MessageLog(state.window_index)
    edge = Collector(EDGE_ID, NodeKind.EDGE, batch)
    _collect(log, batch, edge)
    if state.edge_accumulated_data is None or len(state.edge_accumulated_data) == 0:
        state.edge_accumulated_data = batch
    else:
        state.edge_accumulated_data = Dataset.concat([state.edge_accumulated_data, batch])
    model = train_base(state.edge_accumulated_data, cfg.base, rng)
    return RoundResult(model, log, participants=1, mules=0, center=EDGE_ID)


def _protocol_runner(protocol: Protocol):
    if protocol is Protocol.A2AHTL:
        return run_a2ahtl
    if protocol is Protocol.SHTL:
        return run_shtl
    raise ConfigurationError(f"{protocol.value} is not a distributed protocol")


def run_partial_edge(
    state: WindowState,
    batch: Dataset,
    edge_fraction: float,
    scenario: ScenarioConfig,
    cfg: LearningConfig,
    scenario_rng: np.random.Generator,
    learning_rng: np.random.Generator,
) -> RoundResult:
    """Part of the window reaches the edge over NB-IoT, the rest is picked up by mules.

    The edge keeps every observation it has received and joins the SHTL round
    as one more collector whose own radio is not charged. With no mule in
    range the whole window goes to the edge.
    """
    log = MessageLog(state.window_index)
    n = draw_mule_count(scenario_rng, scenario.lam, truncate=False)
    edge_part, mule_part = route_edge_fraction(batch, edge_fraction, scenario_rng)
    if n == 0:
        edge_part, mule_part = batch, batch.subset([])

    edge = Collector(EDGE_ID, NodeKind.EDGE, edge_part)
    _collect(log, edge_part, edge)
    if len(edge_part):
        if state.edge_accumulated_data is None or len(state.edge_accumulated_data) == 0:
            state.edge_accumulated_data = edge_part
        else:
            state.edge_accumulated_data = Dataset.concat([state.edge_accumulated_data, edge_part])

    mules = []
    if n > 0:
        for i, part in enumerate(allocate(mule_part, n, scenario.allocation, scenario_rng, scenario.alpha)):
            mule = Collector(i, NodeKind.MULE, part)
            _collect(log, part, mule)
            mules.append(mule)

    collectors = [c for c in mules if len(c.local_data)]
    if state.edge_accumulated_data is not None and len(state.edge_accumulated_data):
        collectors.append(Collector(EDGE_ID, NodeKind.EDGE, state.edge_accumulated_data))
    result = _protocol_runner(scenario.protocol)(state, collectors, cfg, learning_rng, log)
    result.mules = n
    return result


def run_mules_only(
    state: WindowState,
    batch: Dataset,
    scenario: ScenarioConfig,
    cfg: LearningConfig,
    scenario_rng: np.random.Generator,
    learning_rng: np.random.Generator,
) -> RoundResult:
    """All data collected by mules over 802.15.4, optionally aggregated, then HTL among mules."""
    log = MessageLog(state.window_index)
    n = draw_mule_count(scenario_rng, scenario.lam, truncate=True)
    parts = allocate(batch, n, scenario.allocation, scenario_rng, scenario.alpha)
    mules = [Collector(i, NodeKind.MULE, p) for i, p in enumerate(parts)]
    for m in mules:
        _collect(log, m.local_data, m)

    if scenario.aggregation:
        agg = aggregation_heuristic(parts, _model_bits(batch), observation_bits(batch.feature_dim))
        merged = [Collector(i, NodeKind.MULE, p) for i, p in enumerate(agg.partitions)]
        active = [c for c in merged if len(c.local_data)]
        if scenario.protocol is Protocol.SHTL:
            ap = elect_center(active).id
        else:
            ap = min(c.id for c in active)
        radio = Radio(log, cfg.learning_tech, ap_id=ap)
        for mv in agg.migrations:
            radio.send(mules[mv.src], mules[mv.dst], PayloadKind.OBSERVATIONS, mv.bits)
        mules = merged

    result = _protocol_runner(scenario.protocol)(state, mules, cfg, learning_rng, log)
    result.mules = n
    return result


def run_window(
    state: WindowState,
    batch: Dataset,
    scenario: ScenarioConfig,
    cfg: LearningConfig,
    scenario_rng: np.random.Generator,
    learning_rng: np.random.Generator,
) -> RoundResult:
    """Dispatch one window according to the scenario and advance ``state``."""
    if scenario.protocol is Protocol.EDGE_ONLY or scenario.edge_fraction >= 1.0:
        result = run_edge_only(state, batch, cfg, learning_rng)
    else:
        if scenario.edge_fraction > 0.0:
            result = run_partial_edge(state, batch, scenario.edge_fraction, scenario, cfg,
                                      scenario_rng, learning_rng)
        else:
            result = run_mules_only(state, batch, scenario, cfg, scenario_rng, learning_rng)
        if cfg.carry == "average" and state.previous_global_model is not None:
            w = state.htl_windows
            result.model = LinearModel(
                (w * state.previous_global_model.weights + result.model.weights) / (w + 1)
            )
        state.htl_windows += 1
    state.previous_global_model = result.model
    state.window_index += 1
    return result


__all__ = [
    "Allocation", "Collector", "EDGE_ID", "LearningConfig", "RoundResult", "SENSOR_ID",
    "WindowState", "elect_center", "run_a2ahtl", "run_edge_only", "run_mules_only",
    "run_partial_edge", "run_shtl", "run_window",
]
