"""Per-window collector population, data allocation and the data-aggregation rule."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .errors import ConfigurationError, DomainError


class Allocation(str, enum.Enum):
    ZIPF = "zipf"
    UNIFORM = "uniform"


class Protocol(str, enum.Enum):
    EDGE_ONLY = "edge_only"
    A2AHTL = "a2ahtl"
    SHTL = "shtl"


@dataclass
class ScenarioConfig:
    windows: int = 100
    obs_per_window: int = 100
    lam: float = 7.0
    allocation: Allocation = Allocation.ZIPF
    alpha: float = 1.5
    edge_fraction: float = 0.0
    aggregation: bool = False
    protocol: Protocol = Protocol.SHTL
    learning_tech: str = "4g"
    gtl_per_class_sample: int | None = None

    def __post_init__(self):
        self.allocation = Allocation(self.allocation)
        self.protocol = Protocol(self.protocol)
        if self.windows < 1 or self.obs_per_window < 1:
            raise ConfigurationError("windows and obs_per_window must be >= 1")
        if not 0.0 <= self.edge_fraction <= 1.0:
            raise ConfigurationError("edge_fraction must be in [0, 1]")
        if self.protocol is not Protocol.EDGE_ONLY and self.lam <= 0:
            raise ConfigurationError("lambda must be positive for distributed protocols")
        if self.alpha <= 0:
            raise ConfigurationError("alpha must be positive")


def draw_mule_count(rng: np.random.Generator, lam: float, truncate: bool = True) -> int:
    """Poisson(lam) number of mules; with ``truncate`` a zero draw is redrawn."""
    if lam <= 0:
        raise DomainError("Poisson rate must be positive")
    n = int(rng.poisson(lam))
    while truncate and n == 0:
        n = int(rng.poisson(lam))
    return n


def zipf_probabilities(n: int, alpha: float) -> np.ndarray:
    """Probability of each rank 1..n under a Zipf law with exponent ``alpha``."""
    if n < 1 or alpha <= 0:
        raise DomainError("need n >= 1 and alpha > 0")
    w = np.arange(1, n + 1, dtype=np.float64) ** -alpha
    return w / w.sum()


def allocation_probabilities(n: int, allocation: Allocation, alpha: float = 1.5) -> np.ndarray:
    if Allocation(allocation) is Allocation.ZIPF:
        return zipf_probabilities(n, alpha)
    return np.full(n, 1.0 / n)


def allocate_indices(
    num_obs: int, n: int, allocation: Allocation, rng: np.random.Generator, alpha: float = 1.5
) -> list[np.ndarray]:
    """Assign each of ``num_obs`` items to one of ``n`` mules; mule ``i`` has rank ``i + 1``."""
    if n < 1:
        raise DomainError("need at least one mule")
    owner = rng.choice(n, size=num_obs, p=allocation_probabilities(n, allocation, alpha))
    return [np.flatnonzero(owner == i) for i in range(n)]


def allocate(
    batch: Dataset, n: int, allocation: Allocation, rng: np.random.Generator, alpha: float = 1.5
) -> list[Dataset]:
    return [batch.subset(idx) for idx in allocate_indices(len(batch), n, allocation, rng, alpha)]


def route_edge_fraction(
    batch: Dataset, edge_fraction: float, rng: np.random.Generator
) -> tuple[Dataset, Dataset]:
    """Independently send each observation to the edge with probability ``edge_fraction``."""
    if not 0.0 <= edge_fraction <= 1.0:
        raise DomainError("edge_fraction must be in [0, 1]")
    to_edge = rng.random(len(batch)) < edge_fraction
    return batch.subset(np.flatnonzero(to_edge)), batch.subset(np.flatnonzero(~to_edge))


@dataclass(frozen=True)
class Migration:
    src: int
    dst: int
    count: int
    bits: int


@dataclass
class AggregationResult:
    partitions: list[Dataset]
    migrations: list[Migration] = field(default_factory=list)

    @property
    def participants(self) -> list[int]:
        return [i for i, p in enumerate(self.partitions) if len(p)]


def aggregation_plan(counts: list[int], obs_bits: int, model_bits: int) -> list[tuple[int, int]]:
    """Merge moves ``(src, dst)`` for mules holding less than twice a model's worth of data.

    Among under-threshold mules the smallest is merged into the largest until
    at most one remains below threshold; that one then joins the smallest
    mule that meets the threshold, if any. Ties go to the lowest id.
    """
    if model_bits <= 0:
        raise DomainError("model_bits must be positive")
    threshold = 2 * model_bits
    sizes = list(counts)
    moves = []

    def under():
        return [i for i, s in enumerate(sizes) if 0 < s and s * obs_bits < threshold]

    low = under()
    while len(low) >= 2:
        src = min(low, key=lambda i: (sizes[i], i))
        dst = max((i for i in low if i != src), key=lambda i: (sizes[i], -i))
        moves.append((src, dst))
        sizes[dst] += sizes[src]
        sizes[src] = 0
        low = under()
    if low:
        over = [i for i, s in enumerate(sizes) if s * obs_bits >= threshold]
        if over:
            src = low[0]
            dst = min(over, key=lambda i: (sizes[i], i))
            moves.append((src, dst))
            sizes[dst] += sizes[src]
            sizes[src] = 0
    return moves


def aggregation_heuristic(partitions: list[Dataset], model_bits: int, obs_bits: int) -> AggregationResult:
    parts = list(partitions)
    migrations = []
    for src, dst in aggregation_plan([len(p) for p in parts], obs_bits, model_bits):
        moved = len(parts[src])
        migrations.append(Migration(src, dst, moved, moved * obs_bits))
        parts[dst] = Dataset.concat([parts[dst], parts[src]])
        parts[src] = parts[src].subset([])
    return AggregationResult(parts, migrations)
