import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from edgehtl.dataset import Dataset
from edgehtl.energy import model_bits, observation_bits
from edgehtl.errors import ConfigurationError, DomainError
from edgehtl.scenario import (
    Allocation, Protocol, ScenarioConfig, aggregation_heuristic, aggregation_plan, allocate,
    allocate_indices, draw_mule_count, route_edge_fraction, zipf_probabilities,
)

OBS = observation_bits(54)
MODEL = model_bits(7, 54)


def _batch(n, d=2):
    return Dataset(np.arange(n * d, dtype=float).reshape(n, d), np.arange(n) % 7)


def test_zipf_closed_form():
    np.testing.assert_allclose(zipf_probabilities(1, 1.5), [1.0])
    p = zipf_probabilities(2, 1.5)
    assert p[0] == pytest.approx(1 / (1 + 2 ** -1.5), abs=1e-12)
    np.testing.assert_allclose(p, [0.7388, 0.2612], atol=1e-4)
    assert zipf_probabilities(7, 1.5)[0] == pytest.approx(1 / sum(s ** -1.5 for s in range(1, 8)), abs=1e-12)


def test_rank_one_share_over_random_mule_counts():
    # Averaged over the truncated Poisson(7) mule count the top mule holds about 55% of a window.
    rng = np.random.default_rng(2)
    shares = []
    for _ in range(20000):
        n = draw_mule_count(rng, 7.0)
        shares.append(len(allocate_indices(100, n, Allocation.ZIPF, rng)[0]) / 100)
    assert np.mean(shares) == pytest.approx(0.55, abs=0.01)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 50), st.floats(0.05, 5.0))
def test_zipf_is_distribution_and_decreasing(n, alpha):
    p = zipf_probabilities(n, alpha)
    assert p.sum() == pytest.approx(1.0)
    assert np.all(np.diff(p) < 0)


def test_zipf_rejects_bad_args():
    with pytest.raises(DomainError):
        zipf_probabilities(0, 1.5)


def test_truncated_poisson_means():
    rng = np.random.default_rng(0)
    draws = np.array([draw_mule_count(rng, 7.0) for _ in range(100_000)])
    assert draws.min() >= 1
    assert draws.mean() == pytest.approx(7 / (1 - np.exp(-7)), abs=0.05)
    rng = np.random.default_rng(1)
    small = np.array([draw_mule_count(rng, 0.1) for _ in range(1_000_000)])
    assert small.mean() == pytest.approx(0.1 / (1 - np.exp(-0.1)), abs=0.01)


def test_untruncated_poisson_can_be_zero():
    rng = np.random.default_rng(0)
    assert min(draw_mule_count(rng, 0.5, truncate=False) for _ in range(200)) == 0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 200), st.integers(1, 15), st.sampled_from(list(Allocation)), st.integers(0, 2**32 - 1))
def test_allocation_conserves_observations(n_obs, n, alloc, seed):
    batch = _batch(n_obs)
    parts = allocate(batch, n, alloc, np.random.default_rng(seed))
    assert len(parts) == n
    merged = np.concatenate([p.X[:, 0] for p in parts]) if n_obs else np.array([])
    assert sorted(merged) == sorted(batch.X[:, 0])


def test_allocation_shares():
    rng = np.random.default_rng(0)
    zipf = np.zeros(7)
    uni = np.zeros(7)
    for _ in range(2000):
        zipf += [len(i) for i in allocate_indices(100, 7, Allocation.ZIPF, rng)]
        uni += [len(i) for i in allocate_indices(100, 7, Allocation.UNIFORM, rng)]
    p = zipf_probabilities(7, 1.5)
    band = 4 * np.sqrt(p * (1 - p) / 200_000)
    assert np.all(np.abs(zipf / 200_000 - p) < band)
    assert np.all(np.abs(uni / 2000 - 100 / 7) < 0.3)
    single = allocate(_batch(100), 1, Allocation.ZIPF, rng)
    assert len(single[0]) == 100


def test_route_edge_fraction():
    rng = np.random.default_rng(0)
    b = _batch(100)
    assert len(route_edge_fraction(b, 1.0, rng)[0]) == 100
    assert len(route_edge_fraction(b, 0.0, rng)[1]) == 100
    on_edge = sum(len(route_edge_fraction(b, 0.15, rng)[0]) for _ in range(100))
    assert abs(on_edge - 1500) <= 60
    with pytest.raises(DomainError):
        route_edge_fraction(b, 1.5, rng)


def test_aggregation_identity_when_all_large():
    parts = [_batch(20), _batch(30)]
    res = aggregation_heuristic(parts, MODEL, OBS)
    assert res.migrations == []
    assert [len(p) for p in res.partitions] == [20, 30]


def test_aggregation_single_small_joins_smallest_large():
    res = aggregation_heuristic([_batch(40), _batch(2), _batch(30)], MODEL, OBS)
    assert [(m.src, m.dst, m.count, m.bits) for m in res.migrations] == [(1, 2, 2, 2 * OBS)]
    assert [len(p) for p in res.partitions] == [40, 0, 32]


def test_aggregation_hand_traces():
    # threshold 2 * 24768 bits = 14.33 observations of 3456 bits
    assert aggregation_plan([50, 10, 5, 3], OBS, MODEL) == [(3, 1), (2, 1)]
    assert aggregation_plan([3, 4], OBS, MODEL) == [(0, 1)]
    assert aggregation_plan([14, 14, 0, 40], OBS, MODEL) == [(0, 1)]
    assert aggregation_plan([15, 15], OBS, MODEL) == []
    with pytest.raises(DomainError):
        aggregation_plan([1], OBS, 0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 60), min_size=1, max_size=15))
def test_aggregation_conserves_and_never_adds_nodes(counts):
    parts = []
    start = 0
    for c in counts:
        parts.append(Dataset(np.arange(start, start + c, dtype=float)[:, None], np.zeros(c, dtype=int)))
        start += c
    res = aggregation_heuristic(parts, MODEL, OBS)
    assert sum(len(p) for p in res.partitions) == sum(counts)
    assert sorted(np.concatenate([p.X[:, 0] for p in res.partitions])) == list(range(start))
    assert len(res.participants) <= sum(1 for c in counts if c)
    under = [len(p) for p in res.partitions if 0 < len(p) and len(p) * OBS < 2 * MODEL]
    assert len(under) <= 1
    for m in res.migrations:
        assert m.bits == m.count * OBS


def _mean_participants(alloc, windows=2000, seed=0):
    rng = np.random.default_rng(seed)
    before = after = 0
    for _ in range(windows):
        n = draw_mule_count(rng, 7.0)
        counts = [len(i) for i in allocate_indices(100, n, alloc, rng)]
        before += sum(1 for c in counts if c)
        sizes = list(counts)
        for s, d in aggregation_plan(counts, OBS, MODEL):
            sizes[d] += sizes[s]
            sizes[s] = 0
        after += sum(1 for c in sizes if c)
    return before / windows, after / windows


def test_zipf_aggregation_reduces_to_about_three_nodes():
    before, after = _mean_participants(Allocation.ZIPF)
    assert after < before
    assert after == pytest.approx(3, abs=1)


def test_scenario_config_validation():
    with pytest.raises(ConfigurationError):
        ScenarioConfig(edge_fraction=1.2)
    with pytest.raises(ConfigurationError):
        ScenarioConfig(lam=0, protocol=Protocol.SHTL)
    ScenarioConfig(lam=0, protocol=Protocol.EDGE_ONLY)
    with pytest.raises(ValueError):
        ScenarioConfig(allocation="pareto")
