import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from edgehtl.dataset import Dataset
from edgehtl.energy import model_bits
from edgehtl.errors import DomainError
from edgehtl.learning import (
    BaseTrainerConfig, GreedyTLConfig, LinearModel, average_models, entropy, greedy_ridge, greedy_tl,
    greedy_tl_fit, predict, ridge_risk, source_atoms, subsample_per_class, svm_objective, train_base,
)

from conftest import make_dataset

finite = st.floats(-10, 10, allow_nan=False)


def _rng(s=0):
    return np.random.default_rng(s)


# --- base learner ---------------------------------------------------------

def test_separable_toy_fits_perfectly():
    rng = _rng(0)
    X = np.vstack([rng.normal(-3, 0.5, (30, 2)), rng.normal(3, 0.5, (30, 2))])
    y = np.repeat([0, 1], 30)
    m = train_base(Dataset(X, y, 2), BaseTrainerConfig(), _rng(1))
    assert np.mean(m.predict(X) == y) == 1.0


def test_train_base_matches_convex_oracle():
    cp = pytest.importorskip("cvxpy")
    rng = _rng(3)
    X = rng.normal(size=(20, 3))
    y = (X[:, 0] + 0.3 * rng.normal(size=20) > 0).astype(int)
    lam = 0.05
    data = Dataset(X, y, 2)
    m = train_base(data, BaseTrainerConfig(svm_lambda=lam, epochs=3000), _rng(0))
    Xa = np.hstack([X, np.ones((20, 1))])
    oracle = 0.0
    for c in range(2):
        t = np.where(y == c, 1.0, -1.0)
        w = cp.Variable(4)
        prob = cp.Problem(cp.Minimize(lam / 2 * cp.sum_squares(w) + cp.sum(cp.pos(1 - cp.multiply(t, Xa @ w))) / 20))
        prob.solve()
        oracle += prob.value
    got = svm_objective(m, data, lam)
    assert got <= 1.05 * oracle


def test_objective_decreases_with_training():
    d = make_dataset(140, d=4, seed=2)
    short = train_base(d, BaseTrainerConfig(svm_lambda=0.01, epochs=1), _rng(0))
    long = train_base(d, BaseTrainerConfig(svm_lambda=0.01, epochs=200), _rng(0))
    assert svm_objective(long, d, 0.01) <= svm_objective(short, d, 0.01) * 1.01


def test_train_base_deterministic_and_errors(small_data):
    a = train_base(small_data, BaseTrainerConfig(), _rng(5))
    b = train_base(small_data, BaseTrainerConfig(), _rng(5))
    np.testing.assert_array_equal(a.weights, b.weights)
    with pytest.raises(DomainError):
        train_base(small_data.subset([]), BaseTrainerConfig(), _rng(0))
    with pytest.raises(DomainError):
        BaseTrainerConfig(svm_lambda=0)


def test_single_class_model_favours_that_class():
    d = Dataset(np.random.default_rng(0).normal(size=(5, 3)), np.full(5, 4), 7)
    m = train_base(d, BaseTrainerConfig(), _rng(0))
    assert np.all(m.predict(np.random.default_rng(1).normal(size=(20, 3))) == 4)


# --- prediction and serialization ----------------------------------------

def test_zero_model_predicts_class_zero():
    assert predict(LinearModel.zeros(7, 3), np.array([1.0, -2.0, 3.0])) == 0


def test_dominant_row_wins():
    W = np.zeros((4, 3))
    W[2, :2] = 5.0
    assert np.all(LinearModel(W).predict(np.abs(np.random.default_rng(0).normal(size=(30, 2))) + 0.1) == 2)


def test_predict_dimension_mismatch():
    with pytest.raises(DomainError):
        predict(LinearModel.zeros(2, 3), np.ones(4))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 4), elements=finite), arrays(np.float64, (6, 3), elements=finite),
       st.floats(1e-3, 1e3))
def test_predict_invariant_to_positive_scaling(W, X, c):
    m = LinearModel(W)
    np.testing.assert_array_equal(m.predict(X), LinearModel(W * c).predict(X))


def test_non_finite_weights_rejected():
    with pytest.raises(DomainError):
        LinearModel(np.array([[np.nan, 1.0]]))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(0, 12), st.data())
def test_serialization_round_trip_and_size(k, d, data):
    W = data.draw(arrays(np.float64, (k, d + 1), elements=finite))
    m = LinearModel(W)
    blob = m.to_bytes()
    assert len(blob) * 8 == model_bits(k, d) == m.bits
    np.testing.assert_array_equal(LinearModel.from_bytes(blob).weights, W)


# --- entropy ---------------------------------------------------------------

def test_entropy_values():
    assert entropy(np.repeat(np.arange(7), 4), 7) == pytest.approx(1.0)
    assert entropy(np.zeros(9, dtype=int), 7) == 0.0
    assert entropy(np.array([0, 0, 0, 1]), 2) == pytest.approx(0.8112781, abs=1e-6)
    assert entropy(np.array([], dtype=int), 7) == 0.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=1, max_size=60))
def test_entropy_bounds(labels):
    h = entropy(np.array(labels), 5)
    assert 0.0 <= h <= 1.0 + 1e-12
    counts = np.bincount(labels, minlength=5)
    if np.count_nonzero(counts) == 1:
        assert h == 0.0
    if np.all(counts == counts[0]):
        assert h == pytest.approx(1.0)


# --- averaging ------------------------------------------------------------

def test_average_simple_cases():
    one = LinearModel(np.ones((2, 3)))
    np.testing.assert_array_equal(average_models([one, one, one]).weights, one.weights)
    np.testing.assert_array_equal(average_models([one, LinearModel(3 * np.ones((2, 3)))]).weights,
                                  2 * np.ones((2, 3)))
    with pytest.raises(DomainError):
        average_models([])
    with pytest.raises(DomainError):
        average_models([one, LinearModel(np.ones((3, 3)))])


@settings(max_examples=50, deadline=None)
@given(st.lists(arrays(np.float64, (3, 5), elements=finite), min_size=1, max_size=6), st.randoms())
def test_average_permutation_and_naive_oracle(ws, rnd):
    models = [LinearModel(w) for w in ws]
    avg = average_models(models)
    shuffled = list(models)
    rnd.shuffle(shuffled)
    np.testing.assert_allclose(average_models(shuffled).weights, avg.weights, atol=1e-12, rtol=0)
    naive = np.zeros((3, 5))
    for i in range(3):
        for j in range(5):
            total = 0.0
            for w in ws:
                total += w[i, j]
            naive[i, j] = total / len(ws)
    np.testing.assert_allclose(avg.weights, naive, atol=1e-12, rtol=0)


# --- subsampling -----------------------------------------------------------

def test_subsample_per_class():
    d = make_dataset(70)
    a = subsample_per_class(d, 2, _rng(0))
    b = subsample_per_class(d, 2, _rng(1))
    assert len(a) == 14
    np.testing.assert_array_equal(a.class_counts(), np.full(7, 2))
    np.testing.assert_array_equal(a.class_counts(), b.class_counts())
    assert not np.array_equal(a.X, b.X)
    assert len(subsample_per_class(d, 50, _rng(0))) == 70


# --- greedy selection -----------------------------------------------------

problems = st.tuples(st.integers(4, 25), st.integers(1, 6), st.integers(0, 2**32 - 1))


def _problem(n, p, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, p))
    t = np.sign(A @ rng.normal(size=p) + rng.normal(size=n))
    t[t == 0] = 1.0
    return A, t


@settings(max_examples=60, deadline=None)
@given(problems, st.floats(0.01, 10.0))
def test_greedy_risk_monotone_and_exact(prob, lam):
    A, t = _problem(*prob)
    path = greedy_ridge(A, t, lam, A.shape[1])
    assert all(b <= a + 1e-9 for a, b in zip(path.risks, path.risks[1:]))
    for k, risk in enumerate(path.risks):
        assert risk == pytest.approx(ridge_risk(A, t, lam, path.selected[:k]), rel=1e-8, abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(problems, st.floats(0.01, 10.0))
def test_greedy_step_is_best_single_addition(prob, lam):
    A, t = _problem(*prob)
    path = greedy_ridge(A, t, lam, A.shape[1])
    for k, j in enumerate(path.selected):
        base = path.selected[:k]
        best = min(ridge_risk(A, t, lam, base + [c]) for c in range(A.shape[1]) if c not in base)
        assert ridge_risk(A, t, lam, base + [j]) <= best + 1e-8 * max(1.0, best)


def test_greedy_full_budget_equals_ridge_oracle():
    A, t = _problem(30, 5, 7)
    path = greedy_ridge(A, t, 0.5, 5)
    Ac, tc = A - A.mean(0), t - t.mean()
    w = np.linalg.solve(Ac.T @ Ac + 0.5 * np.eye(5), Ac.T @ tc)
    order = np.argsort(path.selected)
    np.testing.assert_allclose(path.coef[order], w, atol=1e-9)
    assert path.intercept == pytest.approx(t.mean() - A.mean(0) @ w)


def _sources(k, d, n, seed):
    rng = np.random.default_rng(seed)
    return [LinearModel(rng.normal(size=(k, d + 1))) for _ in range(n)]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 3), st.integers(0, 2**32 - 1))
def test_collapsed_model_equals_atom_combination(n_src, seed):
    data = make_dataset(40, d=4, k=3, seed=seed % 1000)
    sources = _sources(3, 4, n_src, seed)
    res = greedy_tl_fit(data, sources, GreedyTLConfig())
    probe = np.random.default_rng(seed).normal(size=(25, 4))
    direct = np.zeros((25, 3))
    for c, path in enumerate(res.paths):
        atoms = source_atoms(probe, res.sources, c)
        direct[:, c] = path.intercept + atoms[:, path.selected] @ path.coef
    np.testing.assert_allclose(res.model.scores(probe), direct, atol=1e-9, rtol=0)


def test_duplicate_source_is_ignored():
    data = make_dataset(50, d=4, k=3, seed=1)
    s = _sources(3, 4, 2, 9)
    once = greedy_tl(data, s, GreedyTLConfig())
    twice = greedy_tl(data, [s[0], s[0], s[1]], GreedyTLConfig())
    np.testing.assert_array_equal(once.weights, twice.weights)


def test_no_sources_is_plain_ridge():
    data = make_dataset(50, d=4, k=3, seed=2)
    m = greedy_tl(data, [], GreedyTLConfig(budget=4, tl_lambda=0.7))
    Xc = data.X - data.X.mean(0)
    for c in range(3):
        t = np.where(data.y == c, 1.0, -1.0)
        w = np.linalg.solve(Xc.T @ Xc + 0.7 * np.eye(4), Xc.T @ (t - t.mean()))
        np.testing.assert_allclose(m.weights[c, :4], w, atol=1e-9)
        assert m.weights[c, 4] == pytest.approx(t.mean() - data.X.mean(0) @ w)


def test_perfect_source_selected_first():
    rng = np.random.default_rng(4)
    centers = 4.0 * np.eye(3, 4)
    y = np.arange(60) % 3
    X = centers[y] + 0.3 * rng.normal(size=(60, 4))
    perfect = LinearModel(np.hstack([centers, -8.0 * np.ones((3, 1))]))
    assert np.mean(perfect.predict(X) == y) == 1.0
    data = Dataset(X, y, 3)
    res = greedy_tl_fit(data, [perfect], GreedyTLConfig(budget=1))
    for c, path in enumerate(res.paths):
        A = source_atoms(X, res.sources, c)
        t = np.where(y == c, 1.0, -1.0)
        best = min(range(A.shape[1]), key=lambda j: (ridge_risk(A, t, 1.0, [j]), j))
        assert path.selected == [best] == [4]
    assert np.mean(res.model.predict(X) == y) >= np.mean(perfect.predict(X) == y)


def test_greedy_tl_errors_and_subsample():
    data = make_dataset(70, d=4)
    with pytest.raises(DomainError):
        greedy_tl(data.subset([]), [], GreedyTLConfig())
    with pytest.raises(DomainError):
        greedy_tl(data, [LinearModel.zeros(7, 5)], GreedyTLConfig())
    res = greedy_tl_fit(data, [], GreedyTLConfig(per_class_sample=2), _rng(0))
    assert len(res.data) == 14
