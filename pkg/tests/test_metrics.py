import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from geoleak.clustering import POI
from geoleak.errors import RegressionError
from geoleak.metrics import (MatchResult, aggregate_reports, fit_exposure_regression, fit_ols, match_pois,
                             poi_weights, precision_recall, score_counts, weighted_discovery)
from geoleak.trace import GeoPoint
from oracles import normal_equations


def poi(pid, north_m=0.0, dwell=1):
    return POI(pid, "u", GeoPoint(31.25 + north_m / 111_195.0, 34.79), (), dwell)


def test_match_examples():
    m = match_pois([poi("t0", 50)], [poi("a0")])
    assert [p[:2] for p in m.pairs] == [("t0", "a0")]
    m = match_pois([poi("t0", 300), poi("t1", 100)], [poi("a0")])
    assert [p[:2] for p in m.pairs] == [("t1", "a0")] and m.unmatched_traffic == ["t0"]
    m = match_pois([poi("t0", 10_000)], [poi("a0")])
    assert m.pairs == [] and m.unmatched_agent == ["a0"]


def test_match_globally_nearest_first():
    # per-POI greedy from t0 would steal a1; global order pairs t0-a0, t1-a1
    traffic = [poi("t0", 200), poi("t1", 420)]
    agent = [poi("a0", 0), poi("a1", 400)]
    m = match_pois(traffic, agent)
    assert sorted(p[:2] for p in m.pairs) == [("t0", "a0"), ("t1", "a1")]


def test_precision_recall_examples():
    r = score_counts(282, 205, 1053)
    assert r.precision == pytest.approx(0.727, abs=0.0005)
    assert r.recall == pytest.approx(0.195, abs=0.0005)
    z = precision_recall(MatchResult([]), 0)
    assert (z.precision, z.recall) == (0.0, 0.0)


def test_aggregate_is_micro():
    a = score_counts(10, 5, 20)
    b = score_counts(2, 2, 2)
    a.weighted_discovery, b.weighted_discovery = 0.2, 0.8
    agg = aggregate_reports([a, b])
    assert (agg.total, agg.true_positive, agg.benchmark) == (12, 7, 22)
    assert agg.precision == 7 / 12 and agg.recall == 7 / 22
    assert agg.weighted_discovery == pytest.approx(0.5)


def test_weights_examples():
    h = 3_600_000
    assert poi_weights([poi("a", dwell=8 * h), poi("b", dwell=2 * h)]) == pytest.approx({"a": 0.8, "b": 0.2})
    assert poi_weights([poi("a", dwell=5)]) == {"a": 1.0}
    w = poi_weights([poi("a", dwell=5 * h), poi("b", dwell=3 * h), poi("c", dwell=2 * h)])
    assert w == pytest.approx({"a": 0.5, "b": 0.3, "c": 0.2})
    assert poi_weights([]) == {}
    assert poi_weights([poi("a", dwell=0), poi("b", dwell=0)]) == {"a": 0.5, "b": 0.5}


def test_weighted_discovery_examples():
    weights = {"home": 0.5, "work": 0.35, **{f"m{i}": 0.15 / 8 for i in range(8)}}
    m = MatchResult([("t0", "home", 1.0), ("t1", "work", 2.0)])
    assert weighted_discovery(m, weights) == pytest.approx(0.85, abs=1e-12)
    assert weighted_discovery(MatchResult([]), weights) == 0
    everything = MatchResult([(f"t{k}", a, 0.0) for k, a in enumerate(weights)])
    assert weighted_discovery(everything, weights) == pytest.approx(1.0, abs=1e-12)


offsets = st.lists(st.floats(0, 3000), max_size=8)


@given(offsets, offsets, st.floats(0, 3000))
@settings(max_examples=80)
def test_match_properties(t_off, a_off, extra):
    traffic = [poi(f"t{i}", x) for i, x in enumerate(t_off)]
    agent = [poi(f"a{i}", x, dwell=1 + i) for i, x in enumerate(a_off)]
    m = match_pois(traffic, agent)
    assert len(m.pairs) <= min(len(traffic), len(agent))
    assert m == match_pois(traffic, agent)
    r1 = precision_recall(m, len(agent))
    m2 = match_pois(traffic + [poi("tx", extra)], agent)
    r2 = precision_recall(m2, len(agent))
    assert r2.true_positive >= r1.true_positive
    assert r2.recall >= r1.recall
    w = poi_weights(agent)
    if agent:
        assert sum(w.values()) == pytest.approx(1.0, abs=1e-9)
        wd = weighted_discovery(m, w)
        assert wd >= 0
        assert (abs(wd - 1) < 1e-9) == (len(m.pairs) == len(agent))


# --- regression ------------------------------------------------------------------

def _rows(X, y):
    return [{"coverage": a, "leak_rate": b, "relative_stdev": c, "weighted_discovery": v}
            for (a, b, c), v in zip(X, y)]


def test_regression_planted():
    rng = np.random.default_rng(5)
    X = np.column_stack([rng.random(60), rng.random(60) * 3, rng.random(60) * 2])
    y = 0.6 + 0.5 * X[:, 0] + 0.0 * X[:, 1] - 0.1 * X[:, 2] + rng.normal(0, 1e-6, 60)
    fit = fit_exposure_regression(_rows(X, y))
    c = fit.coefficients
    assert c["intercept"] == pytest.approx(0.6, abs=1e-3)
    assert c["coverage"] == pytest.approx(0.5, abs=1e-3)
    assert c["leak_rate"] == pytest.approx(0.0, abs=1e-3)
    assert c["relative_stdev"] == pytest.approx(-0.1, abs=1e-3)


@pytest.mark.parametrize("seed", range(5))
def test_regression_matches_normal_equations(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(8, 80))
    X = rng.random((n, 3)) * [1, 5, 2]
    y = X @ rng.normal(size=3) + rng.normal() + rng.normal(0, 0.3, n)
    fit = fit_exposure_regression(_rows(X, y))
    beta, se, r2 = normal_equations(X, y)
    keys = ["intercept", "coverage", "leak_rate", "relative_stdev"]
    np.testing.assert_allclose([fit.coefficients[k] for k in keys], beta, rtol=1e-6, atol=1e-12)
    np.testing.assert_allclose([fit.std_errors[k] for k in keys], se, rtol=1e-6)
    assert fit.r2 == pytest.approx(r2, rel=1e-6)
    A = np.column_stack([np.ones(n), X])
    resid = y - A @ np.array([fit.coefficients[k] for k in keys])
    assert np.all(np.abs(A.T @ resid) < 1e-8 * max(1.0, np.abs(y).sum()))
    assert fit.df == n - 4
    assert fit.adjusted_r2 == pytest.approx(1 - (1 - fit.r2) * (n - 1) / (n - 4))
    assert fit.f_statistic == pytest.approx((fit.r2 / 3) / ((1 - fit.r2) / (n - 4)))


def test_regression_exact_fit():
    X = np.array([[0.1, 1, 0.5], [0.2, 3, 0.1], [0.5, 2, 0.9], [0.7, 5, 0.3], [0.9, 4, 0.2], [0.3, 1, 0.8]])
    y = 0.597 + 0.559 * X[:, 0] - 0.2 * X[:, 1] + 0.05 * X[:, 2]
    fit = fit_ols(X, y, ["coverage", "leak_rate", "relative_stdev"])
    assert fit.r2 == 1.0
    assert math.isinf(fit.f_statistic)


def test_regression_errors():
    X = np.array([[0.1, 1, 0.5]] * 4)
    with pytest.raises(RegressionError):
        fit_exposure_regression(_rows(X, [1, 2, 3, 4]))
    collinear = np.array([[k, 2 * k, 1.0] for k in range(8)], dtype=float)
    with pytest.raises(RegressionError, match="rank"):
        fit_exposure_regression(_rows(collinear, np.arange(8.0)))
