"""POI scoring against the agent benchmark and the exposure regression."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import RegressionError
from .trace import haversine

log = logging.getLogger(__name__)

REGRESSORS = ("coverage", "leak_rate", "relative_stdev")


@dataclass
class MatchResult:
    pairs: list[tuple[str, str, float]]
    unmatched_traffic: list[str] = field(default_factory=list)
    unmatched_agent: list[str] = field(default_factory=list)


@dataclass
class ScoreReport:
    total: int
    true_positive: int
    benchmark: int
    precision: float
    recall: float
    weighted_discovery: float | None = None

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def match_pois(traffic_pois, agent_pois, match_dist_m: float = 500.0) -> MatchResult:
    """One-to-one matching, closest remaining (traffic, agent) pair first."""
    cand = []
    for i, t in enumerate(traffic_pois):
        for j, a in enumerate(agent_pois):
            d = haversine(t.centroid.lat, t.centroid.lon, a.centroid.lat, a.centroid.lon)
            if d <= match_dist_m:
                cand.append((d, i, j))
    cand.sort()
    used_t, used_a = set(), set()
    pairs = []
    for d, i, j in cand:
        if i in used_t or j in used_a:
            continue
        used_t.add(i)
        used_a.add(j)
        pairs.append((traffic_pois[i].poi_id, agent_pois[j].poi_id, d))
    return MatchResult(
        pairs,
        [p.poi_id for i, p in enumerate(traffic_pois) if i not in used_t],
        [p.poi_id for j, p in enumerate(agent_pois) if j not in used_a])


def score_counts(total: int, tp: int, benchmark: int) -> ScoreReport:
    precision = tp / total if total else 0.0
    if benchmark == 0:
        if total:
            log.warning("empty benchmark; recall defined as 0")
        recall = 0.0
    else:
        recall = tp / benchmark
    return ScoreReport(total, tp, benchmark, precision, recall)


def precision_recall(match: MatchResult, benchmark_size: int) -> ScoreReport:
    tp = len(match.pairs)
    return score_counts(tp + len(match.unmatched_traffic), tp, benchmark_size)


def aggregate_reports(reports) -> ScoreReport:
    """Micro-average: sum totals, true positives and benchmark sizes."""
    reports = list(reports)
    agg = score_counts(sum(r.total for r in reports), sum(r.true_positive for r in reports),
                       sum(r.benchmark for r in reports))
    wd = [r.weighted_discovery for r in reports if r.weighted_discovery is not None]
    if wd:
        agg.weighted_discovery = sum(wd) / len(wd)
    return agg


def poi_weights(benchmark_pois) -> dict[str, float]:
    """Share of total dwell time spent at each POI."""
    pois = list(benchmark_pois)
    if not pois:
        return {}
    total = sum(p.dwell_ms for p in pois)
    if total <= 0:
        log.warning("all POI dwell times are zero; using uniform weights")
        return {p.poi_id: 1.0 / len(pois) for p in pois}
    return {p.poi_id: p.dwell_ms / total for p in pois}


def weighted_discovery(match: MatchResult, weights: dict[str, float]) -> float:
    return sum(weights.get(agent_id, 0.0) for _, agent_id, _ in match.pairs)


@dataclass
class RegressionFit:
    coefficients: dict[str, float]
    std_errors: dict[str, float]
    r2: float
    adjusted_r2: float
    f_statistic: float
    residual_std_error: float
    df: int
    n: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def fit_ols(X: np.ndarray, y: np.ndarray, names) -> RegressionFit:
    """OLS with an intercept column prepended; classical standard errors.

    Solved through a QR factorisation of the design matrix.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, k = X.shape
    p = k + 1
    if n < p + 1:
        raise RegressionError(f"need at least {p + 1} rows for {k} regressors, got {n}")
    A = np.column_stack([np.ones(n), X])
    Q, R = np.linalg.qr(A)
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-10 * max(diag.max(), 1.0) or np.linalg.matrix_rank(A) < p:
        raise RegressionError("design matrix is rank deficient")
    beta = np.linalg.solve(R, Q.T @ y)
    resid = y - A @ beta
    sse = float(resid @ resid)
    sst = float(((y - y.mean()) ** 2).sum())
    df = n - p
    sigma2 = sse / df
    Rinv = np.linalg.inv(R)
    se = np.sqrt(np.sum(Rinv ** 2, axis=1) * sigma2)
    if sst > 0:
        r2 = max(0.0, min(1.0, 1.0 - sse / sst))
    else:
        r2 = 1.0 if sse == 0 else 0.0
    adj = 1.0 - (1.0 - r2) * (n - 1) / df
    if r2 >= 1.0:
        f = math.inf
    else:
        f = (r2 / k) / ((1.0 - r2) / df)
    keys = ["intercept", *names]
    return RegressionFit(
        coefficients={kk: float(b) for kk, b in zip(keys, beta)},
        std_errors={kk: float(s) for kk, s in zip(keys, se)},
        r2=r2, adjusted_r2=adj, f_statistic=f,
        residual_std_error=math.sqrt(sigma2), df=df, n=n)


def fit_exposure_regression(rows) -> RegressionFit:
    """Regress weighted POI discovery on coverage, leak rate and relative stdev.

    ``rows`` are mappings with keys ``coverage``, ``leak_rate``,
    ``relative_stdev`` and ``weighted_discovery``.
    """
    rows = list(rows)
    if len(rows) < 5:
        raise RegressionError(f"need at least 5 users, got {len(rows)}")
    X = np.array([[float(r[k]) for k in REGRESSORS] for r in rows])
    y = np.array([float(r["weighted_discovery"]) for r in rows])
    return fit_ols(X, y, REGRESSORS)
