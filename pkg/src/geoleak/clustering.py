"""Stay-point and POI inference for sparse, bursty location streams.

Inputs are any objects with ``user_id``, ``ts`` (ms) and ``point`` attributes,
so agent samples and leaked observations cluster the same way.
"""
from __future__ import annotations

import json
import logging
import os
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ConfigError, IngestError
from .trace import HOUR_MS, MINUTE_MS, GeoPoint, TimeWindow, haversine

log = logging.getLogger(__name__)

ALGORITHMS = ("incremental", "dbscan", "stdbscan")


@dataclass(frozen=True)
class ClusterConfig:
    dist_threshold_m: float = 500.0
    time_threshold_ms: int = 30 * MINUTE_MS
    max_gap_ms: int = 6 * HOUR_MS
    eps_spatial_m: float = 500.0
    eps_temporal_ms: int = 30 * MINUTE_MS
    min_pts: int = 5
    merge_dist_m: float = 500.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not v > 0:
                raise ConfigError(f"cluster parameter {k} must be positive, got {v}")


@dataclass(frozen=True)
class StayPoint:
    user_id: str
    centroid: GeoPoint
    window: TimeWindow
    member_count: int
    member_refs: tuple[int, ...]


@dataclass(frozen=True)
class POI:
    poi_id: str
    user_id: str
    centroid: GeoPoint
    visits: tuple[StayPoint, ...]
    dwell_ms: int
    weight: float = 0.0


def _mean_point(samples, idx) -> GeoPoint:
    return GeoPoint(sum(samples[i].point.lat for i in idx) / len(idx),
                    sum(samples[i].point.lon for i in idx) / len(idx))


def _staypoint(samples, idx) -> StayPoint:
    ts = [samples[i].ts for i in idx]
    return StayPoint(samples[idx[0]].user_id, _mean_point(samples, idx),
                     TimeWindow(min(ts), max(ts)), len(idx), tuple(idx))


def incremental_cluster(samples, cfg: ClusterConfig = ClusterConfig()) -> list[StayPoint]:
    """Single-pass stay-point detection with a bound on the inter-sample gap.

    A sample extends the open cluster when it lies within the distance
    threshold of the running centroid and follows the previous sample by no
    more than ``max_gap_ms``. Closed clusters lasting at least the time
    threshold are emitted.
    """
    out: list[StayPoint] = []
    members: list[int] = []
    sum_lat = sum_lon = 0.0

    def flush():
        if len(members) >= 2 and samples[members[-1]].ts - samples[members[0]].ts >= cfg.time_threshold_ms:
            out.append(_staypoint(samples, members))

    for i, s in enumerate(samples):
        if members:
            n = len(members)
            near = haversine(s.point.lat, s.point.lon, sum_lat / n, sum_lon / n) <= cfg.dist_threshold_m
            if near and s.ts - samples[members[-1]].ts <= cfg.max_gap_ms:
                members.append(i)
                sum_lat += s.point.lat
                sum_lon += s.point.lon
                continue
            flush()
        members = [i]
        sum_lat, sum_lon = s.point.lat, s.point.lon
    if members:
        flush()
    return out


def merge_stays(staypoints, merge_dist_m: float = 500.0) -> list[POI]:
    """Fold recurring stay points into POIs (earliest matching POI wins)."""
    groups: list[list[StayPoint]] = []
    centroids: list[tuple[float, float, int]] = []  # sum_lat, sum_lon, weight
    for sp in sorted(staypoints, key=lambda s: (s.window.start, s.window.end)):
        for k, (slat, slon, w) in enumerate(centroids):
            if haversine(sp.centroid.lat, sp.centroid.lon, slat / w, slon / w) <= merge_dist_m:
                groups[k].append(sp)
                centroids[k] = (slat + sp.centroid.lat * sp.member_count,
                                slon + sp.centroid.lon * sp.member_count, w + sp.member_count)
                break
        else:
            groups.append([sp])
            centroids.append((sp.centroid.lat * sp.member_count,
                              sp.centroid.lon * sp.member_count, sp.member_count))
    pois = []
    for k, (visits, (slat, slon, w)) in enumerate(zip(groups, centroids)):
        user = visits[0].user_id
        pois.append(POI(f"{user}#{k}", user, GeoPoint(slat / w, slon / w), tuple(visits),
                        sum(v.window.duration for v in visits)))
    return pois


def incremental_pois(samples, cfg: ClusterConfig = ClusterConfig()) -> list[POI]:
    return merge_stays(incremental_cluster(samples, cfg), cfg.merge_dist_m)


def _arrays(samples):
    return (np.array([s.point.lat for s in samples], dtype=np.float64),
            np.array([s.point.lon for s in samples], dtype=np.float64),
            np.array([s.ts for s in samples], dtype=np.int64))


def density_labels(samples, eps_spatial_m: float, min_pts: int,
                   eps_temporal_ms: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """DBSCAN labels (-1 noise) and core flags; optional temporal predicate.

    Neighbourhoods include the point itself. Clusters are numbered in the
    order their first core point appears in the input.
    """
    if not len(samples):
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=bool)
    lat, lon, ts = _arrays(samples)
    eps_t = -1.0 if eps_temporal_ms is None or np.isinf(eps_temporal_ms) else float(eps_temporal_ms)
    indptr, indices = kernels.neighbor_lists(lat, lon, ts, float(eps_spatial_m), eps_t)
    return kernels.dbscan_expand(indptr, indices, int(min_pts))


def _clusters(labels) -> list[list[int]]:
    groups = defaultdict(list)
    for i, lab in enumerate(labels):
        if lab >= 0:
            groups[int(lab)].append(i)
    return [groups[k] for k in sorted(groups)]


def dbscan_cluster(samples, eps_spatial_m: float = 500.0, min_pts: int = 5) -> list[POI]:
    labels, _ = density_labels(samples, eps_spatial_m, min_pts)
    pois = []
    for k, idx in enumerate(_clusters(labels)):
        sp = _staypoint(samples, idx)
        pois.append(POI(f"{sp.user_id}#{k}", sp.user_id, sp.centroid, (sp,), sp.window.duration))
    return pois


def stdbscan_cluster(samples, eps_spatial_m: float = 500.0, eps_temporal_ms: float = 30 * MINUTE_MS,
                     min_pts: int = 5, merge_dist_m: float | None = 500.0) -> list[POI]:
    """Spatio-temporal DBSCAN; raw clusters recurring at one place are merged.

    With ``merge_dist_m=None`` every raw cluster is returned as its own POI.
    """
    labels, _ = density_labels(samples, eps_spatial_m, min_pts, eps_temporal_ms)
    stays = [_staypoint(samples, idx) for idx in _clusters(labels)]
    if merge_dist_m is not None:
        return merge_stays(stays, merge_dist_m)
    return [POI(f"{sp.user_id}#{k}", sp.user_id, sp.centroid, (sp,), sp.window.duration)
            for k, sp in enumerate(stays)]


def cluster_pois(samples, algo: str, cfg: ClusterConfig = ClusterConfig()) -> list[POI]:
    samples = sorted(samples, key=lambda s: s.ts)
    if algo == "incremental":
        return incremental_pois(samples, cfg)
    if algo == "dbscan":
        return dbscan_cluster(samples, cfg.eps_spatial_m, cfg.min_pts)
    if algo == "stdbscan":
        return stdbscan_cluster(samples, cfg.eps_spatial_m, cfg.eps_temporal_ms,
                                cfg.min_pts, cfg.merge_dist_m)
    raise ConfigError(f"unknown clustering algorithm {algo!r}")


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("GEOLEAK_THREADS", "1")))
    except ValueError:
        return 1


def cluster_by_user(samples, algo: str, cfg: ClusterConfig = ClusterConfig(),
                    users=None) -> dict[str, list[POI]]:
    """Cluster each user independently; results keyed by sorted user id."""
    by_user = defaultdict(list)
    for s in samples:
        by_user[s.user_id].append(s)
    keys = sorted(set(by_user) | set(users or ()))
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        results = pool.map(lambda u: cluster_pois(by_user.get(u, []), algo, cfg), keys)
        return dict(zip(keys, results))


def semantic_filter(pois, geocoder) -> list[POI]:
    """Drop POIs whose centroid reverse-geocodes to a highway."""
    kept = []
    for p in pois:
        try:
            cat = geocoder.category(p.centroid)
        except Exception as exc:  # any backend failure keeps the POI
            log.warning("geocoder lookup failed for %s: %s", p.poi_id, exc)
            cat = "unknown"
        if cat != "highway":
            kept.append(p)
    return kept


# --- serialization -------------------------------------------------------------

def poi_to_dict(p: POI) -> dict:
    return {
        "poi_id": p.poi_id,
        "user_id": p.user_id,
        "lat": p.centroid.lat,
        "lon": p.centroid.lon,
        "dwell_ms": p.dwell_ms,
        "weight": p.weight,
        "visits": [{"start_ms": v.window.start, "end_ms": v.window.end,
                    "member_count": v.member_count, "lat": v.centroid.lat,
                    "lon": v.centroid.lon} for v in p.visits],
    }


def poi_from_dict(d: dict) -> POI:
    user = str(d["user_id"])
    visits = tuple(StayPoint(user, GeoPoint(v["lat"], v["lon"]), TimeWindow(v["start_ms"], v["end_ms"]),
                             int(v["member_count"]), ()) for v in d.get("visits", ()))
    return POI(str(d["poi_id"]), user, GeoPoint(d["lat"], d["lon"]), visits,
               int(d.get("dwell_ms", 0)), float(d.get("weight", 0.0)))


def write_pois_json(path, pois_by_user: dict[str, list[POI]], algo: str, cfg: ClusterConfig) -> None:
    doc = {
        "algo": algo,
        "config": asdict(cfg),
        "users": {u: [poi_to_dict(p) for p in pois] for u, pois in sorted(pois_by_user.items())},
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def read_pois_json(path) -> dict[str, list[POI]]:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise IngestError(f"cannot read POI file {path}: {exc}") from exc
    try:
        return {u: [poi_from_dict(p) for p in pois] for u, pois in doc["users"].items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise IngestError(f"{path}: malformed POI document ({exc})") from exc


def with_weights(pois, weights: dict[str, float]) -> list[POI]:
    return [replace(p, weight=weights.get(p.poi_id, 0.0)) for p in pois]
