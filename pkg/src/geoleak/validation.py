"""Ground-truth labeling of leaked coordinates and per-user leakage measures."""
from __future__ import annotations

import csv
import logging
import math
import statistics
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, fields
from enum import Enum
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ConfigError, InconsistentInputError, IngestError
from .extraction import GeoObservation, Label
from .trace import MINUTE_MS, LocationSample, hour_bucket

log = logging.getLogger(__name__)


class LeakGroup(str, Enum):
    HIGH = "high"
    MEDIUM = "medium"
    LOW = "low"
    NO_LEAKAGE = "no_leakage"


@dataclass(frozen=True)
class LabelingConfig:
    time_window_ms: int = 10 * MINUTE_MS
    dist_threshold_m: float = 250.0

    def __post_init__(self):
        if self.time_window_ms <= 0 or self.dist_threshold_m <= 0:
            raise ConfigError("labeling window and distance must be positive")


@dataclass(frozen=True)
class LeakageStats:
    user_id: str
    active_time_hours: int
    validated_leaks: int
    leak_interval_hours: float
    group: LeakGroup
    exposed_hours: int
    coverage_rate: float
    relative_stdev: float

    @property
    def leak_rate(self) -> float:
        """Validated leaks per active hour."""
        if self.active_time_hours == 0:
            return 0.0
        return self.validated_leaks / self.active_time_hours


def label_observations(observations, agent_samples, cfg: LabelingConfig = LabelingConfig()):
    """Label each observation 'true', 'false' or 'unknown' against one user's agent trace.

    Among agent samples within the time window, the spatially nearest one
    decides: closer than the threshold is 'true', otherwise 'false'. No sample
    in the window gives 'unknown'.
    """
    observations = list(observations)
    if not observations:
        return []
    samples = sorted(agent_samples, key=lambda s: s.ts)
    d = kernels.nearest_in_window(
        np.array([o.ts for o in observations], dtype=np.int64),
        np.array([o.point.lat for o in observations], dtype=np.float64),
        np.array([o.point.lon for o in observations], dtype=np.float64),
        np.array([s.ts for s in samples], dtype=np.int64),
        np.array([s.point.lat for s in samples], dtype=np.float64),
        np.array([s.point.lon for s in samples], dtype=np.float64),
        int(cfg.time_window_ms))
    out = []
    for o, dist in zip(observations, d):
        if math.isinf(dist):
            label = Label.UNKNOWN
        elif dist < cfg.dist_threshold_m:
            label = Label.TRUE
        else:
            label = Label.FALSE
        out.append(o.with_label(label))
    return out


def label_all(observations, agent_by_user: dict[str, list[LocationSample]],
              cfg: LabelingConfig = LabelingConfig()) -> list[GeoObservation]:
    """Label a multi-user observation list, preserving input order."""
    by_user = defaultdict(list)
    for i, o in enumerate(observations):
        by_user[o.user_id].append(i)
    out: list = [None] * len(observations)
    for user, idx in by_user.items():
        labeled = label_observations([observations[i] for i in idx], agent_by_user.get(user, []), cfg)
        for i, o in zip(idx, labeled):
            out[i] = o
    return out


def active_time(agent_samples) -> int:
    return len({hour_bucket(s.ts) for s in agent_samples})


def leakage_group(interval_hours: float, validated: int) -> LeakGroup:
    if validated == 0:
        return LeakGroup.NO_LEAKAGE
    if interval_hours < 1:
        return LeakGroup.HIGH
    if interval_hours <= 6:
        return LeakGroup.MEDIUM
    return LeakGroup.LOW


def leakage_rate(labeled, active_hours: int) -> tuple[float, LeakGroup]:
    """Hours of activity per validated leak, and the leakage-rate group."""
    n_true = sum(1 for o in labeled if o.label is Label.TRUE)
    if n_true == 0:
        return math.inf, LeakGroup.NO_LEAKAGE
    if active_hours <= 0:
        raise InconsistentInputError(f"{n_true} validated leaks but no active agent hours")
    interval = active_hours / n_true
    return interval, leakage_group(interval, n_true)


def exposed_hours(labeled) -> int:
    """Hours containing at least two validated leaks."""
    per_hour = Counter(hour_bucket(o.ts) for o in labeled if o.label is Label.TRUE)
    return sum(1 for c in per_hour.values() if c >= 2)


def coverage_rate(exposed: int, agent_hours: int) -> float:
    if agent_hours <= 0:
        return 0.0
    rate = exposed / agent_hours
    if rate > 1.0:
        log.warning("coverage %d/%d exceeds 1; clamped", exposed, agent_hours)
        return 1.0
    return max(rate, 0.0)


def leaks_per_hour(labeled, agent_samples) -> list[int]:
    """Validated leak counts for each active agent hour (zeros included)."""
    hours = sorted({hour_bucket(s.ts) for s in agent_samples})
    per_hour = Counter(hour_bucket(o.ts) for o in labeled if o.label is Label.TRUE)
    return [per_hour.get(h, 0) for h in hours]


def leak_relative_stdev(series) -> float:
    series = list(series)
    if not series:
        return 0.0
    mean = statistics.fmean(series)
    if mean == 0:
        return 0.0
    return statistics.pstdev(series) / mean


def compute_stats(user_id: str, labeled, agent_samples) -> LeakageStats:
    active = active_time(agent_samples)
    n_true = sum(1 for o in labeled if o.label is Label.TRUE)
    interval, group = leakage_rate(labeled, active)
    exposed = exposed_hours(labeled)
    return LeakageStats(
        user_id=user_id,
        active_time_hours=active,
        validated_leaks=n_true,
        leak_interval_hours=interval,
        group=group,
        exposed_hours=exposed,
        coverage_rate=coverage_rate(exposed, active),
        relative_stdev=leak_relative_stdev(leaks_per_hour(labeled, agent_samples)),
    )


def compute_all_stats(labeled, agent_by_user) -> list[LeakageStats]:
    by_user = defaultdict(list)
    for o in labeled:
        by_user[o.user_id].append(o)
    users = sorted(set(by_user) | set(agent_by_user))
    return [compute_stats(u, by_user.get(u, []), agent_by_user.get(u, [])) for u in users]


STATS_COLUMNS = [f.name for f in fields(LeakageStats)] + ["leak_rate"]


def write_stats_csv(path, stats) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=STATS_COLUMNS, lineterminator="\n")
        w.writeheader()
        for s in stats:
            row = asdict(s)
            row["group"] = s.group.value
            row["leak_rate"] = s.leak_rate
            w.writerow({k: _fmt(v) for k, v in row.items()})


def _fmt(v):
    if isinstance(v, float):
        return "inf" if math.isinf(v) else repr(v)
    return v


def read_stats_csv(path) -> list[dict]:
    try:
        with Path(path).open(newline="") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise IngestError(f"cannot read stats {path}: {exc}") from exc

