"""Geodesic primitives and location-trace types shared across the toolkit."""
from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import ConfigError, IngestError

EARTH_RADIUS_M = 6_371_000.0
HOUR_MS = 3_600_000
MINUTE_MS = 60_000


@dataclass(frozen=True, order=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0) or not (-180.0 <= self.lon <= 180.0):
            raise ValueError(f"invalid coordinate ({self.lat}, {self.lon})")

    def format(self) -> tuple[str, str]:
        return f"{self.lat:.7f}", f"{self.lon:.7f}"


class Source(str, Enum):
    AGENT = "agent"
    TRAFFIC = "traffic"


@dataclass(frozen=True)
class LocationSample:
    user_id: str
    ts: int  # UTC epoch milliseconds
    point: GeoPoint
    source: Source = Source.AGENT


@dataclass(frozen=True)
class GeoFence:
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def __post_init__(self):
        if not (self.lat_min < self.lat_max and self.lon_min < self.lon_max):
            raise ConfigError(f"degenerate geo-fence {self}")
        # validates the corners
        GeoPoint(self.lat_min, self.lon_min)
        GeoPoint(self.lat_max, self.lon_max)

    @classmethod
    def parse(cls, text: str) -> GeoFence:
        """Parse ``latmin,latmax,lonmin,lonmax``."""
        try:
            parts = [float(x) for x in text.split(",")]
        except ValueError as exc:
            raise ConfigError(f"bad fence {text!r}") from exc
        if len(parts) != 4:
            raise ConfigError(f"fence needs 4 values, got {text!r}")
        try:
            return cls(*parts)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def as_list(self) -> list[float]:
        return [self.lat_min, self.lat_max, self.lon_min, self.lon_max]


# Bounding box of Israel; the exact box used in the original study is unknown.
ISRAEL_FENCE = GeoFence(29.45, 33.35, 34.25, 35.90)


@dataclass(frozen=True)
class TimeWindow:
    start: int
    end: int

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError(f"window start {self.start} after end {self.end}")

    @property
    def duration(self) -> int:
        return self.end - self.start


def haversine_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters on a sphere of radius 6,371 km."""
    return haversine(a.lat, a.lon, b.lat, b.lon)


def haversine(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    p1 = math.radians(lat1)
    p2 = math.radians(lat2)
    dphi = p2 - p1
    dlmb = math.radians(lon2 - lon1)
    h = math.sin(dphi / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def contains(fence: GeoFence, p: GeoPoint) -> bool:
    return fence.lat_min <= p.lat <= fence.lat_max and fence.lon_min <= p.lon <= fence.lon_max


def hour_bucket(ts_ms: int) -> int:
    return ts_ms // HOUR_MS


def read_agent_csv(path) -> dict[str, list[LocationSample]]:
    """Load an agent trace file (``user_id,ts_ms,lat,lon``) grouped by user.

    Samples of each user are ordered by timestamp; ties keep file order.
    """
    path = Path(path)
    by_user: dict[str, list[LocationSample]] = defaultdict(list)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise IngestError(f"cannot read agent trace {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        missing = {"user_id", "ts_ms", "lat", "lon"} - set(reader.fieldnames or ())
        if missing:
            raise IngestError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                sample = LocationSample(
                    row["user_id"], int(row["ts_ms"]),
                    GeoPoint(float(row["lat"]), float(row["lon"])), Source.AGENT)
            except (TypeError, ValueError) as exc:
                raise IngestError(f"{path}:{lineno}: {exc}") from exc
            by_user[sample.user_id].append(sample)
    for samples in by_user.values():
        samples.sort(key=lambda s: s.ts)
    return dict(sorted(by_user.items()))


def write_agent_csv(path, samples) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "ts_ms", "lat", "lon"])
        for s in samples:
            lat, lon = s.point.format()
            w.writerow([s.user_id, s.ts, lat, lon])
