"""Reverse-geocoding category lookup used by the semantic POI filter."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

from .errors import ConfigError
from .trace import GeoPoint, haversine

UNKNOWN = "unknown"


class Geocoder(Protocol):
    def category(self, point: GeoPoint) -> str:
        """Category of the place at ``point`` (e.g. "highway"), or "unknown"."""


@dataclass(frozen=True)
class StubEntry:
    lat: float
    lon: float
    radius_m: float
    category: str


class StubGeocoder:
    """File-backed geocoder: nearest entry whose radius covers the query wins."""

    def __init__(self, entries):
        self.entries = list(entries)

    @classmethod
    def from_csv(cls, path) -> StubGeocoder:
        path = Path(path)
        entries = []
        try:
            with path.open(newline="") as fh:
                reader = csv.DictReader(fh)
                for lineno, row in enumerate(reader, start=2):
                    try:
                        entries.append(StubEntry(float(row["lat"]), float(row["lon"]),
                                                 float(row["radius_m"]), row["category"].strip()))
                    except (KeyError, TypeError, ValueError) as exc:
                        raise ConfigError(f"{path}:{lineno}: bad geocoder entry ({exc})") from exc
        except OSError as exc:
            raise ConfigError(f"cannot read geocoder stub {path}: {exc}") from exc
        return cls(entries)

    def category(self, point: GeoPoint) -> str:
        best, best_d = UNKNOWN, math.inf
        for e in self.entries:
            d = haversine(point.lat, point.lon, e.lat, e.lon)
            if d <= e.radius_m and d < best_d:
                best, best_d = e.category, d
        return best
