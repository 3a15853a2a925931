"""Coordinate extraction from captured traffic.

Payloads are scanned for decimal-degree literals, then narrowed by three
filters: outgoing direction, latitude/longitude pairing on equal capture
time, and a geo-fence.
"""
from __future__ import annotations

import base64
import binascii
import ipaddress
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable

from . import pcap
from .errors import ConfigError, IngestError
from .trace import ISRAEL_FENCE, GeoFence, GeoPoint, contains

log = logging.getLogger(__name__)


class Direction(str, Enum):
    OUTGOING = "outgoing"
    INCOMING = "incoming"


class Label(str, Enum):
    UNLABELED = "unlabeled"
    TRUE = "true"
    FALSE = "false"
    UNKNOWN = "unknown"


@dataclass(frozen=True)
class ExtractionConfig:
    device_subnet: ipaddress.IPv4Network = ipaddress.IPv4Network("10.0.0.0/8")
    fence: GeoFence = ISRAEL_FENCE
    int_digits: tuple[int, int] = (2, 2)
    frac_digits: tuple[int, int] = (7, 7)
    allow_sign: bool = False
    pair_window_ms: int = 0
    outgoing_filter: bool = True

    def __post_init__(self):
        if isinstance(self.device_subnet, str):
            try:
                object.__setattr__(self, "device_subnet", ipaddress.IPv4Network(self.device_subnet))
            except ValueError as exc:
                raise ConfigError(f"bad device subnet: {exc}") from exc
        for name in ("int_digits", "frac_digits"):
            lo, hi = getattr(self, name)
            if not 1 <= lo <= hi:
                raise ConfigError(f"{name} must be a non-empty range, got {(lo, hi)}")
        if self.pair_window_ms < 0:
            raise ConfigError("pair_window_ms must be >= 0")

    def pattern(self) -> re.Pattern[bytes]:
        return _pattern(self.int_digits, self.frac_digits, self.allow_sign)


_PATTERNS: dict = {}


def _pattern(int_digits, frac_digits, allow_sign) -> re.Pattern[bytes]:
    key = (int_digits, frac_digits, allow_sign)
    if key not in _PATTERNS:
        sign = rb"[-+]?" if allow_sign else b""
        body = (rb"[0-9]{%d,%d}\.[0-9]{%d,%d}" % (*int_digits, *frac_digits))
        _PATTERNS[key] = re.compile(rb"(?<![0-9.])" + sign + body + rb"(?![0-9.])")
    return _PATTERNS[key]


@dataclass(frozen=True)
class PacketRecord:
    index: int  # position in the source capture / log
    user_id: str
    ts: int
    direction: Direction
    src: str
    dst: str
    transport: str
    payload: bytes
    http_host: str | None = None


@dataclass(frozen=True)
class CoordinateCandidate:
    raw_text: str
    value: float
    ts: int = 0
    packet_ref: int = -1
    byte_offset: int = 0
    user_id: str = ""
    direction: Direction = Direction.OUTGOING
    http_host: str | None = None


@dataclass(frozen=True)
class GeoObservation:
    user_id: str
    ts: int
    point: GeoPoint
    direction: Direction = Direction.OUTGOING
    http_host: str | None = None
    packet_refs: tuple[int, int] = (-1, -1)
    label: Label = Label.UNLABELED

    def with_label(self, label: Label) -> GeoObservation:
        return replace(self, label=label)


@dataclass
class IngestResult:
    records: list[PacketRecord]
    skipped: int = 0
    warnings: list[str] = field(default_factory=list)


@dataclass
class FunnelResult:
    candidates: list[CoordinateCandidate]
    paired: list[GeoObservation]
    observations: list[GeoObservation]
    counts: dict[str, int]
    dropped_unpaired: int = 0
    dropped_invalid: int = 0


# --- HTTP ------------------------------------------------------------------

_REQUEST_LINE = re.compile(
    rb"^(?:GET|POST|PUT|HEAD|DELETE|OPTIONS|PATCH|CONNECT|TRACE) \S+ HTTP/1\.[01]\r?\n")
_HOST_HEADER = re.compile(rb"^host[ \t]*:[ \t]*([^\r\n]*)", re.IGNORECASE | re.MULTILINE)


def normalize_host(host: str) -> str:
    host = host.strip().lower().rstrip(".")
    if host.startswith("["):
        return host.split("]", 1)[0] + "]"
    return host.split(":", 1)[0]


def http_host(payload: bytes) -> str | None:
    """Host header of an HTTP/1.x request payload, lowercased without port."""
    if not _REQUEST_LINE.match(payload):
        return None
    end = payload.find(b"\r\n\r\n")
    headers = payload if end < 0 else payload[:end]
    m = _HOST_HEADER.search(headers, payload.find(b"\n") + 1)
    if not m:
        return None
    host = normalize_host(m.group(1).decode("ascii", "replace"))
    return host or None


# --- ingest ----------------------------------------------------------------

def _direction(src_ip: str, subnet) -> Direction:
    return Direction.OUTGOING if ipaddress.IPv4Address(src_ip) in subnet else Direction.INCOMING


def _split_endpoint(ep: str) -> tuple[str, int]:
    ip, port = ep.rsplit(":", 1)
    ipaddress.IPv4Address(ip)
    return ip, int(port)


def ingest_packet_log(path, cfg: ExtractionConfig) -> IngestResult:
    """Read the JSON Lines packet log; malformed lines are skipped and counted."""
    path = Path(path)
    try:
        fh = path.open("r", encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read packet log {path}: {exc}") from exc
    result = IngestResult([])
    with fh:
        for lineno, line in enumerate(fh):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                src_ip, _ = _split_endpoint(obj["src"])
                _split_endpoint(obj["dst"])
                transport = obj.get("transport", "tcp")
                if transport not in ("tcp", "udp", "other"):
                    raise ValueError(f"unknown transport {transport!r}")
                payload = base64.b64decode(obj.get("payload_b64", ""), validate=True)
                ts = obj["ts_ms"]
                if not isinstance(ts, int) or isinstance(ts, bool):
                    raise ValueError("ts_ms must be an integer")
                rec = PacketRecord(
                    index=lineno, user_id=str(obj["user_id"]), ts=ts,
                    direction=_direction(src_ip, cfg.device_subnet),
                    src=obj["src"], dst=obj["dst"], transport=transport,
                    payload=payload, http_host=http_host(payload))
            except (ValueError, KeyError, TypeError, AttributeError, binascii.Error) as exc:
                msg = f"{path}:{lineno + 1}: skipped malformed record ({exc})"
                log.warning(msg)
                result.warnings.append(msg)
                result.skipped += 1
                continue
            result.records.append(rec)
    return result


def ingest_pcap(path, cfg: ExtractionConfig) -> IngestResult:
    """Read a libpcap capture; the device-side IP address becomes the user id."""
    frames, warnings = pcap.read_pcap(path)
    records = []
    for f in frames:
        src_ip = f.src.rsplit(":", 1)[0]
        dst_ip = f.dst.rsplit(":", 1)[0]
        direction = _direction(src_ip, cfg.device_subnet)
        if direction is Direction.OUTGOING:
            user = src_ip
        elif ipaddress.IPv4Address(dst_ip) in cfg.device_subnet:
            user = dst_ip
        else:
            user = src_ip
        records.append(PacketRecord(f.index, user, f.ts_ms, direction, f.src, f.dst,
                                    f.transport, f.payload, http_host(f.payload)))
    return IngestResult(records, 0, list(warnings))


def read_packets(path, fmt: str, cfg: ExtractionConfig) -> IngestResult:
    if fmt == "jsonl":
        return ingest_packet_log(path, cfg)
    if fmt == "pcap":
        return ingest_pcap(path, cfg)
    raise ConfigError(f"unknown packet format {fmt!r}")


# --- scanning and filters ----------------------------------------------------

def scan_payload(payload: bytes, cfg: ExtractionConfig,
                 record: PacketRecord | None = None) -> list[CoordinateCandidate]:
    """All maximal coordinate-shaped literals in ``payload``, by byte offset."""
    found = []
    for m in cfg.pattern().finditer(payload):
        raw = m.group().decode("ascii")
        if record is None:
            cand = CoordinateCandidate(raw, float(raw), byte_offset=m.start())
        else:
            cand = CoordinateCandidate(raw, float(raw), record.ts, record.index, m.start(),
                                       record.user_id, record.direction, record.http_host)
        found.append(cand)
    return found


def filter_outgoing(items):
    """Keep records (or candidates/observations) travelling away from the device."""
    return [x for x in items if x.direction is Direction.OUTGOING]


def pair_coordinates(candidates: Iterable[CoordinateCandidate],
                     cfg: ExtractionConfig) -> tuple[list[GeoObservation], int, int]:
    """Greedily pair consecutive candidates of one user captured within the window.

    The first value of a pair is the latitude. Returns
    ``(observations, unpaired_dropped, invalid_dropped)``; pairs that do not
    form a valid coordinate are dropped as invalid.
    """
    cands = sorted(candidates, key=lambda c: (c.user_id, c.ts, c.packet_ref, c.byte_offset))
    out: list[GeoObservation] = []
    unpaired = invalid = 0
    i = 0
    n = len(cands)
    while i < n:
        a = cands[i]
        if i + 1 < n:
            b = cands[i + 1]
            if b.user_id == a.user_id and b.ts - a.ts <= cfg.pair_window_ms:
                try:
                    point = GeoPoint(a.value, b.value)
                except ValueError:
                    invalid += 1
                else:
                    out.append(GeoObservation(a.user_id, a.ts, point, a.direction,
                                              a.http_host or b.http_host,
                                              (a.packet_ref, b.packet_ref)))
                i += 2
                continue
        unpaired += 1
        i += 1
    return out, unpaired, invalid


def geofence_filter(observations, fence: GeoFence) -> list[GeoObservation]:
    return [o for o in observations if contains(fence, o.point)]


def extract_leaks(records: Iterable[PacketRecord], cfg: ExtractionConfig) -> FunnelResult:
    """Scan, filter by direction (if enabled), pair and geo-fence.

    ``counts`` records the size of each stage: packets, candidates,
    outgoing (candidates surviving the direction filter), paired, geofenced.
    """
    records = list(records)
    candidates = [c for r in records for c in scan_payload(r.payload, cfg, r)]
    kept = filter_outgoing(candidates) if cfg.outgoing_filter else candidates
    paired, unpaired, invalid = pair_coordinates(kept, cfg)
    final = geofence_filter(paired, cfg.fence)
    counts = {
        "packets": len(records),
        "candidates": len(candidates),
        "outgoing": len(kept),
        "paired": len(paired),
        "geofenced": len(final),
    }
    return FunnelResult(candidates, paired, final, counts, unpaired, invalid)


# --- observation files ---------------------------------------------------------

def observation_to_dict(o: GeoObservation) -> dict:
    lat, lon = o.point.format()
    return {
        "user_id": o.user_id,
        "ts_ms": o.ts,
        "lat": float(lat),
        "lon": float(lon),
        "direction": o.direction.value,
        "http_host": o.http_host,
        "packet_refs": list(o.packet_refs),
        "label": o.label.value,
    }


def observation_from_dict(d: dict) -> GeoObservation:
    return GeoObservation(
        user_id=str(d["user_id"]), ts=int(d["ts_ms"]),
        point=GeoPoint(float(d["lat"]), float(d["lon"])),
        direction=Direction(d.get("direction", "outgoing")),
        http_host=d.get("http_host"),
        packet_refs=tuple(d.get("packet_refs", (-1, -1))),
        label=Label(d.get("label", "unlabeled")))


def write_observations(path, observations) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for o in observations:
            fh.write(json.dumps(observation_to_dict(o), sort_keys=True) + "\n")


def read_observations(path) -> list[GeoObservation]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IngestError(f"cannot read observations {path}: {exc}") from exc
    out = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            out.append(observation_from_dict(json.loads(line)))
        except (ValueError, KeyError, TypeError) as exc:
            raise IngestError(f"{path}:{lineno}: {exc}") from exc
    return out


def stage_label_counts(observations) -> dict[str, int]:
    c = Counter(o.label.value for o in observations)
    return {lab.value: c.get(lab.value, 0) for lab in Label}
