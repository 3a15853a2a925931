"""Deterministic synthetic users: trajectories, agent traces and leaking traffic.

Randomness comes from one ``numpy.random.Generator(PCG64(seed))`` advanced in
a fixed order: for each user (outer loop) it draws POIs, then the daily
schedule (day loop inner), then agent-sample drops, installed apps, leak
bursts per app, and finally noise packets. Identical configuration and seed
give byte-identical output files.
"""
from __future__ import annotations

import base64
import hashlib
import json
import math
from bisect import bisect_right
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .attribution import write_installs
from .errors import ConfigError, JoinError
from .extraction import Label
from .trace import (EARTH_RADIUS_M, HOUR_MS, ISRAEL_FENCE, MINUTE_MS, GeoFence, GeoPoint,
                    LocationSample, Source, contains, haversine, write_agent_csv)

START_MS = 1_519_862_400_000  # 2018-03-01T00:00:00Z
DAY_MS = 24 * HOUR_MS
DEFAULT_TEMPLATE = "GET /v1/location?lat={LAT}&lon={LON}&v=2 HTTP/1.1\r\nHost: {HOST}\r\nUser-Agent: okhttp/3.8\r\n\r\n"


@dataclass(frozen=True)
class AppProfile:
    app_id: str
    install_prob: float
    hosts: tuple[str, ...] = ()
    mean_leaks_per_hour: float = 0.0  # Poisson rate while a burst is on
    burst_on_prob: float = 0.05  # per step, off -> on
    burst_off_prob: float = 0.3  # per step, on -> off
    payload_template: str = DEFAULT_TEMPLATE

    def __post_init__(self):
        object.__setattr__(self, "hosts", tuple(self.hosts))
        for name in ("install_prob", "burst_on_prob", "burst_off_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{self.app_id}: {name} must be a probability")
        if self.mean_leaks_per_hour < 0:
            raise ConfigError(f"{self.app_id}: negative leak rate")
        if self.mean_leaks_per_hour > 0:
            if not self.hosts:
                raise ConfigError(f"{self.app_id}: leaking app needs at least one host")
            for ph in ("{LAT}", "{LON}"):
                if self.payload_template.count(ph) != 1:
                    raise ConfigError(f"{self.app_id}: template must contain {ph} exactly once")

    @property
    def leaks(self) -> bool:
        return self.mean_leaks_per_hour > 0


@dataclass(frozen=True)
class NoiseProfile:
    float_noise_per_hour: float = 0.5
    incoming_recommendations_per_hour: float = 1.0
    outgoing_other_place_per_hour: float = 0.05
    fragment_prob: float = 0.1
    leak_jitter_m: float = 0.0
    agent_jitter_m: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigError(f"noise parameter {f.name} must be >= 0")
        if self.fragment_prob > 1:
            raise ConfigError("fragment_prob must be a probability")
        if self.leak_jitter_m > 10:
            raise ConfigError("leak jitter is limited to 10 m")

    @classmethod
    def none(cls) -> NoiseProfile:
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class LeakTier:
    """Share of users in a leakage tier; ``activity_scale`` multiplies burst onset."""
    name: str
    share: float
    activity_scale: float


DEFAULT_TIERS = (
    LeakTier("high", 0.3, 3.0),
    LeakTier("medium", 0.25, 0.2),
    LeakTier("low", 0.3, 0.02),
    LeakTier("none", 0.15, 0.0),
)

DEFAULT_APPS = (
    AppProfile("com.example.weather", 0.45, ("api.weather-example.com",), 10.0),
    AppProfile("com.example.taxi", 0.35, ("location.taxi-example.net",), 12.0,
               payload_template="POST /ride/ping HTTP/1.1\r\nHost: {HOST}\r\nContent-Type: "
                                "application/x-www-form-urlencoded\r\n\r\nlatitude={LAT}&longitude={LON}"),
    AppProfile("com.example.campus", 0.4, ("app.campus-example.org",), 10.0),
    AppProfile("com.example.puzzle", 0.3, ("n12.adnet-example.com",), 12.0,
               payload_template="GET /serve?zone=77&geo={LAT},{LON}&fmt=json HTTP/1.1\r\nHost: {HOST}\r\n\r\n"),
    AppProfile("com.example.maps", 0.5, ("maps.maps-example.com",), 10.0,
               payload_template="GET /maps/api/js?center={LAT}%2C{LON}&zoom=15 HTTP/1.1\r\nHost: {HOST}\r\n\r\n"),
    AppProfile("com.example.news", 0.35, ("geo.news-example.co",), 8.0),
    AppProfile("com.example.browser", 0.9),
    AppProfile("com.example.chat", 0.8),
    AppProfile("com.example.camera", 0.6),
    AppProfile("com.example.fitness", 0.25),
    AppProfile("com.example.shop", 0.3),
)

NOISE_HOST = "telemetry.metrics-example.net"
OTHER_PLACE_HOST = "geo.lookup-example.net"
RECOMMENDER_HOST = "recs.places-example.com"


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int = 42
    n_users: int = 20
    days: int = 14
    fence: GeoFence = ISRAEL_FENCE
    pois_per_user: tuple[int, int] = (4, 7)
    poi_radius_m: float = 10_000.0
    min_poi_separation_m: float = 1_000.0
    agent_period_ms: int = 20 * MINUTE_MS
    agent_availability: float = 0.7
    dwell_shares: tuple[float, float] = (0.5, 0.35)
    transit_speed_kmh: float = 40.0
    burst_step_ms: int = 10 * MINUTE_MS
    apps: tuple[AppProfile, ...] = DEFAULT_APPS
    tiers: tuple[LeakTier, ...] = DEFAULT_TIERS
    noise: NoiseProfile = field(default_factory=NoiseProfile)
    ensure_leaking_app: bool = True

    def __post_init__(self):
        lo, hi = self.pois_per_user
        if not 2 <= lo <= hi:
            raise ConfigError("pois_per_user must be a range with at least 2 POIs")
        if not 0.0 <= self.agent_availability <= 1.0:
            raise ConfigError("agent_availability must be a probability")
        if self.n_users < 0 or self.days < 1 or self.agent_period_ms <= 0 or self.burst_step_ms <= 0:
            raise ConfigError("n_users, days and periods must be positive")
        home, work = self.dwell_shares
        if home <= 0 or work <= 0 or home + work >= 1:
            raise ConfigError("dwell shares must be positive and sum below 1")
        if self.transit_speed_kmh <= 0:
            raise ConfigError("transit speed must be positive")
        if self.tiers and abs(sum(t.share for t in self.tiers) - 1.0) > 1e-6:
            raise ConfigError("tier shares must sum to 1")

    @classmethod
    def from_dict(cls, d: dict) -> ScenarioConfig:
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys {sorted(unknown)}")
        try:
            if "fence" in d and not isinstance(d["fence"], GeoFence):
                f = d["fence"]
                d["fence"] = GeoFence(**f) if isinstance(f, dict) else GeoFence(*f)
            if "apps" in d:
                d["apps"] = tuple(a if isinstance(a, AppProfile) else AppProfile(**a) for a in d["apps"])
            if "tiers" in d:
                d["tiers"] = tuple(t if isinstance(t, LeakTier) else LeakTier(**t) for t in d["tiers"])
            if "noise" in d and isinstance(d["noise"], dict):
                d["noise"] = NoiseProfile(**d["noise"])
            for k in ("pois_per_user", "dwell_shares"):
                if k in d:
                    d[k] = tuple(d[k])
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad scenario config: {exc}") from exc

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))


@dataclass
class UserTruth:
    user_id: str
    device_ip: str
    tier: str
    pois: list[dict]  # role, lat, lon, dwell_ms, visits [[start, end], ...]
    segments: list[tuple]  # ("stay", start, end, poi) | ("move", start, end, from, to)
    installed: list[str]

    def position(self, t: int) -> GeoPoint:
        i = max(0, bisect_right(self._starts, t) - 1)
        kind, start, end, a, *rest = self.segments[i]
        if kind == "stay" or t >= end:
            p = self.pois[a if kind == "stay" else rest[0]]
            return GeoPoint(p["lat"], p["lon"])
        src, dst = self.pois[a], self.pois[rest[0]]
        f = (t - start) / (end - start)
        return GeoPoint(src["lat"] + f * (dst["lat"] - src["lat"]), src["lon"] + f * (dst["lon"] - src["lon"]))

    @property
    def _starts(self):
        cache = getattr(self, "_starts_cache", None)
        if cache is None or len(cache) != len(self.segments):
            cache = [s[1] for s in self.segments]
            self._starts_cache = cache
        return cache

    def to_dict(self) -> dict:
        return {"user_id": self.user_id, "device_ip": self.device_ip, "tier": self.tier,
                "pois": self.pois, "segments": [list(s) for s in self.segments],
                "installed": self.installed}


@dataclass
class GroundTruth:
    config: dict
    start_ms: int
    end_ms: int
    users: dict[str, UserTruth]
    host_apps: dict[str, str]
    provenance: list[dict]  # one entry per packet line

    def to_dict(self) -> dict:
        return {"config": self.config, "start_ms": self.start_ms, "end_ms": self.end_ms,
                "users": {u: t.to_dict() for u, t in sorted(self.users.items())},
                "host_apps": dict(sorted(self.host_apps.items())), "provenance": self.provenance}

    @classmethod
    def from_dict(cls, d: dict) -> GroundTruth:
        users = {u: UserTruth(t["user_id"], t["device_ip"], t["tier"], t["pois"],
                              [tuple(s) for s in t["segments"]], t["installed"])
                 for u, t in d["users"].items()}
        return cls(d["config"], d["start_ms"], d["end_ms"], users, d["host_apps"], d["provenance"])


@dataclass
class Scenario:
    truth: GroundTruth
    agent: list[LocationSample]
    packets: list[dict]  # packet-log objects, in file order
    installs: dict[str, set[str]]

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"agent": out / "agent.csv", "packets": out / "packets.jsonl",
                 "ground_truth": out / "ground_truth.json", "installs": out / "installs.csv"}
        write_agent_csv(paths["agent"], self.agent)
        with paths["packets"].open("w") as fh:
            for p in self.packets:
                fh.write(json.dumps(p, sort_keys=True) + "\n")
        paths["ground_truth"].write_text(json.dumps(self.truth.to_dict(), sort_keys=True) + "\n")
        write_installs(paths["installs"], self.installs)
        return paths


# --- geometry helpers ------------------------------------------------------------

def _offset(p: GeoPoint, dist_m: float, bearing: float) -> tuple[float, float]:
    dlat = dist_m * math.cos(bearing) / EARTH_RADIUS_M
    dlon = dist_m * math.sin(bearing) / (EARTH_RADIUS_M * math.cos(math.radians(p.lat)))
    return p.lat + math.degrees(dlat), p.lon + math.degrees(dlon)


def _fmt(x: float) -> str:
    return f"{x:.7f}"


def _server_ip(host: str) -> str:
    h = hashlib.sha256(host.encode()).digest()
    return f"203.0.{h[0] % 113}.{1 + h[1] % 254}"


def _device_ip(i: int) -> str:
    return f"10.8.{i // 250}.{2 + i % 250}"


# --- generation -------------------------------------------------------------------

def _place_pois(rng, cfg: ScenarioConfig, n: int) -> list[GeoPoint]:
    f = cfg.fence
    for _ in range(200):
        center = GeoPoint(rng.uniform(f.lat_min, f.lat_max), rng.uniform(f.lon_min, f.lon_max))
        pts = [center]
        tries = 0
        while len(pts) < n and tries < 2000:
            tries += 1
            lat, lon = _offset(center, cfg.poi_radius_m * math.sqrt(rng.random()), rng.uniform(0, 2 * math.pi))
            if not (-90 <= lat <= 90 and -180 <= lon <= 180):
                continue
            q = GeoPoint(lat, lon)
            if not contains(f, q):
                continue
            if all(haversine(q.lat, q.lon, p.lat, p.lon) >= cfg.min_poi_separation_m for p in pts):
                pts.append(q)
        if len(pts) == n:
            return pts
    raise ConfigError(f"cannot place {n} POIs {cfg.min_poi_separation_m:.0f} m apart inside {f}")


def _travel_ms(a: GeoPoint, b: GeoPoint, cfg: ScenarioConfig) -> int:
    return int(math.ceil(haversine(a.lat, a.lon, b.lat, b.lon) / (cfg.transit_speed_kmh / 3.6) * 1000))


def _schedule(rng, cfg: ScenarioConfig, pts: list[GeoPoint], start: int, end: int):
    """Daily home -> work -> errand -> home routine as stay/move segments."""
    home_share, work_share = cfg.dwell_shares
    minor = list(range(2, len(pts)))
    segments = []
    t = start
    cur = 0

    def stay(poi, until):
        nonlocal t
        until = min(until, end)
        if until > t:
            segments.append(("stay", t, until, poi))
            t = until

    def move(dst):
        nonlocal t, cur
        d = _travel_ms(pts[cur], pts[dst], cfg)
        if t + d > end:
            stay(cur, end)
            return
        segments.append(("move", t, t + d, cur, dst))
        t += d
        cur = dst

    for day in range(cfg.days):
        d0 = start + day * DAY_MS
        leave = d0 + int((7.5 + rng.uniform(-0.5, 0.5)) * HOUR_MS)
        work_ms = int(work_share * 23 * HOUR_MS * rng.uniform(0.9, 1.1))
        errand_ms = int((1 - home_share - work_share) * 23 * HOUR_MS * rng.uniform(0.8, 1.2))
        stay(cur, leave)
        move(1)
        stay(1, t + work_ms)
        if minor:
            m = minor[int(rng.integers(len(minor)))]
            move(m)
            stay(m, t + errand_ms)
        move(0)
    stay(cur, end)
    return segments


def _allocate_tiers(rng, cfg: ScenarioConfig) -> list[str]:
    if not cfg.tiers:
        return ["high"] * cfg.n_users
    raw = [t.share * cfg.n_users for t in cfg.tiers]
    counts = [int(math.floor(r)) for r in raw]
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[: cfg.n_users - sum(counts)]:
        counts[i] += 1
    names = [t.name for t, c in zip(cfg.tiers, counts) for _ in range(c)]
    return [names[i] for i in rng.permutation(len(names))]


def _packet(user: str, ts: int, src: str, dst: str, payload: bytes, transport: str = "tcp") -> dict:
    return {"user_id": user, "ts_ms": int(ts), "src": src, "dst": dst, "transport": transport,
            "payload_b64": base64.b64encode(payload).decode("ascii")}


def generate_scenario(cfg: ScenarioConfig) -> Scenario:
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    start, end = START_MS, START_MS + cfg.days * DAY_MS
    tiers = {t.name: t for t in cfg.tiers}
    tier_names = _allocate_tiers(rng, cfg)
    leaking_apps = [a for a in cfg.apps if a.leaks]
    host_apps = {h: a.app_id for a in leaking_apps for h in a.hosts}

    users: dict[str, UserTruth] = {}
    agent: list[LocationSample] = []
    installs: dict[str, set[str]] = {}
    raw_packets: list[tuple] = []  # (ts, user, seq, packet, provenance)

    for ui in range(cfg.n_users):
        uid = f"u{ui:03d}"
        ip = _device_ip(ui)
        n_pois = int(rng.integers(cfg.pois_per_user[0], cfg.pois_per_user[1] + 1))
        pts = _place_pois(rng, cfg, n_pois)
        segments = _schedule(rng, cfg, pts, start, end)
        pois = [{"role": "home" if k == 0 else "work" if k == 1 else "minor",
                 "lat": p.lat, "lon": p.lon, "dwell_ms": 0, "visits": []} for k, p in enumerate(pts)]
        for kind, s, e, a, *_ in segments:
            if kind == "stay":
                pois[a]["dwell_ms"] += e - s
                pois[a]["visits"].append([s, e])
        truth = UserTruth(uid, ip, tier_names[ui], pois, segments, [])
        users[uid] = truth

        # agent samples
        offset = int(rng.integers(cfg.agent_period_ms))
        times = np.arange(start + offset, end, cfg.agent_period_ms, dtype=np.int64)
        keep = rng.random(len(times)) < cfg.agent_availability
        for t in times[keep]:
            p = truth.position(int(t))
            if cfg.noise.agent_jitter_m > 0:
                lat, lon = _offset(p, cfg.noise.agent_jitter_m * rng.random(), rng.uniform(0, 2 * math.pi))
                p = GeoPoint(lat, lon)
            agent.append(LocationSample(uid, int(t), p, Source.AGENT))

        # installed apps
        mine = {a.app_id for a in cfg.apps if rng.random() < a.install_prob}
        tier = tiers.get(truth.tier)
        scale = tier.activity_scale if tier else 1.0
        if cfg.ensure_leaking_app and scale > 0 and leaking_apps and not mine & set(host_apps.values()):
            w = np.array([a.install_prob for a in leaking_apps]) + 1e-12
            mine.add(leaking_apps[int(rng.choice(len(leaking_apps), p=w / w.sum()))].app_id)
        truth.installed = sorted(mine)
        installs[uid] = mine

        seq = 0
        # leak bursts
        for app in leaking_apps:
            if app.app_id not in mine or scale <= 0:
                continue
            p_on = min(1.0, app.burst_on_prob * scale)
            lam = app.mean_leaks_per_hour * cfg.burst_step_ms / HOUR_MS
            on = False
            for s0 in range(start, end, cfg.burst_step_ms):
                on = (rng.random() >= app.burst_off_prob) if on else (rng.random() < p_on)
                if not on:
                    continue
                k = int(rng.poisson(lam))
                if not k:
                    continue
                step_end = min(s0 + cfg.burst_step_ms, end)
                for t in sorted(int(x) for x in rng.integers(s0, step_end, size=k)):
                    p = truth.position(t)
                    if cfg.noise.leak_jitter_m > 0:
                        p = GeoPoint(*_offset(p, cfg.noise.leak_jitter_m * rng.random(),
                                              rng.uniform(0, 2 * math.pi)))
                    host = app.hosts[int(rng.integers(len(app.hosts)))]
                    payload = (app.payload_template.replace("{HOST}", host)
                               .replace("{LAT}", _fmt(p.lat)).replace("{LON}", _fmt(p.lon))).encode()
                    src = f"{ip}:{int(rng.integers(32768, 61000))}"
                    dst = f"{_server_ip(host)}:80"
                    prov = {"kind": "leak", "user_id": uid, "app_id": app.app_id, "host": host,
                            "is_true_location": True, "lat": _fmt(p.lat), "lon": _fmt(p.lon)}
                    if rng.random() < cfg.noise.fragment_prob:
                        cut = payload.index(_fmt(p.lon).encode())
                        for part in (payload[:cut], payload[cut:]):
                            raw_packets.append((t, uid, seq, _packet(uid, t, src, dst, part), prov))
                            seq += 1
                    else:
                        raw_packets.append((t, uid, seq, _packet(uid, t, src, dst, payload), prov))
                        seq += 1

        # noise
        hours = cfg.days * 24
        nz = cfg.noise
        for t in _poisson_times(rng, nz.float_noise_per_hour, hours, start, end):
            x, y = rng.uniform(10, 28), rng.uniform(40, 99)
            body = (f"POST /collect HTTP/1.1\r\nHost: {NOISE_HOST}\r\n\r\n"
                    f"x={x:.7f}&y={y:.7f}&scale={rng.uniform(0, 4):.2f}&ver=3.1").encode()
            prov = {"kind": "float_noise", "user_id": uid, "app_id": None, "host": NOISE_HOST,
                    "is_true_location": False}
            raw_packets.append((t, uid, seq, _packet(uid, t, f"{ip}:{int(rng.integers(32768, 61000))}",
                                                     f"{_server_ip(NOISE_HOST)}:80", body), prov))
            seq += 1
        for t in _poisson_times(rng, nz.incoming_recommendations_per_hour, hours, start, end):
            here = truth.position(t)
            places = []
            for _ in range(int(rng.integers(1, 4))):
                lat, lon = _offset(here, rng.uniform(400, 5000), rng.uniform(0, 2 * math.pi))
                places.append(f'{{"lat":{_fmt(lat)},"lng":{_fmt(lon)}}}')
            body = ("HTTP/1.1 200 OK\r\nContent-Type: application/json\r\n\r\n"
                    '{"places":[' + ",".join(places) + "]}").encode()
            prov = {"kind": "incoming_recommendation", "user_id": uid, "app_id": None,
                    "host": RECOMMENDER_HOST, "is_true_location": False}
            raw_packets.append((t, uid, seq, _packet(uid, t, f"{_server_ip(RECOMMENDER_HOST)}:80",
                                                     f"{ip}:{int(rng.integers(32768, 61000))}", body), prov))
            seq += 1
        for t in _poisson_times(rng, nz.outgoing_other_place_per_hour, hours, start, end):
            here = truth.position(t)
            lat, lon = _offset(here, rng.uniform(25_000, 60_000), rng.uniform(0, 2 * math.pi))
            if not contains(cfg.fence, GeoPoint(lat, lon)):
                continue
            body = (f"GET /forecast?lat={_fmt(lat)}&lon={_fmt(lon)} HTTP/1.1\r\n"
                    f"Host: {OTHER_PLACE_HOST}\r\n\r\n").encode()
            prov = {"kind": "other_place", "user_id": uid, "app_id": None, "host": OTHER_PLACE_HOST,
                    "is_true_location": False}
            raw_packets.append((t, uid, seq, _packet(uid, t, f"{ip}:{int(rng.integers(32768, 61000))}",
                                                     f"{_server_ip(OTHER_PLACE_HOST)}:80", body), prov))
            seq += 1

    raw_packets.sort(key=lambda r: (r[0], r[1], r[2]))
    agent.sort(key=lambda s: (s.user_id, s.ts))
    truth = GroundTruth(cfg.to_dict(), start, end, users, host_apps, [r[4] for r in raw_packets])
    return Scenario(truth, agent, [r[3] for r in raw_packets], installs)


def _poisson_times(rng, per_hour: float, hours: int, start: int, end: int) -> list[int]:
    if per_hour <= 0:
        return []
    k = int(rng.poisson(per_hour * hours))
    return sorted(int(x) for x in rng.integers(start, end, size=k))


def load_ground_truth(path) -> GroundTruth:
    return GroundTruth.from_dict(json.loads(Path(path).read_text()))


# --- oracle comparison ----------------------------------------------------------------

def scenario_report(truth: GroundTruth, labeled=(), traffic_pois=None, matrix=None,
                    match_dist_m: float = 500.0) -> dict:
    """Compare analysis outputs with the planted truth.

    * ``poi_recall``: per user, share of planted POIs with a traffic POI
      within ``match_dist_m``;
    * ``label_accuracy``: share of 'true' labels whose packets carry the
      user's real position (None when nothing was labeled 'true');
    * ``attribution_accuracy``: share of planted hosts whose top app is the
      planted app (None when no planted host appears).
    """
    n_prov = len(truth.provenance)
    true_ok = true_total = 0
    for o in labeled:
        if o.user_id not in truth.users:
            raise JoinError(f"observation user {o.user_id!r} not in ground truth")
        for ref in o.packet_refs:
            if not 0 <= ref < n_prov:
                raise JoinError(f"packet ref {ref} outside ground truth ({n_prov} packets)")
        if o.label is Label.TRUE:
            true_total += 1
            provs = [truth.provenance[r] for r in o.packet_refs]
            if all(p["is_true_location"] and p["user_id"] == o.user_id for p in provs):
                true_ok += 1
    report: dict = {"label_accuracy": true_ok / true_total if true_total else None,
                    "true_labels": true_total}

    if traffic_pois is not None:
        recall = {}
        for uid, ut in sorted(truth.users.items()):
            found = traffic_pois.get(uid, [])
            planted = ut.pois
            hit = sum(1 for p in planted
                      if any(haversine(p["lat"], p["lon"], q.centroid.lat, q.centroid.lon) <= match_dist_m
                             for q in found))
            recall[uid] = hit / len(planted) if planted else 0.0
        unknown = set(traffic_pois) - set(truth.users)
        if unknown:
            raise JoinError(f"POIs for users not in ground truth: {sorted(unknown)}")
        report["poi_recall"] = recall

    if matrix is not None:
        top = matrix.top_apps(1)
        planted = [h for h in top if h in truth.host_apps]
        correct = sum(1 for h in planted if top[h] and top[h][0].app_id == truth.host_apps[h])
        report["attribution_accuracy"] = correct / len(planted) if planted else None
        report["attribution_hosts"] = len(planted)
    return report
