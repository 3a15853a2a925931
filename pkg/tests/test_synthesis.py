import base64
import hashlib
import math
import statistics

import pytest

from geoleak.errors import ConfigError, JoinError
from geoleak.extraction import ExtractionConfig, GeoObservation, Label, extract_leaks, ingest_packet_log
from geoleak.synthesis import (AppProfile, LeakTier, NoiseProfile, ScenarioConfig, generate_scenario,
                               load_ground_truth, scenario_report)
from geoleak.trace import HOUR_MS, MINUTE_MS, GeoFence, GeoPoint, haversine, read_agent_csv
from geoleak.validation import label_all

ONE_APP = (AppProfile("com.t.leaky", 1.0, ("leak.test-example.com",), 6.0),)
HIGH_ONLY = (LeakTier("high", 1.0, 1.0),)


def small(**kw):
    base = dict(n_users=3, days=2, apps=ONE_APP, tiers=HIGH_ONLY)
    base.update(kw)
    return ScenarioConfig(**base)


def _digests(out):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(out.iterdir())}


def test_deterministic_outputs(tmp_path):
    cfg = small(seed=11)
    generate_scenario(cfg).write(tmp_path / "a")
    generate_scenario(cfg).write(tmp_path / "b")
    assert _digests(tmp_path / "a") == _digests(tmp_path / "b")
    generate_scenario(small(seed=12)).write(tmp_path / "c")
    assert _digests(tmp_path / "a") != _digests(tmp_path / "c")


def test_agent_count_full_availability():
    sc = generate_scenario(small(days=1, agent_availability=1.0))
    per_user = {}
    for s in sc.agent:
        per_user[s.user_id] = per_user.get(s.user_id, 0) + 1
    assert per_user == {"u000": 72, "u001": 72, "u002": 72}


def test_agent_availability_binomial():
    cfg = small(n_users=5, days=10)
    sc = generate_scenario(cfg)
    n = cfg.n_users * cfg.days * 72
    p = cfg.agent_availability
    assert abs(len(sc.agent) - n * p) <= 3 * math.sqrt(n * p * (1 - p))


def test_zero_rate_only_noise():
    quiet = (AppProfile("com.t.quiet", 1.0, ("q.example.com",), 0.0),)
    sc = generate_scenario(small(apps=quiet))
    assert sc.packets
    assert all(p["kind"] != "leak" for p in sc.truth.provenance)


def test_provenance_one_per_packet_and_coords_on_trajectory():
    sc = generate_scenario(small(noise=NoiseProfile(fragment_prob=0.5)))
    assert len(sc.truth.provenance) == len(sc.packets)
    leaks = 0
    for pkt, prov in zip(sc.packets, sc.truth.provenance):
        if prov["kind"] != "leak":
            continue
        leaks += 1
        truth = sc.truth.users[prov["user_id"]]
        here = truth.position(pkt["ts_ms"])
        assert (prov["lat"], prov["lon"]) == (f"{here.lat:.7f}", f"{here.lon:.7f}")
        payload = base64.b64decode(pkt["payload_b64"]).decode()
        assert prov["lat"] in payload or prov["lon"] in payload
    assert leaks > 0


def test_leak_jitter_bounded():
    sc = generate_scenario(small(noise=NoiseProfile(leak_jitter_m=10, fragment_prob=0)))
    for pkt, prov in zip(sc.packets, sc.truth.provenance):
        if prov["kind"] == "leak":
            here = sc.truth.users[prov["user_id"]].position(pkt["ts_ms"])
            assert haversine(here.lat, here.lon, float(prov["lat"]), float(prov["lon"])) <= 10.05


def test_speed_bound():
    cfg = small(days=3)
    sc = generate_scenario(cfg)
    vmax = cfg.transit_speed_kmh / 3.6
    for ut in sc.truth.users.values():
        prev = None
        for t in range(sc.truth.start_ms, sc.truth.end_ms, MINUTE_MS):
            p = ut.position(t)
            if prev is not None:
                assert haversine(prev.lat, prev.lon, p.lat, p.lon) <= vmax * 60 * (1 + 1e-3)
            prev = p


def test_dwell_shares_shape():
    sc = generate_scenario(small(days=7, pois_per_user=(4, 4)))
    for ut in sc.truth.users.values():
        total = sum(p["dwell_ms"] for p in ut.pois)
        home, work = ut.pois[0]["dwell_ms"] / total, ut.pois[1]["dwell_ms"] / total
        assert home > work > max(p["dwell_ms"] for p in ut.pois[2:]) / total
        assert 0.4 < home < 0.65 and 0.25 < work < 0.45


def test_burstiness_exceeds_constant_rate():
    bursty = (AppProfile("com.t.b", 1.0, ("b.example.com",), 12.0, burst_on_prob=0.05, burst_off_prob=0.3),)
    cfg = ScenarioConfig(seed=3, n_users=1, days=10, apps=bursty, tiers=HIGH_ONLY, noise=NoiseProfile.none())
    sc = generate_scenario(cfg)
    hours = [0] * (cfg.days * 24)
    for pkt in sc.packets:
        hours[(pkt["ts_ms"] - sc.truth.start_ms) // HOUR_MS] += 1
    mean = statistics.fmean(hours)
    rsd = statistics.pstdev(hours) / mean
    assert len(hours) >= 100
    assert rsd > 1 / math.sqrt(mean)  # Poisson at the same mean


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError, match="POIs"):
        generate_scenario(small(fence=GeoFence(31.0, 31.005, 34.0, 34.005)))
    with pytest.raises(ConfigError):
        ScenarioConfig(agent_availability=1.5)
    with pytest.raises(ConfigError):
        ScenarioConfig(pois_per_user=(5, 3))
    with pytest.raises(ConfigError):
        AppProfile("x", 0.5, ("h",), 1.0, payload_template="lat={LAT}")
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict({"bogus": 1})
    cfg = ScenarioConfig.from_dict(small().to_dict())
    assert cfg == small()


def _analyse(sc, tmp_path):
    paths = sc.write(tmp_path)
    recs = ingest_packet_log(paths["packets"], ExtractionConfig()).records
    labeled = label_all(extract_leaks(recs, ExtractionConfig()).observations, read_agent_csv(paths["agent"]))
    return paths, labeled


def test_report_label_accuracy_noise_free(tmp_path):
    sc = generate_scenario(small(noise=NoiseProfile.none()))
    paths, labeled = _analyse(sc, tmp_path)
    truth = load_ground_truth(paths["ground_truth"])
    rep = scenario_report(truth, labeled)
    assert rep["true_labels"] > 0
    assert rep["label_accuracy"] == 1.0


def test_report_zero_leaks(tmp_path):
    sc = generate_scenario(small(tiers=(LeakTier("none", 1.0, 0.0),)))
    paths, labeled = _analyse(sc, tmp_path)
    rep = scenario_report(sc.truth, labeled, {u: [] for u in sc.truth.users})
    assert set(rep["poi_recall"].values()) == {0.0}
    assert rep["label_accuracy"] is None


def test_report_join_errors():
    sc = generate_scenario(small(days=1))
    stranger = GeoObservation("nobody", 0, GeoPoint(31, 34.8), label=Label.TRUE)
    with pytest.raises(JoinError):
        scenario_report(sc.truth, [stranger])
    bad_ref = GeoObservation("u000", 0, GeoPoint(31, 34.8), packet_refs=(10 ** 9, 10 ** 9))
    with pytest.raises(JoinError):
        scenario_report(sc.truth, [bad_ref])
    with pytest.raises(JoinError):
        scenario_report(sc.truth, [], {"ghost": []})
