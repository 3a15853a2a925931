import json
import subprocess
import sys

import pytest

from geoleak.cli import main
from geoleak.pcap import build_frame, write_pcap


@pytest.fixture(scope="module")
def scenario(tmp_path_factory):
    d = tmp_path_factory.mktemp("scen")
    cfg = d / "scenario.json"
    cfg.write_text(json.dumps({"n_users": 6, "days": 3}))
    assert main(["simulate", "--config", str(cfg), "--seed", "5", "--out-dir", str(d / "s")]) == 0
    return d / "s"


def test_simulate_outputs(scenario):
    names = sorted(p.name for p in scenario.iterdir())
    assert names == ["agent.csv", "ground_truth.json", "installs.csv", "packets.jsonl"]
    gt = json.loads((scenario / "ground_truth.json").read_text())
    assert gt["config"]["seed"] == 5 and gt["config"]["n_users"] == 6


def test_chain_idempotent(scenario, tmp_path):
    s = scenario
    cmds = [
        ["extract", "--input", f"{s}/packets.jsonl", "--out", "{o}/obs.jsonl"],
        ["label", "--obs", "{o}/obs.jsonl", "--agent", f"{s}/agent.csv", "--out", "{o}/lab.jsonl"],
        ["stats", "--obs", "{o}/lab.jsonl", "--agent", f"{s}/agent.csv", "--out", "{o}/stats.csv"],
        ["cluster", "--samples", "{o}/lab.jsonl", "--algo", "stdbscan", "--out", "{o}/traffic.json"],
        ["cluster", "--samples", f"{s}/agent.csv", "--out", "{o}/agent.json"],
        ["match", "--traffic", "{o}/traffic.json", "--agent", "{o}/agent.json", "--out", "{o}/match.json"],
        ["attribute", "--obs", "{o}/lab.jsonl", "--installs", f"{s}/installs.csv", "--out", "{o}/matrix.csv"],
    ]
    outputs = {}
    for run in ("a", "b"):
        o = tmp_path / run
        o.mkdir()
        for c in cmds:
            assert main([x.replace("{o}", str(o)) for x in c]) == 0, c
        outputs[run] = {p.name: p.read_bytes() for p in o.iterdir()}
    assert outputs["a"] == outputs["b"]
    m = json.loads(outputs["a"]["match.json"])
    assert set(m["total"]) >= {"precision", "recall", "total", "true_positive", "benchmark",
                               "weighted_discovery"}
    assert outputs["a"]["matrix.csv"].startswith(b"app_id,host,tf,idf,raw,score\n")


def test_report_and_regress(scenario, tmp_path):
    out = tmp_path / "r"
    argv = ["report", "--packets", f"{scenario}/packets.jsonl", "--agent", f"{scenario}/agent.csv",
            "--installs", f"{scenario}/installs.csv", "--ground-truth", f"{scenario}/ground_truth.json",
            "--out-dir", str(out)]
    assert main(argv) == 0
    rep = json.loads((out / "report.json").read_text())
    assert {"funnel", "leakage", "poi", "exposure", "hosts", "tfidf_top", "regression", "oracle"} <= set(rep)
    assert [u["user_id"] for u in rep["leakage"]["users"]] == sorted(u["user_id"] for u in rep["leakage"]["users"])
    assert main(["regress", "--stats", str(out / "exposure.csv"), "--out", str(tmp_path / "fit.json")]) == 0
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert set(fit) == {"coefficients", "std_errors", "r2", "adjusted_r2", "f_statistic",
                        "residual_std_error", "df", "n"}
    if "error" not in rep["regression"]:
        assert fit["coefficients"] == rep["regression"]["coefficients"]


def test_report_numbers_recomputable(scenario, tmp_path):
    # the per-group figures in report.json follow from stats.csv and the POI files
    from geoleak.clustering import read_pois_json
    from geoleak.metrics import match_pois, poi_weights, weighted_discovery
    from geoleak.validation import read_stats_csv
    out = tmp_path / "r"
    main(["report", "--packets", f"{scenario}/packets.jsonl", "--agent", f"{scenario}/agent.csv",
          "--installs", f"{scenario}/installs.csv", "--out-dir", str(out)])
    rep = json.loads((out / "report.json").read_text())
    agent = read_pois_json(out / "pois_agent_incremental.json")
    traffic = read_pois_json(out / "pois_traffic_incremental.json")
    groups = {r["user_id"]: r["group"] for r in read_stats_csv(out / "stats.csv")}
    for u, g in groups.items():
        m = match_pois(traffic[u], agent[u])
        wd = weighted_discovery(m, poi_weights(agent[u])) if agent[u] else 0.0
        assert rep["exposure"]["users"][u]["incremental"]["weighted_discovery"] == pytest.approx(wd, abs=1e-12)
        assert rep["exposure"]["users"][u]["group"] == g


def test_extract_pcap(tmp_path):
    body = b"GET /?a=31.2530410&b=34.7915210 HTTP/1.1\r\nHost: x.example\r\n\r\n"
    write_pcap(tmp_path / "c.pcap", [(1000, build_frame("10.0.0.7:4000", "9.9.9.9:80", "tcp", body))])
    assert main(["extract", "--input", str(tmp_path / "c.pcap"), "--format", "pcap",
                 "--out", str(tmp_path / "o.jsonl")]) == 0
    row = json.loads((tmp_path / "o.jsonl").read_text())
    assert (row["user_id"], row["lat"], row["lon"], row["http_host"]) == ("10.0.0.7", 31.253041, 34.791521,
                                                                         "x.example")


def test_unknown_flag_exit_1(capsys):
    assert main(["label", "--bogus"]) == 1
    err = capsys.readouterr().err
    assert "usage:" in err
    assert main([]) == 1
    assert main(["frobnicate"]) == 1


def test_missing_input_exit_2(tmp_path, capsys):
    missing = tmp_path / "nope.jsonl"
    rc = main(["label", "--obs", str(missing), "--agent", str(missing), "--out", str(tmp_path / "x.jsonl")])
    assert rc == 2
    assert str(missing) in capsys.readouterr().err
    assert not (tmp_path / "x.jsonl").exists()


def test_partial_outputs_removed(scenario, tmp_path, capsys):
    stats = tmp_path / "stats.csv"
    assert main(["stats", "--obs", str(tmp_path / "missing"), "--agent", f"{scenario}/agent.csv",
                 "--out", str(stats)]) == 2
    assert not stats.exists()
    # an unplaceable fence fails and leaves no output directory behind
    bad_cfg = tmp_path / "bad.json"
    bad_cfg.write_text('{"n_users": 2, "days": 1, "fence": [31.0, 31.001, 34.0, 34.001]}')
    out = tmp_path / "sim" / "deep"
    assert main(["simulate", "--config", str(bad_cfg), "--out-dir", str(out)]) == 2
    assert not (tmp_path / "sim").exists()
    assert "POIs" in capsys.readouterr().err


def test_report_requires_one_source(scenario, tmp_path):
    assert main(["report", "--agent", f"{scenario}/agent.csv", "--installs", f"{scenario}/installs.csv",
                 "--out-dir", str(tmp_path / "r")]) == 1
    assert not (tmp_path / "r").exists()


def test_console_script(tmp_path):
    r = subprocess.run([sys.executable, "-m", "geoleak", "regress", "--stats", str(tmp_path / "none.csv"),
                        "--out", str(tmp_path / "f.json")], capture_output=True, text=True)
    assert r.returncode == 2
    assert "none.csv" in r.stderr


def test_report_failure_midway_cleans_up(scenario, tmp_path, monkeypatch):
    from geoleak import pipeline
    from geoleak.errors import InconsistentInputError

    def boom(records, agent, installs, cfg, rules, geo, out_dir):
        (out_dir / "observations.jsonl").write_text("partial\n")
        raise InconsistentInputError("synthetic failure")

    monkeypatch.setattr(pipeline, "analyse", boom)
    out = tmp_path / "r"
    rc = main(["report", "--packets", f"{scenario}/packets.jsonl", "--agent", f"{scenario}/agent.csv",
               "--installs", f"{scenario}/installs.csv", "--out-dir", str(out)])
    assert rc == 2
    assert not out.exists()
