"""Command line entry point: ``geoleak <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data/config error. Outputs written
by a failing command are removed before exiting.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import attribution, clustering, metrics, pipeline, synthesis, validation
from .clustering import ClusterConfig
from .errors import ConfigError, GeoleakError, IngestError
from .extraction import (ExtractionConfig, Label, extract_leaks, read_observations, read_packets,
                         write_observations)
from .geocode import StubGeocoder
from .trace import HOUR_MS, MINUTE_MS, GeoFence, read_agent_csv
from .validation import LabelingConfig

log = logging.getLogger("geoleak")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


class _Outputs:
    """Tracks files and directories a command creates so failures can clean up."""

    def __init__(self):
        self.files: list[Path] = []
        self.dirs: list[Path] = []

    def file(self, path) -> Path:
        p = Path(path)
        if not p.parent.exists():
            self.dir(p.parent)
        self.files.append(p)
        return p

    def dir(self, path) -> Path:
        p = Path(path)
        missing = []
        q = p
        while not q.exists():
            missing.append(q)
            q = q.parent
        p.mkdir(parents=True, exist_ok=True)
        self.dirs.extend(reversed(missing))
        return p

    def cleanup(self):
        for f in self.files:
            try:
                f.unlink()
            except FileNotFoundError:
                pass
        for d in reversed(self.dirs):
            try:
                d.rmdir()
            except OSError:
                pass


def _need(*paths):
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise IngestError(f"input file not found: {p}")


def _extraction_cfg(a) -> ExtractionConfig:
    try:
        fence = GeoFence.parse(a.fence) if a.fence else ExtractionConfig().fence
        return ExtractionConfig(device_subnet=a.subnet, fence=fence,
                                int_digits=(a.int_digits, a.int_digits),
                                frac_digits=(a.frac_digits, a.frac_digits),
                                allow_sign=a.allow_sign, pair_window_ms=a.pair_window_ms,
                                outgoing_filter=not a.no_outgoing_filter)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _cluster_cfg(a) -> ClusterConfig:
    return ClusterConfig(dist_threshold_m=a.dist_m, time_threshold_ms=int(a.time_min * MINUTE_MS),
                         max_gap_ms=int(a.max_gap_h * HOUR_MS),
                         eps_spatial_m=a.eps_m if a.eps_m is not None else a.dist_m,
                         eps_temporal_ms=int((a.eps_time_min if a.eps_time_min is not None else a.time_min)
                                             * MINUTE_MS),
                         min_pts=a.min_pts,
                         merge_dist_m=a.merge_dist_m if a.merge_dist_m is not None else a.dist_m)


def _report_counts(res):
    if res.skipped:
        log.warning("skipped %d malformed records", res.skipped)
    for w in res.warnings[:20]:
        log.warning("%s", w)


# --- subcommands ----------------------------------------------------------------

def cmd_extract(a, out: _Outputs):
    _need(a.input)
    cfg = _extraction_cfg(a)
    res = read_packets(a.input, a.format, cfg)
    _report_counts(res)
    funnel = extract_leaks(res.records, cfg)
    write_observations(out.file(a.out), funnel.observations)
    print(json.dumps({"skipped": res.skipped, **funnel.counts}, sort_keys=True), file=sys.stderr)


def cmd_label(a, out):
    _need(a.obs, a.agent)
    obs = read_observations(a.obs)
    agent = read_agent_csv(a.agent)
    cfg = LabelingConfig(time_window_ms=int(a.window_min * MINUTE_MS), dist_threshold_m=a.dist_m)
    write_observations(out.file(a.out), validation.label_all(obs, agent, cfg))


def cmd_stats(a, out):
    _need(a.obs, a.agent)
    obs = read_observations(a.obs)
    agent = read_agent_csv(a.agent)
    if any(o.label is Label.UNLABELED for o in obs):
        cfg = LabelingConfig(time_window_ms=int(a.window_min * MINUTE_MS), dist_threshold_m=a.dist_m)
        obs = validation.label_all(obs, agent, cfg)
    validation.write_stats_csv(out.file(a.out), validation.compute_all_stats(obs, agent))


def _load_samples(path, true_only=False):
    p = Path(path)
    if p.suffix.lower() == ".csv":
        return [s for ss in read_agent_csv(p).values() for s in ss]
    obs = read_observations(p)
    return [o for o in obs if o.label is Label.TRUE] if true_only else obs


def cmd_cluster(a, out):
    _need(a.samples, a.semantic)
    cfg = _cluster_cfg(a)
    samples = _load_samples(a.samples, a.true_only)
    pois = clustering.cluster_by_user(samples, a.algo, cfg)
    if a.semantic:
        geo = StubGeocoder.from_csv(a.semantic)
        pois = {u: clustering.semantic_filter(p, geo) for u, p in pois.items()}
    clustering.write_pois_json(out.file(a.out), pois, a.algo, cfg)


def cmd_match(a, out):
    _need(a.traffic, a.agent)
    traffic = clustering.read_pois_json(a.traffic)
    agent = clustering.read_pois_json(a.agent)
    users = {}
    for u in sorted(set(traffic) | set(agent)):
        bench = agent.get(u, [])
        m = metrics.match_pois(traffic.get(u, []), bench, a.match_dist_m)
        rep = metrics.precision_recall(m, len(bench))
        weights = metrics.poi_weights(bench)
        rep.weighted_discovery = metrics.weighted_discovery(m, weights) if bench else 0.0
        users[u] = {**rep.as_dict(), "pairs": [list(p) for p in m.pairs]}
    agg = metrics.aggregate_reports(metrics.ScoreReport(**{k: v for k, v in r.items() if k != "pairs"})
                                    for r in users.values())
    pipeline.dump_json(out.file(a.out), {"match_dist_m": a.match_dist_m, "total": agg.as_dict(),
                                         "users": users})


def cmd_attribute(a, out):
    _need(a.obs, a.installs, a.categories)
    obs = read_observations(a.obs)
    installs = attribution.read_installs(a.installs)
    if a.true_only:
        obs = [o for o in obs if o.label is Label.TRUE]
    matrix = attribution.tfidf_matrix(installs, attribution.host_user_table(obs), a.scope)
    attribution.write_matrix_csv(out.file(a.out), matrix)
    if a.hosts_out:
        hosts, unattributed = attribution.extract_hosts(obs)
        if a.categories:
            hosts = attribution.classify_hosts(hosts, attribution.read_category_rules(a.categories))
        pipeline.dump_json(out.file(a.hosts_out), {
            "unattributed": unattributed,
            "hosts": [{"host": h.host, "users": len(h.users), "leak_events": h.leak_events,
                       "avg_events_per_user": h.avg_events_per_user, "category": h.category,
                       "suspicious": h.suspicious} for h in hosts]})


def _row_value(row, *names):
    for n in names:
        if n in row and row[n] not in (None, ""):
            return float(row[n])
    raise IngestError(f"stats row for {row.get('user_id')!r} lacks {names[0]}")


def cmd_regress(a, out):
    _need(a.stats)
    rows = []
    for r in validation.read_stats_csv(a.stats):
        if "weighted_discovery" not in r:
            raise IngestError(f"{a.stats}: needs a weighted_discovery column (see exposure.csv from report)")
        rows.append({"coverage": _row_value(r, "coverage", "coverage_rate"),
                     "leak_rate": _row_value(r, "leak_rate"),
                     "relative_stdev": _row_value(r, "relative_stdev"),
                     "weighted_discovery": _row_value(r, "weighted_discovery")})
    fit = metrics.fit_exposure_regression(rows)
    pipeline.dump_json(out.file(a.out), fit.as_dict())


def cmd_simulate(a, out):
    doc = {}
    if a.config:
        _need(a.config)
        try:
            doc = json.loads(Path(a.config).read_text())
        except ValueError as exc:
            raise ConfigError(f"{a.config}: invalid JSON ({exc})") from exc
    if a.seed is not None:
        doc["seed"] = a.seed
    cfg = synthesis.ScenarioConfig.from_dict(doc)
    scen = synthesis.generate_scenario(cfg)
    d = out.dir(a.out_dir)
    for name in ("agent.csv", "packets.jsonl", "ground_truth.json", "installs.csv"):
        out.file(d / name)
    scen.write(d)


def cmd_report(a, out):
    if bool(a.packets) == bool(a.pcap):
        raise UsageError("report: exactly one of --packets or --pcap is required")
    _need(a.packets, a.pcap, a.agent, a.installs, a.categories, a.semantic, a.ground_truth)
    cfg = pipeline.PipelineConfig(
        extraction=_extraction_cfg(a),
        labeling=LabelingConfig(time_window_ms=int(a.window_min * MINUTE_MS), dist_threshold_m=a.label_dist_m),
        clustering=_cluster_cfg(a), match_dist_m=a.match_dist_m, top_k=a.top_k, tfidf_scope=a.scope)
    res = read_packets(a.packets or a.pcap, "jsonl" if a.packets else "pcap", cfg.extraction)
    _report_counts(res)
    agent = read_agent_csv(a.agent)
    installs = attribution.read_installs(a.installs)
    rules = attribution.read_category_rules(a.categories) if a.categories else None
    geo = StubGeocoder.from_csv(a.semantic) if a.semantic else None

    d = out.dir(a.out_dir)
    names = ["observations.jsonl", "stats.csv", "pois_agent_incremental.json", "matrix.csv",
             "exposure.csv", "report.json"]
    methods = list(clustering.ALGORITHMS) + ["incremental_true_only"]
    if geo is not None:
        methods += [f"{m}_semantic" for m in clustering.ALGORITHMS]
    names += [f"pois_traffic_{m}.json" for m in methods]
    for n in names:
        out.file(d / n)

    result = pipeline.analyse(res.records, agent, installs, cfg, rules, geo, out_dir=d)
    report = result["report"]
    report["ingest"].update({"skipped": res.skipped, "warnings": len(res.warnings)})
    if a.ground_truth:
        truth = synthesis.load_ground_truth(a.ground_truth)
        report["oracle"] = synthesis.scenario_report(truth, result["labeled"], result["traffic"]["incremental"],
                                                     result["matrix"], cfg.match_dist_m)
    pipeline.dump_json(d / "report.json", report)


# --- parser ----------------------------------------------------------------------

def _add_extraction(p):
    p.add_argument("--subnet", default="10.0.0.0/8", help="device-side CIDR (default 10.0.0.0/8)")
    p.add_argument("--fence", help="latmin,latmax,lonmin,lonmax (default: Israel)")
    p.add_argument("--int-digits", type=int, default=2)
    p.add_argument("--frac-digits", type=int, default=7)
    p.add_argument("--allow-sign", action="store_true", help="accept a leading minus sign")
    p.add_argument("--pair-window-ms", type=int, default=0)
    p.add_argument("--no-outgoing-filter", action="store_true")


def _add_labeling(p, dist_flag="--dist-m"):
    p.add_argument("--window-min", type=float, default=10.0)
    p.add_argument(dist_flag, type=float, default=250.0,
                   dest="label_dist_m" if dist_flag != "--dist-m" else "dist_m")


def _add_cluster(p):
    p.add_argument("--dist-m", type=float, default=500.0)
    p.add_argument("--time-min", type=float, default=30.0)
    p.add_argument("--max-gap-h", type=float, default=6.0)
    p.add_argument("--min-pts", type=int, default=5)
    p.add_argument("--eps-m", type=float, help="DBSCAN spatial eps (default: --dist-m)")
    p.add_argument("--eps-time-min", type=float, help="ST-DBSCAN temporal eps (default: --time-min)")
    p.add_argument("--merge-dist-m", type=float, help="stay-point merge distance (default: --dist-m)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="geoleak", description="Location leakage analysis for mobile network traffic.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("extract", help="scan traffic for coordinates")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=("pcap", "jsonl"), default="jsonl")
    _add_extraction(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("label", help="label observations against agent samples")
    p.add_argument("--obs", required=True)
    p.add_argument("--agent", required=True)
    _add_labeling(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("stats", help="per-user leakage statistics")
    p.add_argument("--obs", required=True)
    p.add_argument("--agent", required=True)
    _add_labeling(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("cluster", help="infer POIs from observations (.jsonl) or agent samples (.csv)")
    p.add_argument("--samples", required=True)
    p.add_argument("--algo", choices=clustering.ALGORITHMS, default="incremental")
    _add_cluster(p)
    p.add_argument("--semantic", help="geocoder stub CSV; drops highway POIs")
    p.add_argument("--true-only", action="store_true", help="keep only observations labeled true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("match", help="score traffic POIs against agent POIs")
    p.add_argument("--traffic", required=True)
    p.add_argument("--agent", required=True)
    p.add_argument("--match-dist-m", type=float, default=500.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("attribute", help="tf-idf host/app attribution")
    p.add_argument("--obs", required=True)
    p.add_argument("--installs", required=True)
    p.add_argument("--categories")
    p.add_argument("--scope", choices=("global", "host"), default="global")
    p.add_argument("--true-only", action="store_true")
    p.add_argument("--hosts-out", help="also write the host table as JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_attribute)

    p = sub.add_parser("regress", help="exposure regression from a per-user CSV")
    p.add_argument("--stats", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_regress)

    p = sub.add_parser("simulate", help="generate a synthetic scenario")
    p.add_argument("--config", help="scenario JSON (defaults used for missing keys)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="run the whole pipeline and write report.json")
    p.add_argument("--packets")
    p.add_argument("--pcap")
    p.add_argument("--agent", required=True)
    p.add_argument("--installs", required=True)
    p.add_argument("--categories")
    p.add_argument("--semantic", help="geocoder stub CSV")
    p.add_argument("--ground-truth", help="ground_truth.json from simulate; adds an oracle section")
    _add_extraction(p)
    _add_labeling(p, "--label-dist-m")
    _add_cluster(p)
    p.add_argument("--match-dist-m", type=float, default=500.0)
    p.add_argument("--top-k", type=int, default=3)
    p.add_argument("--scope", choices=("global", "host"), default="global")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="geoleak: %(levelname)s: %(message)s", stream=sys.stderr)
    out = _Outputs()
    try:
        a.func(a, out)
    except UsageError as exc:
        out.cleanup()
        ap.print_usage(sys.stderr)
        print(f"geoleak: error: {exc}", file=sys.stderr)
        return 1
    except (GeoleakError, OSError, ValueError) as exc:
        out.cleanup()
        print(f"geoleak: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
