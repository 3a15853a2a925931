"""End-to-end analysis chaining extraction through regression."""
from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from . import attribution, clustering, metrics, validation
from .clustering import ClusterConfig
from .errors import RegressionError
from .extraction import ExtractionConfig, Label, extract_leaks, stage_label_counts, write_observations
from .validation import LabelingConfig, LeakGroup


@dataclass(frozen=True)
class PipelineConfig:
    extraction: ExtractionConfig = field(default_factory=ExtractionConfig)
    labeling: LabelingConfig = field(default_factory=LabelingConfig)
    clustering: ClusterConfig = field(default_factory=ClusterConfig)
    match_dist_m: float = 500.0
    top_k: int = 3
    tfidf_scope: str = "global"


@dataclass
class UserAnalysis:
    stats: validation.LeakageStats
    benchmark: list
    weights: dict
    traffic: dict  # method -> POIs
    scores: dict  # method -> ScoreReport


def _clean(x):
    if isinstance(x, float) and (math.isinf(x) or math.isnan(x)):
        return None
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    return x


def dump_json(path, doc) -> None:
    Path(path).write_text(json.dumps(_clean(doc), sort_keys=True, indent=1) + "\n")


def _score(traffic_pois, agent_pois, weights, match_dist_m):
    m = metrics.match_pois(traffic_pois, agent_pois, match_dist_m)
    rep = metrics.precision_recall(m, len(agent_pois))
    rep.weighted_discovery = metrics.weighted_discovery(m, weights) if agent_pois else 0.0
    return rep


def analyse(records, agent_by_user, installs, cfg: PipelineConfig = PipelineConfig(),
            rules=None, geocoder=None, out_dir=None) -> dict:
    """Run every stage and return the consolidated report document.

    When ``out_dir`` is given the intermediate tables are written there:
    observations.jsonl, stats.csv, pois_<method>.json, matrix.csv and
    exposure.csv.
    """
    records = list(records)
    ccfg = cfg.clustering

    # direction filter disabled vs enabled, both labeled for the funnel table
    pair_only = extract_leaks(records, replace(cfg.extraction, outgoing_filter=False))
    funnel = extract_leaks(records, cfg.extraction)
    labeled_pair_only = validation.label_all(pair_only.observations, agent_by_user, cfg.labeling)
    labeled = validation.label_all(funnel.observations, agent_by_user, cfg.labeling)

    stats = validation.compute_all_stats(labeled, agent_by_user)
    users = [s.user_id for s in stats]

    benchmark = clustering.cluster_by_user(
        [s for u in users for s in agent_by_user.get(u, [])], "incremental", ccfg, users)
    traffic = {algo: clustering.cluster_by_user(labeled, algo, ccfg, users)
               for algo in clustering.ALGORITHMS}
    traffic["incremental_true_only"] = clustering.cluster_by_user(
        [o for o in labeled if o.label is Label.TRUE], "incremental", ccfg, users)
    if geocoder is not None:
        for algo in clustering.ALGORITHMS:
            traffic[f"{algo}_semantic"] = {u: clustering.semantic_filter(p, geocoder)
                                           for u, p in traffic[algo].items()}

    per_user: dict[str, UserAnalysis] = {}
    for s in stats:
        u = s.user_id
        weights = metrics.poi_weights(benchmark[u])
        benchmark[u] = clustering.with_weights(benchmark[u], weights)
        scores = {m: _score(traffic[m][u], benchmark[u], weights, cfg.match_dist_m) for m in traffic}
        per_user[u] = UserAnalysis(s, benchmark[u], weights, {m: traffic[m][u] for m in traffic}, scores)

    methods = {m: asdict(metrics.aggregate_reports(a.scores[m] for a in per_user.values()))
               for m in traffic}

    # exposure by leakage group (incremental traffic vs incremental agent)
    groups = defaultdict(list)
    for a in per_user.values():
        groups[a.stats.group.value].append(a)
    by_group = {}
    for g in [x.value for x in LeakGroup] + ["total"]:
        members = list(per_user.values()) if g == "total" else groups.get(g, [])
        reps = [a.scores["incremental"] for a in members]
        bench = sum(r.benchmark for r in reps)
        by_group[g] = {
            "users": len(members),
            "poi_discovery": sum(r.true_positive for r in reps) / bench if bench else 0.0,
            "weighted_discovery": (sum(r.weighted_discovery for r in reps) / len(reps)) if reps else 0.0,
        }

    exposure_rows = []
    for u, a in sorted(per_user.items()):
        if not a.benchmark:
            continue
        exposure_rows.append({"user_id": u, "coverage": a.stats.coverage_rate,
                              "leak_rate": a.stats.leak_rate, "relative_stdev": a.stats.relative_stdev,
                              "weighted_discovery": a.scores["incremental"].weighted_discovery})
    try:
        regression = metrics.fit_exposure_regression(exposure_rows).as_dict()
    except RegressionError as exc:
        regression = {"error": str(exc)}

    hosts, unattributed = attribution.extract_hosts(labeled)
    if rules is not None:
        hosts = attribution.classify_hosts(hosts, rules)
    matrix = attribution.tfidf_matrix(installs, attribution.host_user_table(labeled), cfg.tfidf_scope,
                                      all_users=users)

    report = {
        "ingest": {"records": len(records)},
        "funnel": {
            "pair_filter": {"counts": pair_only.counts, "labels": stage_label_counts(labeled_pair_only),
                            "dropped_unpaired": pair_only.dropped_unpaired},
            "pair_and_outgoing_filter": {"counts": funnel.counts, "labels": stage_label_counts(labeled),
                                         "dropped_unpaired": funnel.dropped_unpaired},
        },
        "leakage": {
            "users": [_stats_dict(s) for s in stats],
            "groups": {g.value: sum(1 for s in stats if s.group is g) for g in LeakGroup},
        },
        "poi": {"benchmark_total": sum(len(b) for b in benchmark.values()), "methods": methods},
        "exposure": {"by_group": by_group,
                     "users": {u: {"group": a.stats.group.value,
                                   "benchmark_pois": len(a.benchmark),
                                   **{m: asdict(r) for m, r in a.scores.items()}}
                               for u, a in sorted(per_user.items())}},
        "hosts": {"unattributed": unattributed,
                  "table": [{"host": h.host, "users": len(h.users), "leak_events": h.leak_events,
                             "avg_events_per_user": h.avg_events_per_user, "category": h.category,
                             "suspicious": h.suspicious} for h in hosts]},
        "tfidf_top": {h: [{"app_id": c.app_id, "score": c.score, "tf": c.tf, "idf": c.idf, "raw": c.raw}
                          for c in cells] for h, cells in matrix.top_apps(cfg.top_k).items()},
        "regression": regression,
    }

    if out_dir is not None:
        out = Path(out_dir)
        write_observations(out / "observations.jsonl", labeled)
        validation.write_stats_csv(out / "stats.csv", stats)
        clustering.write_pois_json(out / "pois_agent_incremental.json", benchmark, "incremental", ccfg)
        for m, pois in traffic.items():
            clustering.write_pois_json(out / f"pois_traffic_{m}.json", pois, m, ccfg)
        attribution.write_matrix_csv(out / "matrix.csv", matrix)
        write_exposure_csv(out / "exposure.csv", exposure_rows)
    return {"report": report, "labeled": labeled, "traffic": traffic, "benchmark": benchmark,
            "matrix": matrix, "stats": stats, "per_user": per_user}


def _stats_dict(s: validation.LeakageStats) -> dict:
    d = asdict(s)
    d["group"] = s.group.value
    d["leak_rate"] = s.leak_rate
    return d


EXPOSURE_COLUMNS = ["user_id", "coverage", "leak_rate", "relative_stdev", "weighted_discovery"]


def write_exposure_csv(path, rows) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=EXPOSURE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
