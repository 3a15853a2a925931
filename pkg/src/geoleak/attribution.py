"""Link leak-receiving hosts to installed applications.

A host plays the role of a document and an application that of a term:
TF is the share of the host's leaking users having the app installed, IDF is
``-log10`` of the app's install share, and the raw score is
``TF * max(1, IDF)``, min-max normalised over the matrix.
"""
from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import ConfigError, IngestError
from .extraction import normalize_host


@dataclass(frozen=True)
class HostStats:
    host: str
    users: frozenset[str]
    leak_events: int
    category: str | None = None
    suspicious: bool | None = None

    @property
    def avg_events_per_user(self) -> float:
        return self.leak_events / len(self.users)


@dataclass(frozen=True)
class CategoryRule:
    suffix: str
    category: str
    suspicious: bool


@dataclass(frozen=True)
class TfidfCell:
    app_id: str
    host: str
    tf: float
    idf: float
    raw: float
    score: float


@dataclass
class TfidfMatrix:
    cells: list[TfidfCell]

    @property
    def scores(self) -> dict[tuple[str, str], float]:
        return {(c.app_id, c.host): c.score for c in self.cells}

    @property
    def raw(self) -> dict[tuple[str, str], float]:
        return {(c.app_id, c.host): c.raw for c in self.cells}

    def top_apps(self, k: int = 1) -> dict[str, list[TfidfCell]]:
        """Best-scoring apps per host. Ties prefer the rarer app, then app id."""
        by_host = defaultdict(list)
        for c in self.cells:
            by_host[c.host].append(c)
        return {h: sorted(cells, key=lambda c: (-c.score, -c.idf, c.app_id))[:k]
                for h, cells in sorted(by_host.items())}


def extract_hosts(observations) -> tuple[list[HostStats], int]:
    """Per-host leak statistics plus the count of observations with no host."""
    users = defaultdict(set)
    events = defaultdict(int)
    unattributed = 0
    for o in observations:
        if not o.http_host:
            unattributed += 1
            continue
        host = normalize_host(o.http_host)
        users[host].add(o.user_id)
        events[host] += 1
    stats = [HostStats(h, frozenset(users[h]), events[h]) for h in sorted(events)]
    return stats, unattributed


def read_category_rules(path) -> list[CategoryRule]:
    """Rules file: ``host_suffix,category,suspicious`` with suspicious yes/no."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read category file {path}: {exc}") from exc
    rules = []
    reader = csv.reader(text.splitlines())
    for lineno, row in enumerate(reader, start=1):
        if not row or not "".join(row).strip():
            continue
        if lineno == 1 and row[0].strip().lower() == "host_suffix":
            continue
        if len(row) != 3:
            raise ConfigError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
        suffix, category, flag = (x.strip() for x in row)
        flag = flag.lower()
        if not suffix or flag not in ("yes", "no"):
            raise ConfigError(f"{path}:{lineno}: malformed rule {row!r}")
        rules.append(CategoryRule(suffix.lower().lstrip("."), category, flag == "yes"))
    return rules


def _suffix_match(host: str, suffix: str) -> bool:
    return host == suffix or host.endswith("." + suffix)


def classify_hosts(stats, rules) -> list[HostStats]:
    """Apply the longest matching suffix rule; unmatched hosts are 'unclassified'."""
    out = []
    for s in stats:
        hits = [r for r in rules if _suffix_match(s.host, r.suffix)]
        if hits:
            best = max(hits, key=lambda r: len(r.suffix))
            out.append(replace(s, category=best.category, suspicious=best.suspicious))
        else:
            out.append(replace(s, category="unclassified", suspicious=None))
    return out


def read_installs(path) -> dict[str, set[str]]:
    """Install table ``user_id,app_id`` as user -> apps."""
    path = Path(path)
    table = defaultdict(set)
    try:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if not {"user_id", "app_id"} <= set(reader.fieldnames or ()):
                raise IngestError(f"{path}: expected columns user_id,app_id")
            for row in reader:
                app = (row["app_id"] or "").strip()
                if not app:
                    raise IngestError(f"{path}: empty app id for user {row['user_id']}")
                table[row["user_id"]].add(app)
    except OSError as exc:
        raise IngestError(f"cannot read install table {path}: {exc}") from exc
    return dict(table)


def write_installs(path, installs: dict[str, set[str]]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "app_id"])
        for user in sorted(installs):
            for app in sorted(installs[user]):
                w.writerow([user, app])


def term_frequency(app: str, host_users, installs) -> float:
    """Share of a host's leaking users that have ``app`` installed."""
    host_users = set(host_users)
    if not host_users:
        raise ValueError("host has no leaking users")
    return sum(1 for u in host_users if app in installs.get(u, ())) / len(host_users)


def inverse_document_frequency(app: str, installs, all_users=None) -> float:
    users = list(installs) if all_users is None else list(all_users)
    have = sum(1 for u in users if app in installs.get(u, ()))
    if have == 0:
        raise ValueError(f"app {app!r} is not installed on any user")
    return -math.log10(have / len(users))


def tfidf_matrix(installs, host_users: dict[str, set[str]], scope: str = "global",
                 all_users=None) -> TfidfMatrix:
    """Score every (app, host) pair; ``scope`` is "global" or "host" normalisation.

    The user population defaults to everyone in the install table or in
    ``host_users``.
    """
    if scope not in ("global", "host"):
        raise ConfigError(f"unknown normalisation scope {scope!r}")
    users = set(installs).union(*host_users.values()) if host_users else set(installs)
    users = sorted(users | set(all_users or ()))
    apps = sorted({a for s in installs.values() for a in s})
    idf = {a: inverse_document_frequency(a, installs, users) for a in apps}
    raw_cells = []
    for host in sorted(host_users):
        hu = host_users[host]
        if not hu:
            continue
        for a in apps:
            tf = term_frequency(a, hu, installs)
            raw_cells.append((a, host, tf, idf[a], tf * max(1.0, idf[a])))
    if scope == "global":
        groups = {None: raw_cells}
    else:
        groups = defaultdict(list)
        for c in raw_cells:
            groups[c[1]].append(c)
    cells = []
    for group in groups.values():
        if not group:
            continue
        lo = min(c[4] for c in group)
        hi = max(c[4] for c in group)
        for a, h, tf, i, raw in group:
            score = (raw - lo) / (hi - lo) if hi > lo else 0.0
            cells.append(TfidfCell(a, h, tf, i, raw, score))
    cells.sort(key=lambda c: (c.app_id, c.host))
    return TfidfMatrix(cells)


def host_user_table(observations) -> dict[str, set[str]]:
    table = defaultdict(set)
    for o in observations:
        if o.http_host:
            table[normalize_host(o.http_host)].add(o.user_id)
    return dict(table)


def write_matrix_csv(path, matrix: TfidfMatrix) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["app_id", "host", "tf", "idf", "raw", "score"])
        for c in matrix.cells:
            w.writerow([c.app_id, c.host, repr(c.tf), repr(c.idf), repr(c.raw), repr(c.score)])
