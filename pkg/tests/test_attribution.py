import math

import pytest
from hypothesis import given, settings, strategies as st

from geoleak.attribution import (HostStats, classify_hosts,
                                 extract_hosts, host_user_table, inverse_document_frequency,
                                 read_category_rules, read_installs, term_frequency, tfidf_matrix,
                                 write_installs, write_matrix_csv)
from geoleak.errors import ConfigError, IngestError
from geoleak.extraction import GeoObservation, Label
from geoleak.trace import GeoPoint

P = GeoPoint(31.25, 34.79)


def obs(user, host, label=Label.TRUE):
    return GeoObservation(user, 0, P, http_host=host, label=label)


def test_extract_hosts_examples():
    o = [obs(u, "maps.example.com") for u in ("a", "b", "c") for _ in range(10)]
    stats, un = extract_hosts(o)
    assert stats == [HostStats("maps.example.com", frozenset("abc"), 30)]
    assert stats[0].avg_events_per_user == 10
    stats, _ = extract_hosts([obs("a", "x.y")])
    assert (len(stats[0].users), stats[0].leak_events, stats[0].avg_events_per_user) == (1, 1, 1)
    stats, un = extract_hosts([obs("a", None), obs("b", None)])
    assert stats == [] and un == 2


@given(st.lists(st.tuples(st.sampled_from("abc"), st.sampled_from([None, "h1.x", "H1.x:80", "h2.y"]),
                          st.sampled_from(list(Label)))))
def test_extract_hosts_conserves(rows):
    o = [obs(u, h, lab) for u, h, lab in rows]
    stats, un = extract_hosts(o)
    assert sum(s.leak_events for s in stats) + un == len(o)


def test_classify(tmp_path):
    f = tmp_path / "cat.csv"
    f.write_text("host_suffix,category,suspicious\nepom.com,advertisement,yes\n"
                 "googleapis.com,maps,no\nmaps.googleapis.com,maps-js,no\n")
    rules = read_category_rules(f)
    stats = [HostStats(h, frozenset("a"), 1) for h in ("n129.epom.com", "maps.googleapis.com", "other.net",
                                                        "notepom.com")]
    got = {s.host: (s.category, s.suspicious) for s in classify_hosts(stats, rules)}
    assert got["n129.epom.com"] == ("advertisement", True)
    assert got["maps.googleapis.com"] == ("maps-js", False)
    assert got["other.net"] == ("unclassified", None)
    assert got["notepom.com"] == ("unclassified", None)


def test_category_errors(tmp_path):
    f = tmp_path / "bad.csv"
    f.write_text("epom.com,advertisement,maybe\n")
    with pytest.raises(ConfigError, match="bad.csv:1"):
        read_category_rules(f)
    f.write_text("epom.com,advertisement\n")
    with pytest.raises(ConfigError):
        read_category_rules(f)


def test_tf_examples():
    inst = {"a": {"x"}, "b": {"x"}, "c": {"x", "y"}, "d": {"x", "y"}}
    assert term_frequency("x", "abcd", inst) == 1.0
    assert term_frequency("y", "abcd", inst) == 0.5
    assert term_frequency("z", "abcd", inst) == 0.0
    with pytest.raises(ValueError):
        term_frequency("x", [], inst)


def test_idf_examples():
    ten = {f"u{i}": ({"all", "one"} if i == 0 else {"all"}) for i in range(10)}
    assert inverse_document_frequency("all", ten) == 0.0
    assert inverse_document_frequency("one", ten) == pytest.approx(1.0, abs=1e-12)
    hundred = {f"u{i}": ({"one"} if i == 0 else {"other"}) for i in range(100)}
    assert inverse_document_frequency("one", hundred) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(ValueError):
        inverse_document_frequency("missing", ten)


def test_capped_product():
    # TF 0.5 with IDF 2.0; TF 0.5 with IDF 0.3 (floor active)
    inst = {f"u{i}": set() for i in range(100)}
    inst["u0"].add("rare")
    for i in range(50):
        inst[f"u{i}"].add("common")
    m = tfidf_matrix(inst, {"h": {"u0", "u99"}})
    raw = m.raw
    assert raw[("rare", "h")] == pytest.approx(0.5 * 2.0, abs=1e-12)
    assert inverse_document_frequency("common", inst) == pytest.approx(math.log10(2), abs=1e-12)
    assert raw[("common", "h")] == pytest.approx(0.5, abs=1e-12)


def test_minmax_2x2():
    # apps a and b each on 4 of 400 users (idf 2), so raw = 2 * tf
    inst = {f"u{i}": set() for i in range(400)}
    for u in ("u0", "u1", "u2", "u3"):
        inst[u].add("b")
    for u in ("u3", "u10", "u11", "u12"):
        inst[u].add("a")
    hosts = {"h1": {"u0", "u1", "u20", "u21"}, "h2": {"u0", "u1", "u2", "u3"}}
    m = tfidf_matrix(inst, hosts)
    assert m.raw == pytest.approx({("a", "h1"): 0.0, ("a", "h2"): 0.5, ("b", "h1"): 1.0, ("b", "h2"): 2.0},
                                  abs=1e-12)
    assert m.scores == pytest.approx({("a", "h1"): 0.0, ("a", "h2"): 0.25, ("b", "h1"): 0.5,
                                      ("b", "h2"): 1.0}, abs=1e-9)


def test_all_equal_raw_scores_zero():
    inst = {"a": {"x"}, "b": {"x"}}
    m = tfidf_matrix(inst, {"h": {"a", "b"}})
    assert [c.score for c in m.cells] == [0.0]


def test_top_apps_tie_prefers_rare():
    inst = {f"u{i}": {"browser"} for i in range(10)}
    inst["u0"].add("leaky")
    m = tfidf_matrix(inst, {"h": {"u0"}, "g": {"u1", "u2"}})
    assert m.top_apps(1)["h"][0].app_id == "leaky"


def test_host_scope():
    inst = {"a": {"x"}, "b": {"y"}, "c": {"x", "y"}}
    m = tfidf_matrix(inst, {"h1": {"a"}, "h2": {"a", "b"}}, scope="host")
    per_host = {}
    for c in m.cells:
        per_host.setdefault(c.host, []).append(c.score)
    for scores in per_host.values():
        assert min(scores) == 0.0
    with pytest.raises(ConfigError):
        tfidf_matrix(inst, {}, scope="app")


install_st = st.dictionaries(st.sampled_from([f"u{i}" for i in range(12)]),
                             st.sets(st.sampled_from(["a", "b", "c", "d", "e"]), min_size=1), min_size=1)


@given(install_st, st.data())
@settings(max_examples=80)
def test_tfidf_properties(installs, data):
    users = sorted(installs)
    hosts = {f"h{k}": set(data.draw(st.lists(st.sampled_from(users), min_size=1, max_size=5)))
             for k in range(data.draw(st.integers(1, 4)))}
    m = tfidf_matrix(installs, hosts)
    assert m.cells == tfidf_matrix(installs, hosts).cells
    for c in m.cells:
        assert 0 <= c.tf <= 1 and c.idf >= 0
        assert 0 <= c.raw <= max(1.0, c.idf) + 1e-12
        if c.idf <= 1:
            assert c.raw == c.tf
    raws = [c.raw for c in m.cells]
    scores = [c.score for c in m.cells]
    if max(raws) > min(raws):
        assert min(scores) == 0.0 and max(scores) == 1.0
    else:
        assert set(scores) == {0.0}


def test_files(tmp_path):
    inst = {"u1": {"b", "a"}, "u2": {"a"}}
    p = tmp_path / "i.csv"
    write_installs(p, inst)
    assert p.read_text() == "user_id,app_id\nu1,a\nu1,b\nu2,a\n"
    assert read_installs(p) == inst
    bad = tmp_path / "bad.csv"
    bad.write_text("user,app\nx,y\n")
    with pytest.raises(IngestError):
        read_installs(bad)
    m = tfidf_matrix(inst, host_user_table([obs("u1", "H.example")]))
    out = tmp_path / "m.csv"
    write_matrix_csv(out, m)
    lines = out.read_text().splitlines()
    assert lines[0] == "app_id,host,tf,idf,raw,score"
    assert lines[1].startswith("a,h.example,1.0,")
