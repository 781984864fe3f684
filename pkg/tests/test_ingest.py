import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from helpers import make_store, records, shuffled
from trace_enrich.ingest import (
    DataError,
    build_store,
    dedupe,
    load_store,
    load_taxonomy,
    materialize,
    measurement,
    read_facts,
    relation,
    write_facts,
    write_store,
)
from trace_enrich.model import Taxonomy, TaxonomyError, correlated_entities
from trace_enrich.oracle import random_records


def write_jsonl(path, recs):
    path.write_text("".join(json.dumps(r) + "\n" for r in recs), encoding="utf-8")
    return path


def test_taxonomy_extension(tmp_path):
    p = tmp_path / "tax.json"
    p.write_text('{"subclass_of": {"Oven": ["Machine"]}}')
    assert load_taxonomy(p).is_subclass("Oven", "Resource")


def test_taxonomy_cycle(tmp_path):
    p = tmp_path / "tax.json"
    p.write_text('{"subclass_of": {"A": ["B"], "B": ["A"]}}')
    with pytest.raises((DataError, TaxonomyError), match="cycle"):
        load_taxonomy(p)


def test_taxonomy_unknown_parent(tmp_path):
    p = tmp_path / "tax.json"
    p.write_text('{"subclass_of": {"A": ["Nowhere"]}}')
    with pytest.raises((DataError, TaxonomyError)):
        load_taxonomy(p)


def test_empty_taxonomy_file(tmp_path):
    p = tmp_path / "tax.json"
    p.write_text("")
    assert load_taxonomy(p) == Taxonomy.default()
    assert load_taxonomy(None) == Taxonomy.default()


def test_load_minimal(tmp_path):
    path = write_jsonl(tmp_path / "d.jsonl", records({"m1": "Machine"}, [("e1", "Alarm", 1, ["m1"])]))
    store, warnings = load_store([path])
    assert len(store.events) == 1 and warnings == []


def test_dangling_reference(tmp_path):
    path = write_jsonl(tmp_path / "d.jsonl", records({"m1": "Machine"}, [
        ("e1", "Alarm", 1, ["m1"]), ("e2", "Alarm", 2, ["mX"])]))
    store, warnings = load_store([path], strict=False)
    assert [e.id for e in store.events] == ["e1"]
    assert len(warnings) == 1 and "mX" in warnings[0]
    with pytest.raises(DataError, match="mX"):
        load_store([path], strict=True)


def test_duplicate_event_id(tmp_path):
    path = write_jsonl(tmp_path / "d.jsonl", records({"m1": "Machine"}, [
        ("e1", "Alarm", 1, ["m1"]), ("e1", "Alarm", 2, ["m1"])]))
    with pytest.raises(DataError, match="e1"):
        load_store([path])


def test_malformed_json_reports_line(tmp_path):
    path = tmp_path / "d.jsonl"
    path.write_text('{"kind":"entity","id":"m1","types":["Machine"]}\n{oops\n')
    with pytest.raises(DataError) as info:
        load_store([path])
    assert info.value.line == 2
    assert ":2:" in str(info.value) or "line 2" in str(info.value)


def test_unknown_field_strictness():
    recs = records({"m1": "Machine"}, [("e1", "Alarm", 1, ["m1"])])
    recs[-1]["colour"] = "red"
    _, warnings = build_store(recs)
    assert len(warnings) == 1
    with pytest.raises(DataError):
        build_store(recs, strict=True)


def test_iso_timestamps():
    store = make_store({"m1": "Machine"}, [
        ("a", "Alarm", "2024-01-01T00:00:01Z", ["m1"]), ("b", "Alarm", "2024-01-01T00:00:00Z", ["m1"])])
    assert [e.id for e in store.events] == ["b", "a"]


def fact_a():
    return measurement("i", "p1", "s", "count", 2, "count", ("e1", "e2"), ("e1", "e2"))


def test_write_empty(tmp_path):
    write_facts([], tmp_path / "f.jsonl")
    assert (tmp_path / "f.jsonl").read_bytes() == b""


def test_write_dedupes(tmp_path):
    write_facts([fact_a(), fact_a()], tmp_path / "f.jsonl")
    lines = (tmp_path / "f.jsonl").read_text().splitlines()
    assert len(lines) == 1
    doc = json.loads(lines[0])
    assert doc["provenance"] == {"pattern": "p1", "inputs": ["e1", "e2"],
                                 "interval": {"start": "e1", "end": "e2"}}
    assert read_facts(tmp_path / "f.jsonl") == [fact_a()]


def test_dedupe_keeps_smallest_provenance():
    big = measurement("i", "p1", "s", "count", 2, "count", ("e3",))
    assert dedupe([big, fact_a()]) == [fact_a()]


@given(st.lists(st.tuples(st.sampled_from("ab"), st.sampled_from("xyz"), st.integers(0, 3)),
                max_size=30), st.randoms())
@settings(max_examples=50, deadline=None)
def test_write_is_order_independent(tmp_path_factory, spec, rnd):
    facts = [measurement(i, "p", s, "k", v, "u", (s,)) for i, s, v in spec]
    facts += [relation(i, "p", s, "correlatesTo", "m", (s,)) for i, s, _ in spec]
    d = tmp_path_factory.mktemp("w")
    write_facts(facts, d / "a")
    rnd.shuffle(facts)
    write_facts(facts, d / "b")
    assert (d / "a").read_bytes() == (d / "b").read_bytes()


def small_store():
    return make_store(
        {"m1": "Machine", "p12": "Product", "L1": "ProductionLot"},
        [("e4", "TrackIn", 4, ["m1"]), ("e7", "SwitchState", 7, ["m1"])],
        part_of=[("p12", "L1")],
    )


def test_materialize_correlation():
    store = small_store()
    new, warnings = materialize(store, [relation("i", "p7", "e4", "correlatesTo", "p12", ("e4",))])
    assert warnings == []
    assert correlated_entities(new, new.event("e4"), "Product") == ["p12"]
    assert correlated_entities(store, store.event("e4"), "Product") == []
    assert new.event("e4").entities[-1].derived


def test_materialize_measurement_attribute():
    new, _ = materialize(small_store(), [measurement("dt", "p4", "e7", "downtime", 4, "s", ("e7",))])
    assert new.event("e7").attributes["dt.downtime"] == 4


def test_materialize_rejects_cycle():
    new, warnings = materialize(small_store(), [relation("i", "p10", "L1", "isPartOf", "p12", ())])
    assert new.part_of == small_store().part_of
    assert len(warnings) == 1 and "cycle" in warnings[0]


def test_materialize_adds_part_of():
    new, _ = materialize(small_store(), [relation("i", "p10", "p12", "isPartOf", "m1", ())])
    assert [(e.part, e.whole, e.derived) for e in new.part_of] == [("p12", "L1", False),
                                                                  ("p12", "m1", True)]
    assert sorted(new.wholes_of("p12")) == ["L1", "m1"]


@pytest.mark.parametrize("seed", range(25))
def test_materialize_is_monotone(seed):
    rng = random.Random(seed)
    store, _ = build_store(random_records(rng, 80))
    events = [e.id for e in store.events]
    ents = sorted(store.entities)
    if not events:
        return
    facts = []
    for _ in range(20):
        if rng.random() < 0.5:
            facts.append(relation("r", "p", rng.choice(events), "correlatesTo", rng.choice(ents), ()))
        elif rng.random() < 0.5:
            facts.append(relation("r", "p", rng.choice(ents), "isPartOf", rng.choice(ents), ()))
        else:
            facts.append(measurement("r", "p", rng.choice(events), "k", rng.randint(0, 5), "u", ()))
    new, _ = materialize(store, facts)
    assert {(p.part, p.whole) for p in store.part_of} <= {(p.part, p.whole) for p in new.part_of}
    for e in store.events:
        n = new.event(e.id)
        assert set(e.entities) <= set(n.entities)
        assert dict(e.attributes).items() <= dict(n.attributes).items()
    for p in new.part_of:
        assert not new.reaches_whole(p.whole, p.part)


@pytest.mark.parametrize("seed", range(25))
def test_round_trip(tmp_path, seed):
    store, first = build_store(random_records(random.Random(seed), 100))
    write_store(store, tmp_path / "s.jsonl")
    again, warnings = load_store([tmp_path / "s.jsonl"], strict=True)
    assert again == store
    assert sorted(w for w in warnings if "aggregation" in w) == sorted(
        w for w in first if "aggregation" in w)


def test_round_trip_keeps_derived_flags(tmp_path):
    new, _ = materialize(small_store(), [relation("i", "p7", "e4", "correlatesTo", "p12", ("e4",)),
                                         relation("i", "p10", "p12", "isPartOf", "m1", ())])
    write_store(new, tmp_path / "s.jsonl")
    again, _ = load_store([tmp_path / "s.jsonl"], strict=True)
    assert again == new
    assert again.base_view() == small_store()


def test_multiple_files_merge(tmp_path):
    recs = records({"m1": "Machine"}, [("e1", "Alarm", 1, ["m1"]), ("e2", "Alarm", 2, ["m1"])])
    a = write_jsonl(tmp_path / "a.jsonl", recs[:2])
    b = write_jsonl(tmp_path / "b.jsonl", recs[2:])
    store, _ = load_store([b, a], strict=True)
    assert store == build_store(shuffled(recs, 3))[0]
