import random

import pytest
from hypothesis import given, settings, strategies as st

from helpers import make_store, records, shuffled
from trace_enrich.ingest import build_store
from trace_enrich.model import (
    Correlation,
    Event,
    Interval,
    Taxonomy,
    TaxonomyError,
    UnknownClassError,
    build_intervals,
    compare_events,
    correlated_entities,
    is_subclass,
)
from trace_enrich.oracle import _Brute, random_records

TAX = Taxonomy.default()


@pytest.mark.parametrize("sub, sup, expected", [
    ("Machine", "Resource", True),
    ("Alarm", "Alarm", True),
    ("Machine", "ProductionEntity", False),
    ("Split", "Event", True),
    ("Sensor", "Resource", False),
])
def test_is_subclass_examples(sub, sup, expected):
    assert is_subclass(TAX, sub, sup) is expected


def test_unknown_class_is_named():
    with pytest.raises(UnknownClassError, match="Oven"):
        is_subclass(TAX, "Oven", "Machine")


def test_compare_events():
    a = Event("e1", "Alarm", 10)
    b = Event("e0", "Alarm", 12)
    assert compare_events(a, b) == -1
    assert compare_events(Event("a", "Alarm", 10), Event("b", "Alarm", 10)) == -1
    assert compare_events(a, a) == 0
    assert compare_events(b, a) == 1


def test_extension_and_cycles():
    ext = TAX.extended({"Oven": ["Machine"]})
    assert ext.is_subclass("Oven", "Resource")
    with pytest.raises(TaxonomyError):
        TAX.extended({"A": ["B"], "B": ["A"]})
    with pytest.raises(TaxonomyError):
        TAX.extended({"A": ["Nowhere"]})


@st.composite
def dags(draw):
    n = draw(st.integers(1, 12))
    decl = {}
    names = [f"C{i}" for i in range(n)]
    for i, name in enumerate(names):
        pool = ["Event", "Entity"] + names[:i]
        decl[name] = draw(st.lists(st.sampled_from(pool), min_size=1, max_size=3, unique=True))
    return decl


@given(dags())
@settings(max_examples=60, deadline=None)
def test_subsumption_is_a_partial_order(decl):
    tax = TAX.extended(decl)
    classes = sorted(decl)
    for a in classes:
        assert tax.is_subclass(a, a)
        for b in classes:
            if a != b and tax.is_subclass(a, b):
                assert not tax.is_subclass(b, a)
            for c in classes:
                if tax.is_subclass(a, b) and tax.is_subclass(b, c):
                    assert tax.is_subclass(a, c)


@given(dags(), st.data())
@settings(max_examples=40, deadline=None)
def test_cycle_injection_rejected(decl, data):
    tax = TAX.extended(decl)
    a = data.draw(st.sampled_from(sorted(decl)))
    below = sorted(c for c in decl if tax.is_subclass(c, a))
    b = data.draw(st.sampled_from(below))
    with pytest.raises(TaxonomyError):
        TAX.extended({**decl, a: list(decl[a]) + [b]})


def test_correlated_entities():
    store = make_store({"m1": "Machine", "j1": "Job", "L0": "ProductionLot", "L1": "ProductionLot"}, [])
    e = Event("e", "TrackIn", 1, (Correlation("m1"), Correlation("j1")))
    assert correlated_entities(store, e, "Resource") == ["m1"]
    split = Event("s", "Split", 1, (Correlation("L0", "input"), Correlation("L1", "output")))
    assert correlated_entities(store, split, "ProductionEntity", role="output") == ["L1"]
    assert correlated_entities(store, Event("a", "Alarm", 1, (Correlation("m1"),)), "ProductionEntity") == []


def test_single_interval():
    store = make_store({"m1": "Machine", "j1": "Job"}, [
        ("a", "TrackIn", 10, ["m1", "j1"]), ("b", "TrackOut", 14, ["m1", "j1"])])
    assert build_intervals(store, "TrackIn", "TrackOut", True) == ([Interval("m1", "j1", "a", "b")], [])


def test_unmatched_start_warns():
    store = make_store({"m1": "Machine", "j1": "Job"}, [("a", "TrackIn", 10, ["m1", "j1"])])
    intervals, warnings = build_intervals(store, "TrackIn", "TrackOut", True)
    assert intervals == [] and len(warnings) == 1 and "unmatched start" in warnings[0]


def test_fifo_pairing_with_overlap():
    store = make_store({"m1": "Machine", "j1": "Job"}, [
        ("s1", "TrackIn", 1, ["m1", "j1"]), ("s2", "TrackIn", 2, ["m1", "j1"]),
        ("t1", "TrackOut", 3, ["m1", "j1"]), ("t2", "TrackOut", 4, ["m1", "j1"])])
    intervals, warnings = build_intervals(store, "TrackIn", "TrackOut", True)
    assert [(i.start, i.end) for i in intervals] == [("s1", "t1"), ("s2", "t2")]
    assert len(warnings) == 1 and "overlapping start s2" in warnings[0]


def test_pairing_without_production_entity():
    store = make_store({"m1": "Machine", "j1": "Job", "j2": "Job"}, [
        ("s1", "TrackIn", 1, ["m1", "j1"]), ("t1", "TrackOut", 3, ["m1", "j2"])])
    assert build_intervals(store, "TrackIn", "TrackOut", False)[0] == [Interval("m1", None, "s1", "t1")]
    assert build_intervals(store, "TrackIn", "TrackOut", True)[0] == []


@pytest.mark.parametrize("seed", range(60))
def test_intervals_sound_and_complete(seed):
    rng = random.Random(seed)
    store, _ = build_store(random_records(rng, 120))
    start, end = rng.choice(["TrackIn", "Event", "Alarm"]), rng.choice(["TrackOut", "Event", "Repair"])
    pair = rng.random() < 0.6
    intervals, _ = build_intervals(store, start, end, pair)
    for iv in intervals:
        s, e = store.event(iv.start), store.event(iv.end)
        assert s.key <= e.key
        assert iv.resource in s.entity_ids and iv.resource in e.entity_ids
        if pair:
            assert iv.production_entity in s.entity_ids and iv.production_entity in e.entity_ids
    brute = _Brute(store)
    expected = sorted((r, g, brute.events[s].id, brute.events[t].id)
                      for r, g, s, t in brute.intervals(start, end, pair))
    assert sorted(tuple(iv) for iv in intervals) == expected


@pytest.mark.parametrize("seed", range(20))
def test_input_order_does_not_matter(seed):
    rng = random.Random(seed)
    recs = random_records(rng, 150)
    a, _ = build_store(recs)
    b, _ = build_store(shuffled(recs, seed + 1))
    assert a == b
    assert build_intervals(a, "TrackIn", "TrackOut", True) == build_intervals(b, "TrackIn", "TrackOut", True)


def test_same_timestamp_orders_by_id():
    store = make_store({"m1": "Machine"}, [("b", "Alarm", 5, ["m1"]), ("a", "Alarm", 5, ["m1"])])
    assert [e.id for e in store.events] == ["a", "b"]


def test_base_view_drops_derived_only():
    recs = records({"m1": "Machine", "s1": "Sensor"}, [("e", "Observation", 1, ["s1"])])
    recs[-1]["entities"].append({"id": "m1", "derived": True})
    recs.append({"kind": "relation", "subject": "s1", "predicate": "isPartOf", "object": "m1",
                 "derived": True})
    store, _ = build_store(recs)
    base = store.base_view()
    assert base.event("e").entity_ids == ("s1",)
    assert base.part_of == ()
    assert store.event("e").entity_ids == ("s1", "m1")
