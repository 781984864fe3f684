"""Reference semantics and synthetic data.

:func:`oracle_eval` recomputes every pattern by plain nested scans over the
totally ordered event list.  It never touches the store's position indices,
memoized extents or the shared interval builder, so agreement with the
engines is meaningful evidence.  It is quadratic or worse on purpose; keep
inputs to a few hundred events.

:func:`generate_dataset` produces a seeded flow-shop log that exercises all
ten patterns, and :func:`random_records` produces small unstructured stores
for fuzzing.
"""

from __future__ import annotations

import math
import random
import statistics
from dataclasses import dataclass, fields
from typing import Iterator, Optional

from .ingest import CORRELATES_TO, IS_PART_OF, DerivedFact, dedupe, measurement, relation
from .model import DEFAULT_SUBCLASS_OF, Event, Store
from .patternspec import PatternInstance, resolve_params
from .patterns import PatternResult

# ---------------------------------------------------------------------------
# brute-force semantics


class _Brute:
    def __init__(self, store: Store):
        self.store = store
        self.tax = store.taxonomy
        self.events = list(store.events)  # already in total order

    def etype(self, e: Event, cls: str) -> bool:
        return self.tax.is_subclass(e.type, cls)

    def ent(self, x: str, cls: str) -> bool:
        return any(self.tax.is_subclass(t, cls) for t in self.store.entities[x].types)

    def ents(self, cls: str) -> list[str]:
        return sorted(x for x in self.store.entities if self.ent(x, cls))

    def corr(self, e: Event, x: str) -> bool:
        return any(c.entity == x for c in e.entities)

    def intervals(self, start: str, end: str, pair: bool) -> list[tuple[str, Optional[str], int, int]]:
        """FIFO replay per group; positions are indices into ``self.events``."""
        out = []
        for r in self.ents("Resource"):
            groups: list[Optional[str]] = self.ents("ProductionEntity") if pair else [None]
            for g in groups:
                open_: list[int] = []
                for i, e in enumerate(self.events):
                    if not self.corr(e, r) or (g is not None and not self.corr(e, g)):
                        continue
                    s, t = self.etype(e, start), self.etype(e, end)
                    if t and open_:
                        out.append((r, g, open_.pop(0), i))
                    if s:
                        open_.append(i)
        return out

    def ids(self, positions) -> tuple[str, ...]:
        return tuple(self.events[i].id for i in sorted(set(positions)))

    def shares(self, a: Event, b: Event, match_on) -> bool:
        for cls in match_on:
            if not any(self.ent(c.entity, cls) and self.corr(b, c.entity) for c in a.entities):
                return False
        return True


def _agg(agg: str, values: list, n: int, threshold):
    if agg == "count":
        return n
    if agg == "count_above":
        return len([v for v in values if v > threshold])
    if agg == "count_below":
        return len([v for v in values if v < threshold])
    if not values:
        return None
    if agg == "sum":
        if all(type(v) is int for v in values):
            return sum(values)
        return math.fsum(values)
    if agg == "avg":
        return statistics.fmean(values)
    if agg == "var":
        return float(statistics.pvariance(values))
    if agg == "stddev":
        return float(statistics.pstdev(values))
    return {"min": min, "max": max}[agg](values)


def _numeric(v) -> bool:
    return type(v) in (int, float) and math.isfinite(v)


def _o_interval_count(b: _Brute, name, start, end, counted, pair_on_production_entity,
                      counted_shares_production_entity):
    facts = []
    for r, g, s, t in b.intervals(start, end, pair_on_production_entity):
        hits = [i for i in range(s, t + 1)
                if b.etype(b.events[i], counted) and b.corr(b.events[i], r)
                and (not counted_shares_production_entity or g is None or b.corr(b.events[i], g))]
        facts.append(measurement(name, "interval_count", b.events[t].id, "count", len(hits),
                                 "count", b.ids([s, *hits, t]),
                                 (b.events[s].id, b.events[t].id)))
    return facts


def _o_interval_aggregate(b: _Brute, name, event_type, attribute, agg, start, end, threshold,
                          window, pair_on_production_entity, event_shares_production_entity):
    unit = "count" if agg.startswith("count") else ""

    def one(hits):
        used = [i for i in hits if _numeric(b.events[i].attributes.get(attribute))]
        value = _agg(agg, [b.events[i].attributes[attribute] for i in used], len(hits), threshold)
        return value, (hits if agg == "count" else used)

    facts = []
    if window == "all-per-resource":
        for r in b.ents("Resource"):
            hits = [i for i, e in enumerate(b.events) if b.etype(e, event_type) and b.corr(e, r)]
            value, contrib = one(hits)
            if value is not None:
                facts.append(measurement(name, "interval_aggregate", r, agg, value, unit,
                                         b.ids(contrib)))
        return facts
    for r, g, s, t in b.intervals(start, end, pair_on_production_entity):
        hits = [i for i in range(s, t + 1)
                if b.etype(b.events[i], event_type) and b.corr(b.events[i], r)
                and (not event_shares_production_entity or g is None or b.corr(b.events[i], g))]
        value, contrib = one(hits)
        if value is not None:
            facts.append(measurement(name, "interval_aggregate", b.events[t].id, agg, value, unit,
                                     b.ids([s, *contrib, t]), (b.events[s].id, b.events[t].id)))
    return facts


def _o_elapsed_preceding(b: _Brute, name, event_type, preceding, match_on):
    facts = []
    for i, e1 in enumerate(b.events):
        if not b.etype(e1, event_type):
            continue
        cands = [j for j in range(i) if b.etype(b.events[j], preceding)
                 and b.shares(e1, b.events[j], match_on)]
        if cands:
            e2 = b.events[max(cands)]
            facts.append(measurement(name, "elapsed_preceding", e1.id, "elapsed",
                                     e1.timestamp - e2.timestamp, "ms", (e2.id, e1.id)))
    return facts


def _o_elapsed_succeeding(b: _Brute, name, event_type, first_event_filter, match_on):
    facts = []
    for i, e1 in enumerate(b.events):
        if not b.etype(e1, event_type):
            continue
        if first_event_filter is not None:
            attr, want = first_event_filter
            got = e1.attributes.get(attr, _MISSING)
            if got is _MISSING or got != want or isinstance(got, bool) != isinstance(want, bool):
                continue
        cands = [j for j in range(i + 1, len(b.events)) if b.etype(b.events[j], event_type)
                 and b.shares(e1, b.events[j], match_on)]
        if cands:
            e2 = b.events[min(cands)]
            facts.append(measurement(name, "elapsed_succeeding_same_type", e1.id, "elapsed",
                                     e2.timestamp - e1.timestamp, "ms", (e1.id, e2.id)))
    return facts


_MISSING = object()


def _o_elapsed_maximum(b: _Brute, name, start, end, entity_type):
    facts = []
    for x in b.ents(entity_type):
        starts = [i for i, e in enumerate(b.events) if b.etype(e, start) and b.corr(e, x)]
        ends = [i for i, e in enumerate(b.events) if b.etype(e, end) and b.corr(e, x)]
        if starts and ends:
            s, t = min(starts), max(ends)
            value = max(b.events[i].timestamp for i in ends) - min(b.events[i].timestamp for i in starts)
            if value >= 0:
                facts.append(measurement(name, "elapsed_maximum", x, "elapsed_max", value, "ms",
                                         b.ids([s, t])))
    return facts


def _o_relate_preceding(b: _Brute, name, event_type, preceding, target_entity_type, match_on):
    facts = []
    for i, e1 in enumerate(b.events):
        if not b.etype(e1, event_type):
            continue
        cands = [j for j in range(i) if b.etype(b.events[j], preceding)
                 and b.shares(e1, b.events[j], match_on)]
        if not cands:
            continue
        e2 = b.events[max(cands)]
        for c in e2.entities:
            if b.ent(c.entity, target_entity_type):
                facts.append(relation(name, "relate_preceding", e1.id, CORRELATES_TO, c.entity,
                                      (e2.id, e1.id)))
    return facts


def _o_relate_partof(b: _Brute, name, direction, event_type, event_entity_filter,
                     other_entity_filter):
    facts = []
    for e in b.events:
        if not b.etype(e, event_type):
            continue
        for c in e.entities:
            a = c.entity
            if event_entity_filter and not b.ent(a, event_entity_filter):
                continue
            for edge in b.store.part_of:
                near, far = ((edge.whole, edge.part) if direction == "whole-to-part"
                             else (edge.part, edge.whole))
                if near != a or (other_entity_filter and not b.ent(far, other_entity_filter)):
                    continue
                if any(d.entity == far and not d.derived for d in e.entities):
                    continue
                facts.append(relation(name, "relate_partof", e.id, CORRELATES_TO, far, (e.id,)))
    return facts


def _o_relate_aggregation(b: _Brute, name, agg_type, entity_type, recursive, forward):
    pattern = "relate_succeeding_aggregation" if forward else "relate_preceding_aggregation"
    aggs = []
    for k, a in enumerate(b.events):
        if not b.etype(a, agg_type):
            continue
        roles = [c.role for c in a.entities]
        if "input" not in roles or "output" not in roles:
            continue
        ins = [c.entity for c in a.entities if c.role == "input" and b.ent(c.entity, entity_type)]
        outs = [c.entity for c in a.entities if c.role == "output" and b.ent(c.entity, entity_type)]
        aggs.append((k, outs, ins) if forward else (k, ins, outs))
    corr = [{c.entity for c in e.entities} for e in b.events]

    def side(i, k):
        return i > k if forward else i < k

    if recursive:
        grew = True
        while grew:
            grew = False
            for k, src, dst in aggs:
                for i in range(len(b.events)):
                    if side(i, k) and any(x in corr[i] for x in src):
                        for y in dst:
                            if y not in corr[i] and any(x != y and x in corr[i] for x in src):
                                corr[i].add(y)
                                grew = True
    facts = []
    for k, src, dst in aggs:
        for i in range(len(b.events)):
            if not side(i, k):
                continue
            for x in src:
                if x not in corr[i]:
                    continue
                for y in dst:
                    if y != x:
                        facts.append(relation(name, pattern, b.events[i].id, CORRELATES_TO, y,
                                              b.ids([i, k])))
    return facts


def _o_derive_partof(b: _Brute, name, start, end, part_entity_type, whole_entity_type):
    facts = []
    for r, w, s, t in b.intervals(start, end, True):
        if not b.ent(w, whole_entity_type):
            continue
        for i in range(s, t + 1):
            c = b.events[i]
            if not b.corr(c, r):
                continue
            for ref in c.entities:
                p = ref.entity
                if p != w and b.ent(p, part_entity_type):
                    facts.append(relation(name, "derive_partof", p, IS_PART_OF, w, b.ids([s, i, t]),
                                          (b.events[s].id, b.events[t].id)))
    return facts


_ORACLES = {
    "interval_count": _o_interval_count,
    "interval_aggregate": _o_interval_aggregate,
    "elapsed_preceding": _o_elapsed_preceding,
    "elapsed_succeeding_same_type": _o_elapsed_succeeding,
    "elapsed_maximum": _o_elapsed_maximum,
    "relate_preceding": _o_relate_preceding,
    "relate_partof": _o_relate_partof,
    "relate_preceding_aggregation": lambda b, name, **kw: _o_relate_aggregation(b, name, forward=False, **kw),
    "relate_succeeding_aggregation": lambda b, name, **kw: _o_relate_aggregation(b, name, forward=True, **kw),
    "derive_partof": _o_derive_partof,
}


def oracle_eval(instance: PatternInstance, store: Store) -> PatternResult:
    """Facts for ``instance`` on ``store`` by exhaustive scanning (warnings are not modelled)."""
    kwargs = resolve_params(instance)
    if "match_on" in kwargs:
        kwargs["match_on"] = tuple(kwargs["match_on"])
    facts: list[DerivedFact] = _ORACLES[instance.pattern](_Brute(store), instance.name, **kwargs)
    res = PatternResult(dedupe(facts))
    res.counters["matches"] = len(res.facts)
    return res


# ---------------------------------------------------------------------------
# synthetic flow-shop data


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs for :func:`generate_dataset`.  Rates are expected counts per machine visit."""

    seed: int = 42
    machines: int = 3
    jobs: int = 12
    lots: int = 6
    products_per_lot: int = 3
    sensor_rate: float = 2.0
    alarm_rate: float = 0.8
    split_probability: float = 0.4
    merge_probability: float = 0.4
    consume_probability: float = 0.6
    horizon: int = 10**12
    failure_probability: float = 0.3
    maintenance_probability: float = 0.3
    repair_probability: float = 0.5
    tool_change_probability: float = 0.4
    tools_per_machine: int = 2
    workstations: int = 1
    buffers: int = 1
    agvs: int = 1

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ValueError(f"{f.name} must be a number, got {v!r}")
            if f.name.endswith("_probability") and not 0.0 <= v <= 1.0:
                raise ValueError(f"{f.name} must be in [0, 1], got {v}")
            if v < 0:
                raise ValueError(f"{f.name} must be >= 0, got {v}")
            if f.type in ("int", int) and not isinstance(v, int):
                raise ValueError(f"{f.name} must be an integer, got {v!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if self.lots and not (self.workstations and self.buffers and self.agvs):
            raise ValueError("lots need at least one workstation, buffer and AGV")
        if self.jobs and self.machines and not self.tools_per_machine:
            raise ValueError("machines need at least one tool")


class _Emitter:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.t = 0
        self.n = 0

    def entity(self, eid: str, etype: str) -> dict:
        return {"kind": "entity", "id": eid, "types": [etype], "attributes": {}}

    def event(self, etype: str, refs, attrs=None, gap: tuple[int, int] = (0, 3)) -> dict:
        self.t += self.rng.randint(*gap)
        self.n += 1
        ents = []
        for r in refs:
            if isinstance(r, tuple):
                ents.append({"id": r[0], "role": r[1]})
            else:
                ents.append({"id": r})
        return {"kind": "event", "id": f"e{self.n:08d}", "type": etype, "timestamp": self.t,
                "entities": ents, "attributes": attrs or {}}


def _how_many(rng: random.Random, rate: float) -> int:
    whole = int(rate)
    return whole + (rng.random() < rate - whole)


def generate_dataset(config: GeneratorConfig) -> Iterator[dict]:
    """Seeded flow-shop log as ingest records.

    Jobs visit every machine in order (maintenance, tool switches, alarms,
    repairs, sensor observations, failures).  Lots then pass a workstation
    product by product (component deliveries by AGV, consumption, reject
    counts), may be split or merged, and finally pass the buffer and AGV.
    Entities are emitted before their first use, so the stream loads in one pass.
    """
    rng = random.Random(config.seed)
    em = _Emitter(rng)
    machines = [f"M{i + 1}" for i in range(config.machines)]
    sensors = {m: f"S{m[1:]}" for m in machines}
    tools = {m: [f"T{m[1:]}.{k + 1}" for k in range(config.tools_per_machine)] for m in machines}
    stations = [f"W{i + 1}" for i in range(config.workstations)]
    buffers = [f"B{i + 1}" for i in range(config.buffers)]
    agvs = [f"A{i + 1}" for i in range(config.agvs)]
    for m in machines:
        yield em.entity(m, "Machine")
        yield em.entity(sensors[m], "Sensor")
        for tool in tools[m]:
            yield em.entity(tool, "Tool")
    for ids, etype in ((stations, "Workstation"), (buffers, "Buffer"), (agvs, "AGV")):
        for x in ids:
            yield em.entity(x, etype)
    for m in machines:
        yield {"kind": "relation", "predicate": "isPartOf", "subject": sensors[m], "object": m}

    mounted: dict[str, Optional[str]] = {m: None for m in machines}
    for j in range(config.jobs):
        if em.t >= config.horizon:
            break
        job = f"J{j + 1}"
        yield em.entity(job, "Job")
        for m in machines:
            if rng.random() < config.maintenance_probability:
                yield em.event("Maintenance", [m], gap=(1, 5))
            if mounted[m] is None or rng.random() < config.tool_change_probability:
                mounted[m] = rng.choice(tools[m])
                yield em.event("SwitchTool", [m, mounted[m]], gap=(1, 3))
            yield em.event("TrackIn", [m, job], gap=(1, 3))
            inside = (["obs"] * _how_many(rng, config.sensor_rate)
                      + ["alarm"] * _how_many(rng, config.alarm_rate))
            rng.shuffle(inside)
            for what in inside:
                if what == "obs":
                    value = round(rng.gauss(10.0, 2.0), 3)
                    yield em.event("Observation", [sensors[m]], {"value": value}, gap=(1, 4))
                else:
                    yield em.event("Alarm", [m], {"code": rng.choice(["A1", "A2", "A7"])}, gap=(0, 4))
                    if rng.random() < config.repair_probability:
                        yield em.event("Repair", [m], gap=(1, 4))
            yield em.event("TrackOut", [m, job], gap=(1, 5))
            if rng.random() < config.failure_probability:
                yield em.event("SwitchState", [m], {"state": "Failed"}, gap=(0, 3))
                yield em.event("SwitchState", [m], {"state": "Working"}, gap=(1, 10))

    waiting: Optional[str] = None
    n_comp = 0
    n_lots = config.lots
    for k in range(config.lots):
        if em.t >= config.horizon:
            break
        lot = f"L{k + 1}"
        products = [f"P{k + 1}.{i + 1}" for i in range(config.products_per_lot)]
        yield em.entity(lot, "ProductionLot")
        for p in products:
            yield em.entity(p, "Product")
        ws, buf, agv = rng.choice(stations), rng.choice(buffers), rng.choice(agvs)
        yield em.event("TrackIn", [ws, lot], gap=(1, 5))
        for p in products:
            comp = None
            if rng.random() < config.consume_probability:
                n_comp += 1
                comp = f"C{n_comp}"
                yield em.entity(comp, "Component")
                yield em.event("TrackIn", [agv, comp], gap=(0, 2))
                yield em.event("TrackOut", [agv, comp], gap=(1, 3))
            yield em.event("TrackIn", [ws, p], gap=(0, 2))
            if comp is not None:
                yield em.event("Consume", [ws, (comp, "input"), (p, "output")], gap=(1, 3))
            yield em.event("Observation", [ws, p], {"quantityRejected": rng.randint(0, 2)}, gap=(1, 3))
            yield em.event("TrackOut", [ws, p], gap=(1, 3))
        yield em.event("TrackOut", [ws, lot], gap=(0, 2))

        current = [lot]
        if rng.random() < config.split_probability:
            children = []
            for suffix in "ab":
                n_lots += 1
                child = f"L{n_lots}"
                children.append(child)
                yield em.entity(child, "ProductionLot")
            yield em.event("Split", [(lot, "input")] + [(c, "output") for c in children], gap=(1, 3))
            current = children
        for c in current:
            merged = None
            if waiting is not None and rng.random() < config.merge_probability:
                n_lots += 1
                merged = f"L{n_lots}"
                yield em.entity(merged, "ProductionLot")
                yield em.event("Merge", [(waiting, "input"), (c, "input"), (merged, "output")],
                               gap=(1, 3))
                waiting = None
            yield em.event("TrackIn", [buf, merged or c], gap=(1, 3))
            yield em.event("TrackOut", [buf, merged or c], gap=(1, 6))
            # a merged lot is never merged again, which keeps genealogy chains short
            if merged is None:
                waiting = c
        for p in products:
            yield em.event("TrackIn", [buf, p], gap=(0, 2))
            yield em.event("TrackOut", [buf, p], gap=(1, 6))
            yield em.event("TrackIn", [agv, p], gap=(0, 2))
            yield em.event("TrackOut", [agv, p], gap=(1, 8))


def default_taxonomy_document() -> dict:
    return {"subclass_of": {k: list(v) for k, v in sorted(DEFAULT_SUBCLASS_OF.items())}}


# ---------------------------------------------------------------------------
# fuzz stores

FUZZ_EVENT_TYPES = ("TrackIn", "TrackOut", "Alarm", "Repair", "Maintenance", "Observation",
                    "SwitchState", "SwitchTool", "Split", "Merge", "Consume")
FUZZ_ENTITY_TYPES = ("Machine", "Workstation", "Tool", "Sensor", "Job", "Product",
                     "Component", "ProductionLot")


def random_records(rng: random.Random, max_events: int = 200) -> list[dict]:
    """A small, dense random store: many timestamp ties, roles on aggregation
    events, acyclic part-of edges, and a mix of numeric and junk attribute values."""
    n_ent = rng.randint(1, 12)
    ents = [(f"x{i}", rng.choice(FUZZ_ENTITY_TYPES)) for i in range(n_ent)]
    records: list[dict] = [
        {"kind": "entity", "id": x, "types": [t], "attributes": {}} for x, t in ents
    ]
    for i in range(n_ent):
        for j in range(i + 1, n_ent):
            if rng.random() < 0.08:
                records.append({"kind": "relation", "predicate": "isPartOf",
                                "subject": ents[i][0], "object": ents[j][0]})
    horizon = rng.randint(1, 60)
    for k in range(rng.randint(0, max_events)):
        etype = rng.choice(FUZZ_EVENT_TYPES)
        chosen = rng.sample(ents, rng.randint(1, min(4, n_ent)))
        refs = []
        for x, _ in chosen:
            ref: dict = {"id": x}
            if etype in ("Split", "Merge", "Consume") and rng.random() < 0.9:
                ref["role"] = rng.choice(("input", "output"))
            refs.append(ref)
        attrs: dict = {}
        roll = rng.random()
        if roll < 0.6:
            attrs["value"] = rng.choice([rng.randint(-5, 20), round(rng.uniform(-5, 20), 2)])
        elif roll < 0.7:
            attrs["value"] = rng.choice(["n/a", True, "12"])
        if etype == "SwitchState":
            attrs["state"] = rng.choice(("Failed", "Working"))
        records.append({"kind": "event", "id": f"ev{k}", "type": etype,
                        "timestamp": rng.randint(0, horizon), "entities": refs, "attributes": attrs})
    rng.shuffle(records)
    return records


_EVENT_CLASSES = FUZZ_EVENT_TYPES + ("Event", "Aggregate")
_ENTITY_CLASSES = FUZZ_ENTITY_TYPES + ("Entity", "Resource", "ProductionEntity")


def random_instances(rng: random.Random) -> list[PatternInstance]:
    """One randomly parameterized instance of each pattern (names ``r1`` .. ``r10``)."""
    ev = lambda: rng.choice(_EVENT_CLASSES)  # noqa: E731
    en = lambda: rng.choice(_ENTITY_CLASSES)  # noqa: E731
    match = lambda: tuple(rng.sample(("Resource", "ProductionEntity", "Machine", "Entity"),  # noqa: E731
                                     rng.randint(0, 2)))
    agg = rng.choice(("sum", "avg", "min", "max", "count", "var", "stddev",
                      "count_above", "count_below"))
    p2 = {"eventType": ev(), "attribute": "value", "agg": agg,
          "window": rng.choice(("interval", "all-per-resource")),
          "pairOnProductionEntity": rng.random() < 0.7,
          "eventSharesProductionEntity": rng.random() < 0.3}
    if p2["window"] == "interval":
        p2.update(start=ev(), end=ev())
    if agg in ("count_above", "count_below"):
        p2["threshold"] = rng.choice((0, 5, 7.5, 11))
    p7 = {"direction": rng.choice(("whole-to-part", "part-to-whole")), "eventType": ev()}
    if rng.random() < 0.5:
        p7["eventEntityFilter"] = en()
    if rng.random() < 0.5:
        p7["otherEntityFilter"] = en()
    p4 = {"eventType": ev(), "matchOn": match()}
    if rng.random() < 0.5:
        p4["firstEventFilter"] = ("state", rng.choice(("Failed", "Working")))
    specs = [
        ("interval_count", {"start": ev(), "end": ev(), "counted": ev(),
                            "pairOnProductionEntity": rng.random() < 0.7,
                            "countedSharesProductionEntity": rng.random() < 0.3}),
        ("interval_aggregate", p2),
        ("elapsed_preceding", {"eventType": ev(), "preceding": ev(), "matchOn": match()}),
        ("elapsed_succeeding_same_type", p4),
        ("elapsed_maximum", {"start": ev(), "end": ev(), "entityType": en()}),
        ("relate_preceding", {"eventType": ev(), "preceding": ev(), "targetEntityType": en(),
                              "matchOn": match()}),
        ("relate_partof", p7),
        ("relate_preceding_aggregation", {"aggType": rng.choice(("Aggregate", "Split", "Merge", "Consume")),
                                          "entityType": en(), "recursive": rng.random() < 0.5}),
        ("relate_succeeding_aggregation", {"aggType": rng.choice(("Aggregate", "Split", "Merge", "Consume")),
                                           "entityType": en(), "recursive": rng.random() < 0.5}),
        ("derive_partof", {"start": ev(), "end": ev(), "partEntityType": en(),
                           "wholeEntityType": rng.choice(("ProductionEntity", "ProductionLot", "Product", "Entity"))}),
    ]
    return [PatternInstance(p, f"r{k + 1}", params) for k, (p, params) in enumerate(specs)]
