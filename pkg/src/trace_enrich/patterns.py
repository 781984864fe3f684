"""The ten enrichment patterns and the staged pipeline runner.

Every engine is a pure function of a frozen :class:`~trace_enrich.model.Store`
and returns a :class:`PatternResult` with deduplicated facts.  Engines work on
the per-entity sorted position indices; membership "inside an interval" is
decided on total-order positions, so boundaries are closed and ties are
broken by event id.
"""

from __future__ import annotations

import gc
import logging
import math
import statistics
import time
from bisect import bisect_left, bisect_right
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from .ingest import CORRELATES_TO, IS_PART_OF, DerivedFact, dedupe, materialize, measurement, relation
from .model import AGGREGATE, PRODUCTION_ENTITY, RESOURCE, Store
from .patternspec import Diagnostic, PatternInstance, Pipeline, resolve_params, validate_pipeline

logger = logging.getLogger(__name__)

VALUE_AGGS = ("sum", "avg", "min", "max", "var", "stddev")
COUNT_AGGS = ("count", "count_above", "count_below")


@dataclass
class PatternResult:
    facts: list[DerivedFact] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    counters: dict[str, int] = field(default_factory=lambda: {
        "intervals": 0, "matches": 0, "skippedNonNumeric": 0, "unmatched": 0})


def _finish(facts: Iterable[DerivedFact], warnings: list[str], **counters: int) -> PatternResult:
    res = PatternResult(dedupe(facts), warnings)
    res.counters.update(counters)
    res.counters["matches"] = len(res.facts)
    return res


def _ids(store: Store, positions: Iterable[int]) -> tuple[str, ...]:
    events = store.events
    return tuple(events[i].id for i in sorted(set(positions)))


def is_number(v: object) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def aggregate(agg: str, values: Sequence, n_events: int, threshold=None):
    """Apply ``agg``; ``None`` means "no fact" (value aggregate over nothing)."""
    if agg == "count":
        return n_events
    if agg == "count_above":
        return sum(1 for v in values if v > threshold)
    if agg == "count_below":
        return sum(1 for v in values if v < threshold)
    if not values:
        return None
    if agg == "sum":
        return sum(values) if all(isinstance(v, int) for v in values) else math.fsum(values)
    if agg == "avg":
        return math.fsum(values) / len(values)
    if agg == "min":
        return min(values)
    if agg == "max":
        return max(values)
    if agg == "var":
        return float(statistics.pvariance(values))
    if agg == "stddev":
        return float(statistics.pstdev(values))
    raise ValueError(f"unknown aggregation {agg!r}")


# ---------------------------------------------------------------------------
# p1, p2: aggregation over an interval

def p1_interval_count(
    store: Store, start: str, end: str, counted: str,
    pair_on_production_entity: bool = True,
    counted_shares_production_entity: bool = False,
    instance: str = "interval_count",
) -> PatternResult:
    """Count ``counted`` events of the interval's resource between start and end (inclusive)."""
    intervals, warnings = store.intervals(start, end, pair_on_production_entity)
    events, pos = store.events, store.pos
    facts = []
    for iv in intervals:
        lo, hi = pos[iv.start], pos[iv.end]
        lst = store.typed_positions(iv.resource, counted)
        hits = lst[bisect_left(lst, lo):bisect_right(lst, hi)]
        if counted_shares_production_entity and iv.production_entity is not None:
            pe = iv.production_entity
            hits = [i for i in hits if any(c.entity == pe for c in events[i].entities)]
        facts.append(measurement(instance, "interval_count", iv.end, "count", len(hits), "count",
                                 _ids(store, [lo, *hits, hi]), (iv.start, iv.end)))
    return _finish(facts, list(warnings), intervals=len(intervals),
                   unmatched=sum(w.startswith("unmatched") for w in warnings))


def p2_interval_aggregate(
    store: Store, event_type: str, attribute: str, agg: str,
    start: Optional[str] = None, end: Optional[str] = None, threshold=None,
    window: str = "interval", pair_on_production_entity: bool = True,
    event_shares_production_entity: bool = False,
    instance: str = "interval_aggregate",
) -> PatternResult:
    """Aggregate a numeric attribute of events in an interval, or over all of a resource's events.

    Value aggregations (sum, avg, min, max, var, stddev) emit nothing for an
    empty collection; count, count_above and count_below emit 0.
    """
    if agg not in VALUE_AGGS + COUNT_AGGS:
        raise ValueError(f"unknown aggregation {agg!r}")
    if agg in ("count_above", "count_below") and threshold is None:
        raise ValueError(f"{agg} needs a threshold")
    events, pos = store.events, store.pos
    facts: list[DerivedFact] = []
    skipped = 0
    unit = "count" if agg in COUNT_AGGS else ""

    def collect(hits: list[int]) -> tuple[list, list[int]]:
        nonlocal skipped
        values, used = [], []
        for i in hits:
            attrs = events[i].attributes
            if attribute not in attrs:
                continue
            v = attrs[attribute]
            if is_number(v):
                values.append(v)
                used.append(i)
            else:
                skipped += 1
        return values, used

    if window == "all-per-resource":
        for r in store.sorted_entities_of(RESOURCE):
            hits = store.typed_positions(r, event_type)
            values, used = collect(hits)
            value = aggregate(agg, values, len(hits), threshold)
            if value is None:
                continue
            contributors = hits if agg == "count" else used
            facts.append(measurement(instance, "interval_aggregate", r, agg, value, unit,
                                     _ids(store, contributors)))
        return _finish(facts, [], skippedNonNumeric=skipped)

    if window != "interval":
        raise ValueError(f"unknown window {window!r}")
    if start is None or end is None:
        raise ValueError("window=interval needs start and end")
    intervals, warnings = store.intervals(start, end, pair_on_production_entity)
    for iv in intervals:
        lo, hi = pos[iv.start], pos[iv.end]
        lst = store.typed_positions(iv.resource, event_type)
        hits = lst[bisect_left(lst, lo):bisect_right(lst, hi)]
        if event_shares_production_entity and iv.production_entity is not None:
            pe = iv.production_entity
            hits = [i for i in hits if any(c.entity == pe for c in events[i].entities)]
        values, used = collect(hits)
        value = aggregate(agg, values, len(hits), threshold)
        if value is None:
            continue
        contributors = hits if agg == "count" else used
        facts.append(measurement(instance, "interval_aggregate", iv.end, agg, value, unit,
                                 _ids(store, [lo, *contributors, hi]), (iv.start, iv.end)))
    return _finish(facts, list(warnings), intervals=len(intervals), skippedNonNumeric=skipped,
                   unmatched=sum(w.startswith("unmatched") for w in warnings))


# ---------------------------------------------------------------------------
# p3 to p6: closest neighbours

def _closest(store: Store, i: int, candidate_cls: str, match_on: Sequence[str],
             backwards: bool) -> Optional[int]:
    """Nearest event (strictly before or after position ``i``) of ``candidate_cls``
    sharing at least one entity of every class in ``match_on`` with event ``i``."""
    if not match_on:
        lst = store.positions_of_type(candidate_cls)
        if backwards:
            j = bisect_left(lst, i) - 1
            return lst[j] if j >= 0 else None
        j = bisect_right(lst, i)
        return lst[j] if j < len(lst) else None
    events = store.events
    mine = events[i].entity_ids
    shared = []
    for cls in match_on:
        extent = store.entities_of(cls)
        s = {x for x in mine if x in extent}
        if not s:
            return None
        shared.append(s)
    # walk the shortest candidate lists; the other classes are checked per candidate
    k = min(range(len(shared)), key=lambda n: sum(
        len(store.typed_positions(x, candidate_cls)) for x in shared[n]))
    others = shared[:k] + shared[k + 1:]
    best: Optional[int] = None
    for x in shared[k]:
        lst = store.typed_positions(x, candidate_cls)
        if backwards:
            j = bisect_left(lst, i) - 1
            while j >= 0 and (best is None or lst[j] > best):
                ids = events[lst[j]].entity_ids
                if all(not s.isdisjoint(ids) for s in others):
                    best = lst[j]
                    break
                j -= 1
        else:
            j = bisect_right(lst, i)
            while j < len(lst) and (best is None or lst[j] < best):
                ids = events[lst[j]].entity_ids
                if all(not s.isdisjoint(ids) for s in others):
                    best = lst[j]
                    break
                j += 1
    return best


def p3_elapsed_preceding(
    store: Store, event_type: str, preceding: str, match_on: Sequence[str] = (RESOURCE,),
    instance: str = "elapsed_preceding",
) -> PatternResult:
    """Time from the closest preceding ``preceding`` event to each ``event_type`` event."""
    events = store.events
    facts = []
    missing = 0
    for i in store.positions_of_type(event_type):
        j = _closest(store, i, preceding, tuple(match_on), backwards=True)
        if j is None:
            missing += 1
            continue
        e1, e2 = events[i], events[j]
        facts.append(measurement(instance, "elapsed_preceding", e1.id, "elapsed",
                                 e1.timestamp - e2.timestamp, "ms", (e2.id, e1.id)))
    return _finish(facts, [], unmatched=missing)


def p4_elapsed_succeeding_same_type(
    store: Store, event_type: str, first_event_filter: Optional[Sequence] = None,
    match_on: Sequence[str] = (RESOURCE,), instance: str = "elapsed_succeeding_same_type",
) -> PatternResult:
    """Time from each ``event_type`` event (optionally filtered on an attribute) to the next one."""
    events = store.events
    facts = []
    missing = 0
    for i in store.positions_of_type(event_type):
        e1 = events[i]
        if first_event_filter is not None and not _attr_matches(e1.attributes, *first_event_filter):
            continue
        j = _closest(store, i, event_type, tuple(match_on), backwards=False)
        if j is None:
            missing += 1
            continue
        e2 = events[j]
        facts.append(measurement(instance, "elapsed_succeeding_same_type", e1.id, "elapsed",
                                 e2.timestamp - e1.timestamp, "ms", (e1.id, e2.id)))
    return _finish(facts, [], unmatched=missing)


def _attr_matches(attrs, name: str, expected) -> bool:
    if name not in attrs:
        return False
    got = attrs[name]
    return got == expected and isinstance(got, bool) == isinstance(expected, bool)


def p5_elapsed_maximum(
    store: Store, start: str, end: str, entity_type: str, instance: str = "elapsed_maximum",
) -> PatternResult:
    """Last ``end`` minus first ``start`` timestamp per entity of ``entity_type``."""
    events = store.events
    facts, warnings = [], []
    for x in store.sorted_entities_of(entity_type):
        starts = store.typed_positions(x, start)
        ends = store.typed_positions(x, end)
        if not starts or not ends:
            continue
        first, last = starts[0], ends[-1]
        value = events[last].timestamp - events[first].timestamp
        if value < 0:
            warnings.append(f"{x}: last {end} precedes first {start}; no fact")
            continue
        facts.append(measurement(instance, "elapsed_maximum", x, "elapsed_max", value, "ms",
                                 _ids(store, (first, last))))
    return _finish(facts, warnings)


def p6_relate_preceding(
    store: Store, event_type: str, preceding: str, target_entity_type: str,
    match_on: Sequence[str] = (RESOURCE,), instance: str = "relate_preceding",
) -> PatternResult:
    """Correlate each event to the ``target_entity_type`` entities of its closest preceding event."""
    events = store.events
    targets = store.entities_of(target_entity_type)
    facts = []
    missing = 0
    for i in store.positions_of_type(event_type):
        j = _closest(store, i, preceding, tuple(match_on), backwards=True)
        if j is None:
            missing += 1
            continue
        e1, e2 = events[i], events[j]
        for x in sorted({c.entity for c in e2.entities if c.entity in targets}):
            facts.append(relation(instance, "relate_preceding", e1.id, CORRELATES_TO, x,
                                  (e2.id, e1.id)))
    return _finish(facts, [], unmatched=missing)


# ---------------------------------------------------------------------------
# p7 to p9: relations through part-of edges and aggregation events

def p7_relate_partof(
    store: Store, direction: str = "whole-to-part", event_type: str = "Event",
    event_entity_filter: Optional[str] = None, other_entity_filter: Optional[str] = None,
    instance: str = "relate_partof",
) -> PatternResult:
    """Propagate event correlations along isPartOf edges.

    whole-to-part: ``e`` corr ``w`` and ``p`` isPartOf ``w`` gives ``e`` corr ``p``;
    part-to-whole: ``e`` corr ``p`` and ``p`` isPartOf ``w`` gives ``e`` corr ``w``.
    Correlations already present as base correlations are not re-emitted.
    """
    if direction not in ("whole-to-part", "part-to-whole"):
        raise ValueError(f"unknown direction {direction!r}")
    events = store.events
    types = store.event_types(event_type)
    own = store.entities_of(event_entity_filter) if event_entity_filter else None
    other = store.entities_of(other_entity_filter) if other_entity_filter else None
    if direction == "whole-to-part":
        anchors, step = store.wholes(), store.parts_of
    else:
        anchors, step = store.parts(), store.wholes_of
    facts = []
    for a in anchors:
        if own is not None and a not in own:
            continue
        related = [b for b in step(a) if other is None or b in other]
        if not related:
            continue
        for i in store.entity_positions(a):
            e = events[i]
            if e.type not in types:
                continue
            base = {c.entity for c in e.entities if not c.derived}
            for b in related:
                if b not in base:
                    facts.append(relation(instance, "relate_partof", e.id, CORRELATES_TO, b, (e.id,)))
    return _finish(facts, [])


def _aggregation_plans(store: Store, agg_type: str, entity_type: str, forward: bool,
                       warnings: list[str]) -> list[tuple[int, list[str], list[str]]]:
    """``(position, source entities, target entities)`` per aggregation event.

    Backward (p8) goes input to output, forward (p9) output to input.
    """
    extent = store.entities_of(entity_type)
    plans = []
    for a in store.positions_of_type(agg_type):
        ev = store.events[a]
        roles = {c.role for c in ev.entities}
        if "input" not in roles or "output" not in roles:
            warnings.append(f"aggregation event {ev.id} lacks input/output roles; skipped")
            continue
        ins = sorted({c.entity for c in ev.entities if c.role == "input" and c.entity in extent})
        outs = sorted({c.entity for c in ev.entities if c.role == "output" and c.entity in extent})
        plans.append((a, outs, ins) if forward else (a, ins, outs))
    return plans


def _relate_aggregation(store: Store, agg_type: str, entity_type: str, recursive: bool,
                        forward: bool, instance: str, pattern: str) -> PatternResult:
    events = store.events
    warnings: list[str] = []
    plans = _aggregation_plans(store, agg_type, entity_type, forward, warnings)
    extra: dict[str, set[int]] = {}

    def sources(x: str, a: int) -> list[int]:
        lst = store.entity_positions(x)
        got = lst[bisect_right(lst, a):] if forward else lst[:bisect_left(lst, a)]
        more = extra.get(x)
        if more:
            got = sorted(set(got).union(i for i in more if (i > a if forward else i < a)))
        return got

    if recursive:
        base_sets: dict[str, set[int]] = {}
        order = sorted(plans, reverse=forward)
        changed = True
        while changed:
            changed = False
            for a, srcs, tgts in order:
                for x in srcs:
                    cand = sources(x, a)
                    for y in tgts:
                        if y == x:
                            continue
                        have = base_sets.get(y)
                        if have is None:
                            have = base_sets[y] = set(store.entity_positions(y))
                        ex = extra.setdefault(y, set())
                        for i in cand:
                            if i not in ex and i not in have:
                                ex.add(i)
                                changed = True

    facts = []
    for a, srcs, tgts in plans:
        aid = events[a].id
        for x in srcs:
            for i in sources(x, a):
                eid = events[i].id
                prov = (aid, eid) if forward else (eid, aid)
                for y in tgts:
                    if y != x:
                        facts.append(relation(instance, pattern, eid, CORRELATES_TO, y, prov))
    return _finish(facts, warnings)


def p8_relate_preceding_aggregation(
    store: Store, agg_type: str = AGGREGATE, entity_type: str = PRODUCTION_ENTITY,
    recursive: bool = False, instance: str = "relate_preceding_aggregation",
) -> PatternResult:
    """Events before an aggregation event that concern an input also concern its outputs."""
    return _relate_aggregation(store, agg_type, entity_type, recursive, False, instance,
                               "relate_preceding_aggregation")


def p9_relate_succeeding_aggregation(
    store: Store, agg_type: str = AGGREGATE, entity_type: str = PRODUCTION_ENTITY,
    recursive: bool = False, instance: str = "relate_succeeding_aggregation",
) -> PatternResult:
    """Events after an aggregation event that concern an output also concern its inputs."""
    return _relate_aggregation(store, agg_type, entity_type, recursive, True, instance,
                               "relate_succeeding_aggregation")


# ---------------------------------------------------------------------------
# p10: part-of from events inside an interval

def p10_derive_partof(
    store: Store, start: str, end: str, part_entity_type: str,
    whole_entity_type: str = PRODUCTION_ENTITY, instance: str = "derive_partof",
) -> PatternResult:
    """``p`` isPartOf ``w`` when an event of ``p`` happens at the resource while it handles ``w``."""
    intervals, warnings = store.intervals(start, end, True)
    events, pos = store.events, store.pos
    parts = store.entities_of(part_entity_type)
    wholes = store.entities_of(whole_entity_type)
    facts = []
    used = 0
    for iv in intervals:
        w = iv.production_entity
        if w not in wholes:
            continue
        used += 1
        lo, hi = pos[iv.start], pos[iv.end]
        for i in store.positions_between(iv.resource, lo, hi):
            for c in events[i].entities:
                p = c.entity
                if p in parts and p != w:
                    facts.append(relation(instance, "derive_partof", p, IS_PART_OF, w,
                                          _ids(store, (lo, i, hi)), (iv.start, iv.end)))
    return _finish(facts, list(warnings), intervals=used,
                   unmatched=sum(w.startswith("unmatched") for w in warnings))


ENGINES: dict[str, Callable[..., PatternResult]] = {
    "interval_count": p1_interval_count,
    "interval_aggregate": p2_interval_aggregate,
    "elapsed_preceding": p3_elapsed_preceding,
    "elapsed_succeeding_same_type": p4_elapsed_succeeding_same_type,
    "elapsed_maximum": p5_elapsed_maximum,
    "relate_preceding": p6_relate_preceding,
    "relate_partof": p7_relate_partof,
    "relate_preceding_aggregation": p8_relate_preceding_aggregation,
    "relate_succeeding_aggregation": p9_relate_succeeding_aggregation,
    "derive_partof": p10_derive_partof,
}


def run_instance(store: Store, instance: PatternInstance) -> PatternResult:
    kwargs = {k: v for k, v in resolve_params(instance).items() if v is not None}
    return ENGINES[instance.pattern](store, instance=instance.name, **kwargs)


# ---------------------------------------------------------------------------
# pipeline

class PipelineError(ValueError):
    def __init__(self, diagnostics: Sequence[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))


@dataclass
class RunResult:
    facts: list[DerivedFact]
    results: dict[str, PatternResult]
    store: Store
    warnings: list[str]
    timings: dict[str, float]

    def facts_of(self, name: str) -> list[DerivedFact]:
        return self.results[name].facts


def run_pipeline(store: Store, pipeline: Pipeline, jobs: int = 1) -> RunResult:
    """Run the stages in order, materializing facts between stages.

    Instances of one stage see the same store snapshot and may run on up to
    ``jobs`` threads; results are merged in instance order, so output does not
    depend on ``jobs``.  The returned store has every fact materialized.
    """
    diags = validate_pipeline(pipeline, store.taxonomy)
    if diags:
        raise PipelineError(diags)
    # millions of small acyclic objects: generational GC passes only cost time here
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        return _run(store, pipeline, jobs)
    finally:
        if was_enabled:
            gc.enable()


def _run(store: Store, pipeline: Pipeline, jobs: int) -> RunResult:
    current = store
    results: dict[str, PatternResult] = {}
    timings: dict[str, float] = {}
    warnings: list[str] = []
    pending: list[DerivedFact] = []
    stages = pipeline.stages

    def timed(view: Store, inst: PatternInstance) -> tuple[PatternResult, float]:
        t0 = time.perf_counter()
        res = run_instance(view, inst)
        return res, time.perf_counter() - t0

    for k, stage in enumerate(stages):
        view = current if pipeline.use_derived else current.base_view()
        if jobs > 1 and len(stage) > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                outs = list(pool.map(lambda inst: timed(view, inst), stage))
        else:
            outs = [timed(view, inst) for inst in stage]
        for inst, (res, dt) in zip(stage, outs):
            results[inst.name] = res
            timings[inst.name] = dt
            warnings.extend(f"{inst.name}: {w}" for w in res.warnings)
            logger.info("%s: %d facts in %.3fs", inst.name, len(res.facts), dt)
        # names are unique and facts sort by instance first, so concatenating
        # the per-instance lists in name order is already a deduplicated, sorted union
        for inst in sorted(stage, key=lambda i: i.name):
            pending.extend(results[inst.name].facts)
        if k == len(stages) - 1 or pipeline.materialize_after(k):
            pending.sort(key=DerivedFact.sort_key)
            current, mw = materialize(current, pending, presorted=True)
            warnings.extend(mw)
            pending = []
    all_facts = [f for name in sorted(results) for f in results[name].facts]
    return RunResult(all_facts, results, current, warnings, timings)
