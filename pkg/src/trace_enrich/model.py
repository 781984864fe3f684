"""Event knowledge graph data model.

The store is a frozen, in-memory graph of typed events and entities.  Events
are kept in one list sorted by ``(timestamp, id)`` and every entity has an
index of the positions of the events it is correlated to, so "events of entity
``x`` between two events" is a pair of bisections.
"""

from __future__ import annotations

import logging
from bisect import bisect_left, bisect_right
from collections import deque
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, NamedTuple, Optional

logger = logging.getLogger(__name__)

EVENT = "Event"
ENTITY = "Entity"
RESOURCE = "Resource"
PRODUCTION_ENTITY = "ProductionEntity"
SENSOR = "Sensor"
AGGREGATE = "Aggregate"

ROLES = ("input", "output")

# shared by every event and entity without attributes
NO_ATTRIBUTES: Mapping[str, object] = MappingProxyType({})

DEFAULT_SUBCLASS_OF: dict[str, tuple[str, ...]] = {
    EVENT: (),
    ENTITY: (),
    RESOURCE: (ENTITY,),
    PRODUCTION_ENTITY: (ENTITY,),
    SENSOR: (ENTITY,),
    **{c: (RESOURCE,) for c in ("Machine", "Workstation", "Buffer", "AGV", "Operator", "Tool")},
    **{
        c: (PRODUCTION_ENTITY,)
        for c in ("Job", "Product", "Component", "ProductionLot", "Batch", "Order")
    },
    **{
        c: (EVENT,)
        for c in (
            "TrackIn",
            "TrackOut",
            "Alarm",
            "Repair",
            "Maintenance",
            "Observation",
            "SwitchState",
            "SwitchTool",
            AGGREGATE,
        )
    },
    **{c: (AGGREGATE,) for c in ("Split", "Merge", "Consume")},
}

ROOTS = (EVENT, ENTITY)


class TaxonomyError(ValueError):
    """Raised for cyclic, dangling or unrooted class declarations."""


class UnknownClassError(KeyError):
    def __init__(self, cls: str):
        super().__init__(cls)
        self.cls = cls

    def __str__(self) -> str:
        return f"unknown class {self.cls!r}"


class Taxonomy:
    """A class hierarchy with precomputed reflexive-transitive closure.

    ``subclass_of`` maps every class to its direct parents.  Only ``Event`` and
    ``Entity`` may be parentless.
    """

    def __init__(self, subclass_of: Mapping[str, Iterable[str]]):
        parents = {c: tuple(sorted(set(ps))) for c, ps in subclass_of.items()}
        for root in ROOTS:
            if parents.get(root, ()) != ():
                raise TaxonomyError(f"built-in root {root!r} cannot have parents")
            parents[root] = ()
        for cls, ps in parents.items():
            for p in ps:
                if p not in parents:
                    raise TaxonomyError(f"class {cls!r} has unknown parent {p!r}")
            if not ps and cls not in ROOTS:
                raise TaxonomyError(f"class {cls!r} does not reach a built-in root")
        cycle = _find_cycle(parents)
        if cycle:
            raise TaxonomyError("subclass cycle: " + " -> ".join(cycle))
        self.parents: dict[str, tuple[str, ...]] = parents
        self._ancestors: dict[str, frozenset[str]] = {}
        for cls in parents:
            self._closure(cls)
        descendants: dict[str, set[str]] = {c: set() for c in parents}
        for cls, ancs in self._ancestors.items():
            for a in ancs:
                descendants[a].add(cls)
        self._descendants = {c: frozenset(d) for c, d in descendants.items()}

    def _closure(self, cls: str) -> frozenset[str]:
        done = self._ancestors.get(cls)
        if done is not None:
            return done
        out = {cls}
        for p in self.parents[cls]:
            out |= self._closure(p)
        self._ancestors[cls] = frozenset(out)
        return self._ancestors[cls]

    @classmethod
    def default(cls) -> "Taxonomy":
        return cls(DEFAULT_SUBCLASS_OF)

    def extended(self, subclass_of: Mapping[str, Iterable[str]]) -> "Taxonomy":
        """New taxonomy where the given declarations add or replace parents."""
        merged = dict(self.parents)
        merged.update({c: tuple(ps) for c, ps in subclass_of.items()})
        return Taxonomy(merged)

    def __contains__(self, cls: object) -> bool:
        return cls in self.parents

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Taxonomy) and self.parents == other.parents

    def __hash__(self) -> int:
        return hash(tuple(sorted(self.parents.items())))

    @property
    def classes(self) -> frozenset[str]:
        return frozenset(self.parents)

    def ancestors(self, cls: str) -> frozenset[str]:
        try:
            return self._ancestors[cls]
        except KeyError:
            raise UnknownClassError(cls) from None

    def descendants(self, cls: str) -> frozenset[str]:
        """Every class ``c`` with ``c`` ⊑ ``cls``, including ``cls``."""
        try:
            return self._descendants[cls]
        except KeyError:
            raise UnknownClassError(cls) from None

    def is_subclass(self, sub: str, sup: str) -> bool:
        if sup not in self.parents:
            raise UnknownClassError(sup)
        return sup in self.ancestors(sub)


def _find_cycle(parents: Mapping[str, tuple[str, ...]]) -> Optional[list[str]]:
    white, grey, black = 0, 1, 2
    color = dict.fromkeys(parents, white)
    for start in sorted(parents):
        if color[start] != white:
            continue
        path = [start]
        stack = [iter(parents[start])]
        color[start] = grey
        while stack:
            nxt = next(stack[-1], None)
            if nxt is None:
                color[path.pop()] = black
                stack.pop()
                continue
            if color[nxt] == grey:
                return path[path.index(nxt):] + [nxt]
            if color[nxt] == white:
                color[nxt] = grey
                path.append(nxt)
                stack.append(iter(parents[nxt]))
    return None


def is_subclass(taxonomy: Taxonomy, sub: str, sup: str) -> bool:
    """Reflexive-transitive subsumption; raises UnknownClassError for undeclared classes."""
    if sub not in taxonomy:
        raise UnknownClassError(sub)
    return taxonomy.is_subclass(sub, sup)


class Correlation(NamedTuple):
    entity: str
    role: Optional[str] = None
    derived: bool = False


@dataclass(frozen=True, slots=True)
class Entity:
    id: str
    types: frozenset[str]
    attributes: Mapping[str, object] = NO_ATTRIBUTES


@dataclass(frozen=True, slots=True)
class Event:
    id: str
    type: str
    timestamp: int
    entities: tuple[Correlation, ...] = ()
    attributes: Mapping[str, object] = NO_ATTRIBUTES

    @property
    def key(self) -> tuple[int, str]:
        return (self.timestamp, self.id)

    @property
    def entity_ids(self) -> tuple[str, ...]:
        return tuple(c.entity for c in self.entities)


@dataclass(frozen=True, slots=True)
class PartOfEdge:
    part: str
    whole: str
    derived: bool = False


class Interval(NamedTuple):
    resource: str
    production_entity: Optional[str]
    start: str
    end: str


def order_key(event: Event) -> tuple[int, str]:
    # str comparison follows code points, which matches UTF-8 byte order
    return (event.timestamp, event.id)


def compare_events(a: Event, b: Event) -> int:
    """-1 if ``a`` comes first in the total order, 1 if after, 0 only for the same event."""
    ka, kb = order_key(a), order_key(b)
    return (ka > kb) - (ka < kb)


class Store:
    """Frozen event knowledge graph.

    Read accessors memoize derived lookups (class extents, typed per-entity
    indices); the memo is the only state that changes after construction and
    recomputing an entry gives the same value, so concurrent readers are safe.
    """

    def __init__(
        self,
        taxonomy: Taxonomy,
        entities: Mapping[str, Entity],
        events: Iterable[Event],
        part_of: Iterable[PartOfEdge] = (),
    ):
        self.taxonomy = taxonomy
        self.entities: dict[str, Entity] = dict(entities)
        self.events: list[Event] = sorted(events, key=order_key)
        self.pos: dict[str, int] = {e.id: i for i, e in enumerate(self.events)}
        if len(self.pos) != len(self.events):
            raise ValueError("duplicate event id in store")
        index: dict[str, list[int]] = {}
        for i, e in enumerate(self.events):
            for c in e.entities:
                lst = index.get(c.entity)
                if lst is None:
                    index[c.entity] = [i]
                elif lst[-1] != i:
                    lst.append(i)
        self.index = index
        edges = {(p.part, p.whole): p for p in part_of}
        self.part_of: tuple[PartOfEdge, ...] = tuple(edges[k] for k in sorted(edges))
        parts: dict[str, list[str]] = {}
        wholes: dict[str, list[str]] = {}
        for edge in self.part_of:
            parts.setdefault(edge.whole, []).append(edge.part)
            wholes.setdefault(edge.part, []).append(edge.whole)
        self._parts = parts
        self._wholes = wholes
        self._memo: dict[tuple, object] = {}

    def __len__(self) -> int:
        return len(self.events)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Store):
            return NotImplemented
        return (
            self.taxonomy == other.taxonomy
            and self.entities == other.entities
            and self.events == other.events
            and self.part_of == other.part_of
        )

    __hash__ = None  # type: ignore[assignment]

    def event(self, event_id: str) -> Event:
        return self.events[self.pos[event_id]]

    def event_types(self, cls: str) -> frozenset[str]:
        return self.taxonomy.descendants(cls)

    def entities_of(self, cls: str) -> frozenset[str]:
        """Ids of entities with at least one type ⊑ ``cls``."""
        k = ("extent", cls)
        got = self._memo.get(k)
        if got is None:
            sub = self.taxonomy.descendants(cls)
            got = frozenset(e.id for e in self.entities.values() if not e.types.isdisjoint(sub))
            self._memo[k] = got
        return got  # type: ignore[return-value]

    def sorted_entities_of(self, cls: str) -> list[str]:
        k = ("sorted-extent", cls)
        got = self._memo.get(k)
        if got is None:
            got = sorted(self.entities_of(cls))
            self._memo[k] = got
        return got  # type: ignore[return-value]

    def positions_of_type(self, cls: str) -> list[int]:
        """Positions of all events whose type is ⊑ ``cls``."""
        k = ("typed", cls)
        got = self._memo.get(k)
        if got is None:
            sub = self.taxonomy.descendants(cls)
            got = [i for i, e in enumerate(self.events) if e.type in sub]
            self._memo[k] = got
        return got  # type: ignore[return-value]

    def entity_positions(self, entity_id: str) -> list[int]:
        return self.index.get(entity_id, [])

    def typed_positions(self, entity_id: str, cls: str) -> list[int]:
        """Positions of events correlated to ``entity_id`` with type ⊑ ``cls``."""
        k = ("entity-typed", entity_id, cls)
        got = self._memo.get(k)
        if got is None:
            sub = self.taxonomy.descendants(cls)
            events = self.events
            got = [i for i in self.index.get(entity_id, ()) if events[i].type in sub]
            self._memo[k] = got
        return got  # type: ignore[return-value]

    def positions_between(self, entity_id: str, lo: int, hi: int) -> list[int]:
        """Positions in ``[lo, hi]`` of events correlated to ``entity_id``."""
        lst = self.index.get(entity_id, [])
        return lst[bisect_left(lst, lo):bisect_right(lst, hi)]

    def parts_of(self, whole: str) -> list[str]:
        return self._parts.get(whole, [])

    def wholes_of(self, part: str) -> list[str]:
        return self._wholes.get(part, [])

    def wholes(self) -> list[str]:
        return sorted(self._parts)

    def parts(self) -> list[str]:
        return sorted(self._wholes)

    def reaches_whole(self, part: str, whole: str) -> bool:
        """True if ``part`` isPartOf+ ``whole`` along existing edges."""
        seen = {part}
        todo = [part]
        while todo:
            for w in self._wholes.get(todo.pop(), ()):
                if w == whole:
                    return True
                if w not in seen:
                    seen.add(w)
                    todo.append(w)
        return False

    def correlated_entities(
        self, event: Event, filter: str, role: Optional[str] = None
    ) -> list[str]:
        return correlated_entities(self, event, filter, role)

    def intervals(self, start: str, end: str, pair_on_production_entity: bool = True):
        """Memoized :func:`build_intervals`; returns ``(intervals, warnings)``."""
        k = ("intervals", start, end, pair_on_production_entity)
        got = self._memo.get(k)
        if got is None:
            got = build_intervals(self, start, end, pair_on_production_entity)
            self._memo[k] = got
        return got

    def base_view(self) -> "Store":
        """Copy without derived correlations and part-of edges; attributes are kept."""
        events = []
        for e in self.events:
            if any(c.derived for c in e.entities):
                e = Event(e.id, e.type, e.timestamp,
                          tuple(c for c in e.entities if not c.derived), e.attributes)
            events.append(e)
        return Store(self.taxonomy, self.entities,
                     events, (p for p in self.part_of if not p.derived))

    def iter_records(self) -> Iterator[dict]:
        """JSONL records that reproduce this store when loaded again."""
        for eid in sorted(self.entities):
            ent = self.entities[eid]
            yield {"kind": "entity", "id": ent.id, "types": sorted(ent.types),
                   "attributes": dict(ent.attributes)}
        for edge in self.part_of:
            rec = {"kind": "relation", "subject": edge.part, "predicate": "isPartOf",
                   "object": edge.whole}
            if edge.derived:
                rec["derived"] = True
            yield rec
        for e in self.events:
            refs = []
            for c in e.entities:
                ref: dict[str, object] = {"id": c.entity}
                if c.role:
                    ref["role"] = c.role
                if c.derived:
                    ref["derived"] = True
                refs.append(ref)
            yield {"kind": "event", "id": e.id, "type": e.type, "timestamp": e.timestamp,
                   "entities": refs, "attributes": dict(e.attributes)}


def correlated_entities(
    store: Store, event: Event, filter: str, role: Optional[str] = None
) -> list[str]:
    """Sorted ids of entities correlated to ``event`` with a type ⊑ ``filter``.

    >>> store = Store(Taxonomy.default(), {"m1": Entity("m1", frozenset({"Machine"}))}, [])
    >>> correlated_entities(store, Event("e", "Alarm", 1, (Correlation("m1"),)), "Resource")
    ['m1']
    """
    extent = store.entities_of(filter)
    return sorted({
        c.entity for c in event.entities
        if c.entity in extent and (role is None or c.role == role)
    })


def build_intervals(
    store: Store, start: str, end: str, pair_on_production_entity: bool = True
) -> tuple[list[Interval], list[str]]:
    """Pair start and end events per resource (or resource and production entity).

    Events are scanned in total order per group; an end event closes the
    earliest open start (FIFO).  An event whose type is both a start and an
    end type first closes, then opens.  Returns intervals sorted by group and
    start key, plus warnings for unmatched and overlapping events.
    """
    start_types = store.event_types(start)
    end_types = store.event_types(end)
    production = store.entities_of(PRODUCTION_ENTITY)
    events = store.events
    warnings: list[str] = []
    result: list[Interval] = []
    for r in store.sorted_entities_of(RESOURCE):
        queues: dict[Optional[str], deque[int]] = {}
        found: dict[Optional[str], list[Interval]] = {}
        for i in store.entity_positions(r):
            e = events[i]
            is_start = e.type in start_types
            is_end = e.type in end_types
            if not (is_start or is_end):
                continue
            if pair_on_production_entity:
                groups = sorted({c.entity for c in e.entities if c.entity in production})
            else:
                groups = [None]
            for g in groups:
                q = queues.get(g)
                if q is None:
                    q = queues[g] = deque()
                if is_end:
                    if q:
                        s = q.popleft()
                        found.setdefault(g, []).append(Interval(r, g, events[s].id, e.id))
                    else:
                        warnings.append(f"unmatched end {e.id} for {_group(r, g)}")
                if is_start:
                    if q:
                        warnings.append(f"overlapping start {e.id} for {_group(r, g)}")
                    q.append(i)
        for g in sorted(queues, key=_group_sort):
            for s in queues[g]:
                warnings.append(f"unmatched start {events[s].id} for {_group(r, g)}")
            result.extend(found.get(g, ()))
    return result, warnings


def _group(r: str, g: Optional[str]) -> str:
    return f"({r}, {g})" if g is not None else f"({r})"


def _group_sort(g: Optional[str]) -> tuple[bool, str]:
    return (g is not None, g or "")
