"""Reading event logs and taxonomies, writing derived facts, folding facts back in."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterable, Iterator, Optional, Sequence, Union

from .model import (
    ENTITY,
    EVENT,
    NO_ATTRIBUTES,
    ROLES,
    Correlation,
    Entity,
    Event,
    PartOfEdge,
    Store,
    Taxonomy,
    TaxonomyError,
)

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

CORRELATES_TO = "correlatesTo"
IS_PART_OF = "isPartOf"

_FIELDS = {
    "entity": ({"kind", "id", "types"}, {"attributes"}),
    "event": ({"kind", "id", "type", "timestamp"}, {"entities", "attributes"}),
    "relation": ({"kind", "subject", "predicate", "object"}, {"derived"}),
}
_REF_FIELDS = {"id", "role", "derived"}


class DataError(ValueError):
    """Invalid input data; carries the file and 1-based line when known."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = f"{path}:{line}: " if path and line else (f"{path}: " if path else "")
        super().__init__(where + message)


def load_taxonomy(path: Optional[PathLike] = None) -> Taxonomy:
    """Default taxonomy extended with the ``subclass_of`` map in ``path``.

    An empty file (or ``None``) yields the default taxonomy.
    """
    base = Taxonomy.default()
    if path is None:
        return base
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if not text.strip():
        return base
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed taxonomy JSON: {exc}", str(path)) from None
    decl = doc.get("subclass_of", {}) if isinstance(doc, dict) else None
    if not isinstance(decl, dict) or not all(
        isinstance(v, list) and all(isinstance(p, str) for p in v) for v in decl.values()
    ):
        raise DataError('taxonomy must look like {"subclass_of": {"Class": ["Parent"]}}', str(path))
    try:
        return base.extended(decl)
    except TaxonomyError as exc:
        raise DataError(str(exc), str(path)) from None


def parse_timestamp(value: object) -> int:
    """Integer milliseconds from a bare integer or an ISO-8601 string."""
    if isinstance(value, bool):
        raise ValueError(f"invalid timestamp {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, str):
        text = value.strip()
        if text.endswith(("Z", "z")):
            text = text[:-1] + "+00:00"
        dt = datetime.fromisoformat(text)
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        delta = dt - datetime(1970, 1, 1, tzinfo=timezone.utc)
        return (delta.days * 86_400 + delta.seconds) * 1000 + delta.microseconds // 1000
    raise ValueError(f"invalid timestamp {value!r}")


def _is_scalar(v: object) -> bool:
    return isinstance(v, (str, bool, int, float)) and not (isinstance(v, float) and not math.isfinite(v))


class _Loader:
    def __init__(self, taxonomy: Taxonomy, strict: bool):
        self.taxonomy = taxonomy
        self.strict = strict
        self.warnings: list[str] = []
        self.entities: dict[str, Entity] = {}
        self.events: dict[str, Union[Event, None, tuple]] = {}
        self.relations: list[tuple[dict, str, int]] = []
        self._corrs: dict[tuple, Correlation] = {}

    def problem(self, message: str, path: Optional[str], line: Optional[int]) -> None:
        """Error in strict mode, warning otherwise."""
        if self.strict:
            raise DataError(message, path, line)
        where = f"{path}:{line}: " if path and line else ""
        self.warnings.append(where + message)

    def check_fields(self, rec: dict, kind: str, path, line) -> bool:
        required, optional = _FIELDS[kind]
        missing = required - rec.keys()
        if missing:
            raise DataError(f"{kind} record missing {sorted(missing)}", path, line)
        unknown = rec.keys() - required - optional
        if unknown:
            self.problem(f"unknown field(s) {sorted(unknown)} in {kind} record", path, line)
        return True

    def add(self, rec: object, path: Optional[str] = None, line: Optional[int] = None) -> None:
        if not isinstance(rec, dict):
            raise DataError("record is not a JSON object", path, line)
        kind = rec.get("kind")
        if kind not in _FIELDS:
            raise DataError(f"unknown record kind {kind!r}", path, line)
        self.check_fields(rec, kind, path, line)
        if kind == "entity":
            self.add_entity(rec, path, line)
        elif kind == "event":
            eid = rec["id"]
            if not isinstance(eid, str):
                raise DataError("event id must be a string", path, line)
            if eid in self.events:
                raise DataError(f"duplicate event id {eid!r}", path, line)
            refs = rec.get("entities", ())
            ready = isinstance(refs, list) and all(
                isinstance(r, dict) and r.get("id") in self.entities for r in refs)
            # events whose entities are not known yet wait for finish()
            self.events[eid] = self.build_event(rec, path, line) if ready else (rec, path, line)
        else:
            self.relations.append((rec, path, line))

    def correlation(self, entity: str, role: Optional[str], derived: bool) -> Correlation:
        # a million events share a few thousand distinct correlations
        k = (entity, role, derived)
        c = self._corrs.get(k)
        if c is None:
            c = self._corrs[k] = Correlation(entity, role, derived)
        return c

    def add_entity(self, rec: dict, path, line) -> None:
        eid, types = rec["id"], rec["types"]
        if not isinstance(eid, str):
            raise DataError("entity id must be a string", path, line)
        if eid in self.entities:
            raise DataError(f"duplicate entity id {eid!r}", path, line)
        if not isinstance(types, list) or not types or not all(isinstance(t, str) for t in types):
            raise DataError(f"entity {eid!r} needs a non-empty list of types", path, line)
        for t in types:
            if t not in self.taxonomy or not self.taxonomy.is_subclass(t, ENTITY):
                self.problem(f"entity {eid!r} has type {t!r} that is not a declared Entity class",
                             path, line)
                return
        attrs = self.attributes(rec, eid, path, line)
        self.entities[eid] = Entity(eid, frozenset(types), attrs)

    def attributes(self, rec: dict, owner: str, path, line) -> dict:
        attrs = rec.get("attributes", {})
        if not isinstance(attrs, dict):
            raise DataError(f"attributes of {owner!r} must be an object", path, line)
        out = {}
        for k, v in attrs.items():
            if _is_scalar(v):
                out[k] = v
            else:
                self.problem(f"attribute {k!r} of {owner!r} is not a scalar", path, line)
        return out or NO_ATTRIBUTES

    def build_event(self, rec: dict, path, line) -> Optional[Event]:
        eid, etype = rec["id"], rec["type"]
        if not isinstance(etype, str) or etype not in self.taxonomy or not self.taxonomy.is_subclass(etype, EVENT):
            self.problem(f"event {eid!r} has type {etype!r} that is not a declared Event class",
                         path, line)
            return None
        try:
            ts = parse_timestamp(rec["timestamp"])
        except ValueError as exc:
            raise DataError(f"event {eid!r}: {exc}", path, line) from None
        refs = rec.get("entities", [])
        if not isinstance(refs, list):
            raise DataError(f"entities of event {eid!r} must be a list", path, line)
        corrs = []
        seen = set()
        for ref in refs:
            if not isinstance(ref, dict) or not isinstance(ref.get("id"), str):
                raise DataError(f"bad entity reference in event {eid!r}", path, line)
            extra = ref.keys() - _REF_FIELDS
            if extra:
                self.problem(f"unknown field(s) {sorted(extra)} in entity reference", path, line)
            role = ref.get("role")
            if role not in (None, "none") and role not in ROLES:
                raise DataError(f"invalid role {role!r} in event {eid!r}", path, line)
            if ref["id"] not in self.entities:
                self.problem(f"event {eid!r} references unknown entity {ref['id']!r}", path, line)
                return None
            c = self.correlation(ref["id"], role if role in ROLES else None, bool(ref.get("derived", False)))
            if (c.entity, c.role) not in seen:
                seen.add((c.entity, c.role))
                corrs.append(c)
        attrs = self.attributes(rec, eid, path, line)
        event = Event(eid, etype, ts, tuple(corrs), attrs)
        if "Aggregate" in self.taxonomy and self.taxonomy.is_subclass(etype, "Aggregate"):
            roles = {c.role for c in corrs}
            if not {"input", "output"} <= roles:
                self.warnings.append(
                    f"aggregation event {eid!r} lacks input/output correlation roles")
        return event

    def build_edge(self, rec: dict, path, line) -> Optional[PartOfEdge]:
        s, p, o = rec["subject"], rec["predicate"], rec["object"]
        if p != IS_PART_OF:
            raise DataError(f"unsupported relation predicate {p!r}", path, line)
        for ref in (s, o):
            if ref not in self.entities:
                self.problem(f"relation references unknown entity {ref!r}", path, line)
                return None
        if s == o:
            raise DataError(f"entity {s!r} cannot be part of itself", path, line)
        return PartOfEdge(s, o, bool(rec.get("derived", False)))

    def finish(self) -> Store:
        events = []
        for e in self.events.values():
            if isinstance(e, tuple):
                e = self.build_event(*e)
            if e is not None:
                events.append(e)
        edges: dict[tuple[str, str], PartOfEdge] = {}
        for rec, path, line in self.relations:
            edge = self.build_edge(rec, path, line)
            if edge is not None:
                edges.setdefault((edge.part, edge.whole), edge)
        accepted: list[PartOfEdge] = []
        # insert in sorted order so cycle rejection does not depend on input order
        for key in sorted(edges):
            edge = edges[key]
            if _closes_cycle(accepted, edge):
                raise DataError(f"isPartOf cycle through {edge.part!r} and {edge.whole!r}")
            accepted.append(edge)
        return Store(self.taxonomy, self.entities, events, accepted)


def _closes_cycle(edges: Sequence[PartOfEdge], edge: PartOfEdge) -> bool:
    up: dict[str, list[str]] = {}
    for e in edges:
        up.setdefault(e.part, []).append(e.whole)
    todo, seen = [edge.whole], {edge.whole}
    while todo:
        cur = todo.pop()
        if cur == edge.part:
            return True
        for w in up.get(cur, ()):
            if w not in seen:
                seen.add(w)
                todo.append(w)
    return False


def build_store(records: Iterable[dict], taxonomy: Optional[Taxonomy] = None,
                strict: bool = False) -> tuple[Store, list[str]]:
    """Store from in-memory records (same schema as the JSONL files)."""
    loader = _Loader(taxonomy or Taxonomy.default(), strict)
    for rec in records:
        loader.add(rec)
    store = loader.finish()
    return store, loader.warnings


def load_store(paths: Sequence[PathLike], taxonomy: Optional[Taxonomy] = None,
               strict: bool = False) -> tuple[Store, list[str]]:
    """Parse JSONL event-log files into a frozen store.

    Dangling references and unknown fields raise :class:`DataError` when
    ``strict``; otherwise the offending record is skipped with a warning.
    Malformed JSON and duplicate ids always raise.
    """
    loader = _Loader(taxonomy or Taxonomy.default(), strict)
    for path in paths:
        spath = str(path)
        with open(path, encoding="utf-8") as fh:
            for lineno, text in enumerate(fh, 1):
                if not text.strip():
                    continue
                try:
                    rec = json.loads(text)
                except json.JSONDecodeError as exc:
                    raise DataError(f"malformed JSON: {exc.msg}", spath, lineno) from None
                loader.add(rec, spath, lineno)
    store = loader.finish()
    for w in loader.warnings:
        logger.warning(w)
    return store, loader.warnings


def write_store(store: Store, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in store.iter_records():
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


@dataclass(frozen=True, slots=True)
class DerivedFact:
    """A measurement or relation produced by a pattern instance.

    ``inputs`` and ``interval`` are provenance and do not take part in
    identity; two facts with the same :attr:`identity` are duplicates.
    """

    kind: str
    instance: str
    subject: str
    pattern: str
    inputs: tuple[str, ...] = ()
    interval: Optional[tuple[str, str]] = None
    key: Optional[str] = None
    value: Union[int, float, None] = None
    unit: Optional[str] = None
    predicate: Optional[str] = None
    object: Optional[str] = None

    @property
    def identity(self) -> tuple:
        if self.kind == "measurement":
            return (self.kind, self.instance, self.subject, self.key, self.value)
        return (self.kind, self.instance, self.subject, self.predicate, self.object)

    def sort_key(self) -> tuple:
        if self.kind == "measurement":
            tail: tuple = (self.key, 1, "", self.value)
        else:
            tail = (self.predicate, 0, self.object, 0)
        return (self.instance, self.kind, self.subject, *tail,
                self.inputs, self.interval or ())

    def to_json(self) -> dict:
        prov = {
            "pattern": self.pattern,
            "inputs": list(self.inputs),
            "interval": ({"start": self.interval[0], "end": self.interval[1]}
                         if self.interval else None),
        }
        if self.kind == "measurement":
            return {"kind": self.kind, "instance": self.instance, "subject": self.subject,
                    "key": self.key, "value": self.value, "unit": self.unit, "provenance": prov}
        return {"kind": self.kind, "instance": self.instance, "subject": self.subject,
                "predicate": self.predicate, "object": self.object, "provenance": prov}

    @classmethod
    def from_json(cls, doc: dict) -> "DerivedFact":
        prov = doc.get("provenance") or {}
        iv = prov.get("interval")
        common = dict(
            instance=doc["instance"], subject=doc["subject"], pattern=prov.get("pattern", ""),
            inputs=tuple(prov.get("inputs", ())),
            interval=(iv["start"], iv["end"]) if iv else None,
        )
        if doc["kind"] == "measurement":
            return cls("measurement", key=doc["key"], value=doc["value"],
                       unit=doc.get("unit"), **common)
        if doc["kind"] == "relation":
            return cls("relation", predicate=doc["predicate"], object=doc["object"], **common)
        raise DataError(f"unknown fact kind {doc['kind']!r}")


def measurement(instance: str, pattern: str, subject: str, key: str, value, unit: str,
                inputs: Sequence[str], interval: Optional[tuple[str, str]] = None) -> DerivedFact:
    return DerivedFact("measurement", instance, subject, pattern, tuple(inputs), interval,
                       key=key, value=value, unit=unit)


def relation(instance: str, pattern: str, subject: str, predicate: str, obj: str,
             inputs: Sequence[str], interval: Optional[tuple[str, str]] = None) -> DerivedFact:
    return DerivedFact("relation", instance, subject, pattern, tuple(inputs), interval,
                       predicate=predicate, object=obj)


def dedupe(facts: Iterable[DerivedFact]) -> list[DerivedFact]:
    """Sorted facts with duplicates removed; the smallest provenance wins."""
    best: dict[tuple, DerivedFact] = {}
    for f in facts:
        cur = best.get(f.identity)
        if cur is None or (f.inputs, f.interval or ()) < (cur.inputs, cur.interval or ()):
            best[f.identity] = f
    return sorted(best.values(), key=DerivedFact.sort_key)


def write_facts(facts: Iterable[DerivedFact], path: PathLike) -> None:
    """Byte-stable JSONL: deduplicated, sorted, keys sorted, compact separators."""
    with open(path, "w", encoding="utf-8") as fh:
        for f in dedupe(facts):
            fh.write(json.dumps(f.to_json(), sort_keys=True, separators=(",", ":")) + "\n")


def read_facts(path: PathLike) -> list[DerivedFact]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, text in enumerate(fh, 1):
            if text.strip():
                try:
                    out.append(DerivedFact.from_json(json.loads(text)))
                except (json.JSONDecodeError, KeyError) as exc:
                    raise DataError(f"bad fact record: {exc}", str(path), lineno) from None
    return out


def materialize(store: Store, facts: Iterable[DerivedFact],
                presorted: bool = False) -> tuple[Store, list[str]]:
    """New store with relation facts as derived edges and event measurements as attributes.

    Measurements on event subjects become attributes named
    ``"<instance>.<key>"``.  Part-of facts that would close a cycle are
    rejected with a warning.  The input store is left untouched.  Pass
    ``presorted=True`` when ``facts`` already come from :func:`dedupe`.
    """
    warnings: list[str] = []
    new_corrs: dict[str, list[str]] = {}
    new_attrs: dict[str, dict[str, object]] = {}
    new_edges: list[PartOfEdge] = []
    existing_edges = {(p.part, p.whole) for p in store.part_of}
    up: dict[str, list[str]] = {}
    for p in store.part_of:
        up.setdefault(p.part, []).append(p.whole)

    def reaches(src: str, dst: str) -> bool:
        todo, seen = [src], {src}
        while todo:
            cur = todo.pop()
            if cur == dst:
                return True
            for w in up.get(cur, ()):
                if w not in seen:
                    seen.add(w)
                    todo.append(w)
        return False

    for f in (facts if presorted else dedupe(facts)):
        if f.kind == "relation" and f.predicate == CORRELATES_TO:
            if f.subject not in store.pos or f.object not in store.entities:
                warnings.append(f"{f.instance}: unresolved correlatesTo {f.subject} -> {f.object}")
                continue
            new_corrs.setdefault(f.subject, []).append(f.object)
        elif f.kind == "relation" and f.predicate == IS_PART_OF:
            if f.subject not in store.entities or f.object not in store.entities:
                warnings.append(f"{f.instance}: unresolved isPartOf {f.subject} -> {f.object}")
                continue
            if (f.subject, f.object) in existing_edges:
                continue
            if f.subject == f.object or reaches(f.object, f.subject):
                warnings.append(
                    f"{f.instance}: rejected isPartOf {f.subject} -> {f.object} (would close a cycle)")
                continue
            existing_edges.add((f.subject, f.object))
            up.setdefault(f.subject, []).append(f.object)
            new_edges.append(PartOfEdge(f.subject, f.object, derived=True))
        elif f.kind == "measurement":
            if f.subject not in store.pos:
                continue
            name = f"{f.instance}.{f.key}"
            attrs = new_attrs.setdefault(f.subject, {})
            if name in attrs and attrs[name] != f.value:
                warnings.append(f"{f.instance}: conflicting values for {name} on {f.subject}; "
                                f"kept {attrs[name]!r}")
                continue
            attrs[name] = f.value
        else:
            warnings.append(f"{f.instance}: unsupported fact {f.kind}/{f.predicate}")

    shared: dict[str, Correlation] = {}

    def derived_corr(x: str) -> Correlation:
        c = shared.get(x)
        if c is None:
            c = shared[x] = Correlation(x, None, True)
        return c

    touched = new_corrs.keys() | new_attrs.keys()
    events = list(store.events)
    for eid in touched:
        i = store.pos[eid]
        e = events[i]
        corrs = e.entities
        have = {c.entity for c in corrs}
        extra = [derived_corr(x) for x in new_corrs.get(eid, ()) if x not in have]
        if extra:
            corrs = corrs + tuple(extra)
        attrs = e.attributes
        if eid in new_attrs:
            attrs = {**attrs, **new_attrs[eid]}
        events[i] = Event(e.id, e.type, e.timestamp, corrs, attrs)
    out = Store(store.taxonomy, store.entities, events, list(store.part_of) + new_edges)
    for w in warnings:
        logger.warning(w)
    return out, warnings
