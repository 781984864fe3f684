"""Compact builders for hand-written test stores."""

from __future__ import annotations

import random
from pathlib import Path

from trace_enrich.ingest import build_store

FIXTURES = Path(__file__).parent / "fixtures"


def records(entities: dict, events: list, part_of=()) -> list[dict]:
    """Compact test data: ``entities`` maps id to class, events are
    ``(id, type, timestamp, refs[, attrs])`` with refs ``"m1"`` or ``("L0", "input")``."""
    out = [{"kind": "entity", "id": k, "types": [v], "attributes": {}} for k, v in entities.items()]
    for part, whole in part_of:
        out.append({"kind": "relation", "subject": part, "predicate": "isPartOf", "object": whole})
    for ev in events:
        eid, etype, ts, refs = ev[:4]
        attrs = ev[4] if len(ev) > 4 else {}
        ents = [{"id": r[0], "role": r[1]} if isinstance(r, tuple) else {"id": r} for r in refs]
        out.append({"kind": "event", "id": eid, "type": etype, "timestamp": ts,
                    "entities": ents, "attributes": attrs})
    return out


def make_store(entities: dict, events: list, part_of=(), strict: bool = True):
    store, _ = build_store(records(entities, events, part_of), strict=strict)
    return store


def shuffled(recs: list[dict], seed: int) -> list[dict]:
    recs = list(recs)
    random.Random(seed).shuffle(recs)
    return recs


_TEXT = "ab Z_9-.\"\\é\t/"


def _random_value(rng: random.Random, spec, taxonomy):
    from trace_enrich.model import AGGREGATE

    events = sorted(taxonomy.descendants("Event"))
    entities = sorted(taxonomy.descendants("Entity"))
    kind = spec.kind
    if kind == "event":
        return rng.choice(events)
    if kind == "entity":
        return rng.choice(entities)
    if kind == "aggregate":
        return rng.choice(sorted(taxonomy.descendants(AGGREGATE)))
    if kind == "entities":
        return tuple(rng.sample(entities, rng.randint(1, 3)))
    if kind == "bool":
        return rng.random() < 0.5
    if kind == "number":
        return rng.choice([rng.randint(-10**6, 10**6), rng.uniform(-1e3, 1e3), rng.random() * 1e-7])
    if kind == "string":
        return "".join(rng.choice(_TEXT) for _ in range(rng.randint(1, 12)))
    if kind == "enum":
        return rng.choice(spec.choices)
    if kind == "filter":
        return ("state", rng.choice(["Failed", 3, 2.5, True, "two words"]))
    raise AssertionError(kind)


def random_pipeline(rng: random.Random, n: int, taxonomy=None):
    """``n`` valid instances with every parameter kind exercised."""
    from trace_enrich.model import Taxonomy
    from trace_enrich.patternspec import PATTERNS, SIGNATURES, PatternInstance, Pipeline

    taxonomy = taxonomy or Taxonomy.default()
    out = []
    for k in range(n):
        pattern = PATTERNS[k % len(PATTERNS)] if k < len(PATTERNS) else rng.choice(PATTERNS)
        params = {}
        for key, spec in SIGNATURES[pattern].items():
            if spec.required or key == "agg" or rng.random() < 0.5:
                params[key] = _random_value(rng, spec, taxonomy)
        if pattern == "interval_aggregate":
            if params.get("window", "interval") == "interval":
                params.setdefault("start", "TrackIn")
                params.setdefault("end", "TrackOut")
            if params["agg"] in ("count_above", "count_below"):
                params.setdefault("threshold", 1.5)
            else:
                params.pop("threshold", None)
        out.append(PatternInstance(pattern, f"i{k}_{pattern}", params, rng.randint(0, 2)))
    return Pipeline(tuple(out))


SYNTAX_ERRORS = ("invalid_char", "missing_equals", "missing_as", "unterminated_string")


def seed_syntax_error(text: str, rng: random.Random, kind: str) -> tuple[str, int, int]:
    """Break one line of printed DSL; returns the text and the expected 1-based line/column."""
    lines = text.split("\n")
    if kind == "missing_as":
        candidates = [i for i, ln in enumerate(lines) if ln.startswith("pattern ")]
    else:
        candidates = [i for i, ln in enumerate(lines) if " = " in ln]
    i = rng.choice(candidates)
    ln = lines[i]
    if kind == "missing_as":
        at = ln.index(" as ") + 1
        lines[i] = ln[:at] + ln[at + 3:]
        return "\n".join(lines), i + 1, at + 1
    key, _, value = ln.partition(" = ")
    col = len(key) + 3
    if kind == "invalid_char":
        lines[i] = f"{key} = @{value}"
    elif kind == "missing_equals":
        lines[i] = f"{key} {value}"
        col = len(key) + 1
    elif kind == "unterminated_string":
        lines[i] = f'{key} = "never closed'
    else:
        raise ValueError(kind)
    return "\n".join(lines), i + 1, col + 1
