"""Pattern-instantiation DSL.

A pattern file lists named instances of the ten enrichment patterns::

    # count alarms while a job is on a machine
    pattern interval_count as alarms {
        start = TrackIn
        end = TrackOut
        counted = Alarm
    }

Grammar::

    file     := (instance)*
    instance := "pattern" name "as" name "{" (param)* "}"
    param    := key "=" value
    value    := ident | string | number | boolean | "[" (value ("," value)*)? "]"

``stage = N`` inside a block sets the pipeline stage (default 0).  Comments
run from ``#`` to the end of the line.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Any, Mapping, NamedTuple, Optional, Union

from .model import AGGREGATE, ENTITY, EVENT, PRODUCTION_ENTITY, RESOURCE, Taxonomy

Value = Union[str, int, float, bool, tuple]


class Param(NamedTuple):
    kind: str  # event | entity | aggregate | entities | bool | number | string | enum | filter
    arg: str
    required: bool = False
    default: Any = None
    choices: tuple[str, ...] = ()


AGG_FUNCTIONS = ("sum", "avg", "min", "max", "count", "var", "stddev", "count_above", "count_below")

SIGNATURES: dict[str, dict[str, Param]] = {
    "interval_count": {
        "start": Param("event", "start", True),
        "end": Param("event", "end", True),
        "counted": Param("event", "counted", True),
        "pairOnProductionEntity": Param("bool", "pair_on_production_entity", default=True),
        "countedSharesProductionEntity": Param("bool", "counted_shares_production_entity", default=False),
    },
    "interval_aggregate": {
        "start": Param("event", "start"),
        "end": Param("event", "end"),
        "eventType": Param("event", "event_type", True),
        "attribute": Param("string", "attribute", True),
        "agg": Param("enum", "agg", True, choices=AGG_FUNCTIONS),
        "threshold": Param("number", "threshold"),
        "window": Param("enum", "window", default="interval", choices=("interval", "all-per-resource")),
        "pairOnProductionEntity": Param("bool", "pair_on_production_entity", default=True),
        "eventSharesProductionEntity": Param("bool", "event_shares_production_entity", default=False),
    },
    "elapsed_preceding": {
        "eventType": Param("event", "event_type", True),
        "preceding": Param("event", "preceding", True),
        "matchOn": Param("entities", "match_on", default=(RESOURCE,)),
    },
    "elapsed_succeeding_same_type": {
        "eventType": Param("event", "event_type", True),
        "firstEventFilter": Param("filter", "first_event_filter"),
        "matchOn": Param("entities", "match_on", default=(RESOURCE,)),
    },
    "elapsed_maximum": {
        "start": Param("event", "start", True),
        "end": Param("event", "end", True),
        "entityType": Param("entity", "entity_type", True),
    },
    "relate_preceding": {
        "eventType": Param("event", "event_type", True),
        "preceding": Param("event", "preceding", True),
        "targetEntityType": Param("entity", "target_entity_type", True),
        "matchOn": Param("entities", "match_on", default=(RESOURCE,)),
    },
    "relate_partof": {
        "direction": Param("enum", "direction", default="whole-to-part",
                           choices=("whole-to-part", "part-to-whole")),
        "eventType": Param("event", "event_type", default=EVENT),
        "eventEntityFilter": Param("entity", "event_entity_filter"),
        "otherEntityFilter": Param("entity", "other_entity_filter"),
    },
    "relate_preceding_aggregation": {
        "aggType": Param("aggregate", "agg_type", default=AGGREGATE),
        "entityType": Param("entity", "entity_type", default=PRODUCTION_ENTITY),
        "recursive": Param("bool", "recursive", default=False),
    },
    "relate_succeeding_aggregation": {
        "aggType": Param("aggregate", "agg_type", default=AGGREGATE),
        "entityType": Param("entity", "entity_type", default=PRODUCTION_ENTITY),
        "recursive": Param("bool", "recursive", default=False),
    },
    "derive_partof": {
        "start": Param("event", "start", True),
        "end": Param("event", "end", True),
        "partEntityType": Param("entity", "part_entity_type", True),
        "wholeEntityType": Param("entity", "whole_entity_type", default=PRODUCTION_ENTITY),
    },
}

PATTERNS = tuple(SIGNATURES)


class PatternSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.message = message
        self.line = line
        self.column = column


@dataclass(frozen=True)
class PatternInstance:
    pattern: str
    name: str
    params: Mapping[str, Value] = field(default_factory=dict)
    stage: int = 0


@dataclass(frozen=True)
class Pipeline:
    """Pattern instances grouped into stages.

    ``materialize`` holds one flag per stage boundary (between stage ``k`` and
    the next one); missing entries default to True.
    """

    instances: tuple[PatternInstance, ...] = ()
    materialize: tuple[bool, ...] = ()
    use_derived: bool = True

    @property
    def stages(self) -> list[list[PatternInstance]]:
        numbers = sorted({i.stage for i in self.instances})
        return [[i for i in self.instances if i.stage == n] for n in numbers]

    def materialize_after(self, k: int) -> bool:
        return self.materialize[k] if k < len(self.materialize) else True

    def instance(self, name: str) -> PatternInstance:
        for i in self.instances:
            if i.name == name:
                return i
        raise KeyError(name)


class Diagnostic(NamedTuple):
    instance: str
    key: Optional[str]
    message: str

    def __str__(self) -> str:
        where = f"{self.instance}.{self.key}" if self.key else self.instance
        return f"{where}: {self.message}"


# ---------------------------------------------------------------------------
# lexer

class Token(NamedTuple):
    kind: str  # ident | string | number | punct | eof
    text: str
    value: Any
    line: int
    column: int


_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUMBER = re.compile(r"[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?")
_IDENT_FULL = re.compile(r"\A[A-Za-z_][A-Za-z0-9_]*\Z")
_PUNCT = "{}[]=,"


def tokenize(text: str) -> list[Token]:
    tokens = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch in _PUNCT:
            tokens.append(Token("punct", ch, ch, line, col))
            i += 1
            col += 1
            continue
        if ch == '"':
            j = i + 1
            while j < n and text[j] != '"' and text[j] != "\n":
                j += 2 if text[j] == "\\" else 1
            if j >= n or text[j] != '"':
                raise PatternSyntaxError("unterminated string", line, col)
            raw = text[i:j + 1]
            try:
                value = json.loads(raw)
            except json.JSONDecodeError:
                raise PatternSyntaxError("invalid string escape", line, col) from None
            tokens.append(Token("string", raw, value, line, col))
            col += j + 1 - i
            i = j + 1
            continue
        m = _NUMBER.match(text, i)
        if m and (ch.isdigit() or ch in "+-."):
            raw = m.group()
            end = m.end()
            if end < n and (text[end].isalnum() or text[end] == "_"):
                raise PatternSyntaxError(f"invalid number {raw + text[end]!r}", line, col)
            value: Any = float(raw) if any(c in raw for c in ".eE") else int(raw)
            tokens.append(Token("number", raw, value, line, col))
            col += end - i
            i = end
            continue
        m = _IDENT.match(text, i)
        if m:
            raw = m.group()
            tokens.append(Token("ident", raw, raw, line, col))
            col += len(raw)
            i = m.end()
            continue
        raise PatternSyntaxError(f"unexpected character {ch!r}", line, col)
    tokens.append(Token("eof", "", None, line, col))
    return tokens


# ---------------------------------------------------------------------------
# parser

class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def fail(self, expected: str, tok: Optional[Token] = None):
        tok = tok or self.tok
        got = "end of file" if tok.kind == "eof" else repr(tok.text)
        raise PatternSyntaxError(f"expected {expected}, got {got}", tok.line, tok.column)

    def take(self) -> Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect_punct(self, ch: str) -> Token:
        if self.tok.kind != "punct" or self.tok.text != ch:
            self.fail(repr(ch))
        return self.take()

    def expect_ident(self, what: str, keyword: Optional[str] = None) -> Token:
        if self.tok.kind != "ident" or (keyword is not None and self.tok.text != keyword):
            self.fail(what)
        return self.take()

    def parse(self) -> Pipeline:
        instances: list[PatternInstance] = []
        names: set[str] = set()
        while self.tok.kind != "eof":
            inst, name_tok = self.instance()
            if inst.name in names:
                raise PatternSyntaxError(f"duplicate instance name {inst.name!r}",
                                         name_tok.line, name_tok.column)
            names.add(inst.name)
            instances.append(inst)
        return Pipeline(tuple(instances))

    def instance(self) -> tuple[PatternInstance, Token]:
        self.expect_ident("'pattern'", "pattern")
        pat = self.expect_ident("pattern name")
        if pat.text not in SIGNATURES:
            raise PatternSyntaxError(f"unknown pattern {pat.text!r}", pat.line, pat.column)
        self.expect_ident("'as'", "as")
        name = self.expect_ident("instance name")
        self.expect_punct("{")
        params: dict[str, Value] = {}
        stage, stage_given = 0, False
        signature = SIGNATURES[pat.text]
        while not (self.tok.kind == "punct" and self.tok.text == "}"):
            if self.tok.kind != "ident":
                self.fail("parameter name or '}'")
            key = self.take()
            if key.text != "stage" and key.text not in signature:
                raise PatternSyntaxError(
                    f"unknown parameter {key.text!r} for pattern {pat.text!r}", key.line, key.column)
            if key.text in params or (key.text == "stage" and stage_given):
                raise PatternSyntaxError(f"duplicate parameter {key.text!r}", key.line, key.column)
            self.expect_punct("=")
            vtok = self.tok
            value = self.value()
            if key.text == "stage":
                if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                    raise PatternSyntaxError("stage must be a non-negative integer",
                                             vtok.line, vtok.column)
                stage, stage_given = value, True
            else:
                params[key.text] = value
        self.expect_punct("}")
        return PatternInstance(pat.text, name.text, params, stage), name

    def value(self) -> Value:
        t = self.tok
        if t.kind == "punct" and t.text == "[":
            self.take()
            items = []
            if not (self.tok.kind == "punct" and self.tok.text == "]"):
                items.append(self.value())
                while self.tok.kind == "punct" and self.tok.text == ",":
                    self.take()
                    items.append(self.value())
            self.expect_punct("]")
            return tuple(items)
        if t.kind == "ident":
            self.take()
            if t.text == "true":
                return True
            if t.text == "false":
                return False
            return t.text
        if t.kind in ("string", "number"):
            self.take()
            return t.value
        self.fail("a value")
        raise AssertionError  # unreachable


def parse_pattern_file(text: str) -> Pipeline:
    """Parse DSL text (or its JSON form, detected by a leading ``{``)."""
    if text.lstrip().startswith("{"):
        return parse_pattern_json(text)
    return _Parser(text).parse()


def parse_pattern_json(text: str) -> Pipeline:
    """``{"instances": [{"pattern", "name", "params", "stage"?}], "useDerived"?, "materialize"?}``"""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PatternSyntaxError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(doc, dict) or not isinstance(doc.get("instances", []), list):
        raise PatternSyntaxError("expected an object with an 'instances' list", 1, 1)
    instances = []
    names = set()
    for n, item in enumerate(doc.get("instances", [])):
        if not isinstance(item, dict) or "pattern" not in item or "name" not in item:
            raise PatternSyntaxError(f"instance #{n} needs 'pattern' and 'name'", 1, 1)
        pat, name = item["pattern"], item["name"]
        if pat not in SIGNATURES:
            raise PatternSyntaxError(f"unknown pattern {pat!r}", 1, 1)
        if not isinstance(name, str) or not _IDENT_FULL.match(name):
            raise PatternSyntaxError(f"invalid instance name {name!r}", 1, 1)
        if name in names:
            raise PatternSyntaxError(f"duplicate instance name {name!r}", 1, 1)
        names.add(name)
        params = dict(item.get("params", {}))
        stage = item.get("stage", params.pop("stage", 0))
        if not isinstance(stage, int) or isinstance(stage, bool) or stage < 0:
            raise PatternSyntaxError(f"instance {name!r}: stage must be a non-negative integer", 1, 1)
        for key in params:
            if key not in SIGNATURES[pat]:
                raise PatternSyntaxError(f"unknown parameter {key!r} for pattern {pat!r}", 1, 1)
        params = {k: _freeze(v) for k, v in params.items()}
        instances.append(PatternInstance(pat, name, params, stage))
    mat = doc.get("materialize", ())
    if isinstance(mat, bool):
        stages = len({i.stage for i in instances})
        mat = (mat,) * max(stages - 1, 0)
    return Pipeline(tuple(instances), tuple(bool(m) for m in mat),
                    bool(doc.get("useDerived", True)))


def _freeze(v: Any) -> Value:
    return tuple(_freeze(x) for x in v) if isinstance(v, list) else v


def _thaw(v: Value) -> Any:
    return [_thaw(x) for x in v] if isinstance(v, tuple) else v


def pipeline_to_json(pipeline: Pipeline) -> str:
    doc = {
        "instances": [
            {"pattern": i.pattern, "name": i.name, "stage": i.stage,
             "params": {k: _thaw(v) for k, v in i.params.items()}}
            for i in pipeline.instances
        ],
        "useDerived": pipeline.use_derived,
    }
    if pipeline.materialize:
        doc["materialize"] = list(pipeline.materialize)
    return json.dumps(doc, indent=2)


# ---------------------------------------------------------------------------
# printer

def format_value(v: Value) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        if isinstance(v, float) and not math.isfinite(v):
            raise ValueError(f"cannot print non-finite number {v!r}")
        return repr(v)
    if isinstance(v, tuple):
        return "[" + ", ".join(format_value(x) for x in v) + "]"
    if _IDENT_FULL.match(v) and v not in ("true", "false"):
        return v
    return json.dumps(v)


def format_pipeline(pipeline: Pipeline) -> str:
    out = []
    for inst in pipeline.instances:
        out.append(f"pattern {inst.pattern} as {inst.name} {{")
        if inst.stage:
            out.append(f"    stage = {inst.stage}")
        for k, v in inst.params.items():
            out.append(f"    {k} = {format_value(v)}")
        out.append("}")
        out.append("")
    return "\n".join(out)


# ---------------------------------------------------------------------------
# validation

def _class_ok(taxonomy: Taxonomy, v: Any, root: str) -> Optional[str]:
    if not isinstance(v, str):
        return f"expected a class name, got {v!r}"
    if v not in taxonomy:
        return f"undeclared class {v!r}"
    if not taxonomy.is_subclass(v, root):
        return f"class {v!r} is not a subclass of {root}"
    return None


def _check(taxonomy: Taxonomy, spec: Param, v: Any) -> Optional[str]:
    if spec.kind == "event":
        return _class_ok(taxonomy, v, EVENT)
    if spec.kind == "entity":
        return _class_ok(taxonomy, v, ENTITY)
    if spec.kind == "aggregate":
        if AGGREGATE not in taxonomy:
            return "taxonomy has no Aggregate class"
        return _class_ok(taxonomy, v, AGGREGATE)
    if spec.kind == "entities":
        if not isinstance(v, tuple):
            return f"expected a list of entity classes, got {v!r}"
        for x in v:
            err = _class_ok(taxonomy, x, ENTITY)
            if err:
                return err
        return None
    if spec.kind == "bool":
        return None if isinstance(v, bool) else f"expected true or false, got {v!r}"
    if spec.kind == "number":
        ok = isinstance(v, (int, float)) and not isinstance(v, bool)
        return None if ok else f"expected a number, got {v!r}"
    if spec.kind == "string":
        return None if isinstance(v, str) and v else f"expected a non-empty string, got {v!r}"
    if spec.kind == "enum":
        return None if normalize_enum(v) in spec.choices else (
            f"expected one of {', '.join(spec.choices)}, got {v!r}")
    if spec.kind == "filter":
        ok = isinstance(v, tuple) and len(v) == 2 and isinstance(v[0], str)
        return None if ok else f"expected [attribute, value], got {v!r}"
    raise AssertionError(spec.kind)


def normalize_enum(v: Any) -> Any:
    # idents cannot contain '-', so all_per_resource is accepted for all-per-resource
    if isinstance(v, str) and v not in AGG_FUNCTIONS:
        return v.replace("_", "-")
    return v


def validate_instance(instance: PatternInstance, taxonomy: Taxonomy) -> list[Diagnostic]:
    out = []
    signature = SIGNATURES.get(instance.pattern)
    if signature is None:
        return [Diagnostic(instance.name, None, f"unknown pattern {instance.pattern!r}")]
    for key, value in instance.params.items():
        spec = signature.get(key)
        if spec is None:
            out.append(Diagnostic(instance.name, key, "unknown parameter"))
            continue
        err = _check(taxonomy, spec, value)
        if err:
            out.append(Diagnostic(instance.name, key, err))
    required = [k for k, s in signature.items() if s.required]
    if instance.pattern == "interval_aggregate":
        if normalize_enum(instance.params.get("window", "interval")) == "interval":
            required += ["start", "end"]
        agg = instance.params.get("agg")
        if agg in ("count_above", "count_below"):
            required.append("threshold")
        elif "threshold" in instance.params:
            out.append(Diagnostic(instance.name, "threshold",
                                  "threshold is only allowed with count_above or count_below"))
    for key in required:
        if key not in instance.params:
            out.append(Diagnostic(instance.name, key, "missing required parameter"))
    return out


def validate_pipeline(pipeline: Pipeline, taxonomy: Taxonomy) -> list[Diagnostic]:
    """Every problem found; an empty list means the pipeline can run."""
    out = []
    seen = set()
    for inst in pipeline.instances:
        if inst.name in seen:
            out.append(Diagnostic(inst.name, None, "duplicate instance name"))
        seen.add(inst.name)
        out.extend(validate_instance(inst, taxonomy))
    return out


def resolve_params(instance: PatternInstance) -> dict[str, Any]:
    """Engine keyword arguments with defaults filled in."""
    signature = SIGNATURES[instance.pattern]
    kwargs = {}
    for key, spec in signature.items():
        v = instance.params.get(key, spec.default)
        if spec.kind == "enum" and v is not None:
            v = normalize_enum(v)
        kwargs[spec.arg] = v
    return kwargs


def load_pipeline(path) -> Pipeline:
    with open(path, encoding="utf-8") as fh:
        return parse_pattern_file(fh.read())

