"""``trace-enrich`` command line.

Exit status: 0 success, 1 bad data, 2 bad pattern file or generator
settings, 3 IO failure.  ``TRACE_ENRICH_LOG`` (error, warn, info, debug)
sets how much is logged on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import Counter
from dataclasses import fields
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from .ingest import DataError, load_store, load_taxonomy, write_facts
from .model import TaxonomyError, UnknownClassError
from .oracle import GeneratorConfig, default_taxonomy_document, generate_dataset
from .patterns import PipelineError, run_pipeline
from .patternspec import PatternSyntaxError, load_pipeline

logger = logging.getLogger("trace_enrich")

OK, DATA_ERROR, PATTERN_ERROR, IO_ERROR = 0, 1, 2, 3

_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
           "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    name = os.environ.get("TRACE_ENRICH_LOG", "warn").lower()
    level = _LEVELS.get(name, logging.WARNING)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s",
                        force=True)
    if name not in _LEVELS:
        logger.warning("unknown TRACE_ENRICH_LOG value %r; using warn", name)


def package_file(name: str) -> str:
    return resources.files("trace_enrich").joinpath("data", name).read_text(encoding="utf-8")


def _load(args) -> tuple:
    taxonomy = load_taxonomy(args.taxonomy)
    store, warnings = load_store(args.data, taxonomy, strict=args.strict)
    if args.strict and warnings:
        raise DataError(f"{len(warnings)} data warning(s) under --strict, first: {warnings[0]}")
    return store, warnings


def cmd_enrich(args) -> int:
    pipeline = load_pipeline(args.patterns)
    store, warnings = _load(args)
    result = run_pipeline(store, pipeline, jobs=args.jobs)
    write_facts(result.facts, args.out)
    for w in result.warnings:
        logger.info(w)
    if result.warnings:
        logger.warning("%d pipeline warnings (details at info level or in --report)",
                       len(result.warnings))
    if args.report:
        report = {
            "events": len(store.events),
            "entities": len(store.entities),
            "facts": len(result.facts),
            "loadWarnings": warnings,
            "warnings": result.warnings,
            "instances": {
                name: {"counters": res.counters, "warnings": res.warnings,
                       "seconds": round(result.timings[name], 6)}
                for name, res in result.results.items()
            },
        }
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
    logger.info("wrote %d facts to %s", len(result.facts), args.out)
    return OK


def cmd_validate(args) -> int:
    store, warnings = _load(args)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"ok: {len(store.events)} events, {len(store.entities)} entities, "
          f"{len(store.part_of)} part-of edges, {len(warnings)} warnings")
    return OK


def cmd_generate(args) -> int:
    values = {f.name: getattr(args, f.name) for f in fields(GeneratorConfig)
              if getattr(args, f.name, None) is not None}
    try:
        config = GeneratorConfig(**values)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return PATTERN_ERROR
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "events.jsonl", "w", encoding="utf-8") as fh:
        for rec in generate_dataset(config):
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")
    (out / "taxonomy.json").write_text(
        json.dumps(default_taxonomy_document(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / "patterns.pat").write_text(package_file("default.pat"), encoding="utf-8")
    (out / "use_cases.pat").write_text(package_file("use_cases.pat"), encoding="utf-8")
    logger.info("generated dataset in %s", out)
    return OK


def cmd_stats(args) -> int:
    store, _ = load_store(args.data, load_taxonomy(args.taxonomy))
    tax = store.taxonomy
    print(f"events\t{len(store.events)}")
    print(f"entities\t{len(store.entities)}")
    print(f"part_of\t{len(store.part_of)}")
    if store.events:
        print(f"time_range\t{store.events[0].timestamp}\t{store.events[-1].timestamp}")
    else:
        print("time_range\t0\t0")
    by_type = Counter(e.type for e in store.events)
    for cls in sorted(tax.descendants("Event")):
        n = sum(by_type[t] for t in tax.descendants(cls))
        print(f"event_class\t{cls}\t{n}")
    for cls in sorted(tax.descendants("Entity")):
        print(f"entity_class\t{cls}\t{len(store.entities_of(cls))}")
    degrees = Counter(len(e.entities) for e in store.events)
    for d in sorted(degrees):
        print(f"degree\t{d}\t{degrees[d]}")
    return OK


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    for f in fields(GeneratorConfig):
        if f.name == "seed":
            continue
        kind = float if f.type in ("float", float) else int
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=kind, default=None,
                       help=f"default {f.default}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trace-enrich",
                                     description="Derive facts from manufacturing event graphs.")
    sub = parser.add_subparsers(dest="command", required=True)

    def data_flags(p, strict=True):
        p.add_argument("--data", nargs="+", required=True, help="JSONL event log file(s)")
        p.add_argument("--taxonomy", help="JSON taxonomy extension (default: built-in)")
        if strict:
            p.add_argument("--strict", action="store_true", help="treat data warnings as errors")

    p = sub.add_parser("enrich", help="run a pattern file over event data")
    data_flags(p)
    p.add_argument("--patterns", required=True, help="pattern file (DSL or JSON)")
    p.add_argument("--out", required=True, help="facts JSONL output")
    p.add_argument("--jobs", type=int, default=1, help="threads per stage")
    p.add_argument("--report", help="JSON run report output")
    p.set_defaults(func=cmd_enrich)

    p = sub.add_parser("validate", help="load and check event data")
    data_flags(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("generate", help="write a synthetic flow-shop dataset")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")
    _add_config_flags(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("stats", help="summarize event data")
    data_flags(p, strict=False)
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PatternSyntaxError as exc:
        where = getattr(args, "patterns", "")
        print(f"error: {where}:{exc.line}:{exc.column}: {exc.message}", file=sys.stderr)
        return PATTERN_ERROR
    except PipelineError as exc:
        for d in exc.diagnostics:
            print(f"error: {d}", file=sys.stderr)
        return PATTERN_ERROR
    except (DataError, TaxonomyError, UnknownClassError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return IO_ERROR


if __name__ == "__main__":
    sys.exit(main())
