"""Enrich manufacturing event knowledge graphs with derived facts.

Typical use::

    from trace_enrich import load_store, load_pipeline, run_pipeline, write_facts

    store, warnings = load_store(["events.jsonl"])
    result = run_pipeline(store, load_pipeline("patterns.pat"))
    write_facts(result.facts, "facts.jsonl")
"""

from .ingest import (
    DataError,
    DerivedFact,
    build_store,
    dedupe,
    load_store,
    load_taxonomy,
    materialize,
    read_facts,
    write_facts,
    write_store,
)
from .model import (
    Correlation,
    Entity,
    Event,
    Interval,
    PartOfEdge,
    Store,
    Taxonomy,
    TaxonomyError,
    UnknownClassError,
    build_intervals,
    compare_events,
    correlated_entities,
    is_subclass,
)
from .oracle import GeneratorConfig, generate_dataset, oracle_eval
from .patterns import ENGINES, PatternResult, PipelineError, RunResult, run_instance, run_pipeline
from .patternspec import (
    PatternInstance,
    PatternSyntaxError,
    Pipeline,
    format_pipeline,
    load_pipeline,
    parse_pattern_file,
    validate_pipeline,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
