from __future__ import annotations

import pytest

from trace_enrich.ingest import build_store
from trace_enrich.oracle import GeneratorConfig, generate_dataset


@pytest.fixture(scope="session")
def default_records() -> list[dict]:
    return list(generate_dataset(GeneratorConfig()))


@pytest.fixture(scope="session")
def default_store(default_records):
    store, warnings = build_store(default_records, strict=True)
    assert warnings == []
    return store
