"""Two patterns chained into a fleet-level metric.

Stage 0 measures each failure (Failed until the next state switch) and the
runner writes those measurements back onto the failure events as
``downtime.elapsed``.  Stage 1 averages that attribute per machine.  The
script then recomputes the average by hand from the raw records.
"""

import math
from collections import defaultdict

from trace_enrich import GeneratorConfig, build_store, generate_dataset, parse_pattern_file, run_pipeline

PIPELINE = parse_pattern_file("""
pattern elapsed_succeeding_same_type as downtime {
    eventType = SwitchState
    firstEventFilter = [state, Failed]
    matchOn = [Machine]
}
pattern interval_aggregate as mean_downtime {
    stage = 1
    window = all_per_resource
    eventType = SwitchState
    attribute = "downtime.elapsed"
    agg = avg
}
""")


def by_hand(records):
    switches = defaultdict(list)
    for r in records:
        if r["kind"] == "event" and r["type"] == "SwitchState":
            for ref in r["entities"]:
                switches[ref["id"]].append((r["timestamp"], r["id"], r["attributes"]["state"]))
    out = {}
    for machine, evs in switches.items():
        evs.sort()
        gaps = [b[0] - a[0] for a, b in zip(evs, evs[1:]) if a[2] == "Failed"]
        if gaps:
            out[machine] = math.fsum(gaps) / len(gaps)
    return out


if __name__ == "__main__":
    records = list(generate_dataset(GeneratorConfig(seed=3, machines=5, jobs=40)))
    store, _ = build_store(records, strict=True)
    result = run_pipeline(store, PIPELINE)
    print(f"{len(result.facts_of('downtime'))} failures measured")
    expected = by_hand(records)
    for f in result.facts_of("mean_downtime"):
        print(f"{f.subject}: pipeline {f.value:.1f} ms, by hand {expected[f.subject]:.1f} ms")
