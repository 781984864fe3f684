"""Five small shop-floor scenarios, each answered by one pattern.

Run with ``python demos/figure_walkthrough.py``.  Every store is built in
memory from a handful of records so the arithmetic can be checked by eye.
"""

from trace_enrich import build_store, parse_pattern_file, run_instance


def store(entities, events):
    recs = [{"kind": "entity", "id": k, "types": [v]} for k, v in entities.items()]
    for eid, etype, ts, refs, *attrs in events:
        recs.append({"kind": "event", "id": eid, "type": etype, "timestamp": ts,
                     "entities": [{"id": r} for r in refs], "attributes": attrs[0] if attrs else {}})
    return build_store(recs, strict=True)[0]


PATTERNS = parse_pattern_file("""
pattern interval_count as alarms { start = TrackIn end = TrackOut counted = Alarm }
pattern interval_aggregate as mean_obs {
    start = TrackIn end = TrackOut eventType = Observation attribute = value agg = avg
}
pattern elapsed_preceding as since_maintenance { eventType = TrackIn preceding = Maintenance }
pattern elapsed_succeeding_same_type as downtime {
    eventType = SwitchState firstEventFilter = [state, Failed]
}
pattern elapsed_maximum as throughput { start = TrackIn end = TrackOut entityType = Product }
""")

MJ = {"m1": "Machine", "j1": "Job"}

SCENARIOS = [
    ("alarms", "Alarms raised while job j1 was on machine m1", store(MJ, [
        ("e1", "TrackIn", 10, ["m1", "j1"]), ("e2", "Alarm", 11, ["m1"]),
        ("e3", "Alarm", 12, ["m1"]), ("e4", "TrackOut", 14, ["m1", "j1"])])),
    ("mean_obs", "Average sensor reading during the job", store(MJ, [
        ("e1", "TrackIn", 10, ["m1", "j1"]), ("e2", "Observation", 11, ["m1"], {"value": 10}),
        ("e3", "Observation", 12, ["m1"], {"value": 12}), ("e4", "TrackOut", 14, ["m1", "j1"])])),
    ("since_maintenance", "Time since the last maintenance when the job arrived", store(MJ, [
        ("e1", "Maintenance", 10, ["m1"]), ("e2", "TrackIn", 12, ["m1", "j1"])])),
    ("downtime", "How long the machine stayed failed", store(MJ, [
        ("e1", "SwitchState", 10, ["m1"], {"state": "Failed"}),
        ("e2", "SwitchState", 14, ["m1"], {"state": "Working"})])),
    ("throughput", "First track-in to last track-out of product p1", store(
        {"m1": "Machine", "m2": "Machine", "p1": "Product"}, [
            ("e1", "TrackIn", 3, ["m1", "p1"]), ("e2", "TrackOut", 7, ["m1", "p1"]),
            ("e3", "TrackIn", 9, ["m2", "p1"]), ("e4", "TrackOut", 15, ["m2", "p1"])])),
]

if __name__ == "__main__":
    for name, question, s in SCENARIOS:
        result = run_instance(s, PATTERNS.instance(name))
        print(question)
        for f in result.facts:
            print(f"    {f.subject}: {f.key} = {f.value}   (from {', '.join(f.inputs)})")
