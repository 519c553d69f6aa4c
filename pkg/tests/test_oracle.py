from __future__ import annotations

import random

import workloads
from semrob.oracle import Event, replay
from semrob.window import QueryRuntime, StreamElement


def test_engine_deltas_equal_brute_force_replay():
    rng = random.Random(404)
    compared = 0
    for k in range(80):
        w = workloads.workload(rng, max_events=60)
        events = [Event(i, (i,), topic, g) for i, (topic, g) in enumerate(w.events)]
        expected = {d.event.time: d.bindings for d in replay(w.ast, events, w.knowledge, w.closure)}
        rt = QueryRuntime(w.ast, w.closure, w.knowledge)
        for i, (topic, g) in enumerate(w.events):
            got = set(rt.ingest(StreamElement(topic, g, i)).bindings)
            assert got == expected.get(i, set()), f"workload {k}, event {i}"
            compared += bool(got)
    assert compared > 100
