"""Brute-force reference evaluation used to produce and check golden outputs.

Nothing here is incremental.  At every event the windows are recomputed
from the full element history, each window's union graph is materialized,
and the stream patterns are matched by nested loops.  An event's delta is
every result binding that has at least one derivation using that event.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Set, Tuple

from .codec import decode, encode, encode_blocks
from .federation import selector_component
from .query import Construct, QueryAST, Select
from .rdf import (
    EMPTY_BINDING,
    BlankNode,
    Binding,
    Graph,
    Iri,
    QuotedTriple,
    Triple,
    TriplePattern,
    construct,
    match,
    match_bgp,
)
from .reasoner import Closure, compute_closure, materialize
from .scenario import Scenario, log_lines, project
from .window import MalformedTimestamp, MissingTimestamp, extract_app_time


@dataclass
class Event:
    time: int
    key: tuple
    topic: Iri
    graph: Graph


@dataclass
class OracleDelta:
    event: Event
    bindings: Set[Binding]
    graph: Optional[Graph] = None


def _scope_bnodes(graph: Graph, eid: int) -> Graph:
    def fix(term):
        if isinstance(term, BlankNode):
            return BlankNode(f"{term.label}_e{eid}")
        if isinstance(term, QuotedTriple):
            return QuotedTriple(fix(term.subject), term.predicate, fix(term.object))
        return term

    return Graph(Triple(fix(t.subject), t.predicate, fix(t.object)) for t in graph)


def _nested_join(left, right) -> Set[Binding]:
    out = set()
    for a in left:
        for b in right:
            m = a.merge(b)
            if m is not None:
                out.add(m)
    return out


def _match_all(patterns: Sequence[TriplePattern], graphs: Sequence[Graph], seed: Binding) -> Set[Binding]:
    """Match pattern ``j`` against ``graphs[j]``, left to right, by nested loops."""
    rows = {seed}
    for p, g in zip(patterns, graphs):
        rows = {b for r in rows for b in match(p, g, r)}
        if not rows:
            break
    return rows


def replay(
    ast: QueryAST,
    events: Sequence[Event],
    knowledge: Graph,
    closure: Closure,
    topics: Optional[Dict[int, Set[Iri]]] = None,
) -> List[OracleDelta]:
    """Evaluate ``ast`` over ``events`` (in delivery order) from scratch at each step."""
    sps = ast.stream_patterns
    if topics is None:
        topics = {i: {sp.selector} for i, sp in enumerate(sps) if isinstance(sp.selector, Iri)}
    if ast.static_patterns:
        static = match_bgp(list(ast.static_patterns), materialize(knowledge, closure))
    else:
        static = {EMPTY_BINDING}

    history: List[Tuple[Iri, Graph, Dict[int, int]]] = []
    watermark: Optional[int] = None
    out: List[OracleDelta] = []

    def seed(i: int, topic: Iri) -> Binding:
        var = sps[i].selector_variable
        return Binding({var: topic}) if var else EMPTY_BINDING

    def window_graph(i: int, topic: Iri) -> Graph:
        lo = watermark - sps[i].window.range_ms
        g = Graph()
        for t, el, times in history:
            if t == topic and i in times and times[i] > lo:
                g.update(el)
        return materialize(g, closure)

    for ev in events:
        idx = [i for i in range(len(sps)) if ev.topic in topics.get(i, ())]
        if not idx:
            continue
        try:
            times = {i: extract_app_time(ev.graph, sps[i].window.on) for i in idx}
        except (MissingTimestamp, MalformedTimestamp):
            continue
        accepted = {
            i: times[i]
            for i in idx
            if watermark is None or times[i] > watermark - sps[i].window.range_ms
        }
        if not accepted:
            continue
        top = max(accepted.values())
        watermark = top if watermark is None else max(watermark, top)
        graph = _scope_bnodes(ev.graph, len(history))
        history.append((ev.topic, graph, accepted))
        own = materialize(graph, closure)

        full: List[Set[Binding]] = []
        for i, sp in enumerate(sps):
            found: Set[Binding] = set()
            for topic in topics.get(i, ()):
                g = window_graph(i, topic)
                found |= _match_all(sp.patterns, [g] * len(sp.patterns), seed(i, topic))
            full.append(found)

        fresh: Set[Binding] = set()
        for i in accepted:
            pats = sps[i].patterns
            g = window_graph(i, ev.topic)
            using: Set[Binding] = set()
            for j in range(len(pats)):
                graphs = [own if k == j else g for k in range(len(pats))]
                using |= _match_all(pats, graphs, seed(i, ev.topic))
            rows = _nested_join(static, using)
            for k in range(len(sps)):
                if k != i:
                    rows = _nested_join(rows, full[k])
            fresh |= rows
        if not fresh:
            continue
        delta = OracleDelta(ev, fresh)
        if isinstance(ast.result, Construct):
            delta.graph = construct(list(ast.result.template), fresh)
        out.append(delta)
    return out


def resolve_topics(
    ast: QueryAST, candidates: Set[Iri], knowledge: Graph, closure: Closure
) -> Dict[int, Set[Iri]]:
    """Variable-selector resolution by matching over the materialized knowledge graph."""
    kg = materialize(knowledge, closure)
    out: Dict[int, Set[Iri]] = {}
    for i, sp in enumerate(ast.stream_patterns):
        if isinstance(sp.selector, Iri):
            out[i] = {sp.selector}
            continue
        var = sp.selector.name
        component = selector_component(ast, var)
        out[i] = {
            t for t in candidates if not component or match_bgp(component, kg, Binding({var: t}))
        }
    return out


def scenario_outputs(scenario: Scenario) -> Tuple[Dict[str, str], Dict[str, str]]:
    """Oracle results logs and tee files for a loaded scenario.

    Delivery order mirrors the broker contract: by delivery time, then
    publish time, then replay publications before derived ones.  Messages
    published before their consumer subscribes are not modelled, so
    replay data must start after discovery settles.
    """
    closure = compute_closure(scenario.ontology)
    latency = scenario.latency
    queries = scenario.queries()
    query_iris = {}
    for node in scenario.nodes:
        for n, q in enumerate(node.queries):
            query_iris[q.name] = Iri(f"{node.id.value}/query/{n}")
    generated_by = scenario.prefixes.expand(":generatedBy")

    metadata = Graph()
    for node in scenario.nodes:
        for s in node.streams:
            metadata.update(s.metadata)
    for _, q in queries:
        if q.ast.register is not None:
            metadata.add(Triple(q.ast.register, generated_by, query_iris[q.name]))
    all_topics = {s.topic for n in scenario.nodes for s in n.streams}
    all_topics |= {q.ast.register for _, q in queries if q.ast.register is not None}

    # published messages: (publish time, rank, publisher, topic, graph)
    published: List[Tuple[int, tuple, Iri, Iri, Graph]] = []
    for ni, node in enumerate(scenario.nodes):
        for si, s in enumerate(node.streams):
            for j, (t, payload) in enumerate(s.replay):
                if t < node.join or (node.leave is not None and t > node.leave):
                    continue
                published.append((t, (0, ni, si, j), node.id, s.topic, decode(payload)))

    logs: Dict[str, str] = {}
    tees: Dict[str, str] = {}
    pending = list(range(len(queries)))
    while pending:
        progressed = False
        for qi in list(pending):
            host, q = queries[qi]
            upstream = {
                queries[k][1].ast.register
                for k in pending
                if k != qi and queries[k][1].ast.register is not None
            }
            kg = host.kg | metadata
            exclude = {q.ast.register} if q.ast.register is not None else set()
            topics = resolve_topics(q.ast, all_topics - exclude, kg, closure)
            wanted = set().union(*topics.values()) if topics else set()
            if wanted & upstream:
                continue
            events = []
            for pt, rank, pub, topic, g in published:
                if topic not in wanted:
                    continue
                at = pt + latency(pub, host.id)
                if at < host.join or (host.leave is not None and at > host.leave):
                    continue
                events.append(Event(at, (at, pt, rank), topic, g))
            events.sort(key=lambda e: e.key)
            deltas = replay(q.ast, events, kg, closure, topics)
            if isinstance(q.ast.result, Select):
                logs[q.name] = "".join(
                    line
                    for d in deltas
                    for line in log_lines(d.event.topic, d.event.time, (project(q.ast, b) for b in d.bindings))
                )
            blocks = [(d.event.time, encode(d.graph)) for d in deltas if d.graph is not None and len(d.graph)]
            if isinstance(q.ast.result, Construct) and q.tee:
                tees[q.name] = encode_blocks(blocks)
            if q.ast.register is not None:
                for d in deltas:
                    if d.graph is not None and len(d.graph):
                        published.append(
                            (d.event.time, (1, d.event.key, qi), host.id, q.ast.register, d.graph)
                        )
            pending.remove(qi)
            progressed = True
        if not progressed:
            raise ValueError("queries form a cycle through their output streams")
    return logs, tees
