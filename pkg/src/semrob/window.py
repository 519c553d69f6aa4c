"""Sliding RANGE windows and incremental evaluation of continuous queries.

Each stream pattern keeps one window per resolved topic.  Matches inside a
window are kept as *derivations*: a binding together with the set of
element ids whose triples produced it.  On ingest only derivations that
use the new element are computed, then joined with the stored derivations
of the other stream patterns and the cached static bindings.  A result is
identified by its binding plus its supporting elements, so it is emitted
exactly once per supporting set.
"""

from __future__ import annotations

import logging
import re
from collections import defaultdict, deque
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Deque, Dict, FrozenSet, Iterable, List, Optional, Set, Tuple

from .codec import canonical_order, encode_term
from .query import Construct, QueryAST, Select, StreamPattern
from .rdf import (
    EMPTY_BINDING,
    XSD,
    BlankNode,
    Binding,
    Graph,
    Iri,
    Literal,
    QuotedTriple,
    Term,
    Triple,
    TriplePattern,
    Variable,
    construct,
    join,
)
from .reasoner import EMPTY_CLOSURE, Closure, entailed_match_bgp

log = logging.getLogger(__name__)


class MissingTimestamp(ValueError):
    pass


class MalformedTimestamp(ValueError):
    pass


_INTEGER_TYPES = {XSD + n for n in ("integer", "long", "int", "nonNegativeInteger", "unsignedLong")}
_DATETIME_TYPES = {XSD + "dateTime", XSD + "dateTimeStamp"}
_DATETIME_RE = re.compile(
    r"-?\d{4,}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(?:\.\d+)?(?:Z|[+-]\d{2}:\d{2})?"
)


def parse_timestamp(lit: Term) -> int:
    """Milliseconds since the epoch for an xsd:dateTime or integer literal."""
    if not isinstance(lit, Literal):
        raise MalformedTimestamp(f"timestamp object is not a literal: {lit}")
    dt = lit.datatype.value
    text = lit.lexical.strip()
    if dt in _INTEGER_TYPES:
        try:
            return int(text)
        except ValueError:
            raise MalformedTimestamp(f"bad integer timestamp {text!r}") from None
    if dt in _DATETIME_TYPES:
        if not _DATETIME_RE.fullmatch(text):
            raise MalformedTimestamp(f"bad xsd:dateTime {text!r}")
        if text.endswith("Z"):
            text = text[:-1] + "+00:00"
        try:
            value = datetime.fromisoformat(_trim_fraction(text))
        except ValueError:
            raise MalformedTimestamp(f"bad xsd:dateTime {lit.lexical!r}") from None
        if value.tzinfo is None:
            value = value.replace(tzinfo=timezone.utc)
        delta = value - datetime(1970, 1, 1, tzinfo=timezone.utc)
        return (delta.days * 86_400_000) + delta.seconds * 1000 + delta.microseconds // 1000
    raise MalformedTimestamp(f"unsupported timestamp datatype <{dt}>")


def _trim_fraction(text: str) -> str:
    # fromisoformat on 3.10 only takes 3 or 6 fractional digits
    m = re.match(r"(.*T\d{2}:\d{2}:\d{2})\.(\d+)(.*)", text)
    if not m:
        return text
    frac = (m.group(2) + "000000")[:6]
    return f"{m.group(1)}.{frac}{m.group(3)}"


def extract_app_time(graph: Graph, on: Iri) -> int:
    """Application time of a message: the ``on`` object of its canonically first matching triple."""
    hits = list(graph.with_predicate(on))
    if not hits:
        raise MissingTimestamp(f"no {on} triple in message")
    ordered = canonical_order(hits)
    if len({t.object for t in ordered}) > 1:
        log.warning("message has %d distinct %s values; using the first", len(ordered), on)
    return parse_timestamp(ordered[0].object)


@dataclass(eq=False)
class StreamElement:
    topic: Iri
    graph: Graph
    seq: int = 0
    # filled in by the runtime
    app_time: Optional[int] = None


@dataclass(frozen=True)
class Result:
    binding: Binding
    support: FrozenSet[int]


@dataclass
class ResultDelta:
    results: Tuple[Result, ...]
    at_time: Optional[int]
    graph: Optional[Graph] = None

    @property
    def bindings(self) -> List[Binding]:
        return [r.binding for r in self.results]

    def __bool__(self) -> bool:
        return bool(self.results)


@dataclass
class Metrics:
    ingested: int = 0
    late_drops: int = 0
    missing_timestamps: int = 0
    evaluations: int = 0
    results: int = 0

    def as_dict(self) -> Dict[str, int]:
        return dict(self.__dict__)


_Derivation = Tuple[Binding, FrozenSet[int]]


class _Window:
    """Buffer of one (stream pattern, topic) pair with a provenance index.

    Evicted entries are removed from ``live`` immediately and purged from
    the index lazily, once they make up half of it.
    """

    def __init__(self, seed: Binding):
        self.seed = seed
        self.elements: Deque[Tuple[int, int, Graph]] = deque()  # (app_time, eid, graph)
        self.index: Dict[Iri, List[Tuple[Triple, int]]] = defaultdict(list)
        self.all: List[Tuple[Triple, int]] = []
        self.derivations: List[_Derivation] = []
        self.live: Set[int] = set()
        self._dead = 0

    def add(self, app_time: int, eid: int, graph: Graph) -> None:
        if self.elements and self.elements[-1][0] > app_time:
            items = list(self.elements)
            items.append((app_time, eid, graph))
            items.sort(key=lambda x: (x[0], x[1]))
            self.elements = deque(items)
        else:
            self.elements.append((app_time, eid, graph))
        self.live.add(eid)
        for t in graph:
            self.index[t.predicate].append((t, eid))
            self.all.append((t, eid))

    def evict(self, bound: int) -> Set[int]:
        """Drop elements with app_time <= bound; returns their ids."""
        gone: Set[int] = set()
        while self.elements and self.elements[0][0] <= bound:
            _, eid, g = self.elements.popleft()
            gone.add(eid)
            self._dead += len(g)
        if gone:
            self.live -= gone
            if self._dead * 2 > len(self.all):
                self._compact()
        return gone

    def _compact(self) -> None:
        live = self.live
        for pred in list(self.index):
            kept = [x for x in self.index[pred] if x[1] in live]
            if kept:
                self.index[pred] = kept
            else:
                del self.index[pred]
        self.all = [x for x in self.all if x[1] in live]
        self.derivations = [d for d in self.derivations if d[1] <= live]
        self._dead = 0

    def lookup(self, predicate: Iri):
        live = self.live
        return [x for x in self.index.get(predicate, ()) if x[1] in live]

    def live_triples(self):
        live = self.live
        return [x for x in self.all if x[1] in live]

    def live_derivations(self) -> List[_Derivation]:
        live = self.live
        return [d for d in self.derivations if d[1] <= live]

    def __len__(self) -> int:
        return len(self.elements)


def _relabel(graph: Graph, eid: int) -> Graph:
    """Scope blank nodes to one message so they never join across messages."""

    def fix(term: Term) -> Term:
        if isinstance(term, BlankNode):
            return BlankNode(f"{term.label}_e{eid}")
        if isinstance(term, QuotedTriple):
            return QuotedTriple(fix(term.subject), term.predicate, fix(term.object))
        return term

    if not any(_has_bnode(t) for t in graph):
        return graph
    return Graph(Triple(fix(t.subject), t.predicate, fix(t.object)) for t in graph)


def _has_bnode(t) -> bool:
    for x in (t.subject, t.object):
        if isinstance(x, BlankNode):
            return True
        if isinstance(x, QuotedTriple) and _has_bnode(x):
            return True
    return False


class QueryRuntime:
    """Window state and evaluation for one deployed continuous query.

    Not thread-safe; the owning node serializes calls.
    """

    def __init__(
        self,
        ast: QueryAST,
        closure: Closure = EMPTY_CLOSURE,
        knowledge: Optional[Graph] = None,
    ):
        self.ast = ast
        self.closure = closure
        self.watermark: Optional[int] = None
        self.metrics = Metrics()
        self._knowledge = knowledge if knowledge is not None else Graph()
        self._static: Optional[Set[Binding]] = None
        self._windows: Dict[Tuple[int, Iri], _Window] = {}
        self._topics: Dict[int, Set[Iri]] = {}
        for i, sp in enumerate(ast.stream_patterns):
            self._topics[i] = {sp.selector} if isinstance(sp.selector, Iri) else set()
        self._next_eid = 0

    # -- configuration ------------------------------------------------------

    def set_knowledge(self, knowledge: Graph, closure: Optional[Closure] = None) -> None:
        """Replace the background graph; static bindings are recomputed lazily."""
        self._knowledge = knowledge
        if closure is not None:
            self.closure = closure
        self._static = None

    def static_bindings(self) -> Set[Binding]:
        if self._static is None:
            if self.ast.static_patterns:
                self._static = entailed_match_bgp(
                    list(self.ast.static_patterns), self._knowledge, self.closure
                )
            else:
                self._static = {EMPTY_BINDING}
        return self._static

    def topics(self, index: int) -> Set[Iri]:
        return set(self._topics[index])

    def set_topics(self, index: int, topics: Iterable[Iri]) -> Set[Iri]:
        """Set the resolved topics of a variable-selector pattern; returns dropped topics."""
        sp = self.ast.stream_patterns[index]
        if isinstance(sp.selector, Iri):
            raise ValueError("concrete selectors resolve to themselves")
        new = set(topics)
        dropped = self._topics[index] - new
        for t in dropped:
            self._windows.pop((index, t), None)
        self._topics[index] = new
        return dropped

    def drop_window(self, index: int, topic: Iri) -> None:
        self._windows.pop((index, topic), None)

    def subscribed_topics(self) -> Set[Iri]:
        out: Set[Iri] = set()
        for ts in self._topics.values():
            out |= ts
        return out

    def patterns_for(self, topic: Iri) -> List[int]:
        return [i for i, ts in self._topics.items() if topic in ts]

    def window_elements(self, index: int, topic: Iri) -> List[Tuple[int, int]]:
        """(app_time, element id) pairs currently buffered for a pattern/topic."""
        w = self._windows.get((index, topic))
        return [(a, e) for a, e, _ in w.elements] if w else []

    def _window(self, index: int, topic: Iri) -> _Window:
        key = (index, topic)
        w = self._windows.get(key)
        if w is None:
            sel = self.ast.stream_patterns[index].selector_variable
            seed = Binding({sel: topic}) if sel else EMPTY_BINDING
            w = self._windows[key] = _Window(seed)
        return w

    # -- ingest -------------------------------------------------------------

    def ingest(self, element: StreamElement) -> ResultDelta:
        indices = self.patterns_for(element.topic)
        if not indices:
            return ResultDelta((), self.watermark)
        times: Dict[int, int] = {}
        try:
            for i in indices:
                on = self.ast.stream_patterns[i].window.on
                times[i] = extract_app_time(element.graph, on)
        except (MissingTimestamp, MalformedTimestamp):
            self.metrics.missing_timestamps += 1
            raise
        element.app_time = max(times.values())
        self.metrics.ingested += 1

        accepted = []
        for i in indices:
            rng = self.ast.stream_patterns[i].window.range_ms
            if self.watermark is not None and times[i] <= self.watermark - rng:
                self.metrics.late_drops += 1
                continue
            accepted.append(i)
        if not accepted:
            return ResultDelta((), self.watermark)

        wm = max(times[i] for i in accepted)
        if self.watermark is None or wm > self.watermark:
            self.watermark = wm
            self._evict()

        eid = self._next_eid
        self._next_eid += 1
        graph = _relabel(element.graph, eid)
        fresh: Dict[int, List[_Derivation]] = {}
        for i in accepted:
            w = self._window(i, element.topic)
            w.add(times[i], eid, graph)
            new = self._derive(self.ast.stream_patterns[i], w, graph, eid)
            w.derivations.extend(new)
            fresh[i] = new

        self.metrics.evaluations += 1
        results = self._join_new(fresh)
        self.metrics.results += len(results)
        ordered = tuple(sorted(results, key=_result_key))
        graph_out = None
        if isinstance(self.ast.result, Construct) and ordered:
            graph_out = self.construct_output([r.binding for r in ordered])
        return ResultDelta(ordered, self.watermark, graph_out)

    def _evict(self) -> None:
        for (i, _), w in self._windows.items():
            rng = self.ast.stream_patterns[i].window.range_ms
            w.evict(self.watermark - rng)

    def _candidates(self, pattern: TriplePattern, triples, index, binding: Binding):
        p = pattern.predicate
        if isinstance(p, Variable):
            p = binding.get(p.name, p)
        if isinstance(p, Variable):
            return triples
        if not isinstance(p, Iri):
            return ()
        sources = self.closure.source_predicates(p)
        return [x for q in sources for x in index(q)]

    def _match(self, pattern, triples, index, binding, support) -> List[_Derivation]:
        out = []
        match_asserted = self.closure.match_asserted
        for asserted, eid in self._candidates(pattern, triples, index, binding):
            for b in match_asserted(pattern, asserted, binding):
                out.append((b, support | {eid}))
        return out

    def _derive(self, sp: StreamPattern, w: _Window, graph: Graph, eid: int) -> List[_Derivation]:
        """Derivations of the pattern's BGP over the window that use element ``eid``."""
        own = [(t, eid) for t in graph]
        own_index: Dict[Iri, List[Tuple[Triple, int]]] = defaultdict(list)
        for x in own:
            own_index[x[0].predicate].append(x)
        win_index = w.lookup
        win_all = None
        own_lookup = lambda q: own_index.get(q, ())
        found: Set[_Derivation] = set()
        pats = sp.patterns
        for k in range(len(pats)):
            partial = set(self._match(pats[k], own, own_lookup, w.seed, frozenset()))
            for j, pat in enumerate(pats):
                if j == k or not partial:
                    continue
                nxt: Set[_Derivation] = set()
                if win_all is None:
                    win_all = w.live_triples()
                for b, s in partial:
                    nxt.update(self._match(pat, win_all, win_index, b, s))
                partial = nxt
            found |= partial
        return list(found)

    def _join_new(self, fresh: Dict[int, List[_Derivation]]) -> Set[Result]:
        static = [(b, frozenset()) for b in self.static_bindings()]
        n = len(self.ast.stream_patterns)
        out: Set[Result] = set()
        for i, new in fresh.items():
            if not new:
                continue
            acc = _join_derivations(new, static)
            for j in range(n):
                if j == i or not acc:
                    continue
                acc = _join_derivations(acc, self._all_derivations(j))
            for b, s in acc:
                out.add(Result(b, s))
        return out

    def _all_derivations(self, index: int) -> List[_Derivation]:
        out: List[_Derivation] = []
        for t in sorted(self._topics[index], key=lambda x: x.value):
            w = self._windows.get((index, t))
            if w is not None:
                out.extend(w.live_derivations())
        return out

    # -- output -------------------------------------------------------------

    def construct_output(self, bindings: Iterable[Binding]) -> Graph:
        if not isinstance(self.ast.result, Construct):
            raise TypeError("construct_output needs a CONSTRUCT query")
        return construct(self.ast.result.template, bindings)

    def project(self, binding: Binding) -> Binding:
        if isinstance(self.ast.result, Select):
            return binding.project(v.name for v in self.ast.result.variables)
        return binding

    # -- oracle -------------------------------------------------------------

    def evaluate_full(self) -> Set[Binding]:
        """Non-incremental evaluation over the current window contents."""
        per_pattern: List[Set[Binding]] = []
        for i, sp in enumerate(self.ast.stream_patterns):
            found: Set[Binding] = set()
            for t in self._topics[i]:
                w = self._windows.get((i, t))
                if w is None or not w.elements:
                    continue
                union = Graph()
                for _, _, g in w.elements:
                    union.update(g)
                found |= entailed_match_bgp(list(sp.patterns), union, self.closure, w.seed)
            per_pattern.append(found)
        acc = set(self.static_bindings())
        for found in per_pattern:
            acc = join(acc, found)
            if not acc:
                break
        return acc

    def is_empty(self) -> bool:
        return not any(w.elements for w in self._windows.values())


def _join_derivations(left: List[_Derivation], right: List[_Derivation]) -> List[_Derivation]:
    if not left or not right:
        return []
    shared = None
    for b, _ in left[:1]:
        for c, _ in right[:1]:
            shared = sorted(set(b) & set(c))
    out: Dict[_Derivation, None] = {}
    if shared:
        buckets: Dict[tuple, List[_Derivation]] = defaultdict(list)
        for c, s in right:
            key = tuple(c.get(v) for v in shared)
            buckets[key].append((c, s))
        for b, s in left:
            key = tuple(b.get(v) for v in shared)
            for c, s2 in buckets.get(key, ()):
                m = b.merge(c)
                if m is not None:
                    out[(m, s | s2)] = None
    else:
        for b, s in left:
            for c, s2 in right:
                m = b.merge(c)
                if m is not None:
                    out[(m, s | s2)] = None
    return list(out)


def _binding_key(b: Binding):
    return tuple((k, encode_term(v)) for k, v in sorted(b.items()))


def _result_key(r: Result):
    return (_binding_key(r.binding), sorted(r.support))
