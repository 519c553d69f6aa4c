"""RDFS sub-property / sub-class entailment by closure lookup.

The closure is computed once per ontology; matching consults it instead
of materializing derived triples into the data graph.  ``materialize`` is
kept as the reference semantics and is what tests compare against.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, Iterator, List, Set, Tuple, TypeVar

from .codec import read_graph
from .rdf import (
    EMPTY_BINDING,
    RDF_TYPE,
    RDFS_SUBCLASSOF,
    RDFS_SUBPROPERTYOF,
    Binding,
    Graph,
    Iri,
    Term,
    Triple,
    TriplePattern,
    Variable,
    evaluate_bgp,
    unify,
    unify_triple,
)

T = TypeVar("T")


@dataclass(frozen=True)
class Ontology:
    sub_property_of: FrozenSet[Tuple[Iri, Iri]] = frozenset()
    sub_class_of: FrozenSet[Tuple[Term, Term]] = frozenset()

    @classmethod
    def from_graph(cls, graph: Graph) -> "Ontology":
        """Read ``rdfs:subPropertyOf`` / ``rdfs:subClassOf`` axioms; other triples are ignored."""
        props = set()
        for t in graph.with_predicate(RDFS_SUBPROPERTYOF):
            if isinstance(t.subject, Iri) and isinstance(t.object, Iri):
                props.add((t.subject, t.object))
        classes = {(t.subject, t.object) for t in graph.with_predicate(RDFS_SUBCLASSOF)}
        return cls(frozenset(props), frozenset(classes))

    def __or__(self, other: "Ontology") -> "Ontology":
        return Ontology(
            self.sub_property_of | other.sub_property_of,
            self.sub_class_of | other.sub_class_of,
        )

    def __bool__(self) -> bool:
        return bool(self.sub_property_of or self.sub_class_of)


def _reachability(edges: Iterable[Tuple[T, T]]) -> Dict[T, FrozenSet[T]]:
    """For every node, the nodes reachable from it (reflexive, transitive)."""
    succ: Dict[T, Set[T]] = defaultdict(set)
    nodes: Set[T] = set()
    for a, b in edges:
        succ[a].add(b)
        nodes.update((a, b))
    out: Dict[T, FrozenSet[T]] = {}
    for n in nodes:
        seen = {n}
        stack = [n]
        while stack:
            for m in succ.get(stack.pop(), ()):
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        out[n] = frozenset(seen)
    return out


def _invert(up: Dict[T, FrozenSet[T]]) -> Dict[T, FrozenSet[T]]:
    down: Dict[T, Set[T]] = defaultdict(set)
    for n, supers in up.items():
        for s in supers:
            down[s].add(n)
    return {k: frozenset(v) for k, v in down.items()}


class Closure:
    """Reflexive-transitive closure of an ontology's hierarchies. Immutable."""

    def __init__(self, ontology: Ontology = Ontology()):
        self.ontology = ontology
        self._super_props = _reachability(ontology.sub_property_of)
        self._sub_props = _invert(self._super_props)
        self._super_classes = _reachability(ontology.sub_class_of)
        self._sub_classes = _invert(self._super_classes)
        self._sources: Dict[Iri, FrozenSet[Iri]] = {}

    def __bool__(self) -> bool:
        return bool(self.ontology)

    @staticmethod
    def _lookup(table: Dict, x) -> FrozenSet:
        # property misses are cached; predicates in use form a small set
        found = table.get(x)
        if found is None:
            found = table[x] = frozenset((x,))
        return found

    def sub_properties(self, p: Iri) -> FrozenSet[Iri]:
        return self._lookup(self._sub_props, p)

    def super_properties(self, p: Iri) -> FrozenSet[Iri]:
        return self._lookup(self._super_props, p)

    # class lookups see arbitrary object terms, so misses are not cached
    def sub_classes(self, c: Term) -> FrozenSet[Term]:
        return self._sub_classes.get(c) or frozenset((c,))

    def super_classes(self, c: Term) -> FrozenSet[Term]:
        return self._super_classes.get(c) or frozenset((c,))

    def source_predicates(self, p: Iri) -> FrozenSet[Iri]:
        """Asserted predicates whose triples can entail a triple with predicate ``p``."""
        cached = self._sources.get(p)
        if cached is None:
            subs = self.sub_properties(p)
            if RDF_TYPE in subs:
                subs = subs | self.sub_properties(RDF_TYPE)
            cached = self._sources[p] = subs
        return cached

    def entail(self, triple: Triple) -> Iterator[Triple]:
        """All triples entailed by one asserted triple, the triple itself included."""
        if not self:
            yield triple
            return
        s, q, o = triple
        supers = self.super_properties(q)
        for p in supers:
            yield triple if p == q else Triple(s, p, o)
        if RDF_TYPE in supers:
            type_supers = self.super_properties(RDF_TYPE)
            for c in self.super_classes(o):
                if c == o:
                    continue
                for p in type_supers:
                    try:
                        yield Triple(s, p, c)
                    except ValueError:
                        # subclass axiom on a non-object term
                        pass

    def entailed_objects(self, triple: Triple, p: Iri) -> List[Term]:
        """Objects ``x`` such that ``(triple.subject, p, x)`` is entailed by ``triple``."""
        q, o = triple.predicate, triple.object
        if not self:
            return [o] if p == q else []
        supers = self.super_properties(q)
        out = [o] if p in supers else []
        if RDF_TYPE in supers and p in self.super_properties(RDF_TYPE):
            out.extend(c for c in self.super_classes(o) if c != o)
        return out

    def match_asserted(self, pattern: TriplePattern, asserted: Triple, binding: Binding) -> List[Binding]:
        """Bindings extending ``binding`` that map ``pattern`` onto something ``asserted`` entails."""
        p = pattern.predicate
        if isinstance(p, Variable):
            p = binding.get(p.name, p)
        if isinstance(p, Variable):
            out = []
            for t in self.entail(asserted):
                b = unify_triple(pattern, t, binding)
                if b is not None:
                    out.append(b)
            return out
        objects = self.entailed_objects(asserted, p)
        if not objects:
            return []
        b = unify(pattern.subject, asserted.subject, binding)
        if b is None:
            return []
        out = []
        for o in objects:
            b2 = unify(pattern.object, o, b)
            if b2 is not None:
                out.append(b2)
        return out


def compute_closure(ontology: Ontology) -> Closure:
    return Closure(ontology)


EMPTY_CLOSURE = Closure()


def materialize(graph: Graph, closure: Closure) -> Graph:
    """Forward-chain sub-property and sub-class rules to a fixpoint.

    Deliberately naive: this is the reference the lookup-based matcher is
    checked against.
    """
    out = graph.copy()
    sp = closure.ontology.sub_property_of
    sc = closure.ontology.sub_class_of
    changed = True
    while changed:
        changed = False
        for t in list(out):
            derived = [Triple(t.subject, b, t.object) for a, b in sp if a == t.predicate]
            if t.predicate == RDF_TYPE:
                for a, b in sc:
                    if a == t.object:
                        try:
                            derived.append(Triple(t.subject, RDF_TYPE, b))
                        except ValueError:
                            pass
            for d in derived:
                if d not in out:
                    out.add(d)
                    changed = True
    return out


def candidate_triples(
    pattern: TriplePattern, graph: Graph, closure: Closure, seed: Binding
) -> Iterable[Triple]:
    p = pattern.predicate
    if isinstance(p, Variable):
        p = seed.get(p.name, p)
    if isinstance(p, Variable):
        return graph
    if not isinstance(p, Iri):
        return ()
    sources = closure.source_predicates(p)
    if len(sources) == 1:
        return graph.with_predicate(p)
    return [t for q in sources for t in graph.with_predicate(q)]


def entailed_match(
    pattern: TriplePattern,
    graph: Graph,
    closure: Closure = EMPTY_CLOSURE,
    seed: Binding = EMPTY_BINDING,
) -> Set[Binding]:
    """Like ``rdf.match`` but against the RDFS entailment of ``graph``.

    Quoted triples are matched structurally; no inference happens inside them.
    """
    out: Set[Binding] = set()
    for asserted in candidate_triples(pattern, graph, closure, seed):
        out.update(closure.match_asserted(pattern, asserted, seed))
    return out


def entailed_match_bgp(
    patterns, graph: Graph, closure: Closure = EMPTY_CLOSURE, seed: Binding = EMPTY_BINDING
) -> Set[Binding]:
    return evaluate_bgp(list(patterns), lambda pat, b: entailed_match(pat, graph, closure, b), seed)


def load_ontology(path) -> Ontology:
    return Ontology.from_graph(read_graph(path))
