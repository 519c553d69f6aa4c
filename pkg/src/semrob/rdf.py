"""RDF-star value model: terms, triples, graphs, patterns and bindings.

Terms are immutable and compare structurally.  A ``TriplePattern`` may
itself appear in subject or object position of another pattern, where it
stands for a quoted triple whose parts may contain variables.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, Iterator, List, Mapping, Optional, Set, Tuple, Union

log = logging.getLogger(__name__)

RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDFS = "http://www.w3.org/2000/01/rdf-schema#"
XSD = "http://www.w3.org/2001/XMLSchema#"

_BAD_IRI_CHARS = re.compile(r'[\s<>"]')
_BNODE_LABEL = re.compile(r"^[A-Za-z0-9_](?:[A-Za-z0-9_.\-]*[A-Za-z0-9_\-])?$")


class UnboundVariable(KeyError):
    """A template variable has no value in the binding."""

    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"unbound variable ?{self.name}"


@dataclass(frozen=True)
class Iri:
    value: str

    def __post_init__(self):
        if not self.value or _BAD_IRI_CHARS.search(self.value):
            raise ValueError(f"invalid IRI: {self.value!r}")

    def __hash__(self) -> int:
        return hash(self.value)

    def __eq__(self, other) -> bool:
        return self is other or (other.__class__ is Iri and self.value == other.value)

    def __str__(self) -> str:
        return f"<{self.value}>"


@dataclass(frozen=True)
class Literal:
    lexical: str
    datatype: Iri = Iri(XSD + "string")

    def __str__(self) -> str:
        # canonical form lives in the codec; this is only for debugging output
        from .codec import encode_term

        return encode_term(self)


@dataclass(frozen=True)
class BlankNode:
    label: str

    def __post_init__(self):
        if not _BNODE_LABEL.match(self.label):
            raise ValueError(f"invalid blank node label: {self.label!r}")

    def __str__(self) -> str:
        return f"_:{self.label}"


@dataclass(frozen=True)
class QuotedTriple:
    subject: "Term"
    predicate: Iri
    object: "Term"

    def __post_init__(self):
        _check_triple(self.subject, self.predicate, self.object)
        object.__setattr__(self, "_hash", hash((self.subject, self.predicate, self.object)))

    # hashed constantly during matching, so computed once
    def __hash__(self) -> int:
        return self._hash

    def __str__(self) -> str:
        return f"<< {self.subject} {self.predicate} {self.object} >>"


Term = Union[Iri, Literal, BlankNode, QuotedTriple]


def _check_triple(s, p, o) -> None:
    if not isinstance(s, (Iri, BlankNode, QuotedTriple)):
        raise ValueError(f"invalid subject term: {s!r}")
    if not isinstance(p, Iri):
        raise ValueError(f"predicate must be an IRI: {p!r}")
    if not isinstance(o, (Iri, Literal, BlankNode, QuotedTriple)):
        raise ValueError(f"invalid object term: {o!r}")


@dataclass(frozen=True)
class Triple:
    subject: Term
    predicate: Iri
    object: Term

    def __post_init__(self):
        _check_triple(self.subject, self.predicate, self.object)
        object.__setattr__(self, "_hash", hash((self.subject, self.predicate, self.object)))

    def __hash__(self) -> int:
        return self._hash

    def quoted(self) -> QuotedTriple:
        return QuotedTriple(self.subject, self.predicate, self.object)

    def __iter__(self):
        return iter((self.subject, self.predicate, self.object))

    def __str__(self) -> str:
        return f"{self.subject} {self.predicate} {self.object} ."


RDF_TYPE = Iri(RDF + "type")
RDFS_SUBCLASSOF = Iri(RDFS + "subClassOf")
RDFS_SUBPROPERTYOF = Iri(RDFS + "subPropertyOf")
XSD_STRING = Iri(XSD + "string")
XSD_INTEGER = Iri(XSD + "integer")
XSD_DATETIME = Iri(XSD + "dateTime")


class Graph:
    """A set of triples with a predicate index.

    Single writer, many readers; no internal locking.
    """

    __slots__ = ("_triples", "_by_predicate")

    def __init__(self, triples: Iterable[Triple] = ()):
        self._triples: Set[Triple] = set()
        self._by_predicate: Dict[Iri, Set[Triple]] = {}
        for t in triples:
            self.add(t)

    def add(self, triple: Triple) -> None:
        if triple in self._triples:
            return
        self._triples.add(triple)
        self._by_predicate.setdefault(triple.predicate, set()).add(triple)

    def update(self, triples: Iterable[Triple]) -> None:
        for t in triples:
            self.add(t)

    def discard(self, triple: Triple) -> None:
        if triple not in self._triples:
            return
        self._triples.remove(triple)
        bucket = self._by_predicate[triple.predicate]
        bucket.discard(triple)
        if not bucket:
            del self._by_predicate[triple.predicate]

    def with_predicate(self, predicate: Iri) -> Iterable[Triple]:
        return self._by_predicate.get(predicate, ())

    def predicates(self) -> Iterable[Iri]:
        return self._by_predicate.keys()

    def copy(self) -> "Graph":
        g = Graph()
        g._triples = set(self._triples)
        g._by_predicate = {p: set(ts) for p, ts in self._by_predicate.items()}
        return g

    def __or__(self, other: "Graph") -> "Graph":
        g = self.copy()
        g.update(other)
        return g

    def __iter__(self) -> Iterator[Triple]:
        return iter(self._triples)

    def __len__(self) -> int:
        return len(self._triples)

    def __contains__(self, triple) -> bool:
        return triple in self._triples

    def __eq__(self, other) -> bool:
        if isinstance(other, Graph):
            return self._triples == other._triples
        return NotImplemented

    def __le__(self, other: "Graph") -> bool:
        return self._triples <= other._triples

    __hash__ = None  # mutable

    def __repr__(self) -> str:
        return f"<Graph with {len(self)} triples>"


# -- patterns ---------------------------------------------------------------


@dataclass(frozen=True)
class Variable:
    name: str

    def __post_init__(self):
        if not self.name:
            raise ValueError("variable name must be non-empty")

    def __str__(self) -> str:
        return f"?{self.name}"


@dataclass(frozen=True)
class TriplePattern:
    """A triple pattern; nested in term position it is a quoted-triple pattern."""

    subject: "PatternTerm"
    predicate: Union[Iri, Variable]
    object: "PatternTerm"

    def variables(self) -> Set[str]:
        out: Set[str] = set()
        for part in (self.subject, self.predicate, self.object):
            if isinstance(part, Variable):
                out.add(part.name)
            elif isinstance(part, TriplePattern):
                out |= part.variables()
        return out

    def __iter__(self):
        return iter((self.subject, self.predicate, self.object))

    def __str__(self) -> str:
        def fmt(t):
            if isinstance(t, TriplePattern):
                return f"<< {fmt(t.subject)} {fmt(t.predicate)} {fmt(t.object)} >>"
            return str(t)

        return f"{fmt(self.subject)} {fmt(self.predicate)} {fmt(self.object)} ."


PatternTerm = Union[Term, Variable, TriplePattern]


class Binding(Mapping[str, Term]):
    """Immutable partial map from variable names to terms."""

    __slots__ = ("_map", "_hash")

    def __init__(self, mapping: Optional[Mapping[str, Term]] = None, **kw: Term):
        m = dict(mapping or {})
        m.update(kw)
        self._map: Dict[str, Term] = m
        self._hash: Optional[int] = None

    def __getitem__(self, name: str) -> Term:
        return self._map[name]

    def get(self, name: str, default=None):
        return self._map.get(name, default)

    def __contains__(self, name) -> bool:
        return name in self._map

    def __iter__(self):
        return iter(self._map)

    def __len__(self) -> int:
        return len(self._map)

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self._map.items()))
        return self._hash

    def __eq__(self, other) -> bool:
        if isinstance(other, Binding):
            return self._map == other._map
        return NotImplemented

    def __repr__(self) -> str:
        inner = ", ".join(f"?{k}={v}" for k, v in sorted(self._map.items()))
        return f"Binding({inner})"

    @classmethod
    def _wrap(cls, m: Dict[str, Term]) -> "Binding":
        # takes ownership of ``m``; callers pass a fresh dict
        b = cls.__new__(cls)
        b._map = m
        b._hash = None
        return b

    def extend(self, name: str, term: Term) -> "Binding":
        m = dict(self._map)
        m[name] = term
        return Binding._wrap(m)

    def merge(self, other: "Binding") -> Optional["Binding"]:
        """Union of two bindings, or None if they disagree on a shared variable."""
        small, big = (self, other) if len(self) <= len(other) else (other, self)
        for k, v in small._map.items():
            w = big._map.get(k)
            if w is not None and w != v:
                return None
        if len(small) == 0:
            return big
        m = dict(big._map)
        m.update(small._map)
        return Binding._wrap(m)

    def project(self, names: Iterable[str]) -> "Binding":
        return Binding({n: self._map[n] for n in names if n in self._map})


EMPTY_BINDING = Binding()


# -- matching ---------------------------------------------------------------


def unify(pattern: PatternTerm, term: Term, binding: Binding) -> Optional[Binding]:
    """Extend ``binding`` so that ``pattern`` equals ``term``; None on mismatch."""
    cls = pattern.__class__
    if cls is Variable:
        bound = binding._map.get(pattern.name)
        if bound is None:
            return binding.extend(pattern.name, term)
        return binding if bound == term else None
    if cls is TriplePattern:
        if not isinstance(term, QuotedTriple):
            return None
        return unify_triple(pattern, term, binding)
    return binding if pattern == term else None


def unify_triple(pattern: TriplePattern, triple, binding: Binding) -> Optional[Binding]:
    b = unify(pattern.predicate, triple.predicate, binding)
    if b is None:
        return None
    b = unify(pattern.subject, triple.subject, b)
    if b is None:
        return None
    return unify(pattern.object, triple.object, b)


def _candidates(pattern: TriplePattern, graph: Graph, seed: Binding) -> Iterable[Triple]:
    p = pattern.predicate
    if isinstance(p, Variable):
        p = seed.get(p.name, p)
    if isinstance(p, Iri):
        return graph.with_predicate(p)
    if isinstance(p, Variable):
        return graph
    return ()


def match(pattern: TriplePattern, graph: Graph, seed: Binding = EMPTY_BINDING) -> Set[Binding]:
    """Every extension of ``seed`` mapping ``pattern`` onto a triple of ``graph``."""
    out: Set[Binding] = set()
    for t in _candidates(pattern, graph, seed):
        b = unify_triple(pattern, t, seed)
        if b is not None:
            out.add(b)
    return out


def match_bgp(
    patterns: List[TriplePattern], graph: Graph, seed: Binding = EMPTY_BINDING
) -> Set[Binding]:
    """Natural join of the per-pattern matches of a basic graph pattern."""
    return evaluate_bgp(patterns, lambda pat, b: match(pat, graph, b), seed)


# below this many partial results, seeding each match beats a hash join
_SEEDED_JOIN_LIMIT = 8


def evaluate_bgp(
    patterns: List[TriplePattern],
    match_one: Callable[[TriplePattern, Binding], Set[Binding]],
    seed: Binding = EMPTY_BINDING,
) -> Set[Binding]:
    """Join patterns left to right using ``match_one(pattern, seed)`` for lookups."""
    if not patterns:
        raise ValueError("basic graph pattern must be non-empty")
    current = {seed}
    for pat in patterns:
        if len(current) <= _SEEDED_JOIN_LIMIT:
            nxt: Set[Binding] = set()
            for b in current:
                nxt |= match_one(pat, b)
        else:
            nxt = join(current, match_one(pat, seed))
        if not nxt:
            return set()
        current = nxt
    return current


def join(left: Iterable[Binding], right: Iterable[Binding]) -> Set[Binding]:
    """Natural join of two binding sets.

    Hash join on the shared variables when each side binds one fixed set
    of variables, which is the usual case; nested loops otherwise.
    """
    left, right = list(left), list(right)
    out: Set[Binding] = set()
    if not left or not right:
        return out
    lkeys, rkeys = left[0]._map.keys(), right[0]._map.keys()
    if all(b._map.keys() == lkeys for b in left) and all(b._map.keys() == rkeys for b in right):
        shared = sorted(lkeys & rkeys)
        buckets: Dict[tuple, List[Binding]] = {}
        for b in right:
            buckets.setdefault(tuple(b._map[v] for v in shared), []).append(b)
        for a in left:
            for b in buckets.get(tuple(a._map[v] for v in shared), ()):
                out.add(a.merge(b))
        return out
    for a in left:
        for b in right:
            m = a.merge(b)
            if m is not None:
                out.add(m)
    return out


def instantiate(pattern: PatternTerm, binding: Binding) -> Term:
    if isinstance(pattern, Variable):
        try:
            return binding[pattern.name]
        except KeyError:
            raise UnboundVariable(pattern.name) from None
    if isinstance(pattern, TriplePattern):
        return QuotedTriple(
            instantiate(pattern.subject, binding),
            instantiate(pattern.predicate, binding),
            instantiate(pattern.object, binding),
        )
    return pattern


def substitute(template: Iterable[TriplePattern], binding: Binding) -> Graph:
    """Replace template variables by their bound terms.

    Raises UnboundVariable if any template variable is missing, and
    ValueError if a substitution yields an ill-formed triple.
    """
    g = Graph()
    for pat in template:
        g.add(
            Triple(
                instantiate(pat.subject, binding),
                instantiate(pat.predicate, binding),
                instantiate(pat.object, binding),
            )
        )
    return g


def construct(template: Iterable[TriplePattern], bindings: Iterable[Binding]) -> Graph:
    """CONSTRUCT semantics: rows that cannot be instantiated are skipped with a warning."""
    template = list(template)
    g = Graph()
    for b in bindings:
        for pat in template:
            try:
                g.update(substitute([pat], b))
            except UnboundVariable as exc:
                log.warning("skipping template row %s: %s", pat, exc)
            except ValueError as exc:
                log.warning("skipping template row %s: %s", pat, exc)
    return g


# -- prefixes ---------------------------------------------------------------


DEFAULT_PREFIXES: Dict[str, str] = {
    "rdf": RDF,
    "rdfs": RDFS,
    "xsd": XSD,
}


class PrefixMap(dict):
    """Prefix table used to expand ``pfx:local`` names."""

    def __init__(self, mapping: Optional[Mapping[str, str]] = None):
        super().__init__(DEFAULT_PREFIXES)
        if mapping:
            self.update(mapping)

    def expand(self, pname: str) -> Iri:
        prefix, sep, local = pname.partition(":")
        if not sep:
            raise KeyError(pname)
        try:
            ns = self[prefix]
        except KeyError:
            raise KeyError(f"unknown prefix {prefix!r}:") from None
        return Iri(ns + local)

    def compact(self, iri: Iri) -> str:
        best: Tuple[int, str] = (0, "")
        for pfx, ns in self.items():
            if iri.value.startswith(ns) and len(ns) > best[0]:
                local = iri.value[len(ns):]
                if re.fullmatch(r"(?:[A-Za-z0-9_](?:[\w.\-]*[\w\-])?)?", local, re.ASCII):
                    best = (len(ns), f"{pfx}:{local}")
        return best[1] or str(iri)


def term_variables(term: PatternTerm) -> Set[str]:
    if isinstance(term, Variable):
        return {term.name}
    if isinstance(term, TriplePattern):
        return term.variables()
    return set()


def ground_terms(triple: Triple) -> Iterator[Term]:
    """All terms of a triple, descending into quoted triples."""
    for t in triple:
        yield t
        if isinstance(t, QuotedTriple):
            yield from ground_terms(Triple(t.subject, t.predicate, t.object))
