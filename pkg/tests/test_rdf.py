from __future__ import annotations

import itertools
import logging
import random

import pytest

import gen
from semrob.rdf import (
    EMPTY_BINDING,
    RDF_TYPE,
    XSD_DATETIME,
    Binding,
    BlankNode,
    Graph,
    Iri,
    Literal,
    PrefixMap,
    QuotedTriple,
    Triple,
    TriplePattern,
    UnboundVariable,
    Variable,
    construct,
    join,
    match,
    match_bgp,
    substitute,
)

NS = "http://semrob.example.org/ns#"
SSN = "http://www.w3.org/ns/ssn/"
SSR = "http://semrob.example.org/ssr#"


def ex(local: str) -> Iri:
    return Iri(NS + local)


RESULT_TIME = Iri(SSN + "resultTime")
HAS_RESULT = Iri(SSN + "hasResult")
OBSTACLE = Iri(SSR + "TrafficObstacle")
T5 = Literal("2021-06-01T12:00:05Z", XSD_DATETIME)


def v(name: str) -> Variable:
    return Variable(name)


# -- terms --

def test_iri_rejects_empty_and_whitespace():
    for bad in ["", "http://a b", "http://a\tb", "<x>"]:
        with pytest.raises(ValueError):
            Iri(bad)


def test_literal_defaults_to_string_datatype():
    assert Literal("x").datatype.value.endswith("#string")
    assert Literal("x") != Literal("x", XSD_DATETIME)


def test_quoted_triple_requires_iri_predicate():
    with pytest.raises(ValueError):
        QuotedTriple(ex("a"), Literal("p"), ex("b"))
    with pytest.raises(ValueError):
        Triple(Literal("s"), ex("p"), ex("o"))


def test_blank_node_label_checked():
    BlankNode("b0")
    with pytest.raises(ValueError):
        BlankNode("has space")


def test_structural_equality_and_hash():
    a = QuotedTriple(ex("b1"), ex("frontLeftOf"), ex("car"))
    b = QuotedTriple(ex("b1"), ex("frontLeftOf"), ex("car"))
    assert a == b and hash(a) == hash(b)
    assert {Triple(a, RESULT_TIME, T5)} == {Triple(b, RESULT_TIME, T5)}


def test_graph_has_set_semantics():
    t = Triple(ex("b1"), RDF_TYPE, OBSTACLE)
    g = Graph([t, t])
    g.add(t)
    assert len(g) == 1
    g.discard(t)
    assert len(g) == 0 and list(g.predicates()) == []


# -- match --

def test_match_single_triple():
    g = Graph([Triple(ex("b1"), RDF_TYPE, OBSTACLE)])
    assert match(TriplePattern(v("x"), RDF_TYPE, OBSTACLE), g) == {Binding(x=ex("b1"))}


def test_match_concrete_absent():
    g = Graph([Triple(ex("b1"), RDF_TYPE, OBSTACLE)])
    assert match(TriplePattern(ex("b2"), RDF_TYPE, OBSTACLE), g) == set()


def test_match_quoted_pattern():
    qt = QuotedTriple(ex("b7"), ex("frontLeftOf"), ex("car1"))
    g = Graph([Triple(qt, RESULT_TIME, T5), Triple(ex("b7"), RDF_TYPE, OBSTACLE)])
    pat = TriplePattern(TriplePattern(v("b"), ex("frontLeftOf"), v("v")), RESULT_TIME, v("t"))
    assert match(pat, g) == {Binding(b=ex("b7"), v=ex("car1"), t=T5)}


def test_match_quoted_pattern_against_exhaustive_scan():
    rng = random.Random(3)
    for _ in range(200):
        g = gen.graph(rng, 15)
        pat = TriplePattern(TriplePattern(v("a"), v("p"), v("b")), v("q"), v("c"))
        expected = set()
        for t in g:
            if isinstance(t.subject, QuotedTriple):
                q = t.subject
                expected.add(Binding(a=q.subject, p=q.predicate, b=q.object, q=t.predicate, c=t.object))
        assert match(pat, g) == expected


def test_match_respects_seed():
    g = Graph([Triple(ex("a"), ex("p"), ex("b")), Triple(ex("c"), ex("p"), ex("d"))])
    seed = Binding(x=ex("c"), unrelated=ex("z"))
    assert match(TriplePattern(v("x"), ex("p"), v("y")), g, seed) == {
        Binding(x=ex("c"), y=ex("d"), unrelated=ex("z"))
    }


def test_repeated_variable_must_agree():
    g = Graph([Triple(ex("a"), ex("p"), ex("a")), Triple(ex("a"), ex("p"), ex("b"))])
    assert match(TriplePattern(v("x"), ex("p"), v("x")), g) == {Binding(x=ex("a"))}


def test_all_variable_pattern_returns_one_binding_per_triple():
    rng = random.Random(5)
    for _ in range(100):
        g = gen.graph(rng, rng.randint(0, 20))
        assert len(match(TriplePattern(v("s"), v("p"), v("o")), g)) == len(g)


# -- matchBGP --

LISTING1_CAMERA = [
    TriplePattern(v("lbox"), RDF_TYPE, OBSTACLE),
    TriplePattern(v("obs"), HAS_RESULT, v("lbox")),
    TriplePattern(v("obs"), RESULT_TIME, v("time")),
]


def test_match_bgp_listing1_camera_patterns():
    g = Graph([
        Triple(ex("frame1"), RESULT_TIME, T5),
        Triple(ex("frame1"), HAS_RESULT, ex("b1")),
        Triple(ex("b1"), RDF_TYPE, OBSTACLE),
    ])
    assert match_bgp(LISTING1_CAMERA, g) == {Binding(lbox=ex("b1"), obs=ex("frame1"), time=T5)}


def test_match_bgp_disjoint_patterns_is_cartesian_product():
    g = Graph([Triple(ex(f"a{i}"), ex("p"), ex("x")) for i in range(3)]
              + [Triple(ex(f"b{i}"), ex("q"), ex("y")) for i in range(4)])
    out = match_bgp([TriplePattern(v("a"), ex("p"), ex("x")), TriplePattern(v("b"), ex("q"), ex("y"))], g)
    assert len(out) == 12


def test_match_bgp_contradiction_is_empty():
    g = Graph([Triple(ex("a"), ex("p"), ex("b")), Triple(ex("c"), ex("q"), ex("d"))])
    pats = [TriplePattern(v("x"), ex("p"), v("y")), TriplePattern(v("x"), ex("q"), v("y"))]
    assert match_bgp(pats, g) == set()


def test_match_bgp_requires_patterns():
    with pytest.raises(ValueError):
        match_bgp([], Graph())


def _nested_loop_bgp(patterns, graph):
    rows = [EMPTY_BINDING]
    for p in patterns:
        found = match(p, graph)
        rows = [m for a in rows for b in found for m in [a.merge(b)] if m is not None]
    return set(rows)


def test_match_bgp_equals_nested_loop_join():
    rng = random.Random(11)
    for _ in range(300):
        g = gen.kg(rng, rng.randint(0, 20))
        pats = [gen.pattern(rng) for _ in range(rng.randint(1, 5))]
        assert match_bgp(pats, g) == _nested_loop_bgp(pats, g)


def test_match_bgp_independent_of_pattern_order():
    rng = random.Random(12)
    for _ in range(100):
        g = gen.kg(rng, 15)
        pats = [gen.pattern(rng) for _ in range(3)]
        results = {frozenset(match_bgp(list(order), g)) for order in itertools.permutations(pats)}
        assert len(results) == 1


def test_substitute_of_match_is_subgraph():
    rng = random.Random(13)
    for _ in range(200):
        g = gen.kg(rng, 20)
        pats = [gen.pattern(rng) for _ in range(rng.randint(1, 3))]
        for b in match_bgp(pats, g):
            assert substitute(pats, b) <= g


# -- bindings --

def test_merge_law():
    a = Binding(x=ex("1"), y=ex("2"))
    assert a.merge(Binding(y=ex("2"), z=ex("3"))) == Binding(x=ex("1"), y=ex("2"), z=ex("3"))
    assert a.merge(Binding(y=ex("9"))) is None
    assert a.merge(EMPTY_BINDING) == a


def test_merge_law_random():
    rng = random.Random(14)
    pool = [ex(str(i)) for i in range(3)]
    for _ in range(500):
        a = Binding({n: rng.choice(pool) for n in rng.sample("wxyz", rng.randint(0, 4))})
        b = Binding({n: rng.choice(pool) for n in rng.sample("wxyz", rng.randint(0, 4))})
        m = a.merge(b)
        compatible = all(a[k] == b[k] for k in set(a) & set(b))
        assert (m is not None) == compatible
        if m is not None:
            assert dict(m) == {**a, **b} and m == b.merge(a)


def test_join_hash_and_nested_paths_agree():
    left = [Binding(x=ex("1"), y=ex("a")), Binding(x=ex("2"), y=ex("b"))]
    right = [Binding(y=ex("a"), z=ex("z1")), Binding(y=ex("b"), z=ex("z2")), Binding(y=ex("c"), z=ex("z3"))]
    mixed = right + [Binding(z=ex("z4"))]
    assert join(left, right) == {Binding(x=ex("1"), y=ex("a"), z=ex("z1")), Binding(x=ex("2"), y=ex("b"), z=ex("z2"))}
    assert join(left, mixed) == join(left, right) | {Binding(x=ex("1"), y=ex("a"), z=ex("z4")), Binding(x=ex("2"), y=ex("b"), z=ex("z4"))}


# -- substitute / construct --

LISTING1_TEMPLATE = [
    TriplePattern(TriplePattern(v("lbox"), ex("frontLeftOf"), v("veh")), RESULT_TIME, v("time")),
]


def test_substitute_listing1_template():
    out = substitute(LISTING1_TEMPLATE, Binding(lbox=ex("b7"), veh=ex("car1"), time=T5))
    assert out == Graph([Triple(QuotedTriple(ex("b7"), ex("frontLeftOf"), ex("car1")), RESULT_TIME, T5)])


def test_substitute_empty_template():
    assert len(substitute([], Binding(x=ex("a")))) == 0


def test_substitute_unbound_variable():
    with pytest.raises(UnboundVariable) as err:
        substitute(LISTING1_TEMPLATE, Binding(lbox=ex("b7"), veh=ex("car1")))
    assert err.value.name == "time"


def test_construct_skips_partial_rows_with_warning(caplog):
    template = LISTING1_TEMPLATE + [TriplePattern(v("lbox"), RDF_TYPE, OBSTACLE)]
    with caplog.at_level(logging.WARNING):
        g = construct(template, [Binding(lbox=ex("b1"))])
    assert g == Graph([Triple(ex("b1"), RDF_TYPE, OBSTACLE)])
    assert "time" in caplog.text


def test_literal_in_subject_position_skipped_by_construct():
    g = construct([TriplePattern(v("x"), ex("p"), ex("o"))], [Binding(x=Literal("lit")), Binding(x=ex("ok"))])
    assert g == Graph([Triple(ex("ok"), ex("p"), ex("o"))])


# -- prefixes --

def test_prefix_map_expand_and_compact():
    pm = PrefixMap({"": NS, "ssn": SSN})
    assert pm.expand(":leftCam") == ex("leftCam")
    assert pm.expand("ssn:resultTime") == RESULT_TIME
    assert pm.compact(RESULT_TIME) == "ssn:resultTime"
    assert pm.compact(Iri("http://other.org/x")) == "<http://other.org/x>"
    with pytest.raises(KeyError):
        pm.expand("nope:x")
