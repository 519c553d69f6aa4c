from __future__ import annotations

import random

import gen
from semrob.rdf import (
    RDF_TYPE,
    RDFS_SUBCLASSOF,
    RDFS_SUBPROPERTYOF,
    Binding,
    Graph,
    Iri,
    QuotedTriple,
    Triple,
    TriplePattern,
    Variable,
    match,
    match_bgp,
)
from semrob.reasoner import (
    Closure,
    Ontology,
    compute_closure,
    entailed_match,
    entailed_match_bgp,
    load_ontology,
    materialize,
)
from semrob.scenario import BUNDLED_DIR

EX = "http://ex.org/"


def ex(local):
    return Iri(EX + local)


MOUNTED = Ontology(frozenset({
    (ex("mountedOnFrontLeft"), ex("mountedOn")),
    (ex("mountedOnFrontRight"), ex("mountedOn")),
    (ex("mountedOnTop"), ex("mountedOn")),
}))


def test_sub_property_match():
    g = Graph([Triple(ex("leftCam"), ex("mountedOnFrontLeft"), ex("myCar")),
               Triple(ex("lidar"), ex("mountedOnTop"), ex("myCar")),
               Triple(ex("other"), ex("attachedTo"), ex("myCar"))])
    pat = TriplePattern(Variable("s"), ex("mountedOn"), ex("myCar"))
    closure = compute_closure(MOUNTED)
    assert entailed_match(pat, g, closure) == {Binding(s=ex("leftCam")), Binding(s=ex("lidar"))}
    assert match(pat, g) == set()


def test_closure_is_transitive_and_reflexive():
    onto = Ontology(frozenset({(ex("a"), ex("b")), (ex("b"), ex("c"))}),
                    frozenset({(ex("C1"), ex("C2")), (ex("C2"), ex("C3"))}))
    c = compute_closure(onto)
    assert c.super_properties(ex("a")) == {ex("a"), ex("b"), ex("c")}
    assert c.sub_properties(ex("c")) == {ex("a"), ex("b"), ex("c")}
    assert c.super_properties(ex("unrelated")) == {ex("unrelated")}
    assert c.super_classes(ex("C1")) == {ex("C1"), ex("C2"), ex("C3")}
    assert c.sub_classes(ex("C3")) == {ex("C1"), ex("C2"), ex("C3")}


def test_cycles_terminate():
    onto = Ontology(frozenset({(ex("a"), ex("b")), (ex("b"), ex("a"))}),
                    frozenset({(ex("C1"), ex("C2")), (ex("C2"), ex("C1"))}))
    c = compute_closure(onto)
    assert c.super_properties(ex("a")) == {ex("a"), ex("b")}
    g = Graph([Triple(ex("x"), ex("a"), ex("y")), Triple(ex("x"), RDF_TYPE, ex("C1"))])
    assert len(materialize(g, c)) == 4
    assert entailed_match(TriplePattern(ex("x"), RDF_TYPE, Variable("c")), g, c) == {
        Binding(c=ex("C1")), Binding(c=ex("C2"))}


def test_type_inference_through_sub_class():
    onto = Ontology(sub_class_of=frozenset({(ex("Car"), ex("Vehicle")), (ex("Vehicle"), ex("Obstacle"))}))
    g = Graph([Triple(ex("b1"), RDF_TYPE, ex("Car"))])
    pat = TriplePattern(Variable("x"), RDF_TYPE, ex("Obstacle"))
    assert entailed_match(pat, g, compute_closure(onto)) == {Binding(x=ex("b1"))}


def test_sub_property_of_rdf_type_feeds_class_inference():
    onto = Ontology(frozenset({(ex("kind"), RDF_TYPE)}), frozenset({(ex("Car"), ex("Vehicle"))}))
    g = Graph([Triple(ex("b1"), ex("kind"), ex("Car"))])
    c = compute_closure(onto)
    pat = TriplePattern(Variable("x"), RDF_TYPE, ex("Vehicle"))
    assert entailed_match(pat, g, c) == match(pat, materialize(g, c)) == {Binding(x=ex("b1"))}


def test_no_inference_inside_quoted_triples():
    q = QuotedTriple(ex("leftCam"), ex("mountedOnFrontLeft"), ex("myCar"))
    g = Graph([Triple(q, ex("since"), ex("t0"))])
    pat = TriplePattern(TriplePattern(Variable("s"), ex("mountedOn"), ex("myCar")), ex("since"), Variable("t"))
    assert entailed_match(pat, g, compute_closure(MOUNTED)) == set()


def test_quoted_subject_can_still_be_typed():
    q = QuotedTriple(ex("a"), ex("p"), ex("b"))
    onto = Ontology(sub_class_of=frozenset({(ex("C1"), ex("C2"))}))
    g = Graph([Triple(q, RDF_TYPE, ex("C1"))])
    pat = TriplePattern(Variable("s"), RDF_TYPE, ex("C2"))
    assert entailed_match(pat, g, compute_closure(onto)) == {Binding(s=q)}


def test_empty_ontology_is_plain_matching():
    rng = random.Random(30)
    for _ in range(100):
        g = gen.kg(rng, 20)
        pat = gen.pattern(rng)
        assert entailed_match(pat, g, Closure()) == match(pat, g)


def test_source_predicates():
    c = compute_closure(MOUNTED)
    assert c.source_predicates(ex("mountedOn")) == {
        ex("mountedOn"), ex("mountedOnFrontLeft"), ex("mountedOnFrontRight"), ex("mountedOnTop")}
    assert c.source_predicates(ex("mountedOnTop")) == {ex("mountedOnTop")}


def test_entailed_match_equals_match_over_materialization():
    rng = random.Random(31)
    for _ in range(300):
        g = gen.kg(rng, rng.randint(0, 30))
        c = compute_closure(gen.ontology(rng, rng.randint(0, 10)))
        pat = gen.pattern(rng)
        assert entailed_match(pat, g, c) == match(pat, materialize(g, c))


def test_entailed_bgp_equals_bgp_over_materialization():
    rng = random.Random(32)
    for _ in range(200):
        g = gen.kg(rng, rng.randint(0, 20))
        c = compute_closure(gen.ontology(rng, rng.randint(0, 8)))
        pats = [gen.pattern(rng) for _ in range(rng.randint(1, 3))]
        assert entailed_match_bgp(pats, g, c) == match_bgp(pats, materialize(g, c))


def test_ontology_from_graph_and_bundled_file():
    g = Graph([Triple(ex("a"), RDFS_SUBPROPERTYOF, ex("b")), Triple(ex("C"), RDFS_SUBCLASSOF, ex("D")),
               Triple(ex("x"), ex("p"), ex("y"))])
    assert Ontology.from_graph(g) == Ontology(frozenset({(ex("a"), ex("b"))}), frozenset({(ex("C"), ex("D"))}))
    onto = load_ontology(BUNDLED_DIR / "ontology.nt")
    ns = "http://semrob.example.org/ns#"
    assert (Iri(ns + "mountedOnTop"), Iri(ns + "mountedOn")) in onto.sub_property_of
