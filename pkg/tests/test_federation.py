from __future__ import annotations

import pytest

from semrob.federation import (
    TopicAlreadyRegistered,
    UnresolvableStream,
    check_resolvable,
    register_query,
    resolve_selectors,
    selector_component,
)
from semrob.node import Broker
from semrob.query import parse
from semrob.rdf import XSD_INTEGER, Graph, Iri, Literal, Triple
from semrob.reasoner import Ontology, compute_closure
from semrob.scenario import STANDARD_PREFIXES

NS = STANDARD_PREFIXES[""]
RT = Iri(STANDARD_PREFIXES["ssn"] + "resultTime")
HAS = Iri(STANDARD_PREFIXES["ssn"] + "hasResult")
GEN_BY = Iri(NS + "generatedBy")

MOUNTS = Ontology(frozenset({
    (Iri(NS + "mountedOnFrontLeft"), Iri(NS + "mountedOn")),
    (Iri(NS + "mountedOnTop"), Iri(NS + "mountedOn")),
}))

DISCOVER = parse("""SELECT ?s ?box WHERE {
  STREAM ?s [RANGE 1s ON ssn:resultTime] { ?o ssn:hasResult ?box . }
  ?s :generatedBy ?sensor . ?sensor :mountedOn :myCar .
}""", STANDARD_PREFIXES)


def ex(local):
    return Iri(NS + local)


def sensor_meta(topic, sensor, mount, vehicle="myCar"):
    return Graph([Triple(topic, GEN_BY, ex(sensor)), Triple(ex(sensor), ex(mount), ex(vehicle))])


def obs(t, box):
    return Graph([Triple(ex(f"o{t}"), RT, Literal(str(t), XSD_INTEGER)), Triple(ex(f"o{t}"), HAS, ex(box))])


def test_selector_component_follows_shared_variables():
    ast = parse("""SELECT ?s WHERE {
      STREAM ?s [RANGE 1s ON ssn:resultTime] { ?o ssn:hasResult ?b . }
      ?s :generatedBy ?x . ?x :mountedOn ?car . ?car a :Vehicle . :unrelated :p ?z .
    }""", STANDARD_PREFIXES)
    comp = selector_component(ast, "s")
    assert len(comp) == 3 and all("z" not in p.variables() for p in comp)


def test_resolution_uses_sub_property_inference():
    broker = Broker()
    car = broker.create_node(ex("car"), ontology=MOUNTS, streams={
        ex("left"): sensor_meta(ex("left"), "leftCam", "mountedOnFrontLeft"),
        ex("elsewhere"): sensor_meta(ex("elsewhere"), "cam2", "mountedOnFrontLeft", "otherCar"),
    })
    broker.run()
    resolved = resolve_selectors(DISCOVER, car.registry, compute_closure(MOUNTS))
    assert resolved == {0: {ex("left")}}
    assert resolve_selectors(DISCOVER, car.registry, compute_closure(Ontology())) == {0: set()}


def test_register_query_declares_output_with_provenance():
    broker = Broker(prefixes=STANDARD_PREFIXES)
    node = broker.create_node(ex("agent"))
    ast = parse("""REGISTER <:out> AS CONSTRUCT { ?o :saw ?b . }
      WHERE { STREAM {:cam} [RANGE 1s ON ssn:resultTime] { ?o ssn:hasResult ?b . } }""", STANDARD_PREFIXES)
    d = register_query(node, ast, "q")
    d2 = register_query(node, DISCOVER)
    assert d.query_iri == Iri(NS + "agent/query/0") and d2.query_iri == Iri(NS + "agent/query/1")
    assert node.publishers[ex("out")] == Graph([Triple(ex("out"), GEN_BY, d.query_iri)])
    with pytest.raises(TopicAlreadyRegistered):
        register_query(node, ast)
    # the concrete input is subscribed before anyone advertises it
    assert ex("cam") in d.subscriptions
    with pytest.raises(UnresolvableStream):
        check_resolvable(d)


def test_derived_stream_flows_to_a_second_query():
    broker = Broker(prefixes=STANDARD_PREFIXES)
    node = broker.create_node(ex("agent"), streams={ex("cam"): Graph()})
    first = register_query(node, parse("""REGISTER <:out> AS
      CONSTRUCT { ?o ssn:resultTime ?t . ?o :saw ?b . }
      WHERE { STREAM {:cam} [RANGE 1s ON ssn:resultTime] { ?o ssn:hasResult ?b . ?o ssn:resultTime ?t . } }""",
                                       STANDARD_PREFIXES))
    second = register_query(node, parse(
        "SELECT ?b WHERE { STREAM {:out} [RANGE 1s ON ssn:resultTime] { ?o :saw ?b . } }", STANDARD_PREFIXES))
    broker.run()
    node.publish(ex("cam"), obs(5, "box1"))
    broker.run()
    assert len(first.outputs) == 1
    assert len(second.deltas) == 1
    topic, delta = second.deltas[0]
    assert topic == ex("out") and [b["b"] for b in delta.bindings] == [ex("box1")]


def test_variable_selector_excludes_its_own_output():
    broker = Broker(prefixes=STANDARD_PREFIXES)
    node = broker.create_node(ex("agent"))
    ast = parse("""REGISTER <:out> AS CONSTRUCT { ?o :saw ?b . }
      WHERE { STREAM ?s [RANGE 1s ON ssn:resultTime] { ?o ssn:hasResult ?b . } }""", STANDARD_PREFIXES)
    d = register_query(node, ast)
    broker.run()
    assert ex("out") in node.registry
    assert d.all_topics() == set()


def test_join_and_leave_adjust_subscriptions_without_touching_other_windows():
    broker = Broker()
    car = broker.create_node(ex("car"), ontology=MOUNTS, streams={
        ex("left"): sensor_meta(ex("left"), "leftCam", "mountedOnFrontLeft")})
    d = register_query(car, DISCOVER)
    broker.run()
    car.publish(ex("left"), obs(100, "b1"))
    broker.run()
    before = d.runtime.window_elements(0, ex("left"))
    assert before

    lidar = broker.create_node(ex("lidarAgent"), streams={
        ex("lidar"): sensor_meta(ex("lidar"), "lidarSensor", "mountedOnTop")})
    broker.run()
    assert d.all_topics() == {ex("left"), ex("lidar")}
    assert d.runtime.window_elements(0, ex("left")) == before

    lidar.publish(ex("lidar"), obs(150, "b2"))
    broker.run()
    assert {b["s"] for _, delta in d.deltas for b in delta.bindings} == {ex("left"), ex("lidar")}

    lidar.leave()
    broker.run()
    assert d.all_topics() == {ex("left")}
    assert ex("lidar") not in d.subscriptions
    assert d.runtime.window_elements(0, ex("lidar")) == []
    assert d.runtime.window_elements(0, ex("left")) == before


def test_undeploy_closes_subscriptions():
    broker = Broker()
    car = broker.create_node(ex("car"), ontology=MOUNTS, streams={
        ex("left"): sensor_meta(ex("left"), "leftCam", "mountedOnFrontLeft")})
    d = register_query(car, DISCOVER)
    broker.run()
    d.undeploy()
    assert not d.subscriptions and d not in car.deployed
    assert broker.subscribers(ex("left")) == []
