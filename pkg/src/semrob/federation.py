"""Deploy continuous queries on nodes and keep their input subscriptions current.

A query runs on the node that registers it.  Concrete stream selectors
subscribe straight away, even before any node advertises the topic.
Variable selectors are resolved against the node's stream registry: a
topic qualifies when the static patterns connected to the selector
variable have an entailed match once the variable is bound to that topic.
Every registry change re-runs resolution; windows of streams that stay
resolved are left untouched.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Set, Tuple

from .node import Message, RegistryDelta, SemanticNode, StreamRegistry, Subscription, is_system_topic
from .query import QueryAST, Select
from .rdf import Binding, Graph, Iri, Triple, TriplePattern
from .reasoner import Closure, entailed_match_bgp
from .window import MalformedTimestamp, MissingTimestamp, QueryRuntime, ResultDelta, StreamElement

log = logging.getLogger(__name__)


class FederationError(Exception):
    pass


class TopicAlreadyRegistered(FederationError):
    pass


class UnresolvableStream(FederationError):
    pass


def selector_component(ast: QueryAST, variable: str) -> List[TriplePattern]:
    """Static patterns reachable from ``variable`` through shared variables."""
    remaining = list(ast.static_patterns)
    reached = {variable}
    component: List[TriplePattern] = []
    grew = True
    while grew:
        grew = False
        for p in list(remaining):
            vs = p.variables()
            if vs & reached:
                component.append(p)
                remaining.remove(p)
                reached |= vs
                grew = True
    return [p for p in ast.static_patterns if p in component]


def resolve_selectors(
    ast: QueryAST,
    registry: StreamRegistry,
    closure: Closure,
    knowledge: Optional[Graph] = None,
    exclude: Tuple[Iri, ...] = (),
) -> Dict[int, Set[Iri]]:
    """Map each stream pattern index to the topics it should consume."""
    kg = knowledge if knowledge is not None else registry.metadata_graph()
    out: Dict[int, Set[Iri]] = {}
    for i, sp in enumerate(ast.stream_patterns):
        if isinstance(sp.selector, Iri):
            out[i] = {sp.selector}
            continue
        var = sp.selector.name
        component = selector_component(ast, var)
        hits: Set[Iri] = set()
        for topic in registry.topics():
            if is_system_topic(topic) or topic in exclude:
                continue
            if not component or entailed_match_bgp(component, kg, closure, Binding({var: topic})):
                hits.add(topic)
        out[i] = hits
    return out


@dataclass
class SubscriptionDelta:
    opened: Set[Iri] = field(default_factory=set)
    closed: Set[Iri] = field(default_factory=set)

    def __bool__(self) -> bool:
        return bool(self.opened or self.closed)


@dataclass(eq=False)
class DeployedQuery:
    ast: QueryAST
    host: SemanticNode
    runtime: QueryRuntime
    query_iri: Iri
    output_topic: Optional[Iri] = None
    name: str = ""
    resolved: Dict[int, Set[Iri]] = field(default_factory=dict)
    subscriptions: Dict[Iri, Subscription] = field(default_factory=dict)
    # (triggering topic, delta) for every non-empty delta, in emission order
    deltas: List[Tuple[Iri, ResultDelta]] = field(default_factory=list)
    outputs: List[Tuple[int, str]] = field(default_factory=list)
    listeners: List[Callable[["DeployedQuery", Iri, ResultDelta], None]] = field(default_factory=list)
    errors: int = 0

    @property
    def is_select(self) -> bool:
        return isinstance(self.ast.result, Select)

    def all_topics(self) -> Set[Iri]:
        out: Set[Iri] = set()
        for ts in self.resolved.values():
            out |= ts
        return out

    def _on_message(self, msg: Message) -> None:
        element = StreamElement(msg.topic, msg.graph, msg.seq)
        try:
            delta = self.runtime.ingest(element)
        except (MissingTimestamp, MalformedTimestamp) as exc:
            self.errors += 1
            log.warning("%s: dropped element from %s: %s", self.name, msg.topic, exc)
            return
        if not delta:
            return
        self.deltas.append((msg.topic, delta))
        if self.output_topic is not None and delta.graph is not None and len(delta.graph):
            sent = self.host.publish(self.output_topic, delta.graph)
            self.outputs.append((sent.sent_at, sent.payload))
        for listener in list(self.listeners):
            listener(self, msg.topic, delta)

    def refresh(self) -> SubscriptionDelta:
        """Re-resolve selectors against the host's registry and fix up subscriptions."""
        host = self.host
        self.runtime.set_knowledge(host.knowledge_graph(), host.closure)
        exclude = (self.output_topic,) if self.output_topic is not None else ()
        resolved = resolve_selectors(
            self.ast, host.registry, host.closure, host.knowledge_graph(), exclude
        )
        before = self.all_topics()
        for i, topics in resolved.items():
            if self.ast.stream_patterns[i].selector_variable is not None:
                self.runtime.set_topics(i, topics)
        self.resolved = resolved
        wanted = self.all_topics()
        delta = SubscriptionDelta()
        for topic in sorted(before - wanted, key=lambda t: t.value):
            sub = self.subscriptions.pop(topic, None)
            if sub is not None:
                sub.cancel()
            delta.closed.add(topic)
        for topic in sorted(wanted, key=lambda t: t.value):
            sub = self.subscriptions.get(topic)
            if sub is None or not sub.active:
                self.subscriptions[topic] = host.subscribe(topic, self._on_message)
                delta.opened.add(topic)
        return delta

    def on_discovery_event(self, adv_delta: RegistryDelta) -> SubscriptionDelta:
        # a concrete stream that departed loses its buffered elements
        for topic in adv_delta.removed:
            for i, sp in enumerate(self.ast.stream_patterns):
                if sp.selector == topic:
                    self.runtime.drop_window(i, topic)
        return self.refresh()

    def unresolved(self) -> List[Iri]:
        """Concrete selectors whose topic no node has advertised."""
        return [
            sp.selector
            for sp in self.ast.stream_patterns
            if isinstance(sp.selector, Iri) and sp.selector not in self.host.registry
        ]

    def undeploy(self) -> None:
        for sub in self.subscriptions.values():
            sub.cancel()
        self.subscriptions.clear()
        listener = getattr(self, "_listener", None)
        if listener in self.host.registry_listeners:
            self.host.registry_listeners.remove(listener)
        if self in self.host.deployed:
            self.host.deployed.remove(self)


def on_discovery_event(deployed: DeployedQuery, adv_delta: RegistryDelta) -> SubscriptionDelta:
    return deployed.on_discovery_event(adv_delta)


def register_query(node: SemanticNode, ast: QueryAST, name: str = "") -> DeployedQuery:
    """Deploy ``ast`` on ``node``: declare and advertise its output, open input subscriptions."""
    out = ast.register
    if out is not None:
        taken = out in node.registry or out in node.publishers or any(
            d.output_topic == out for d in node.deployed
        )
        if taken:
            raise TopicAlreadyRegistered(str(out))
    n = node.next_query_number()
    query_iri = Iri(f"{node.id.value}/query/{n}")
    runtime = QueryRuntime(ast, node.closure, node.knowledge_graph())
    deployed = DeployedQuery(ast, node, runtime, query_iri, out, name or f"q{n}")
    if out is not None:
        generated_by = node.broker.prefixes.expand(":generatedBy")
        node.declare_stream(out, Graph([Triple(out, generated_by, query_iri)]))
    deployed._listener = deployed.on_discovery_event
    node.registry_listeners.append(deployed._listener)
    node.deployed.append(deployed)
    deployed.refresh()
    return deployed


def check_resolvable(deployed: DeployedQuery) -> None:
    missing = deployed.unresolved()
    if missing:
        raise UnresolvableStream(", ".join(str(t) for t in missing))
