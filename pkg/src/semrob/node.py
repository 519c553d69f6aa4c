"""Semantic nodes on a simulated publish/subscribe domain.

The broker is a discrete-event simulation under virtual time.  Every
delivery is scheduled on a priority queue keyed by ``(time, seq)``, so a
run is a pure function of its inputs.  Payloads always travel encoded in
the RDF-star line format; handlers receive a freshly decoded graph.

Discovery follows the DDS pattern: each node implicitly subscribes to the
reserved ``sys:discovery`` topic, advertises its streams on join and on
change, and answers a newcomer's first advertisement with its own.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Set, Tuple

from .codec import decode, encode
from .rdf import BlankNode, Graph, Iri, PrefixMap, Triple
from .reasoner import Closure, Ontology, compute_closure

log = logging.getLogger(__name__)

SYS = "urn:semrob:sys:"
DISCOVERY = Iri(SYS + "discovery")
SYS_NODE = Iri(SYS + "node")
SYS_EVENT = Iri(SYS + "event")
SYS_JOIN = Iri(SYS + "Join")
SYS_LEAVE = Iri(SYS + "Leave")
SYS_REPLY_TO = Iri(SYS + "inReplyTo")
SYS_STREAM = Iri(SYS + "stream")
SYS_METADATA_OF = Iri(SYS + "metadataOf")
SYS_OWNED_BY = Iri(SYS + "ownedBy")
SYS_REQUEST = Iri(SYS + "request")
REGISTRY_DUMP = Iri(SYS + "RegistryDump")

DEFAULT_BASE = "http://semrob.example.org/ns#"


class NodeError(Exception):
    pass


class DuplicateNodeId(NodeError):
    pass


class UndeclaredTopic(NodeError):
    pass


class NodeUnavailable(NodeError):
    pass


class ServiceTimeout(NodeError):
    pass


def service_topic(node_id: Iri) -> Iri:
    return Iri(f"{SYS}service/{node_id.value}")


def is_system_topic(topic: Iri) -> bool:
    return topic.value.startswith(SYS)


# -- advertisements ------------------------------------------------------------


@dataclass(frozen=True)
class Advertisement:
    node_id: Iri
    event: str  # "join" | "leave"
    streams: Tuple[Tuple[Iri, Graph], ...] = ()
    reply_to: Optional[Iri] = None

    def to_graph(self) -> Graph:
        adv = BlankNode("adv")
        g = Graph(
            [
                Triple(adv, SYS_NODE, self.node_id),
                Triple(adv, SYS_EVENT, SYS_JOIN if self.event == "join" else SYS_LEAVE),
            ]
        )
        if self.reply_to is not None:
            g.add(Triple(adv, SYS_REPLY_TO, self.reply_to))
        for topic, meta in self.streams:
            g.add(Triple(adv, SYS_STREAM, topic))
            for t in meta:
                g.add(Triple(t.quoted(), SYS_METADATA_OF, topic))
        return g

    @classmethod
    def from_graph(cls, g: Graph) -> "Advertisement":
        node = next(iter(g.with_predicate(SYS_NODE))).object
        event_term = next(iter(g.with_predicate(SYS_EVENT))).object
        reply = [t.object for t in g.with_predicate(SYS_REPLY_TO)]
        topics = sorted((t.object for t in g.with_predicate(SYS_STREAM)), key=lambda x: x.value)
        meta: Dict[Iri, Graph] = {t: Graph() for t in topics}
        for t in g.with_predicate(SYS_METADATA_OF):
            q = t.subject
            meta.setdefault(t.object, Graph()).add(Triple(q.subject, q.predicate, q.object))
        return cls(
            node,
            "join" if event_term == SYS_JOIN else "leave",
            tuple((t, meta[t]) for t in topics),
            reply[0] if reply else None,
        )


@dataclass(frozen=True)
class RegistryEntry:
    owner: Iri
    metadata: Graph


@dataclass(frozen=True)
class RegistryDelta:
    added: frozenset = frozenset()
    removed: frozenset = frozenset()
    changed: frozenset = frozenset()

    def __bool__(self) -> bool:
        return bool(self.added or self.removed or self.changed)


class StreamRegistry:
    """Topic -> (owner, metadata), a function of the advertisements applied so far."""

    def __init__(self):
        self._entries: Dict[Iri, RegistryEntry] = {}

    def apply(self, adv: Advertisement) -> RegistryDelta:
        before = dict(self._entries)
        for topic in [t for t, e in self._entries.items() if e.owner == adv.node_id]:
            del self._entries[topic]
        if adv.event == "join":
            for topic, meta in adv.streams:
                self._entries[topic] = RegistryEntry(adv.node_id, meta)
        added = frozenset(self._entries.keys() - before.keys())
        removed = frozenset(before.keys() - self._entries.keys())
        changed = frozenset(
            t for t in self._entries.keys() & before.keys() if self._entries[t] != before[t]
        )
        return RegistryDelta(added, removed, changed)

    def topics(self) -> List[Iri]:
        return sorted(self._entries, key=lambda t: t.value)

    def owners(self) -> Set[Iri]:
        return {e.owner for e in self._entries.values()}

    def get(self, topic: Iri) -> Optional[RegistryEntry]:
        return self._entries.get(topic)

    def __contains__(self, topic) -> bool:
        return topic in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def metadata_graph(self) -> Graph:
        g = Graph()
        for e in self._entries.values():
            g.update(e.metadata)
        return g

    def snapshot(self) -> Dict[Iri, Tuple[Iri, str]]:
        return {t: (e.owner, encode(e.metadata)) for t, e in self._entries.items()}

    def to_graph(self) -> Graph:
        g = Graph()
        for topic, e in self._entries.items():
            g.add(Triple(topic, SYS_OWNED_BY, e.owner))
            for t in e.metadata:
                g.add(Triple(t.quoted(), SYS_METADATA_OF, topic))
        return g

    @classmethod
    def from_graph(cls, g: Graph) -> "StreamRegistry":
        reg = cls()
        for t in g.with_predicate(SYS_OWNED_BY):
            reg._entries[t.subject] = RegistryEntry(t.object, Graph())
        for t in g.with_predicate(SYS_METADATA_OF):
            q = t.subject
            reg._entries[t.object].metadata.add(Triple(q.subject, q.predicate, q.object))
        return reg

    def __eq__(self, other) -> bool:
        if isinstance(other, StreamRegistry):
            return self._entries == other._entries
        return NotImplemented


# -- messages and subscriptions ----------------------------------------------------


@dataclass(frozen=True)
class Message:
    topic: Iri
    payload: str
    publisher: Iri
    seq: int
    sent_at: int

    @property
    def graph(self) -> Graph:
        return decode(self.payload)


@dataclass(eq=False)
class Subscription:
    node: "SemanticNode"
    topic: Iri
    handler: Callable[[Message], None]
    id: int
    active: bool = True

    def cancel(self) -> None:
        self.node.broker.unsubscribe(self)


@dataclass
class BrokerMetrics:
    published: int = 0
    delivered: int = 0
    unrouted: int = 0  # published with no subscribers
    cancelled: int = 0  # subscriber gone before delivery
    handler_errors: int = 0
    service_calls: int = 0

    def as_dict(self) -> Dict[str, int]:
        return dict(self.__dict__)


class LatencyTable:
    """Fixed per-link latency in virtual milliseconds."""

    def __init__(self, default: int = 0, links: Optional[Dict[Tuple[Iri, Iri], int]] = None):
        self.default = default
        self.links = dict(links or {})

    def __call__(self, src: Iri, dst: Iri) -> int:
        if src == dst:
            return 0
        return self.links.get((src, dst), self.default)


class Broker:
    """One simulated domain: topic table, delivery queue and virtual clock.

    ``mode="threaded"`` runs every handler on its node's own worker thread;
    the scheduler still waits for each handler, so the observable schedule
    is the reference one.
    """

    def __init__(
        self,
        domain_id: int = 0,
        latency: Optional[LatencyTable] = None,
        seed: int = 0,
        jitter: int = 0,
        mode: str = "ref",
        prefixes: Optional[dict] = None,
    ):
        if mode not in ("ref", "threaded"):
            raise ValueError(f"unknown mode {mode!r}")
        self.domain_id = domain_id
        self.latency = latency or LatencyTable()
        self.jitter = jitter
        self.rng = random.Random(seed)
        self.mode = mode
        self.prefixes = PrefixMap({"": DEFAULT_BASE, **(prefixes or {})})
        self.clock = 0
        self.nodes: Dict[Iri, SemanticNode] = {}
        self.metrics = BrokerMetrics()
        self.trace: List[Tuple[int, str, int, str]] = []
        self._queue: list = []
        self._order = itertools.count()
        self._sub_ids = itertools.count()
        self._subs: Dict[Iri, List[Subscription]] = {}
        self._topic_seq: Dict[Iri, int] = {}
        self._fifo: Dict[Tuple[Iri, int], int] = {}
        self._workers: Dict[Iri, ThreadPoolExecutor] = {}

    # -- scheduling --

    def schedule(self, at: int, fn: Callable, *args, node: Optional[Iri] = None) -> None:
        if at < self.clock:
            raise ValueError("cannot schedule in the past")
        heapq.heappush(self._queue, (at, next(self._order), fn, args, node))

    def pending(self) -> int:
        return len(self._queue)

    def step(self) -> bool:
        if not self._queue:
            return False
        at, _, fn, args, node = heapq.heappop(self._queue)
        self.clock = at
        self._execute(node, fn, *args)
        return True

    def run(self, until: Optional[int] = None) -> None:
        """Process events in (time, seq) order, up to and including ``until``."""
        while self._queue and (until is None or self._queue[0][0] <= until):
            self.step()
        if until is not None and until > self.clock:
            self.clock = until

    def _execute(self, node: Optional[Iri], fn, *args) -> None:
        if self.mode == "threaded" and node is not None:
            worker = self._workers.get(node)
            if worker is None:
                worker = self._workers[node] = ThreadPoolExecutor(
                    max_workers=1, thread_name_prefix=f"node-{len(self._workers)}"
                )
            worker.submit(fn, *args).result()
        else:
            fn(*args)

    def close(self) -> None:
        for w in self._workers.values():
            w.shutdown(wait=True)
        self._workers.clear()

    # -- nodes --

    def create_node(
        self,
        node_id: Iri,
        background_kg: Optional[Graph] = None,
        ontology: Optional[Ontology] = None,
        streams: Optional[Dict[Iri, Graph]] = None,
    ) -> "SemanticNode":
        if node_id in self.nodes:
            raise DuplicateNodeId(str(node_id))
        node = SemanticNode(self, node_id, background_kg, ontology)
        self.nodes[node_id] = node
        node._join(streams or {})
        return node

    def _remove_node(self, node: "SemanticNode") -> None:
        self.nodes.pop(node.id, None)

    # -- pub/sub --

    def subscribe(self, node: "SemanticNode", topic: Iri, handler) -> Subscription:
        sub = Subscription(node, topic, handler, next(self._sub_ids))
        self._subs.setdefault(topic, []).append(sub)
        node.subscriptions.append(sub)
        return sub

    def unsubscribe(self, sub: Subscription) -> None:
        if not sub.active:
            return
        sub.active = False
        subs = self._subs.get(sub.topic, [])
        if sub in subs:
            subs.remove(sub)
        if sub in sub.node.subscriptions:
            sub.node.subscriptions.remove(sub)

    def subscribers(self, topic: Iri) -> List[Subscription]:
        return list(self._subs.get(topic, ()))

    def publish(self, publisher: Iri, topic: Iri, graph: Graph) -> Message:
        seq = self._topic_seq.get(topic, 0)
        self._topic_seq[topic] = seq + 1
        msg = Message(topic, encode(graph), publisher, seq, self.clock)
        self.metrics.published += 1
        subs = self._subs.get(topic, ())
        if not subs:
            self.metrics.unrouted += 1
        for sub in subs:
            delay = self.latency(publisher, sub.node.id)
            if self.jitter:
                delay += self.rng.randint(0, self.jitter)
            at = max(self.clock + delay, self._fifo.get((topic, sub.id), 0))
            self._fifo[(topic, sub.id)] = at
            self.schedule(at, self._deliver, sub, msg, node=sub.node.id)
        return msg

    def _deliver(self, sub: Subscription, msg: Message) -> None:
        if not sub.active or not sub.node.alive:
            self.metrics.cancelled += 1
            return
        self.metrics.delivered += 1
        self.trace.append((self.clock, msg.topic.value, msg.seq, sub.node.id.value))
        try:
            sub.handler(msg)
        except Exception:
            self.metrics.handler_errors += 1
            log.exception("handler for %s on %s failed", msg.topic, sub.node.id)

    # -- services --

    def call_service(
        self, caller: Iri, target: Iri, request: Graph, timeout: Optional[int] = None
    ) -> Graph:
        node = self.nodes.get(target)
        if node is None or not node.alive:
            raise NodeUnavailable(str(target))
        rtt = self.latency(caller, target) + self.latency(target, caller)
        if timeout is not None and rtt > timeout:
            raise ServiceTimeout(f"{target}: round trip {rtt} ms exceeds {timeout} ms")
        self.metrics.service_calls += 1
        # request and response cross the wire in encoded form
        wire_request = decode(encode(request))
        response = node._serve(wire_request)
        return decode(encode(response))


class SemanticNode:
    """A processing unit holding a background graph, publishers and subscriptions."""

    def __init__(
        self,
        broker: Broker,
        node_id: Iri,
        background_kg: Optional[Graph] = None,
        ontology: Optional[Ontology] = None,
    ):
        self.broker = broker
        self.id = node_id
        self.base_kg = background_kg.copy() if background_kg is not None else Graph()
        self.ontology = ontology or Ontology()
        self.closure: Closure = compute_closure(self.ontology)
        self.publishers: Dict[Iri, Graph] = {}
        self.subscriptions: List[Subscription] = []
        self.registry = StreamRegistry()
        self.deployed: list = []
        self.alive = False
        self.registry_listeners: List[Callable[[RegistryDelta], None]] = []
        self._known_nodes: Set[Iri] = set()
        self._query_numbers = itertools.count()
        self._kg: Optional[Graph] = None
        self._services: Dict[Iri, Callable[[Graph], Graph]] = {REGISTRY_DUMP: self._registry_dump}

    def __repr__(self) -> str:
        return f"<SemanticNode {self.id.value}>"

    # -- membership --

    def _join(self, streams: Dict[Iri, Graph]) -> None:
        self.alive = True
        self.publishers.update(streams)
        self.broker.subscribe(self, DISCOVERY, self._on_discovery)
        self.broker.subscribe(self, service_topic(self.id), lambda msg: None)
        self.advertise()

    def leave(self) -> None:
        if not self.alive:
            return
        self.broker.publish(self.id, DISCOVERY, Advertisement(self.id, "leave").to_graph())
        for sub in list(self.subscriptions):
            sub.cancel()
        self.alive = False
        self.broker._remove_node(self)

    def advertise(self, reply_to: Optional[Iri] = None) -> None:
        streams = tuple(
            (t, self.publishers[t]) for t in sorted(self.publishers, key=lambda x: x.value)
        )
        adv = Advertisement(self.id, "join", streams, reply_to)
        self.broker.publish(self.id, DISCOVERY, adv.to_graph())

    def _on_discovery(self, msg: Message) -> None:
        self.handle_advertisement(Advertisement.from_graph(msg.graph))

    def handle_advertisement(self, adv: Advertisement) -> RegistryDelta:
        newcomer = (
            adv.event == "join"
            and adv.node_id != self.id
            and adv.reply_to is None
            and adv.node_id not in self._known_nodes
        )
        if adv.event == "join":
            self._known_nodes.add(adv.node_id)
        else:
            self._known_nodes.discard(adv.node_id)
        delta = self.registry.apply(adv)
        if delta:
            self._kg = None
            for sub in list(self.subscriptions):
                if sub.topic in delta.removed:
                    sub.cancel()
            for listener in list(self.registry_listeners):
                listener(delta)
        if newcomer:
            self.advertise(reply_to=adv.node_id)
        return delta

    # -- streams --

    def declare_stream(self, topic: Iri, metadata: Optional[Graph] = None, advertise: bool = True) -> None:
        if is_system_topic(topic):
            raise ValueError(f"{topic} is a reserved topic")
        self.publishers[topic] = metadata.copy() if metadata is not None else Graph()
        if advertise and self.alive:
            self.advertise()

    def publish(self, topic: Iri, graph: Graph) -> Message:
        if topic not in self.publishers:
            raise UndeclaredTopic(f"{self.id} has not declared {topic}")
        if not self.alive:
            raise NodeUnavailable(str(self.id))
        return self.broker.publish(self.id, topic, graph)

    def subscribe(self, topic: Iri, handler: Callable[[Message], None]) -> Subscription:
        return self.broker.subscribe(self, topic, handler)

    def next_query_number(self) -> int:
        return next(self._query_numbers)

    # -- knowledge --

    def knowledge_graph(self) -> Graph:
        """Background graph merged with the metadata of every registered stream."""
        if self._kg is None:
            self._kg = self.base_kg | self.registry.metadata_graph()
        return self._kg

    # -- services --

    def provide_service(self, request_type: Iri, handler: Callable[[Graph], Graph]) -> None:
        self._services[request_type] = handler

    def call_service(self, target: Iri, request: Graph, timeout: Optional[int] = None) -> Graph:
        return self.broker.call_service(self.id, target, request, timeout)

    def request_registry(self, target: Iri, timeout: Optional[int] = None) -> StreamRegistry:
        req = Graph([Triple(BlankNode("req"), SYS_REQUEST, REGISTRY_DUMP)])
        return StreamRegistry.from_graph(self.call_service(target, req, timeout))

    def _serve(self, request: Graph) -> Graph:
        for t in request.with_predicate(SYS_REQUEST):
            handler = self._services.get(t.object)
            if handler is not None:
                return handler(request)
        raise NodeError(f"{self.id} has no service for this request")

    def _registry_dump(self, request: Graph) -> Graph:
        return self.registry.to_graph()


def create_node(broker: Broker, node_id: Iri, background_kg=None, ontology=None, streams=None) -> SemanticNode:
    return broker.create_node(node_id, background_kg, ontology, streams)
