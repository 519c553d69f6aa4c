"""Scenario files: load, validate and run a deterministic multi-node replay.

A scenario is a YAML document naming the nodes of one simulated domain,
their background knowledge, the streams they publish (each backed by a
replay file of ``@ <emitTime>`` blocks) and the queries they host.  Paths
are relative to the scenario file.  See ``docs/scenario-format.md``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import yaml

from .codec import ParseError, decode, decode_blocks, encode, encode_blocks, encode_term
from .federation import DeployedQuery, register_query
from .node import Broker, LatencyTable, SemanticNode
from .query import Construct, QueryAST, QueryError, Select, parse, parse_iri, parse_triples
from .rdf import Binding, Graph, Iri, PrefixMap
from .reasoner import Ontology
from .window import ResultDelta

STANDARD_PREFIXES = {
    "": "http://semrob.example.org/ns#",
    "rdf": "http://www.w3.org/1999/02/22-rdf-syntax-ns#",
    "rdfs": "http://www.w3.org/2000/01/rdf-schema#",
    "xsd": "http://www.w3.org/2001/XMLSchema#",
    "ssn": "http://www.w3.org/ns/ssn/",
    "sosa": "http://www.w3.org/ns/sosa/",
    "ssr": "http://semrob.example.org/ssr#",
}

BUNDLED_DIR = Path(__file__).parent / "scenarios"
BUNDLED = ("fuse2cams", "fuse3sensors", "discovery", "multi-agent")


def bundled_path(name: str) -> Path:
    return BUNDLED_DIR / name / "scenario.yaml"


@dataclass
class Problem:
    kind: str  # "scenario" or "query"
    message: str

    def __str__(self) -> str:
        return f"{self.kind} error: {self.message}"


class ScenarioError(Exception):
    """Raised when a scenario cannot be loaded; carries every problem found."""

    def __init__(self, problems: List[Problem]):
        super().__init__("; ".join(str(p) for p in problems))
        self.problems = problems

    @property
    def exit_code(self) -> int:
        return 1 if any(p.kind == "scenario" for p in self.problems) else 2


@dataclass
class StreamSpec:
    topic: Iri
    metadata: Graph
    replay: List[Tuple[int, str]] = field(default_factory=list)


@dataclass
class QuerySpec:
    name: str
    text: str
    ast: Optional[QueryAST] = None
    tee: bool = True


@dataclass
class NodeSpec:
    id: Iri
    kg: Graph
    join: int = 0
    leave: Optional[int] = None
    streams: List[StreamSpec] = field(default_factory=list)
    queries: List[QuerySpec] = field(default_factory=list)


@dataclass
class Scenario:
    name: str
    prefixes: PrefixMap
    ontology: Ontology
    nodes: List[NodeSpec]
    duration: Optional[int] = None
    seed: int = 0
    jitter: int = 0
    latency: LatencyTable = field(default_factory=LatencyTable)

    def queries(self) -> List[Tuple[NodeSpec, QuerySpec]]:
        return [(n, q) for n in self.nodes for q in n.queries]


class _Loader:
    def __init__(self, path: Path):
        self.path = path
        self.base = path.parent
        self.problems: List[Problem] = []

    def fail(self, message: str, kind: str = "scenario") -> None:
        self.problems.append(Problem(kind, message))

    def read(self, rel: str, what: str) -> Optional[str]:
        p = self.base / rel
        try:
            return p.read_text(encoding="utf-8")
        except OSError as exc:
            self.fail(f"{what}: cannot read {rel}: {exc.strerror or exc}")
            return None

    def iri(self, text, where: str) -> Optional[Iri]:
        if not isinstance(text, str):
            self.fail(f"{where}: expected an IRI, got {text!r}")
            return None
        try:
            return parse_iri(text.strip(), self.prefixes)
        except QueryError as exc:
            self.fail(f"{where}: {exc}")
            return None

    def graph(self, spec: dict, file_key: str, inline_key: str, where: str) -> Graph:
        g = Graph()
        if spec.get(file_key):
            text = self.read(spec[file_key], where)
            if text is not None:
                try:
                    g |= decode(text)
                except ParseError as exc:
                    self.fail(f"{where}: {spec[file_key]}: {exc}")
        if spec.get(inline_key):
            try:
                g |= parse_triples(spec[inline_key], self.prefixes)
            except QueryError as exc:
                self.fail(f"{where}: {exc}")
        return g

    def replay(self, rel: str, where: str) -> List[Tuple[int, str]]:
        text = self.read(rel, where)
        if text is None:
            return []
        try:
            blocks = decode_blocks(text)
        except ParseError as exc:
            self.fail(f"{where}: {rel}: {exc}")
            return []
        last = None
        for i, (t, payload) in enumerate(blocks):
            if last is not None and t < last:
                self.fail(f"{where}: {rel}: emit time {t} of block {i + 1} is before {last}")
            last = t
            try:
                decode(payload)
            except ParseError as exc:
                self.fail(f"{where}: {rel}: block {i + 1} (@ {t}): {exc}")
        return blocks

    def entries(self, value, where: str) -> List[dict]:
        """A list of mappings; anything else is reported and skipped."""
        if value is None:
            return []
        if not isinstance(value, list):
            self.fail(f"{where}: expected a list")
            return []
        out = []
        for k, item in enumerate(value):
            if isinstance(item, dict):
                out.append(item)
            else:
                self.fail(f"{where}[{k}]: expected a mapping, got {item!r}")
        return out

    def integer(self, value, where: str, default=None) -> Optional[int]:
        if value is None:
            return default
        if isinstance(value, bool) or not isinstance(value, int) or value < 0:
            self.fail(f"{where}: expected a non-negative integer, got {value!r}")
            return default
        return value

    def load(self) -> Optional[Scenario]:
        try:
            doc = yaml.safe_load(self.path.read_text(encoding="utf-8"))
        except OSError as exc:
            self.fail(f"cannot read {self.path}: {exc.strerror or exc}")
            return None
        except yaml.YAMLError as exc:
            self.fail(f"{self.path}: invalid YAML: {exc}")
            return None
        if doc is None:
            doc = {}
        if not isinstance(doc, dict):
            self.fail(f"{self.path}: top level must be a mapping")
            return None

        self.prefixes = PrefixMap({**STANDARD_PREFIXES, **(doc.get("prefixes") or {})})
        onto_graph = self.graph(doc, "ontology", "ontology_triples", "ontology")
        ontology = Ontology.from_graph(onto_graph)

        run = doc.get("run") or {}
        latency = run.get("latency") or {}
        if not isinstance(run, dict) or not isinstance(latency, dict):
            self.fail("run: expected a mapping with duration, seed, jitter and latency")
            run, latency = {}, {}
        links = {}
        for k, link in enumerate(self.entries(latency.get("links"), "run.latency.links")):
            where = f"run.latency.links[{k}]"
            src, dst = self.iri(link.get("from"), where), self.iri(link.get("to"), where)
            ms = self.integer(link.get("ms"), where, 0)
            if src is not None and dst is not None:
                links[(src, dst)] = ms
                if link.get("symmetric", True):
                    links.setdefault((dst, src), ms)
        scenario = Scenario(
            name=str(doc.get("name") or self.path.parent.name),
            prefixes=self.prefixes,
            ontology=ontology,
            nodes=[],
            duration=self.integer(run.get("duration"), "run.duration"),
            seed=self.integer(run.get("seed"), "run.seed", 0),
            jitter=self.integer(run.get("jitter"), "run.jitter", 0),
            latency=LatencyTable(self.integer(latency.get("default"), "run.latency.default", 0), links),
        )

        names = set()
        ids = set()
        for k, nd in enumerate(self.entries(doc.get("nodes"), "nodes")):
            where = f"nodes[{k}]"
            node_id = self.iri(nd.get("id"), where + ".id")
            if node_id is None:
                continue
            if node_id in ids:
                self.fail(f"{where}: duplicate node id {node_id}")
            ids.add(node_id)
            where = f"node {nd.get('id')}"
            node = NodeSpec(
                id=node_id,
                kg=self.graph(nd, "kg", "kg_triples", where + " kg"),
                join=self.integer(nd.get("join"), where + ".join", 0),
                leave=self.integer(nd.get("leave"), where + ".leave"),
            )
            if node.leave is not None and node.leave < node.join:
                self.fail(f"{where}: leave time {node.leave} precedes join time {node.join}")
            for sd in self.entries(nd.get("streams"), where + " streams"):
                swhere = f"{where} stream {sd.get('topic')}"
                topic = self.iri(sd.get("topic"), swhere)
                if topic is None:
                    continue
                meta = self.graph(sd, "metadata_file", "metadata", swhere + " metadata")
                blocks = self.replay(sd["replay"], swhere) if sd.get("replay") else []
                node.streams.append(StreamSpec(topic, meta, blocks))
            for qd in self.entries(nd.get("queries"), where + " queries"):
                name = str(qd.get("name") or f"q{len(names)}")
                qwhere = f"{where} query {name}"
                if name in names:
                    self.fail(f"{qwhere}: duplicate query name")
                names.add(name)
                if qd.get("file"):
                    text = self.read(qd["file"], qwhere)
                else:
                    text = qd.get("text")
                    if text is None:
                        self.fail(f"{qwhere}: needs 'file' or 'text'")
                if text is None:
                    continue
                q = QuerySpec(name, text, tee=bool(qd.get("tee", True)))
                try:
                    q.ast = parse(text, self.prefixes)
                except QueryError as exc:
                    self.fail(f"{qwhere}: {type(exc).__name__}: {exc}", kind="query")
                node.queries.append(q)
            scenario.nodes.append(node)

        outputs: Dict[Iri, str] = {}
        for node, q in scenario.queries():
            if q.ast is not None and q.ast.register is not None:
                if q.ast.register in outputs:
                    self.fail(
                        f"query {q.name}: output {q.ast.register} already registered by {outputs[q.ast.register]}",
                        kind="query",
                    )
                outputs[q.ast.register] = q.name
        return scenario


def validate(path) -> List[str]:
    """Check a scenario, its queries and its replay files without running it."""
    loader = _Loader(Path(path))
    loader.load()
    return [str(p) for p in loader.problems]


def load_scenario(path) -> Scenario:
    loader = _Loader(Path(path))
    scenario = loader.load()
    if loader.problems:
        raise ScenarioError(loader.problems)
    return scenario


def unresolvable_topics(scenario: Scenario) -> List[Tuple[str, Iri]]:
    """Concrete selectors that no node of the scenario ever publishes."""
    published = {s.topic for n in scenario.nodes for s in n.streams}
    published |= {q.ast.register for _, q in scenario.queries() if q.ast.register is not None}
    out = []
    for _, q in scenario.queries():
        for sp in q.ast.stream_patterns:
            if isinstance(sp.selector, Iri) and sp.selector not in published:
                out.append((q.name, sp.selector))
    return out


# -- output formats --


def format_binding(binding: Binding) -> str:
    return " ".join(f"?{v}={encode_term(binding[v])}" for v in sorted(binding))


def log_lines(topic: Iri, time: int, bindings) -> List[str]:
    """Results-log lines for one delta: unique bindings, sorted."""
    rows = sorted({format_binding(b) for b in bindings})
    return [f"{topic.value}\t{time}\t{row}\n" for row in rows]


def project(ast: QueryAST, binding: Binding) -> Binding:
    if isinstance(ast.result, Select):
        return binding.project([v.name for v in ast.result.variables])
    return binding


@dataclass
class RunResult:
    scenario: Scenario
    broker: Broker
    deployed: Dict[str, DeployedQuery]
    logs: Dict[str, str]
    tees: Dict[str, str]
    metrics: dict

    def files(self) -> Dict[str, str]:
        """Relative output path -> content, as written by ``write``."""
        out = {f"results/{n}.log": t for n, t in self.logs.items()}
        out.update({f"outputs/{n}.nt": t for n, t in self.tees.items()})
        out["metrics.json"] = json.dumps(self.metrics, indent=2, sort_keys=True) + "\n"
        return out

    def write(self, out_dir) -> None:
        for rel, text in self.files().items():
            p = Path(out_dir) / rel
            p.parent.mkdir(parents=True, exist_ok=True)
            with open(p, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)


def run_scenario(
    scenario: Scenario,
    seed: Optional[int] = None,
    mode: str = "ref",
) -> RunResult:
    """Execute joins, replay publications and leaves in virtual-time order."""
    broker = Broker(
        latency=scenario.latency,
        seed=scenario.seed if seed is None else seed,
        jitter=scenario.jitter,
        mode=mode,
        prefixes=dict(scenario.prefixes),
    )
    deployed: Dict[str, DeployedQuery] = {}
    log_buf: Dict[str, List[str]] = {}
    tee_buf: Dict[str, List[Tuple[int, str]]] = {}
    skipped = [0]

    def make_listener(q: QuerySpec):
        def on_delta(d: DeployedQuery, topic: Iri, delta: ResultDelta) -> None:
            now = broker.clock
            if isinstance(d.ast.result, Select):
                log_buf[q.name].extend(log_lines(topic, now, (project(d.ast, b) for b in delta.bindings)))
            elif q.tee and delta.graph is not None and len(delta.graph):
                tee_buf[q.name].append((now, encode(delta.graph)))

        return on_delta

    def join(spec: NodeSpec) -> None:
        node = broker.create_node(
            spec.id, spec.kg, scenario.ontology, {s.topic: s.metadata for s in spec.streams}
        )
        for q in spec.queries:
            d = register_query(node, q.ast, q.name)
            d.listeners.append(make_listener(q))
            deployed[q.name] = d

    def emit(node_id: Iri, topic: Iri, payload: str) -> None:
        node: Optional[SemanticNode] = broker.nodes.get(node_id)
        if node is None or not node.alive:
            skipped[0] += 1
            return
        node.publish(topic, decode(payload))

    def leave(node_id: Iri) -> None:
        node = broker.nodes.get(node_id)
        if node is not None:
            node.leave()

    for spec in scenario.nodes:
        for q in spec.queries:
            log_buf[q.name] = []
            if isinstance(q.ast.result, Construct) and q.tee:
                tee_buf[q.name] = []
        broker.schedule(spec.join, join, spec, node=spec.id)
    emits = []
    for ni, spec in enumerate(scenario.nodes):
        for si, stream in enumerate(spec.streams):
            for t, payload in stream.replay:
                emits.append((t, ni, si, spec.id, stream.topic, payload))
    for t, _, _, node_id, topic, payload in sorted(emits, key=lambda e: e[:3]):
        broker.schedule(t, emit, node_id, topic, payload, node=node_id)
    for spec in scenario.nodes:
        if spec.leave is not None:
            broker.schedule(spec.leave, leave, spec.id, node=spec.id)
    try:
        broker.run(scenario.duration)
    finally:
        broker.close()

    metrics = {
        "broker": broker.metrics.as_dict(),
        "skipped_emits": skipped[0],
        "queries": {
            name: {**d.runtime.metrics.as_dict(), "errors": d.errors, "deltas": len(d.deltas)}
            for name, d in sorted(deployed.items())
        },
    }
    logs = {n: "".join(lines) for n, lines in log_buf.items() if lines or _is_select(scenario, n)}
    tees = {n: encode_blocks(blocks) for n, blocks in tee_buf.items()}
    return RunResult(scenario, broker, deployed, logs, tees, metrics)


def _is_select(scenario: Scenario, name: str) -> bool:
    return any(q.name == name and isinstance(q.ast.result, Select) for _, q in scenario.queries())
