"""Continuous RDF-star stream queries over a simulated network of semantic nodes."""

from .rdf import (
    BlankNode,
    Binding,
    Graph,
    Iri,
    Literal,
    PrefixMap,
    QuotedTriple,
    Triple,
    TriplePattern,
    UnboundVariable,
    Variable,
    match,
    match_bgp,
    substitute,
)
from .codec import ParseError, decode, encode
from .query import QueryAST, QuerySyntaxError, QueryValidationError, parse, pretty_print
from .reasoner import Closure, Ontology, compute_closure, entailed_match, materialize
from .window import QueryRuntime, StreamElement
from .node import Broker, LatencyTable, SemanticNode, create_node
from .federation import DeployedQuery, register_query
from .scenario import ScenarioError, load_scenario, run_scenario

__version__ = "0.1.0"

__all__ = [
    "BlankNode",
    "Binding",
    "Broker",
    "Closure",
    "DeployedQuery",
    "Graph",
    "Iri",
    "LatencyTable",
    "Literal",
    "Ontology",
    "ParseError",
    "PrefixMap",
    "QueryAST",
    "QueryRuntime",
    "QuerySyntaxError",
    "QueryValidationError",
    "QuotedTriple",
    "ScenarioError",
    "SemanticNode",
    "StreamElement",
    "Triple",
    "TriplePattern",
    "UnboundVariable",
    "Variable",
    "compute_closure",
    "create_node",
    "decode",
    "encode",
    "entailed_match",
    "load_scenario",
    "match",
    "match_bgp",
    "materialize",
    "parse",
    "pretty_print",
    "register_query",
    "run_scenario",
    "substitute",
]
