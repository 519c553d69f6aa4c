"""Parser for the continuous-query fragment (REGISTER / SELECT / CONSTRUCT with STREAM windows).

Grammar (keywords case-insensitive, variables case-sensitive)::

    Query        ::= Prefix* ( "REGISTER" IriRef "AS" )? ( Select | Construct )
    Prefix       ::= "PREFIX" PNAME_NS IRIREF
    Select       ::= "SELECT" Var+ "WHERE" Group
    Construct    ::= "CONSTRUCT" "{" Triples? "}" "WHERE" Group
    Group        ::= "{" ( Stream | Triple "."? )* "}"
    Stream       ::= "STREAM" Selector Window "{" Triples "}"
    Selector     ::= "{" IriRef "}" | IriRef | Var
    Window       ::= "[" "RANGE" Duration "ON" IriRef "]"
    Duration     ::= Number ( "ms" | "s" | "m" )
    Triples      ::= Triple ( "." Triple )* "."?
    Triple       ::= Node Verb Node
    Verb         ::= IriRef | Var | "a"
    Node         ::= IriRef | Var | Literal | "<<" Node Verb Node ">>"
    IriRef       ::= IRIREF | PNAME          (``<:name>`` is read as the prefixed name ``:name``)
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from decimal import Decimal
from typing import List, Optional, Sequence, Set, Tuple, Union

from .codec import encode_term
from .rdf import (
    EMPTY_BINDING,
    RDF_TYPE,
    XSD_INTEGER,
    Graph,
    Iri,
    Literal,
    PatternTerm,
    PrefixMap,
    TriplePattern,
    Variable,
    substitute,
    term_variables,
)


class QueryError(Exception):
    pass


class QuerySyntaxError(QueryError):
    def __init__(self, position: int, expected: str, found: str = ""):
        msg = f"at offset {position}: expected {expected}"
        if found:
            msg += f", found {found!r}"
        super().__init__(msg)
        self.position = position
        self.expected = expected
        self.found = found


class QueryValidationError(QueryError):
    pass


@dataclass(frozen=True)
class RangeWindow:
    range_ms: int
    on: Iri

    def __post_init__(self):
        if self.range_ms <= 0:
            raise ValueError("window range must be positive")


@dataclass(frozen=True)
class StreamPattern:
    selector: Union[Iri, Variable]
    window: RangeWindow
    patterns: Tuple[TriplePattern, ...]

    def variables(self) -> Set[str]:
        out: Set[str] = set()
        for p in self.patterns:
            out |= p.variables()
        return out

    @property
    def selector_variable(self) -> Optional[str]:
        return self.selector.name if isinstance(self.selector, Variable) else None


@dataclass(frozen=True)
class Select:
    variables: Tuple[Variable, ...]


@dataclass(frozen=True)
class Construct:
    template: Tuple[TriplePattern, ...]


@dataclass(frozen=True)
class QueryAST:
    result: Union[Select, Construct]
    stream_patterns: Tuple[StreamPattern, ...]
    static_patterns: Tuple[TriplePattern, ...] = ()
    register: Optional[Iri] = None

    def where_variables(self) -> Set[str]:
        out: Set[str] = set()
        for sp in self.stream_patterns:
            out |= sp.variables()
            if sp.selector_variable:
                out.add(sp.selector_variable)
        for p in self.static_patterns:
            out |= p.variables()
        return out

    def validate(self) -> "QueryAST":
        if not self.stream_patterns:
            raise QueryValidationError("query has no STREAM pattern")
        for sp in self.stream_patterns:
            if not sp.patterns:
                raise QueryValidationError("STREAM block has no triple patterns")
        if self.register is not None and not isinstance(self.result, Construct):
            raise QueryValidationError("REGISTER requires a CONSTRUCT query")
        if isinstance(self.result, Select):
            if not self.result.variables:
                raise QueryValidationError("SELECT needs at least one variable")
            missing = [v.name for v in self.result.variables if v.name not in self.where_variables()]
            if missing:
                raise QueryValidationError(
                    "SELECT variable(s) not in WHERE: " + ", ".join("?" + m for m in missing)
                )
        return self


# -- tokenizer ----------------------------------------------------------------

_PN_LOCAL = r"(?:[A-Za-z0-9_](?:[\w.\-]*[\w\-])?)?"
_TOKEN_SPEC = [
    ("WS", r"\s+|#[^\n]*"),
    ("QOPEN", r"<<"),
    ("QCLOSE", r">>"),
    ("IRIREF", r"<[^<>\"\s{}|^`\\]*>"),
    ("VAR", r"[?$][A-Za-z_][A-Za-z0-9_]*"),
    ("DURATION", r"\d+(?:\.\d+)?(?:ms|s|m)(?![\w:])"),
    ("NUMBER", r"[+-]?\d+(?![\w.:]\w)"),
    ("STRING", r'"(?:[^"\\\n]|\\.)*"'),
    ("PNAME", r"(?:[A-Za-z][\w\-]*(?:\.[\w\-]+)*)?:" + _PN_LOCAL),
    ("KEYWORD", r"[A-Za-z]+"),
    ("DTYPE", r"\^\^"),
    ("PUNCT", r"[{}\[\].]"),
]
_TOKEN_RE = re.compile("|".join(f"(?P<{n}>{p})" for n, p in _TOKEN_SPEC))
_KEYWORDS = {"REGISTER", "AS", "SELECT", "CONSTRUCT", "WHERE", "STREAM", "RANGE", "ON", "PREFIX"}
_UNIT_MS = {"ms": 1, "s": 1000, "m": 60_000}
_SCHEME = re.compile(r"^[A-Za-z][A-Za-z0-9+.\-]*:")
_STRING_ESCAPES = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\"}


@dataclass
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> List[_Tok]:
    toks: List[_Tok] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise QuerySyntaxError(pos, "a token", text[pos:pos + 10])
        kind = m.lastgroup
        if kind != "WS":
            toks.append(_Tok(kind, m.group(), pos))
        pos = m.end()
    toks.append(_Tok("EOF", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str, prefixes: PrefixMap):
        self.toks = _tokenize(text)
        self.i = 0
        self.prefixes = PrefixMap(prefixes)

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, expected: str):
        raise QuerySyntaxError(self.tok.pos, expected, self.tok.text)

    def is_kw(self, word: str) -> bool:
        t = self.tok
        return t.kind == "KEYWORD" and t.text.upper() == word

    def expect_kw(self, word: str) -> None:
        if not self.is_kw(word):
            self.error(word)
        self.i += 1

    def is_punct(self, ch: str) -> bool:
        return self.tok.kind == "PUNCT" and self.tok.text == ch

    def expect_punct(self, ch: str) -> None:
        if not self.is_punct(ch):
            self.error(repr(ch))
        self.i += 1

    # -- grammar --

    def query(self) -> QueryAST:
        while self.is_kw("PREFIX"):
            self.i += 1
            t = self.tok
            if t.kind != "PNAME" or not t.text.endswith(":"):
                self.error("prefix name ending in ':'")
            self.i += 1
            iri = self.tok
            if iri.kind != "IRIREF":
                self.error("IRI in angle brackets")
            self.prefixes[t.text[:-1]] = iri.text[1:-1]
            self.i += 1
        register = None
        if self.is_kw("REGISTER"):
            self.i += 1
            register = self.iri()
            self.expect_kw("AS")
        if self.is_kw("SELECT"):
            self.i += 1
            variables = []
            while self.tok.kind == "VAR":
                variables.append(Variable(self.tok.text[1:]))
                self.i += 1
            if not variables:
                self.error("variable")
            result: Union[Select, Construct] = Select(tuple(variables))
        elif self.is_kw("CONSTRUCT"):
            self.i += 1
            self.expect_punct("{")
            result = Construct(tuple(self.triples(allow_empty=True)))
            self.expect_punct("}")
        else:
            self.error("SELECT or CONSTRUCT")
        self.expect_kw("WHERE")
        streams, static = self.group()
        if self.tok.kind != "EOF":
            self.error("end of query")
        try:
            ast = QueryAST(result, tuple(streams), tuple(static), register)
        except ValueError as exc:
            raise QueryValidationError(str(exc)) from None
        return ast.validate()

    def group(self):
        self.expect_punct("{")
        streams: List[StreamPattern] = []
        static: List[TriplePattern] = []
        while not self.is_punct("}"):
            if self.is_kw("STREAM"):
                streams.append(self.stream())
                if self.is_punct("."):
                    self.i += 1
            else:
                static.append(self.triple())
                if self.is_punct("."):
                    self.i += 1
                elif not self.is_punct("}") and not self.is_kw("STREAM"):
                    self.error("'.' or '}'")
        self.i += 1
        return streams, static

    def stream(self) -> StreamPattern:
        self.expect_kw("STREAM")
        if self.is_punct("{"):
            self.i += 1
            selector: Union[Iri, Variable] = self.iri()
            self.expect_punct("}")
        elif self.tok.kind == "VAR":
            selector = Variable(self.tok.text[1:])
            self.i += 1
        else:
            selector = self.iri()
        window = self.window()
        self.expect_punct("{")
        patterns = self.triples(allow_empty=False)
        self.expect_punct("}")
        return StreamPattern(selector, window, tuple(patterns))

    def window(self) -> RangeWindow:
        self.expect_punct("[")
        self.expect_kw("RANGE")
        t = self.tok
        if t.kind != "DURATION":
            self.error("duration such as 5s, 500ms or 2m")
        m = re.fullmatch(r"(\d+(?:\.\d+)?)(ms|s|m)", t.text)
        ms = Decimal(m.group(1)) * _UNIT_MS[m.group(2)]
        if ms != ms.to_integral_value() or ms <= 0:
            self.error("positive whole number of milliseconds")
        self.i += 1
        self.expect_kw("ON")
        on = self.iri()
        self.expect_punct("]")
        return RangeWindow(int(ms), on)

    def triples(self, allow_empty: bool) -> List[TriplePattern]:
        out: List[TriplePattern] = []
        while not self.is_punct("}"):
            out.append(self.triple())
            if self.is_punct("."):
                self.i += 1
            elif not self.is_punct("}"):
                self.error("'.' or '}'")
        if not out and not allow_empty:
            self.error("triple pattern")
        return out

    def triple(self) -> TriplePattern:
        s = self.node()
        p = self.verb()
        o = self.node()
        if isinstance(s, Literal):
            raise QuerySyntaxError(self.tok.pos, "subject that is not a literal")
        return TriplePattern(s, p, o)

    def verb(self) -> Union[Iri, Variable]:
        t = self.tok
        if t.kind == "KEYWORD" and t.text == "a":
            self.i += 1
            return RDF_TYPE
        if t.kind == "VAR":
            self.i += 1
            return Variable(t.text[1:])
        return self.iri()

    def node(self) -> PatternTerm:
        t = self.tok
        if t.kind == "VAR":
            self.i += 1
            return Variable(t.text[1:])
        if t.kind == "QOPEN":
            self.i += 1
            inner = self.triple()
            if self.tok.kind != "QCLOSE":
                self.error("'>>'")
            self.i += 1
            return inner
        if t.kind == "STRING":
            return self.literal()
        if t.kind == "NUMBER":
            self.i += 1
            return Literal(str(int(t.text)), XSD_INTEGER)
        return self.iri()

    def literal(self) -> Literal:
        t = self.tok
        body = t.text[1:-1]
        out = []
        i = 0
        while i < len(body):
            c = body[i]
            if c == "\\":
                e = body[i + 1]
                if e not in _STRING_ESCAPES:
                    raise QuerySyntaxError(t.pos + 1 + i, "valid string escape", "\\" + e)
                out.append(_STRING_ESCAPES[e])
                i += 2
            else:
                out.append(c)
                i += 1
        self.i += 1
        if self.tok.kind == "DTYPE":
            self.i += 1
            return Literal("".join(out), self.iri())
        return Literal("".join(out))

    def iri(self) -> Iri:
        t = self.tok
        if t.kind == "IRIREF":
            body = t.text[1:-1]
            self.i += 1
            if not _SCHEME.match(body) and re.fullmatch(r"[A-Za-z][\w\-]*:" + _PN_LOCAL + "|:" + _PN_LOCAL, body):
                return self._expand(body, t)
            try:
                return Iri(body)
            except ValueError:
                raise QuerySyntaxError(t.pos, "valid IRI", t.text) from None
        if t.kind == "PNAME":
            self.i += 1
            return self._expand(t.text, t)
        if t.kind == "KEYWORD" and t.text.upper() in _KEYWORDS:
            self.error("IRI")
        self.error("IRI or prefixed name")

    def _expand(self, pname: str, t: _Tok) -> Iri:
        try:
            return self.prefixes.expand(pname)
        except (KeyError, ValueError):
            raise QuerySyntaxError(t.pos, "declared prefix", pname) from None


def parse(text: str, prefixes: Optional[dict] = None) -> QueryAST:
    """Parse query text into a validated ``QueryAST``."""
    return _Parser(text, PrefixMap(prefixes)).query()


def parse_triples(text: str, prefixes: Optional[dict] = None) -> Graph:
    """Parse ground triples written in query syntax (``s p o .`` lines) into a graph."""
    p = _Parser(text + " }", PrefixMap(prefixes))
    patterns = p.triples(allow_empty=True)
    p.expect_punct("}")
    if p.tok.kind != "EOF":
        p.error("end of input")
    for pat in patterns:
        if pat.variables():
            raise QueryValidationError(f"variables are not allowed here: {sorted(pat.variables())}")
    return substitute(patterns, EMPTY_BINDING)


def parse_iri(text: str, prefixes: Optional[dict] = None) -> Iri:
    """Parse one IRI, either ``<...>`` or a prefixed name."""
    p = _Parser(text, PrefixMap(prefixes))
    iri = p.iri()
    if p.tok.kind != "EOF":
        p.error("end of input")
    return iri


# -- printing -------------------------------------------------------------------


def _fmt(term, prefixes: Optional[PrefixMap]) -> str:
    if isinstance(term, Variable):
        return f"?{term.name}"
    if isinstance(term, TriplePattern):
        return f"<< {_fmt(term.subject, prefixes)} {_fmt(term.predicate, prefixes)} {_fmt(term.object, prefixes)} >>"
    if isinstance(term, Iri):
        return prefixes.compact(term) if prefixes else str(term)
    if isinstance(term, Literal):
        lex = encode_term(Literal(term.lexical)).rsplit("^^", 1)[0]
        return f"{lex}^^{_fmt(term.datatype, prefixes)}"
    raise TypeError(term)


def _fmt_triples(patterns: Sequence[TriplePattern], indent: str, prefixes) -> List[str]:
    return [
        f"{indent}{_fmt(p.subject, prefixes)} {_fmt(p.predicate, prefixes)} {_fmt(p.object, prefixes)} ."
        for p in patterns
    ]


def _fmt_duration(ms: int) -> str:
    if ms % 60_000 == 0:
        return f"{ms // 60_000}m"
    if ms % 1000 == 0:
        return f"{ms // 1000}s"
    return f"{ms}ms"


def pretty_print(ast: QueryAST, prefixes: Optional[dict] = None) -> str:
    """Render an AST as query text; with no prefix table every IRI is written in full."""
    pm = PrefixMap(prefixes) if prefixes else None
    lines: List[str] = []
    if pm:
        for pfx, ns in sorted(pm.items()):
            lines.append(f"PREFIX {pfx}: <{ns}>")
    if ast.register is not None:
        lines.append(f"REGISTER {_fmt(ast.register, pm)} AS")
    if isinstance(ast.result, Select):
        lines.append("SELECT " + " ".join(f"?{v.name}" for v in ast.result.variables))
    else:
        lines.append("CONSTRUCT {")
        lines += _fmt_triples(ast.result.template, "  ", pm)
        lines.append("}")
    lines.append("WHERE {")
    for sp in ast.stream_patterns:
        sel = _fmt(sp.selector, pm) if isinstance(sp.selector, Variable) else "{" + _fmt(sp.selector, pm) + "}"
        w = sp.window
        lines.append(f"  STREAM {sel} [RANGE {_fmt_duration(w.range_ms)} ON {_fmt(w.on, pm)}] {{")
        lines += _fmt_triples(sp.patterns, "    ", pm)
        lines.append("  }")
    lines += _fmt_triples(ast.static_patterns, "  ", pm)
    lines.append("}")
    return "\n".join(lines) + "\n"


# -- JSON snapshot form ------------------------------------------------------------


def _term_json(term):
    if isinstance(term, Variable):
        return {"var": term.name}
    if isinstance(term, Iri):
        return {"iri": term.value}
    if isinstance(term, Literal):
        return {"literal": term.lexical, "datatype": term.datatype.value}
    if isinstance(term, TriplePattern):
        return {"quoted": _triple_json(term)}
    raise TypeError(term)


def _triple_json(p: TriplePattern):
    return [_term_json(p.subject), _term_json(p.predicate), _term_json(p.object)]


def ast_to_dict(ast: QueryAST) -> dict:
    if isinstance(ast.result, Select):
        result = {"select": [v.name for v in ast.result.variables]}
    else:
        result = {"construct": [_triple_json(p) for p in ast.result.template]}
    return {
        "register": ast.register.value if ast.register else None,
        "result": result,
        "streams": [
            {
                "selector": _term_json(sp.selector),
                "range_ms": sp.window.range_ms,
                "on": sp.window.on.value,
                "patterns": [_triple_json(p) for p in sp.patterns],
            }
            for sp in ast.stream_patterns
        ],
        "static": [_triple_json(p) for p in ast.static_patterns],
    }


def ast_to_json(ast: QueryAST) -> str:
    return json.dumps(ast_to_dict(ast), indent=2, sort_keys=True) + "\n"


def query_variables(ast: QueryAST) -> Set[str]:
    out = ast.where_variables()
    if isinstance(ast.result, Construct):
        for p in ast.result.template:
            out |= p.variables()
    return out


__all__ = [
    "Construct",
    "QueryAST",
    "QueryError",
    "QuerySyntaxError",
    "QueryValidationError",
    "RangeWindow",
    "Select",
    "StreamPattern",
    "ast_to_dict",
    "ast_to_json",
    "parse",
    "pretty_print",
    "term_variables",
]
