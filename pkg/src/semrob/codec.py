"""Line-oriented RDF-star text format (N-Triples extended with ``<< s p o >>``).

The encoder is canonical: absolute IRIs in angle brackets, every literal
carries an explicit ``^^<datatype>``, quoted triples are written
``<< s p o >>`` with single spaces, and lines are sorted.  Identical graphs
therefore encode to identical bytes.
"""

from __future__ import annotations

from typing import Iterable, List, Tuple

from .rdf import XSD_STRING, BlankNode, Graph, Iri, Literal, QuotedTriple, Term, Triple


class ParseError(ValueError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


_ESCAPES_OUT = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\r": "\\r"}
_ESCAPES_IN = {
    "t": "\t",
    "b": "\b",
    "n": "\n",
    "r": "\r",
    "f": "\f",
    '"': '"',
    "'": "'",
    "\\": "\\",
}


def _escape(s: str) -> str:
    if not any(c in s for c in _ESCAPES_OUT):
        return s
    return "".join(_ESCAPES_OUT.get(c, c) for c in s)


def encode_term(term: Term) -> str:
    if isinstance(term, Iri):
        return f"<{term.value}>"
    if isinstance(term, Literal):
        return f'"{_escape(term.lexical)}"^^<{term.datatype.value}>'
    if isinstance(term, BlankNode):
        return f"_:{term.label}"
    if isinstance(term, QuotedTriple):
        return (
            f"<< {encode_term(term.subject)} {encode_term(term.predicate)} "
            f"{encode_term(term.object)} >>"
        )
    raise TypeError(f"not an RDF term: {term!r}")


def encode_triple(t: Triple) -> str:
    return f"{encode_term(t.subject)} {encode_term(t.predicate)} {encode_term(t.object)} ."


def encode(graph: Iterable[Triple]) -> str:
    lines = sorted({encode_triple(t) for t in graph})
    if not lines:
        return ""
    return "\n".join(lines) + "\n"


def canonical_order(graph: Iterable[Triple]) -> List[Triple]:
    """Triples sorted by their encoded line."""
    return [t for _, t in sorted((encode_triple(t), t) for t in graph)]


class _LineParser:
    def __init__(self, text: str, lineno: int):
        self.s = text
        self.i = 0
        self.lineno = lineno

    def fail(self, reason: str):
        raise ParseError(self.lineno, f"{reason} (column {self.i + 1})")

    def ws(self) -> None:
        s, i = self.s, self.i
        while i < len(s) and s[i] in " \t":
            i += 1
        self.i = i

    def at_end(self) -> bool:
        self.ws()
        return self.i >= len(self.s) or self.s[self.i] == "#"

    def triple(self) -> Triple:
        s = self.term()
        p = self.term()
        o = self.term()
        try:
            return Triple(s, p, o)
        except ValueError as exc:
            self.fail(str(exc))

    def term(self) -> Term:
        self.ws()
        s, i = self.s, self.i
        if s.startswith("<<", i):
            self.i += 2
            t = self.triple()
            self.ws()
            if not self.s.startswith(">>", self.i):
                self.fail("expected '>>' closing quoted triple")
            self.i += 2
            return t.quoted()
        if s.startswith("<", i):
            end = s.find(">", i + 1)
            if end < 0:
                self.fail("unterminated IRI")
            self.i = end + 1
            try:
                return Iri(s[i + 1:end])
            except ValueError as exc:
                self.fail(str(exc))
        if s.startswith("_:", i):
            j = i + 2
            while j < len(s) and (s[j].isalnum() or s[j] in "_-."):
                j += 1
            while j > i + 2 and s[j - 1] == ".":
                j -= 1
            self.i = j
            try:
                return BlankNode(s[i + 2:j])
            except ValueError as exc:
                self.fail(str(exc))
        if s.startswith('"', i):
            return self.literal()
        if i >= len(s):
            self.fail("unexpected end of line")
        self.fail(f"unexpected character {s[i]!r}")

    def literal(self) -> Literal:
        s = self.s
        i = self.i + 1
        out = []
        while True:
            if i >= len(s):
                self.fail("unterminated string literal")
            c = s[i]
            if c == '"':
                i += 1
                break
            if c == "\\":
                if i + 1 >= len(s):
                    self.fail("dangling escape")
                e = s[i + 1]
                if e in _ESCAPES_IN:
                    out.append(_ESCAPES_IN[e])
                    i += 2
                elif e in "uU":
                    n = 4 if e == "u" else 8
                    digits = s[i + 2:i + 2 + n]
                    if len(digits) != n or any(d not in "0123456789abcdefABCDEF" for d in digits):
                        self.i = i
                        self.fail("malformed unicode escape")
                    cp = int(digits, 16)
                    if cp > 0x10FFFF:
                        self.i = i
                        self.fail("unicode escape out of range")
                    out.append(chr(cp))
                    i += 2 + n
                else:
                    self.i = i
                    self.fail(f"unknown escape '\\{e}'")
                continue
            out.append(c)
            i += 1
        self.i = i
        datatype = XSD_STRING
        if s.startswith("^^", i):
            self.i = i + 2
            dt = self.term()
            if not isinstance(dt, Iri):
                self.fail("datatype must be an IRI")
            datatype = dt
        elif s.startswith("@", i):
            self.fail("language-tagged literals are not supported")
        return Literal("".join(out), datatype)


def _lines(text: str) -> List[str]:
    # only LF separates lines; str.splitlines would also split on U+2028 etc.
    return [l[:-1] if l.endswith("\r") else l for l in text.split("\n")]


def decode_triple(line: str, lineno: int = 1) -> Triple:
    p = _LineParser(line, lineno)
    t = p.triple()
    p.ws()
    if not p.s.startswith(".", p.i):
        p.fail("expected '.'")
    p.i += 1
    if not p.at_end():
        p.fail("trailing content after '.'")
    return t


def decode(text: str) -> Graph:
    """Parse a payload into a graph; duplicate lines collapse."""
    g = Graph()
    for lineno, line in enumerate(_lines(text), 1):
        p = _LineParser(line, lineno)
        if p.at_end():
            continue
        g.add(decode_triple(line, lineno))
    return g


def decode_term(text: str) -> Term:
    p = _LineParser(text, 1)
    t = p.term()
    if not p.at_end():
        p.fail("trailing content after term")
    return t


def read_graph(path) -> Graph:
    with open(path, encoding="utf-8") as fh:
        return decode(fh.read())


def write_graph(path, graph: Graph) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(encode(graph))


def decode_blocks(text: str) -> List[Tuple[int, str]]:
    """Split ``@ <time>`` delimited payload blocks, as used by replay and tee files."""
    blocks: List[Tuple[int, List[str]]] = []
    for lineno, line in enumerate(_lines(text), 1):
        if line.startswith("@"):
            stamp = line[1:].strip()
            try:
                blocks.append((int(stamp), []))
            except ValueError:
                raise ParseError(lineno, f"bad block time {stamp!r}") from None
        elif not blocks:
            if line.strip() and not line.lstrip().startswith("#"):
                raise ParseError(lineno, "payload before first '@ <time>' header")
        else:
            blocks[-1][1].append(line)
    return [(t, "".join(l + "\n" for l in lines if l.strip())) for t, lines in blocks]


def encode_blocks(blocks: Iterable[Tuple[int, str]]) -> str:
    return "".join(f"@ {t}\n{payload}" for t, payload in blocks)
