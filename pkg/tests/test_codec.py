from __future__ import annotations

import random

import pytest

import gen
from semrob.codec import (
    ParseError,
    canonical_order,
    decode,
    decode_blocks,
    decode_term,
    encode,
    encode_blocks,
    encode_term,
)
from semrob.rdf import XSD_STRING, BlankNode, Graph, Iri, Literal, QuotedTriple, Triple

EX = "http://ex.org/"
XSD_DT = Iri("http://www.w3.org/2001/XMLSchema#dateTime")


def ex(local):
    return Iri(EX + local)


def test_encode_single_annotation():
    t = Triple(QuotedTriple(ex("b7"), ex("frontLeftOf"), ex("car1")), ex("resultTime"),
               Literal("2021-06-01T12:00:05Z", XSD_DT))
    assert encode([t]) == (
        "<< <http://ex.org/b7> <http://ex.org/frontLeftOf> <http://ex.org/car1> >> "
        '<http://ex.org/resultTime> "2021-06-01T12:00:05Z"^^<http://www.w3.org/2001/XMLSchema#dateTime> .\n'
    )


def test_encode_empty_graph_is_empty_string():
    assert encode(Graph()) == ""
    assert decode("") == Graph()
    assert decode("\n\n  \n") == Graph()


def test_string_literal_gets_explicit_datatype():
    assert encode_term(Literal("x")) == f'"x"^^<{XSD_STRING.value}>'


def test_escapes():
    lit = Literal('a "q" \\ \n \r')
    text = encode_term(lit)
    assert "\n" not in text and "\r" not in text
    assert decode_term(text) == lit


def test_decode_accepts_tab_escape_and_plain_literal():
    g = decode('<http://ex.org/a> <http://ex.org/p> "x\\ty" .')
    (t,) = g
    assert t.object == Literal("x\ty")


def test_lines_sorted_and_duplicates_collapse():
    a = Triple(ex("b"), ex("p"), ex("o"))
    b = Triple(ex("a"), ex("p"), ex("o"))
    text = encode([a, b, a])
    assert text.splitlines() == sorted(text.splitlines()) and len(text.splitlines()) == 2
    assert canonical_order([a, b]) == [b, a]
    assert decode(text + text.splitlines()[0] + "\n") == Graph([a, b])


def test_crlf_tolerated():
    g = decode("<http://ex.org/a> <http://ex.org/p> <http://ex.org/o> .\r\n")
    assert g == Graph([Triple(ex("a"), ex("p"), ex("o"))])


def test_unicode_line_separator_is_not_a_newline():
    lit = Literal("one\u2028two\x85three")
    assert decode(encode([Triple(ex("a"), ex("p"), lit)])) == Graph([Triple(ex("a"), ex("p"), lit)])


def test_blank_nodes_round_trip():
    g = Graph([Triple(BlankNode("b1"), ex("p"), QuotedTriple(BlankNode("b2"), ex("q"), ex("o")))])
    assert decode(encode(g)) == g


@pytest.mark.parametrize("line, reason", [
    ("<http://ex.org/a> <http://ex.org/p> <http://ex.org/o>", "expected '.'"),
    ("<http://ex.org/a> <http://ex.org/p> <http://ex.org/o> . extra", "trailing"),
    ('"lit" <http://ex.org/p> <http://ex.org/o> .', ""),
    ("<http://ex.org/a> _:b <http://ex.org/o> .", ""),
    ("<< <http://ex.org/a> <http://ex.org/p> <http://ex.org/o> <http://ex.org/p> <http://ex.org/o> .", ""),
    ('<http://ex.org/a> <http://ex.org/p> "unterminated .', ""),
    ("<http://ex.org/a> <http://ex.org/p> <bad iri> .", ""),
])
def test_malformed_lines_raise_parse_error(line, reason):
    text = "<http://ex.org/x> <http://ex.org/p> <http://ex.org/y> .\n" + line + "\n"
    with pytest.raises(ParseError) as err:
        decode(text)
    assert err.value.line == 2
    assert reason in err.value.reason


def test_round_trip_and_determinism_random():
    rng = random.Random(70)
    for _ in range(300):
        g = gen.graph(rng, rng.randint(0, 20), max_depth=3)
        text = encode(g)
        assert decode(text) == g
        assert encode(decode(text)) == text


def test_blocks_round_trip():
    blocks = [(0, "<http://ex.org/a> <http://ex.org/p> <http://ex.org/o> .\n"), (250, ""), (1000, encode([]))]
    assert decode_blocks(encode_blocks(blocks)) == blocks


def test_blocks_allow_leading_comments_only():
    assert decode_blocks("# replay\n@ 5\n") == [(5, "")]
    with pytest.raises(ParseError):
        decode_blocks("<http://ex.org/a> <http://ex.org/p> <http://ex.org/o> .\n@ 5\n")
    with pytest.raises(ParseError) as err:
        decode_blocks("@ 5\n@ soon\n")
    assert err.value.line == 2
