import random

import pytest
from hypothesis import given, strategies as st

from mpst import gen
from mpst.core import Basic, Branch, Comm, End, Endpoint
from mpst.surface import (
    ParseError, parse, parse_context, parse_global, parse_local, parse_process, parse_sort, pretty,
)

from strategies import contexts, globals_, local_types, seeds


def test_oauth_global_ast():
    g = parse_global("s->c { login . c->a:passwd(str) . a->s:auth(bool) . end, cancel . c->a:quit . end }")
    assert g == Comm("s", "c", (
        Branch("login", Basic.UNIT, Comm("c", "a", (Branch("passwd", Basic.STR, Comm("a", "s", (
            Branch("auth", Basic.BOOL, End()),))),))),
        Branch("cancel", Basic.UNIT, Comm("c", "a", (Branch("quit", Basic.UNIT, End()),))),
    ))


def test_trivial_local():
    assert parse("local T = end").get("T") == End()


def test_self_reception_is_a_diagnostic_with_position():
    sf = parse("\n\nglobal G = p->p { l . end }")
    [(line, col, name, diag)] = sf.diagnostics
    assert (line, name, diag.kind) == (3, "G", "SelfReception")
    assert col >= 1


def test_names_resolve_to_earlier_declarations(cex):
    assert cex.get("Gamma_H")[Endpoint("s", "r")] == cex.get("T_Hr")
    # a forward reference is read as a free type variable and reported
    sf = parse("context C = { s[p]: Later }\nlocal Later = end")
    assert [(n, d.kind) for _, _, n, d in sf.diagnostics] == [("C", "OpenType")]


def test_duplicate_declaration_rejected():
    with pytest.raises(ParseError):
        parse("local T = end\nlocal T = end")


def test_error_position():
    with pytest.raises(ParseError) as e:
        parse("global G = p->q:l .\n  ;")
    assert (e.value.line, e.value.column) == (2, 3)
    assert e.value.expected and e.value.found


def test_singleton_braces_and_unit_payload_are_optional():
    assert parse_local("q(+)l . end") == parse_local("q(+){ l(unit) . end }")
    assert parse_sort("<q&l . end>") == parse_local("q&l . end")


def test_comments_and_whitespace():
    assert parse("// nothing\n  local   T=end // trailing").get("T") == End()


def test_process_forms():
    for text in ["0", "err", "s[p][q](+)l<1>.0 | s[q][p]&{ l(x) . 0, m(y) . 0 }",
                 "new s : p->q:l(int) . end in (s[p][q](+)l<1>.0 | s[q][p]&l(x).0)",
                 "new s : { s[p]: q(+)l . end, s[q]: p&l . end } in (s[p][q](+)l<()>.0 | s[q][p]&l(x).0)",
                 'def X(x: int, y: <q(+)l . end>) = y[q](+)l<x>.0 in X(1, s[p])',
                 'x[q](+)l<"a b">.0', "x[q](+)l<1.5>.0", "x[q](+)l<false>.0"]:
        p = parse_process(text)
        assert parse_process(pretty(p)) == p


@given(globals_())
def test_global_round_trip(g):
    assert parse_global(pretty(g)) == g


@given(local_types())
def test_local_round_trip(t):
    assert parse_local(pretty(t)) == t


@given(contexts())
def test_context_round_trip(c):
    assert parse_context(pretty(c)) == c


@given(seeds)
def test_process_round_trip(seed):
    rng = random.Random(seed)
    g = gen.random_projectable_global(rng)
    p = gen.synthesize(g, rng)
    assert parse_process(pretty(p)) == p


@given(st.text(max_size=80))
def test_parser_total_on_text(text):
    try:
        parse(text)
    except ParseError as e:
        assert e.line >= 1 and e.column >= 1


@given(st.binary(max_size=80))
def test_parser_total_on_bytes(data):
    try:
        parse(data)
    except ParseError:
        pass


_TOKENS = ["global", "local", "context", "process", "G", "=", "p", "q", "->", ":", "l", ".", "end", "rec",
           "t", "{", "}", ",", "(", ")", "int", "<", ">", "(+)", "&", "[", "]", "s", "new", "in", "def", "|", "0"]


@given(st.lists(st.sampled_from(_TOKENS), max_size=30))
def test_parser_total_on_token_soup(tokens):
    try:
        parse(" ".join(tokens))
    except ParseError:
        pass


def test_deep_nesting_is_a_parse_error():
    with pytest.raises(ParseError):
        parse("local T = " + "<" * 5000)
