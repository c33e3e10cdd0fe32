import random

import pytest
from hypothesis import given

from mpst import gen
from mpst.core import Endpoint
from mpst.picalc import (
    DynamicFault, Restrict, free_endpoints, has_error, normalize, reduce_steps, run, steps, structurally_congruent, substitute,
)
from mpst.surface import parse_process, pretty

from strategies import seeds


def test_oauth_normal_form(oauth):
    nf = normalize(oauth.get("OAuth"))
    assert len(nf.restrictions) == 1 and len(nf.threads) == 3 and not nf.defs


def test_delegation_example(cex):
    first = reduce_steps(cex.get("PQ"))
    assert [(r.rule, r.label) for r in first] == [("R-comm", "s:p->q:l'")]
    second = steps(first[0].target)
    assert [(r.rule, r.label) for r in second] == [("R-comm", "s:r->p:l")]
    assert second[0].target.is_nil and steps(second[0].target) == []


def test_oauth_reductions(oauth):
    [a] = reduce_steps(oauth.get("OAuth"))
    [b] = steps(a.target)
    assert (a.label, b.label) == ("s:s->c:cancel", "s:c->a:quit")
    assert b.target.is_nil


@pytest.mark.parametrize("seed", range(5))
def test_oauth_run_terminates(oauth, seed):
    t = run(oauth.get("OAuth"), 10, seed)
    assert t.outcome == "terminated" and len(t.steps) <= 3
    assert not any(has_error(s.state) for s in t.steps)


def test_unguarded_loop_exhausts_budget(cex):
    t = run(cex.get("Loop"), 50, 0)
    assert t.outcome == "budget-exhausted"
    assert {s.rule for s in t.steps} == {"R-call"}


def test_label_mismatch_reduces_to_error():
    p = parse_process("s[p][q](+)a<()>.0 | s[q][p]&b(x).0")
    [r] = reduce_steps(p)
    assert r.rule == "R-err" and has_error(r.target)
    assert run(p, 5, 0).outcome == "error"


def test_stuck_and_terminated():
    assert run(parse_process("s[p][q](+)a<()>.0"), 5).outcome == "stuck"
    assert run(parse_process("0 | 0"), 5).outcome == "terminated"


def test_structural_congruence():
    a = parse_process("s[p][q](+)a<1>.0 | (0 | s[q][p]&a(x).0)")
    b = parse_process("s[q][p]&a(x).0 | s[p][q](+)a<1>.0")
    assert structurally_congruent(a, b)
    assert structurally_congruent(parse_process("new s : p->q:a(int) . end in 0"), parse_process("0"))


def test_restricted_names_are_alpha_invariant():
    a = parse_process("new s : p->q:a . end in (s[p][q](+)a<()>.0 | s[q][p]&a(x).0)")
    b = parse_process("new t : p->q:a . end in (t[p][q](+)a<()>.0 | t[q][p]&a(x).0)")
    assert normalize(a).key() == normalize(b).key()


def test_substitution_avoids_capture():
    body = parse_process("new s : p->q:a(<q(+)m . end>) . end in (s[p][q](+)a<x>.0 | s[q][p]&a(y).0)")
    out = substitute(body, {"x": Endpoint("s", "r")})
    assert isinstance(out, Restrict) and out.session != "s"
    assert Endpoint("s", "r") in free_endpoints(out)


def test_substitution_respects_binders():
    p = parse_process("x[q](+)a<()>.s[p][q]&{ a(x) . x[q](+)b<()>.0 }")
    out = substitute(p, {"x": Endpoint("s", "z")})
    assert pretty(out) == pretty(parse_process("s[z][q](+)a<()>.s[p][q]&{ a(x) . x[q](+)b<()>.0 }"))


def test_prefix_on_variable_is_a_fault():
    with pytest.raises(DynamicFault):
        steps(normalize(parse_process("x[q](+)a<()>.0")))


@given(seeds)
def test_run_is_deterministic_per_seed(seed):
    rng = random.Random(seed)
    p = gen.synthesize(gen.random_projectable_global(rng), rng)
    a, b = run(p, 20, seed), run(p, 20, seed)
    assert a.lines() == b.lines()
