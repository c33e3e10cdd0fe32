import random

from hypothesis import given

from mpst import gen
from mpst.analysis import (
    associated, check_all_by_association, check_association, check_completeness_correspondence,
    check_deadlock_free, check_live, check_properties, check_safety, check_soundness_correspondence,
    projected_context,
)
from mpst.core import Endpoint, parse_label
from mpst.lts import LimitExceeded, reachable_contexts, replay
from mpst.surface import parse_context, parse_global

from oracles import context_traces, global_traces, live_by_lasso_enumeration, safe_by_clauses
from strategies import contexts, projectable_globals, seeds


def verdicts(ctx):
    return tuple(v.holds for v in check_properties(ctx, "s"))


def test_property_matrix(oauth, cex):
    assert verdicts(oauth.get("Gamma_auth")) == (True, True, True)
    assert not check_safety(cex.get("Gamma_A"), "s").holds
    assert not check_safety(cex.get("Gamma_B"), "s").holds
    assert verdicts(cex.get("Gamma_C"))[:2] == (True, False)
    assert verdicts(cex.get("Gamma_D"))[:2] == (False, True)
    assert check_live(cex.get("Gamma_E"), "s").holds
    assert verdicts(cex.get("Gamma_E1")) == (True, True, False)
    assert verdicts(cex.get("Gamma_E2"))[0] is False and verdicts(cex.get("Gamma_E2"))[2] is True
    assert check_live(cex.get("Gamma_F"), "s").holds


def test_safety_witnesses(cex):
    a = check_safety(cex.get("Gamma_A"), "s")
    assert a.trace == [] and "l1" in a.detail
    b = check_safety(cex.get("Gamma_B"), "s")
    assert "real" in b.detail and "int" in b.detail
    d = check_safety(cex.get("Gamma_D"), "s")
    assert "l3" in d.detail


def test_deadlock_witness_is_immediate(cex):
    v = check_deadlock_free(cex.get("Gamma_C"), "s")
    assert v.trace == [] and v.to_json()["witness"]["trace"] == []


def test_liveness_witness_cycle(cex):
    v = check_live(cex.get("Gamma_E1"), "s")
    assert v.pending == "s:r?q"
    assert v.cycle and all(lab.pair == ("q", "p") for _, lab, _ in v.cycle)


def test_association_oauth(oauth):
    rep = check_association(oauth.get("G_auth"), oauth.get("Gamma_auth"), "s")
    assert rep.holds and rep.end_part == []
    facts = {r.role: (r.projection, r.subtype) for r in rep.role_results}
    assert facts == {"s": (oauth.get("T_s"), True), "c": (oauth.get("T_c"), True), "a": (oauth.get("T_a"), True)}


def test_association_failures(oauth, cex):
    assert not associated(oauth.get("G_auth"), oauth.get("Gamma_proj").without(Endpoint("s", "a")), "s")
    assert not associated(oauth.get("G_auth"), cex.get("Gamma_B"), "s")
    extra = oauth.get("Gamma_auth").update({Endpoint("s", "z"): parse_context("{ s[z]: end }")[Endpoint("s", "z")]})
    rep = check_association(oauth.get("G_auth"), extra, "s")
    assert rep.holds and rep.end_part == [Endpoint("s", "z")]


@given(projectable_globals())
def test_open_payload_context_associates_with_nothing(g):
    ctx = parse_context("{ s[p]: rec t . q(+)l(t) . end, s[q]: p&l(rec t . q(+)l(t) . end) . end }")
    assert not associated(g, ctx, "s")


def test_open_payload_context_vs_shaped_global(cex):
    g = parse_global("p->q:l(<rec t . q(+)l(int) . end>) . end")
    assert not associated(g, cex.get("Gamma_F"), "s")


def test_oauth_two_step_reduction(oauth):
    ctx = oauth.get("Gamma_auth")
    mid = replay(ctx, [parse_label("s:s->c:cancel")], "s")
    assert [str(st) for st in reachable_contexts(mid, "s").edges[0][1:2]] == ["s:c->a:quit"]
    g = oauth.get("G_auth")
    assert check_soundness_correspondence(g, ctx, "s") == []
    assert check_completeness_correspondence(g, ctx, "s") == []


def test_correspondence_detects_mismatch(oauth):
    # harnesses applied to a pair that is not associated must report it
    g = parse_global("s->c:cancel . c->a:quit . a->s:done . end")
    [v] = check_soundness_correspondence(g, oauth.get("Gamma_auth"), "s")
    assert v.kind == "soundness" and str(v.label) == "s:s->c:cancel"
    assert check_completeness_correspondence(g, oauth.get("Gamma_auth"), "s")


def test_verify_by_association(oauth):
    rep = check_all_by_association(oauth.get("G_auth"), "s")
    assert rep.holds and rep.context == oauth.get("Gamma_proj")


@given(projectable_globals())
def test_association_implies_properties(g):
    assert check_all_by_association(g, "s").holds


@given(projectable_globals())
def test_projected_context_traces_match_global(g):
    ctx = projected_context(g, "s")
    assert context_traces(ctx, "s", 4) == global_traces(g, "s", 4)


@given(contexts())
def test_live_implies_deadlock_free(ctx):
    try:
        graph = reachable_contexts(ctx, "s", limit=2000)
    except LimitExceeded:
        return
    if check_live(ctx, "s", graph=graph).holds:
        assert check_deadlock_free(ctx, "s", graph=graph).holds


@given(seeds)
def test_checkers_agree_with_oracles(seed):
    rng = random.Random(seed)
    g = gen.random_projectable_global(rng, max_roles=3)
    ctx = gen.context_with_observer(rng, g) if rng.random() < 0.5 else gen.random_context(rng)
    try:
        graph = reachable_contexts(ctx, "s", limit=12)
    except LimitExceeded:
        return
    assert check_live(ctx, "s", graph=graph).holds == live_by_lasso_enumeration(graph, "s")
    assert check_safety(ctx, "s", graph=graph).holds == safe_by_clauses(graph, "s")
