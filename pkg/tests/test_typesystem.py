import random
from dataclasses import replace

import pytest
from hypothesis import given

from mpst import gen
from mpst.core import Basic, Context, End, Endpoint
from mpst.picalc import Call, Def, Nil, Offer, Par, Restrict, Select, has_error, run
from mpst.surface import parse_context, parse_local, parse_process
from mpst.typesystem import (
    PremiseViolation, ProcessTypeError, Reason, end_predicate, guarded_definitions, only_plays,
    session_fidelity_harness, subject_reduction_harness, typable, typecheck, typed_process_properties,
)

from oracles import all_free_keys_typed, validate_derivation
from strategies import seeds


def reason(ctx_text, proc_text):
    with pytest.raises(ProcessTypeError) as e:
        typecheck(None, parse_context(ctx_text) if ctx_text else Context(), parse_process(proc_text))
    return e.value.reason


def test_end_predicate():
    assert end_predicate(Context({"x": Basic.INT, Endpoint("s", "p"): End()}))
    assert not end_predicate(Context({Endpoint("s", "p"): parse_local("q(+)l . end")}))


def test_delegation_derivation(cex):
    d = typecheck(None, cex.get("Gamma_H"), parse_process("s[p][q](+)l'<s[r]>.s[p][r]&l(x).0 | s[q][p]&l'(x).x[p](+)l<42>.0"))
    assert d.rule == "T-par"
    assert {"T-⊕", "T-&", "T-0", "T-end"} <= set(d.rules())
    assert validate_derivation(d) == []
    # the left premise owns s[p] and s[r], the right one s[q]
    left, right = d.premises
    assert set(left.ctx) == {Endpoint("s", "p"), Endpoint("s", "r")}
    assert set(right.ctx) == {Endpoint("s", "q")}


def test_restriction_uses_association(cex):
    d = typecheck(None, Context(), cex.get("PQ"))
    assert d.rule == "T-G-ν" and validate_derivation(d) == []


def test_oauth_service_alone(oauth):
    ps = oauth.get("P_s")
    assert typable(None, Context({Endpoint("s", "s"): oauth.get("T_s")}), ps)
    assert typable(None, oauth.get("Gamma_auth").restrict("s").without(Endpoint("s", "c"), Endpoint("s", "a")), ps)


def test_oauth_whole(oauth):
    d = typecheck(None, Context(), oauth.get("OAuth"))
    assert validate_derivation(d) == [] and d.rules()[0] == "T-G-ν"


def test_error_reasons():
    assert reason(None, "s[p][q](+)l<1>.0") == Reason.UNBOUND_CHANNEL
    assert reason("{ s[p]: q(+)m . end }", "s[p][q](+)l<()>.0") == Reason.LABEL_NOT_IN_TYPE
    assert reason("{ s[p]: q(+)m(int) . end }", "s[p][q](+)m<true>.0") == Reason.PAYLOAD_MISMATCH
    assert reason("{ s[p]: q(+)m(int) . end }", "s[p][q](+)m<1>.0 | s[p][q](+)m<1>.0") == Reason.NON_LINEAR_SPLIT
    assert reason("{ s[p]: q(+)m(<end>) . end, s[r]: end }", "s[p][q](+)m<s[r]>.0") == Reason.END_DELEGATION
    assert reason(None, "new s : { s[p]: q(+)m . end, s[q]: p&m . end } in 0") == Reason.ASSOCIATION_FAILURE
    assert reason(None, "def X(x: int) = 0 in X(1, 2)") == Reason.ARITY_MISMATCH
    assert reason("{ s[p]: q&m . end }", "s[p][q](+)m<()>.0") == Reason.CHANNEL_MISMATCH
    assert reason("{ s[p]: q&{ m . end, n . end } }", "s[p][q]&m(x).0") == Reason.MISSING_BRANCH
    assert reason(None, "X()") == Reason.UNBOUND_PROCESS
    assert reason("{ s[p]: q(+)m . end }", "0") == Reason.UNFINISHED_SESSION
    assert reason("{ s[p]: q(+)m . end }", "err") == Reason.ERROR_PROCESS


def test_literal_subsumption():
    d = typecheck(None, parse_context("{ s[p]: q(+)m(real) . end }"), parse_process("s[p][q](+)m<1>.0"))
    [lit] = [n for n in d.walk() if n.rule == "T-B"]
    assert lit.subject.sort == Basic.REAL


def test_guarded_definitions(cex):
    assert not guarded_definitions(cex.get("Loop"))
    assert guarded_definitions(parse_process("def X(x: <q(+)m . end>) = x[q](+)m<()>.0 in X(s[p])"))


def test_only_plays(cex, oauth):
    t = lambda k: Context({Endpoint("s", k[0]): cex.get(k[1])})
    assert only_plays(cex.get("Q"), "q", "s", t(("q", "T_Hq")))
    assert not only_plays(cex.get("P"), "p", "s", Context({Endpoint("s", "p"): cex.get("T_Hp"),
                                                            Endpoint("s", "r"): cex.get("T_Hr")}))
    assert only_plays(oauth.get("P_s"), "s", "s", Context({Endpoint("s", "s"): oauth.get("T_s")}))


def test_delegation_subject_reduction(cex):
    rep = subject_reduction_harness(None, cex.get("Gamma_H"), parse_process(
        "s[p][q](+)l'<s[r]>.s[p][r]&l(x).0 | s[q][p]&l'(x).x[p](+)l<42>.0"), globals_={"s": cex.get("G_H")})
    assert rep.holds and len(rep.checks) == 2
    assert str(list(rep.checks[0].context.keys())[0].session) == "s"


def test_oauth_fidelity_and_properties(oauth):
    f = session_fidelity_harness(None, oauth.get("OAuth"))
    assert f.holds and f.states >= 3
    props = typed_process_properties(None, oauth.get("OAuth"))
    assert props.deadlock_free and props.live
    assert subject_reduction_harness(None, None, oauth.get("OAuth")).holds


def test_unguarded_loop_rejected(cex):
    with pytest.raises(PremiseViolation, match="unguarded"):
        session_fidelity_harness(cex.get("Gamma_loop"), cex.get("Loop"), "s",
                                 global_type=projected_global(cex))


def projected_global(cex):
    from mpst.surface import parse_global
    return parse_global("p->q:m . end")


def test_validator_notices_tampering(oauth):
    d = typecheck(None, Context(), oauth.get("OAuth"))
    body = d.premises[0]
    broken = replace(d, premises=(replace(body, ctx=body.ctx.without(Endpoint("s", "a"))),))
    assert validate_derivation(broken)


@given(seeds)
def test_generated_processes_are_typed(seed):
    rng = random.Random(seed)
    g = gen.random_projectable_global(rng)
    ctx, p = gen.synthesize_open(g, rng)
    d = typecheck(None, ctx, p)
    assert validate_derivation(d) == [] and all_free_keys_typed(d)


@given(seeds)
def test_narrowing(seed):
    rng = random.Random(seed)
    g = gen.random_projectable_global(rng)
    ctx, p = gen.synthesize_open(g, rng)
    assert typable(None, gen.narrowed_context(rng, ctx), p)


@given(seeds)
def test_subject_reduction_property(seed):
    rng = random.Random(seed)
    p = gen.synthesize(gen.random_projectable_global(rng), rng)
    assert subject_reduction_harness(None, None, p, 6, seed).holds


def test_inert_process_has_both_properties():
    props = typed_process_properties(None, parse_process("0"))
    assert props.deadlock_free and props.live


def test_annotated_restriction_needs_its_global():
    body = "(s[p][q](+)m<()>.0 | s[q][p]&m(_).0)"
    ctx = "{ s[p]: q(+)m . end, s[q]: p&m . end }"
    d = typecheck(None, Context(), parse_process(f"new s : {ctx} with global p->q:m . end in {body}"))
    assert d.rule == "T-G-ν" and validate_derivation(d) == []
    assert reason(None, f"new s : {ctx} in {body}") == Reason.ASSOCIATION_FAILURE


def test_well_typed_processes_never_reach_an_error():
    rng = random.Random(2)
    for i in range(500):
        p = gen.synthesize(gen.random_projectable_global(rng), rng)
        assert typable(None, Context(), p)
        trace = run(p, 200, i)
        assert trace.outcome != "error" and not any(has_error(st.state) for st in trace.steps)


ROOT_RULE = {Nil: "T-0", Par: "T-par", Select: "T-⊕", Offer: "T-&", Def: "T-def", Call: "T-call",
             Restrict: "T-G-ν"}


@given(seeds)
def test_inversion(seed):
    rng = random.Random(seed)
    d = typecheck(None, Context(), gen.synthesize(gen.random_projectable_global(rng), rng))
    for node in d.walk():
        kind = type(node.subject)
        if kind in ROOT_RULE:
            assert node.rule == ROOT_RULE[kind]
