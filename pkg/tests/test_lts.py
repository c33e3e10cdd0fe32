
import pytest
from hypothesis import given

from mpst.core import End, Endpoint, OutputHalf, canonical, parse_label
from mpst.lts import (
    LimitExceeded, context_half_steps, context_transmissions, default_limit, global_graph, global_steps,
    reachable_contexts, replay,
)
from mpst.surface import parse_global

from strategies import contexts, projectable_globals


def labels(steps):
    return [str(st.label) for st in steps]


def test_global_choice_steps(oauth):
    steps = global_steps(oauth.get("G_auth"))
    assert labels(steps) == ["s:s->c:cancel", "s:s->c:login"]


def test_global_step_under_unrelated_prefix():
    g = parse_global("p->q:l1 . r->u:l2 . end")
    steps = {str(st.label): st.target for st in global_steps(g)}
    assert steps["s:r->u:l2"] == parse_global("p->q:l1 . end")
    assert set(steps) == {"s:p->q:l1", "s:r->u:l2"}


def test_output_half(cex):
    halves = [st.label for st in context_half_steps(cex.get("Gamma_A"), "s")]
    assert OutputHalf("s", "p", "q", "l1", None) in halves


def test_recursive_half_returns_to_itself(cex):
    ctx = cex.get("Gamma_E")
    [st] = [st for st in context_half_steps(ctx, "s") if st.label.subject == "q" and st.label.label == "l2"]
    assert canonical(st.target[Endpoint("s", "q")]) == canonical(ctx[Endpoint("s", "q")])


def test_transmissions(oauth, cex):
    assert labels(context_transmissions(oauth.get("Gamma_auth"), "s")) == ["s:s->c:cancel"]
    assert context_transmissions(cex.get("Gamma_B"), "s") == []
    assert context_transmissions(cex.get("Gamma_C"), "s") == []


def test_reachable_oauth(oauth):
    g = reachable_contexts(oauth.get("Gamma_auth"), "s")
    assert len(g) == 3
    assert [str(l) for _, l, _ in g.edges] == ["s:s->c:cancel", "s:c->a:quit"]
    assert [str(l) for l in g.trace_to(2)] == ["s:s->c:cancel", "s:c->a:quit"]


def test_reachable_loop(cex):
    g = reachable_contexts(cex.get("Gamma_E"), "s")
    assert (0, parse_label("s:q->q':l2"), 0) in g.edges
    assert any(str(l) == "s:p->p':l1" for a, l, _ in g.edges if a == 0)


def test_limit(cex, monkeypatch):
    with pytest.raises(LimitExceeded):
        reachable_contexts(cex.get("Gamma_E"), "s", limit=1)
    monkeypatch.setenv("MPST_LIMIT", "7")
    assert default_limit() == 7
    monkeypatch.setenv("MPST_LIMIT", "junk")
    assert default_limit() == 100_000


def test_replay(oauth):
    end = replay(oauth.get("Gamma_auth"), [parse_label("s:s->c:cancel"), parse_label("s:c->a:quit")], "s")
    assert all(t == End() for t in end.values())
    with pytest.raises(ValueError):
        replay(oauth.get("Gamma_auth"), [parse_label("s:s->c:login")], "s")


def test_global_graph_depth(oauth):
    nodes, edges = global_graph(oauth.get("G_auth"), "s", 5)
    # root, after login, after cancel, after passwd, end
    assert len(nodes) == 5
    assert sum(1 for _, l, _ in edges if l.label == "cancel") == 1


def _deterministic(graph) -> bool:
    seen = {}
    for a, lab, b in graph.edges:
        if seen.setdefault((a, lab), b) != b:
            return False
    return True


@given(contexts())
def test_context_reduction_is_deterministic(ctx):
    try:
        g = reachable_contexts(ctx, "s", limit=2000)
    except LimitExceeded:
        return
    assert _deterministic(g)


@given(projectable_globals())
def test_global_reduction_is_deterministic(g):
    seen = {}
    for st in global_steps(g):
        assert seen.setdefault(st.label, canonical(st.target)) == canonical(st.target)
