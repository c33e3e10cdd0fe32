import random

import pytest
from hypothesis import given

from mpst.core import (
    Basic, Branch, End, binder_names, Endpoint, Context, External, IllFormed, Internal, Rec, Var, canonical_key, has_open_payload,
    is_closed, parse_label, rename_binders, roles_of, unfold, well_formed,
)
from mpst.gen import random_local
from mpst.surface import parse_global, parse_local

from strategies import globals_, local_types


def test_unfold_end_is_identity():
    assert unfold(End()) == End()


def test_unfold_loop_once():
    t = parse_local("rec t . q'(+)l2 . t")
    assert unfold(t) == Internal("q'", (Branch("l2", Basic.UNIT, t),))


def test_unfold_rejects_unguarded():
    with pytest.raises(IllFormed):
        unfold(Rec("t", Var("t")))
    with pytest.raises(IllFormed):
        unfold(Rec("t", Rec("u", Var("t"))))


def test_unfold_rejects_open():
    with pytest.raises(IllFormed):
        unfold(Var("t"))


def test_roles(oauth):
    assert roles_of(oauth.get("G_auth")) == {"s", "c", "a"}
    assert roles_of(End()) == frozenset()
    assert roles_of(parse_global("rec t . A->B:l . t")) == {"A", "B"}


def test_well_formed_diagnostics(oauth):
    assert well_formed(oauth.get("G_auth")) == []
    assert [d.kind for d in well_formed(parse_global("p->p:l . end"))] == ["SelfReception"]
    assert "OpenPayload" in [d.kind for d in well_formed(Rec("t", Internal("q", (Branch("l", Var("t"), End()),))))]
    assert "NonContractive" in [d.kind for d in well_formed(Rec("t", Var("t")))]
    assert "DuplicateLabel" in [d.kind for d in well_formed(parse_local("q(+){ l . end, l . end }"))]


def test_open_payload_detection(cex):
    assert has_open_payload(cex.get("T_F"))
    assert not has_open_payload(cex.get("T_Hp"))


def test_canonical_key_alpha():
    a = parse_local("rec t . p(+)l . t")
    b = parse_local("rec u . p(+)l . u")
    assert canonical_key(a) == canonical_key(b)
    assert canonical_key(parse_local("p(+)l . end")) != canonical_key(parse_local("p&l . end"))
    assert canonical_key(a) != canonical_key(unfold(a))


@given(local_types())
def test_unfold_head_is_prefix(t):
    h = unfold(t)
    assert isinstance(h, (Internal, External, End))
    assert unfold(h) == h


@given(local_types())
def test_key_stable_under_renaming(t):
    names = {}
    for i, (_, n) in enumerate(_binders(t)):
        names[n] = f"z{i}"
    assert canonical_key(rename_binders(t, names)) == canonical_key(t)


def _binders(t):
    return list(binder_names(t))


@given(globals_())
def test_roles_preserved_by_unfold(g):
    assert roles_of(unfold(g)) == roles_of(g)


def test_context_composition():
    a = Context({Endpoint("s", "p"): End()})
    b = Context({Endpoint("s", "q"): End(), "x": End()})
    ab = a.compose(b)
    assert len(ab) == 3
    with pytest.raises(ValueError):
        ab.compose(a)
    assert set(ab.restrict("s")) == {Endpoint("s", "p"), Endpoint("s", "q")}


def test_label_round_trip():
    lab = parse_label("s:p->q:l1")
    assert str(lab) == "s:p->q:l1"
    assert lab.subjects == {"p", "q"}
    with pytest.raises(ValueError):
        parse_label("s:p:q")


def test_random_local_types_are_well_formed():
    rng = random.Random(0)
    for _ in range(200):
        t = random_local(rng)
        assert well_formed(t) == [] and is_closed(t)
