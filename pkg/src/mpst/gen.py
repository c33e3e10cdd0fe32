"""Random generators for global types, local types, contexts and processes.

All generators take a ``random.Random`` so that corpora are reproducible.
"""

from __future__ import annotations

import random
from itertools import count

from .core import (
    Basic, Branch, Comm, Context, End, END, Endpoint, External, GlobalType, Internal, LocalType,
    Rec, Sort, Var, free_vars, is_basic, substitute,
)
from .picalc import (
    NIL, Call, Def, Lit, Name, Offer, OfferBranch, Param, Process, Restrict, Select, par,
)
from .projection import project_all, projectable

ROLES = ("p", "q", "r", "u")
LABELS = ("l0", "l1", "l2", "l3", "l4")
BASICS = (Basic.INT, Basic.BOOL, Basic.STR, Basic.REAL, Basic.UNIT)
SAMPLE_VALUES = {
    Basic.INT: 1, Basic.BOOL: True, Basic.REAL: 1.5, Basic.STR: "a", Basic.UNIT: (),
}


def _labels(rng: random.Random, width: int) -> list[str]:
    return sorted(rng.sample(LABELS, rng.randint(1, width)))


# ---------------------------------------------------------------------------
# Global types


def random_global(rng: random.Random, max_roles: int = 4, max_width: int = 3,
                  max_recs: int = 2, max_depth: int = 5) -> GlobalType:
    """A closed, contractive global type (not necessarily projectable)."""
    # larger role sets are drawn more often since they are filtered out more
    roles = ROLES[:rng.choice([n for n in range(2, max_roles + 1) for _ in range(n - 1)])]
    recs = count()
    budget = [max_recs]

    def comm(depth: int, bound: tuple[str, ...]) -> GlobalType:
        # Independent continuations rarely project for a third role, so two
        # patterns keep third parties mergeable: every branch shares one
        # continuation, or the chooser first tells every third role the label.
        p, q = rng.sample(roles, 2)
        labels = _labels(rng, max_width)
        others = [r for r in roles if r not in (p, q)]
        mode = rng.random() if len(labels) > 1 else 1.0
        bs = []
        if mode < 0.25:
            shared = cont(depth - 1, bound)
            bs = [Branch(lab, rng.choice(BASICS), shared) for lab in labels]
        elif mode < 0.75 and others:
            for lab in labels:
                body = cont(depth - 1 - len(others), bound)
                for r in reversed(others):
                    body = Comm(p, r, (Branch(lab, rng.choice(BASICS), body),))
                bs.append(Branch(lab, rng.choice(BASICS), body))
        else:
            bs = [Branch(lab, rng.choice(BASICS), cont(depth - 1, bound)) for lab in labels]
        return Comm(p, q, tuple(bs))

    def cont(depth: int, bound: tuple[str, ...]) -> GlobalType:
        roll = rng.random()
        if depth <= 0:
            return Var(rng.choice(bound)) if bound and roll < 0.5 else END
        if bound and roll < 0.2:
            return Var(rng.choice(bound))
        if budget[0] and roll < 0.35:
            budget[0] -= 1
            t = f"t{next(recs)}"
            return Rec(t, comm(depth, bound + (t,)))
        if roll < 0.45:
            return END
        return comm(depth, bound)

    if budget[0] and rng.random() < 0.5:
        budget[0] -= 1
        return Rec("t", comm(max_depth, ("t",)))
    return comm(max_depth, ())


def random_projectable_global(rng: random.Random, tries: int = 500, **kw) -> GlobalType:
    for _ in range(tries):
        g = random_global(rng, **kw)
        if projectable(g):
            return g
    raise RuntimeError("no projectable global type found")


def global_corpus(n: int, seed: int = 0, **kw) -> list[GlobalType]:
    """``n`` projectable global types, reproducible from ``seed``."""
    rng = random.Random(seed)
    return [random_projectable_global(rng, **kw) for _ in range(n)]


# ---------------------------------------------------------------------------
# Local types and contexts


def random_local(rng: random.Random, peers: tuple[str, ...] = ("p", "q", "r"), max_width: int = 3,
                 max_recs: int = 2, max_depth: int = 4, session_payloads: bool = True) -> LocalType:
    """A closed, contractive local type whose payloads are closed."""
    budget = [max_recs]
    recs = count()

    def payload(depth: int) -> Sort:
        if session_payloads and depth > 1 and rng.random() < 0.15:
            return random_local(rng, peers, max_width, 1, depth - 2, session_payloads=False)
        return rng.choice(BASICS)

    def choice(depth: int, bound: tuple[str, ...]) -> LocalType:
        kind = Internal if rng.random() < 0.5 else External
        bs = tuple(Branch(lab, payload(depth), cont(depth - 1, bound)) for lab in _labels(rng, max_width))
        return kind(rng.choice(peers), bs)

    def cont(depth: int, bound: tuple[str, ...]) -> LocalType:
        roll = rng.random()
        if depth <= 0:
            return Var(rng.choice(bound)) if bound and roll < 0.5 else END
        if bound and roll < 0.25:
            return Var(rng.choice(bound))
        if budget[0] and roll < 0.4:
            budget[0] -= 1
            t = f"t{next(recs)}"
            return Rec(t, choice(depth, bound + (t,)))
        if roll < 0.5:
            return END
        return choice(depth, bound)

    return cont(max_depth, ())


_BASIC_UP = {Basic.INT: Basic.REAL}
_BASIC_DOWN = {Basic.REAL: Basic.INT}


def _vary(rng: random.Random, s: Sort, up: bool) -> Sort:
    if is_basic(s):
        table = _BASIC_UP if up else _BASIC_DOWN
        return table.get(s, s) if rng.random() < 0.5 else s
    return supertype_of(rng, s) if up else subtype_of(rng, s)


def subtype_of(rng: random.Random, t: LocalType) -> LocalType:
    """A random ``t'`` with ``t' <= t``: extra outputs, fewer inputs, payload
    variance, applied throughout."""
    return _mutate(rng, t, down=True)


def supertype_of(rng: random.Random, t: LocalType) -> LocalType:
    return _mutate(rng, t, down=False)


def _mutate(rng: random.Random, t: LocalType, down: bool) -> LocalType:
    if isinstance(t, (End, Var)):
        return t
    if isinstance(t, Rec):
        return Rec(t.var, _mutate(rng, t.body, down))
    # going down: outputs may grow (payload up), inputs shrink (payload down)
    grow = isinstance(t, Internal) == down
    bs = [Branch(b.label, _vary(rng, b.payload, up=isinstance(t, Internal) == down), _mutate(rng, b.cont, down))
          for b in t.branches]
    if grow and rng.random() < 0.3:
        free = [l for l in LABELS if l not in t.labels]
        if free:
            bs.append(Branch(rng.choice(free), rng.choice(BASICS), END))
    elif not grow and len(bs) > 1 and rng.random() < 0.3:
        bs.pop(rng.randrange(len(bs)))
    return type(t)(t.peer, tuple(sorted(bs, key=lambda b: b.label)))


def random_context(rng: random.Random, session: str = "s", max_roles: int = 3, **kw) -> Context:
    """A context of random local types whose peers are the other roles; no
    guarantee of any property."""
    roles = ROLES[:rng.randint(2, max_roles)]
    entries = {}
    for r in roles:
        others = tuple(x for x in roles if x != r)
        entries[Endpoint(session, r)] = random_local(rng, others, session_payloads=False, **kw)
    return Context(entries)


def narrowed_context(rng: random.Random, ctx: Context) -> Context:
    """Each entry replaced by a random subtype of itself."""
    return Context({k: subtype_of(rng, v) if not is_basic(v) else v for k, v in ctx.items()})


# ---------------------------------------------------------------------------
# Processes built from projections


def sample_value(s: Sort) -> Lit:
    if not is_basic(s):
        raise ValueError("only basic payloads have sample values")
    return Lit(SAMPLE_VALUES[s], s)


class _Names:
    def __init__(self, prefix: str):
        self.prefix = prefix
        self.defs = count()
        self.vars = count()

    def proc(self) -> str:
        return f"X{self.prefix}{next(self.defs)}"

    def var(self) -> str:
        return f"x{self.prefix}{next(self.vars)}"


def synthesize_role(t: LocalType, chan, rng: random.Random, prefix: str = "") -> Process:
    """A process following local type ``t`` on ``chan``: a random branch at
    each selection, every branch at each offer, one definition per loop."""
    names = _Names(prefix)

    def close(ty: LocalType, env: dict) -> LocalType:
        for v in free_vars(ty):
            ty = substitute(ty, v, env[v][1])
        return ty

    def go(ty: LocalType, c, env: dict) -> Process:
        if isinstance(ty, End):
            return NIL
        if isinstance(ty, Var):
            return Call(env[ty.name][0], (c,))
        if isinstance(ty, Rec):
            chain = []
            body = ty
            while isinstance(body, Rec):
                chain.append(body.var)
                body = body.body
            if not any(v in free_vars(body) for v in chain):
                return go(body, c, env)
            x = names.proc()
            y = names.var()
            closed = close(ty, env)
            inner = {**env, **{v: (x, closed) for v in chain}}
            return Def(x, (Param(y, closed),), go(body, Name(y), inner), Call(x, (c,)))
        if isinstance(ty, Internal):
            b = rng.choice(ty.branches)
            return Select(c, ty.peer, b.label, sample_value(b.payload), go(b.cont, c, env))
        if isinstance(ty, External):
            return Offer(c, ty.peer, tuple(OfferBranch(b.label, names.var(), go(b.cont, c, env))
                                           for b in ty.branches))
        raise TypeError(f"not a local type: {ty!r}")

    return go(t, chan, {})


def synthesize(g: GlobalType, rng: random.Random, session: str = "s") -> Process:
    """``new s : g in (P_1 | ... | P_n)`` with one synthesized process per role."""
    parts = [synthesize_role(t, Endpoint(session, r), rng, prefix=r)
             for r, t in project_all(g).items()]
    return Restrict(session, g, None, par(*parts))


def synthesize_open(g: GlobalType, rng: random.Random, session: str = "s") -> tuple[Context, Process]:
    """The projected context together with the synthesized role processes."""
    proj = project_all(g)
    ctx = Context({Endpoint(session, r): t for r, t in proj.items()})
    parts = [synthesize_role(t, Endpoint(session, r), rng, prefix=r) for r, t in proj.items()]
    return ctx, par(*parts)


def context_with_observer(rng: random.Random, g: GlobalType, session: str = "s",
                          observer: str = "u", max_depth: int = 2) -> Context:
    """The projected context of ``g`` plus an extra role with a random local
    type talking to the protocol's roles.  When ``g`` loops forever the
    observer's actions often stay pending along fair runs."""
    proj = project_all(g)
    entries = {Endpoint(session, r): t for r, t in proj.items()}
    entries[Endpoint(session, observer)] = random_local(rng, tuple(proj), max_depth=max_depth,
                                                        session_payloads=False)
    return Context(entries)
