"""Typing of session processes, plus harnesses that exercise the metatheory
(subject reduction, session fidelity, process deadlock-freedom and liveness)
on concrete processes."""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Mapping, Union

from .analysis import check_association, projected_context
from .core import (
    Basic, Branch, Context, Endpoint, External, GlobalType, IllFormed, Internal, LocalType,
    Sort, Transmission, canonical, is_basic, is_session, parse_label, unfold, well_formed,
)
from .lts import context_transmissions, global_steps
from .picalc import (
    Call, Def, DynamicFault, Err, Lit, Name, Nil, NormalForm, Offer, Par, Process, Restrict,
    Select, Value, _rename_many, fresh_name, free_endpoints, free_keys, free_process_vars,
    free_vars, has_error, normalize, par, steps,
)
from .projection import MergeFailure, ProjectionUndefined
from .subtyping import basic_subtype, is_end_like, subtype

T_NIL = "T-0"
T_END = "T-end"
T_PAR = "T-par"
T_SEL = "T-⊕"
T_BRANCH = "T-&"
T_DEF = "T-def"
T_CALL = "T-call"
T_X = "T-X"
T_BASIC = "T-B"
T_SUB = "T-sub"
T_NEW = "T-G-ν"

RULES = (T_NIL, T_END, T_PAR, T_SEL, T_BRANCH, T_DEF, T_CALL, T_X, T_BASIC, T_SUB, T_NEW)


class Reason(str, Enum):
    UNBOUND_CHANNEL = "UnboundChannel"
    LABEL_NOT_IN_TYPE = "LabelNotInType"
    PAYLOAD_MISMATCH = "PayloadMismatch"
    NON_LINEAR_SPLIT = "NonLinearSplit"
    END_DELEGATION = "EndDelegation"
    ASSOCIATION_FAILURE = "AssociationFailure"
    ARITY_MISMATCH = "ArityMismatch"
    CHANNEL_MISMATCH = "ChannelMismatch"
    MISSING_BRANCH = "MissingBranch"
    UNTYPABLE_BRANCH = "UntypableBranch"
    UNBOUND_PROCESS = "UnboundProcess"
    UNFINISHED_SESSION = "UnfinishedSession"
    SHADOWED_NAME = "ShadowedName"
    SESSION_CLASH = "SessionClash"
    ERROR_PROCESS = "ErrorProcess"

    def __str__(self) -> str:
        return self.value


class ProcessTypeError(Exception):
    """``rule`` failed at ``position`` (a path of sub-term steps from the root)."""

    def __init__(self, rule: str, position: tuple[str, ...], reason: Reason, detail: str = ""):
        self.rule = rule
        self.position = tuple(position)
        self.reason = reason
        self.detail = detail
        where = "/".join(self.position) or "<root>"
        super().__init__(f"{reason.value} in {rule} at {where}: {detail}")

    def to_json(self) -> dict:
        return {"rule": self.rule, "position": list(self.position),
                "reason": self.reason.value, "detail": self.detail}


class PremiseViolation(Exception):
    """The inputs of a harness do not satisfy the hypotheses it needs."""


# ---------------------------------------------------------------------------
# Derivations


@dataclass(frozen=True)
class HasSort:
    """Subject of a value judgement ``ctx |- v : S``."""

    value: Value
    sort: Sort


@dataclass(frozen=True)
class AllEnd:
    """Subject of ``end(ctx)``."""


@dataclass(frozen=True)
class Signature:
    """Subject of a process-variable lookup ``theta |- X : S1, ..., Sn``."""

    name: str
    sorts: tuple[Sort, ...]


Subject = Union[HasSort, AllEnd, Signature, Process]
Theta = tuple[tuple[str, tuple[Sort, ...]], ...]


def _theta(theta: Mapping[str, tuple[Sort, ...]]) -> Theta:
    return tuple(sorted((k, tuple(v)) for k, v in theta.items()))


def _show_sort(s: Sort) -> str:
    from .surface import pretty

    return s.value if is_basic(s) else pretty(s)


def _show_side(fact: tuple) -> str:
    from .surface import pretty

    kind = fact[0]
    if kind == "sub":
        return f"{_show_sort(fact[1])} <= {_show_sort(fact[2])}"
    if kind == "notend":
        return f"{_show_sort(fact[1])} !<= end"
    if kind == "assoc":
        return f"{pretty(fact[1])} associated with {pretty(fact[2])} for {fact[3]}"
    if kind == "fresh":
        return f"{fact[1]} not in context"
    return repr(fact)


@dataclass(frozen=True)
class Derivation:
    rule: str
    theta: Theta
    ctx: Context
    subject: Subject
    premises: tuple["Derivation", ...] = ()
    # side conditions as tuples: ("sub", S, S'), ("notend", S), ("assoc", G, ctx, s), ("fresh", s)
    side: tuple[tuple, ...] = ()

    def judgement(self) -> str:
        from .surface import pretty, pretty_value

        th = "; ".join(f"{x}: ({', '.join(_show_sort(s) for s in ss)})" for x, ss in self.theta)
        prefix = f"{th}; " if th else ""
        if isinstance(self.subject, AllEnd):
            return f"end({pretty(self.ctx)})"
        if isinstance(self.subject, Signature):
            sorts = ", ".join(_show_sort(s) for s in self.subject.sorts)
            return f"{prefix}|- {self.subject.name} : ({sorts})"
        if isinstance(self.subject, HasSort):
            return f"{pretty(self.ctx)} |- {pretty_value(self.subject.value)} : {_show_sort(self.subject.sort)}"
        return f"{prefix}{pretty(self.ctx)} |- {pretty(self.subject)}"

    def lines(self, depth: int = 0) -> list[str]:
        out = [f"{'  ' * depth}[{self.rule}] {self.judgement()}"]
        for s in self.side:
            out.append(f"{'  ' * (depth + 1)}where {_show_side(s)}")
        for p in self.premises:
            out += p.lines(depth + 1)
        return out

    def render(self) -> str:
        return "\n".join(self.lines())

    def to_json(self) -> dict:
        return {"rule": self.rule, "judgement": self.judgement(),
                "side": [_show_side(s) for s in self.side],
                "premises": [p.to_json() for p in self.premises]}

    def walk(self) -> Iterator["Derivation"]:
        yield self
        for p in self.premises:
            yield from p.walk()

    def rules(self) -> list[str]:
        return [d.rule for d in self.walk()]


# ---------------------------------------------------------------------------
# Checker


def _key(v: Value) -> Endpoint | str | None:
    if isinstance(v, Endpoint):
        return v
    if isinstance(v, Name):
        return v.name
    return None


def end_predicate(ctx: Mapping) -> bool:
    """Every entry is basic or a session type below ``end``."""
    return all(is_basic(s) or is_end_like(s) for s in ctx.values())


def _unfinished(ctx: Mapping) -> list[str]:
    return [str(k) for k, s in ctx.items() if not (is_basic(s) or is_end_like(s))]


def _discardable(s: Sort) -> bool:
    return is_basic(s) or is_end_like(s)


class _Checker:
    def err(self, rule, pos, reason, detail=""):
        return ProcessTypeError(rule, pos, reason, detail)

    def end(self, ctx: Context, pos, rule: str) -> Derivation:
        bad = _unfinished(ctx)
        if bad:
            raise self.err(rule, pos, Reason.UNFINISHED_SESSION, f"not finished: {', '.join(bad)}")
        return Derivation(T_END, (), ctx, AllEnd())

    def value(self, ctx: Context, v: Value, expected: Sort, pos, rule: str) -> Derivation:
        from .surface import pretty_value

        if isinstance(v, Lit):
            if not (is_basic(expected) and basic_subtype(v.sort, expected)):
                raise self.err(rule, pos, Reason.PAYLOAD_MISMATCH,
                               f"{pretty_value(v)} is {v.sort.value}, expected {_show_sort(expected)}")
            return Derivation(T_BASIC, (), Context(), HasSort(v, expected),
                              side=(("sub", v.sort, expected),))
        k = _key(v)
        if k not in ctx:
            raise self.err(rule, pos, Reason.UNBOUND_CHANNEL, f"{pretty_value(v)} is not in the context")
        actual = ctx[k]
        if not subtype(actual, expected):
            raise self.err(rule, pos, Reason.PAYLOAD_MISMATCH,
                           f"{pretty_value(v)} : {_show_sort(actual)} is not below {_show_sort(expected)}")
        return Derivation(T_SUB, (), Context({k: actual}), HasSort(v, expected),
                          side=(("sub", actual, expected),))

    def channel(self, ctx: Context, c: Value, pos, rule: str) -> tuple[Endpoint | str, LocalType]:
        from .surface import pretty_value

        k = _key(c)
        if k is None or k not in ctx:
            raise self.err(rule, pos, Reason.UNBOUND_CHANNEL, f"{pretty_value(c)} is not in the context")
        t = ctx[k]
        if not is_session(t):
            raise self.err(rule, pos, Reason.CHANNEL_MISMATCH, f"{pretty_value(c)} has basic sort {t.value}")
        try:
            return k, unfold(t)
        except IllFormed as e:
            raise self.err(rule, pos, Reason.CHANNEL_MISMATCH, str(e)) from None

    def proc(self, theta: dict, ctx: Context, p: Process, pos: tuple[str, ...]) -> Derivation:
        th = _theta(theta)
        if isinstance(p, Nil):
            return Derivation(T_NIL, th, ctx, p, (self.end(ctx, pos, T_NIL),))
        if isinstance(p, Err):
            raise self.err(T_NIL, pos, Reason.ERROR_PROCESS, "the error process is untypable")
        if isinstance(p, Par):
            return self.par(theta, ctx, p, pos)
        if isinstance(p, Select):
            return self.select(theta, ctx, p, pos)
        if isinstance(p, Offer):
            return self.offer(theta, ctx, p, pos)
        if isinstance(p, Def):
            return self.define(theta, ctx, p, pos)
        if isinstance(p, Call):
            return self.call(theta, ctx, p, pos)
        if isinstance(p, Restrict):
            return self.restrict(theta, ctx, p, pos)
        raise TypeError(f"not a process: {p!r}")

    def par(self, theta, ctx: Context, p: Par, pos) -> Derivation:
        lk, rk = free_keys(p.left), free_keys(p.right)
        shared = lk & rk
        if shared:
            raise self.err(T_PAR, pos, Reason.NON_LINEAR_SPLIT,
                           f"used on both sides: {', '.join(sorted(map(str, shared)))}")
        idle = Context({k: s for k, s in ctx.items() if k not in lk and k not in rk})
        if not end_predicate(idle):
            raise self.err(T_PAR, pos, Reason.UNFINISHED_SESSION,
                           f"used by neither side: {', '.join(_unfinished(idle))}")
        left = Context({k: s for k, s in ctx.items() if k not in rk})
        right = Context({k: s for k, s in ctx.items() if k in rk})
        return Derivation(T_PAR, _theta(theta), ctx, p, (
            self.proc(theta, left, p.left, pos + ("left",)),
            self.proc(theta, right, p.right, pos + ("right",)),
        ))

    def select(self, theta, ctx: Context, p: Select, pos) -> Derivation:
        ck, head = self.channel(ctx, p.chan, pos, T_SEL)
        if not isinstance(head, Internal) or head.peer != p.to:
            raise self.err(T_SEL, pos, Reason.CHANNEL_MISMATCH,
                           f"{ck} has type {_show_sort(ctx[ck])}, not an output to {p.to}")
        b = head.branch(p.label)
        if b is None:
            raise self.err(T_SEL, pos, Reason.LABEL_NOT_IN_TYPE, f"{p.label} not in {list(head.labels)}")
        chosen = Internal(p.to, (Branch(b.label, b.payload, b.cont),))
        chan_d = Derivation(T_SUB, (), Context({ck: ctx[ck]}), HasSort(p.chan, chosen),
                            side=(("sub", ctx[ck], chosen),))
        dk = _key(p.payload)
        if dk is not None and dk == ck:
            raise self.err(T_SEL, pos, Reason.NON_LINEAR_SPLIT, f"{ck} sent over itself")
        if is_end_like(b.payload):
            raise self.err(T_SEL, pos, Reason.END_DELEGATION, f"payload of {p.label} is below end")
        payload_d = self.value(ctx, p.payload, b.payload, pos, T_SEL)
        rest = ctx.without(*(k for k in (ck, dk) if k is not None)).update({ck: b.cont})
        cont = self.proc(theta, rest, p.cont, pos + (p.label,))
        return Derivation(T_SEL, _theta(theta), ctx, p, (chan_d, payload_d, cont),
                          side=(("notend", b.payload),))

    def offer(self, theta, ctx: Context, p: Offer, pos) -> Derivation:
        ck, head = self.channel(ctx, p.chan, pos, T_BRANCH)
        if not isinstance(head, External) or head.peer != p.frm:
            raise self.err(T_BRANCH, pos, Reason.CHANNEL_MISMATCH,
                           f"{ck} has type {_show_sort(ctx[ck])}, not an input from {p.frm}")
        missing = [l for l in head.labels if p.branch(l) is None]
        if missing:
            raise self.err(T_BRANCH, pos, Reason.MISSING_BRANCH, f"no branch for {missing}")
        base = ctx.without(ck)
        branches, premises = [], []
        for ob in p.branches:
            here = pos + (ob.label,)
            tb = head.branch(ob.label)
            if tb is not None:
                s, t = tb.payload, tb.cont
            else:
                guess = _infer_usage(ob, p.chan, base)
                if guess is None:
                    raise self.err(T_BRANCH, here, Reason.UNTYPABLE_BRANCH,
                                   f"cannot infer a type for {ck} in branch {ob.label}")
                s, t = guess
            bctx = base.update({ck: t})
            if ob.var == "_":
                if not _discardable(s):
                    raise self.err(T_BRANCH, here, Reason.UNFINISHED_SESSION,
                                   f"received {_show_sort(s)} is dropped")
            elif ob.var in base:
                raise self.err(T_BRANCH, here, Reason.SHADOWED_NAME, f"{ob.var} is already bound")
            else:
                bctx = bctx.update({ob.var: s})
            try:
                premises.append(self.proc(theta, bctx, ob.body, here))
            except ProcessTypeError as e:
                if tb is not None:
                    raise
                raise self.err(T_BRANCH, here, Reason.UNTYPABLE_BRANCH, str(e)) from None
            branches.append(Branch(ob.label, s, t))
        chosen = External(p.frm, tuple(branches))
        chan_d = Derivation(T_SUB, (), Context({ck: ctx[ck]}), HasSort(p.chan, chosen),
                            side=(("sub", ctx[ck], chosen),))
        return Derivation(T_BRANCH, _theta(theta), ctx, p, (chan_d, *premises))

    def define(self, theta, ctx: Context, p: Def, pos) -> Derivation:
        names = [x.name for x in p.params]
        if len(set(names)) != len(names):
            raise self.err(T_DEF, pos, Reason.SHADOWED_NAME, f"repeated parameter in {p.name}")
        inner = {**theta, p.name: tuple(x.sort for x in p.params)}
        body = self.proc(inner, Context({x.name: x.sort for x in p.params}), p.body, pos + (f"def {p.name}",))
        scope = self.proc(inner, ctx, p.scope, pos + ("in",))
        return Derivation(T_DEF, _theta(theta), ctx, p, (body, scope))

    def call(self, theta, ctx: Context, p: Call, pos) -> Derivation:
        if p.name not in theta:
            raise self.err(T_CALL, pos, Reason.UNBOUND_PROCESS, f"{p.name} is not defined")
        sorts = theta[p.name]
        if len(sorts) != len(p.args):
            raise self.err(T_CALL, pos, Reason.ARITY_MISMATCH,
                           f"{p.name} takes {len(sorts)} arguments, got {len(p.args)}")
        lookup = Derivation(T_X, _theta(theta), Context(), Signature(p.name, tuple(sorts)))
        used: list = []
        args = []
        for a, s in zip(p.args, sorts):
            k = _key(a)
            if k is not None and k in used:
                raise self.err(T_CALL, pos, Reason.NON_LINEAR_SPLIT, f"{k} passed twice")
            if is_end_like(s):
                raise self.err(T_CALL, pos, Reason.END_DELEGATION, f"parameter sort {_show_sort(s)} is below end")
            args.append(self.value(ctx, a, s, pos, T_CALL))
            if k is not None:
                used.append(k)
        rest = self.end(ctx.without(*used), pos, T_CALL)
        return Derivation(T_CALL, _theta(theta), ctx, p, (lookup, rest, *args),
                          side=tuple(("notend", s) for s in sorts))

    def restrict(self, theta, ctx: Context, p: Restrict, pos) -> Derivation:
        pass

        s = p.session
        if s in ctx.sessions():
            raise self.err(T_NEW, pos, Reason.SESSION_CLASH, f"{s} already occurs in the context")
        g = p.global_type
        if g is None:
            raise self.err(T_NEW, pos, Reason.ASSOCIATION_FAILURE, f"no global type given for {s}")
        diags = well_formed(g)
        if diags:
            raise self.err(T_NEW, pos, Reason.ASSOCIATION_FAILURE, "; ".join(map(str, diags)))
        if p.context is None:
            try:
                inner = projected_context(g, s)
            except (ProjectionUndefined, MergeFailure, IllFormed) as e:
                raise self.err(T_NEW, pos, Reason.ASSOCIATION_FAILURE, str(e)) from None
        else:
            inner = p.context
            report = check_association(g, inner, s)
            if set(inner) != set(inner.restrict(s)) or not report.holds:
                raise self.err(T_NEW, pos, Reason.ASSOCIATION_FAILURE,
                               report.failure or f"annotation mentions names other than {s}")
        body = self.proc(theta, ctx.compose(inner), p.body, pos + (f"new {s}",))
        return Derivation(T_NEW, _theta(theta), ctx, p, (body,),
                          side=(("assoc", g, inner, s), ("fresh", s)))


def _infer_usage(ob, chan: Value, ctx: Context) -> tuple[Sort, LocalType] | None:
    """Types for the binder and the channel of a branch the channel's type does
    not mention, read off from how the branch body uses the channel."""
    if ob.var != "_" and ob.var in free_vars(ob.body):
        return None
    t = _usage(ob.body, chan, ctx)
    return None if t is None else (Basic.UNIT, t)


def _usage(p: Process, chan: Value, ctx: Context, defs: Mapping[str, tuple] | None = None) -> LocalType | None:
    from .core import END

    defs = defs or {}

    if isinstance(p, Nil):
        return END
    if isinstance(p, Select) and p.chan == chan:
        if p.payload == chan:
            return None
        if isinstance(p.payload, Lit):
            s = p.payload.sort
        else:
            s = ctx.get(_key(p.payload))
            if s is None:
                return None
        cont = _usage(p.cont, chan, ctx, defs)
        return None if cont is None else Internal(p.to, (Branch(p.label, s, cont),))
    if isinstance(p, Offer) and p.chan == chan:
        out = []
        for b in p.branches:
            if b.var != "_" and b.var in free_vars(b.body):
                return None
            cont = _usage(b.body, chan, ctx, defs)
            if cont is None:
                return None
            out.append(Branch(b.label, Basic.UNIT, cont))
        return External(p.frm, tuple(out))
    if _key(chan) not in free_keys(p):
        return END
    if isinstance(p, Def):
        return _usage(p.scope, chan, ctx, {**defs, p.name: p.params})
    if isinstance(p, Call) and p.name in defs:
        spots = [i for i, a in enumerate(p.args) if a == chan]
        if len(spots) == 1:
            t = defs[p.name][spots[0]].sort
            return t if is_session(t) else None
    if isinstance(p, Select):
        return _usage(p.cont, chan, ctx, defs)
    if isinstance(p, Offer):
        found = {_usage(b.body, chan, ctx, defs) for b in p.branches}
        if len(found) == 1:
            return found.pop()
    return None


def typecheck(theta: Mapping[str, tuple[Sort, ...]] | None, ctx: Mapping | None, p: Process) -> Derivation:
    """Derive ``theta; ctx |- p`` or raise ProcessTypeError."""
    ctx = ctx if isinstance(ctx, Context) else Context(ctx or {})
    return _Checker().proc(dict(theta or {}), ctx, p, ())


def typable(theta, ctx, p) -> bool:
    try:
        typecheck(theta, ctx, p)
        return True
    except ProcessTypeError:
        return False


# ---------------------------------------------------------------------------
# Guarded definitions and single-role processes


def _defs(p: Process) -> Iterator[Def]:
    if isinstance(p, Def):
        yield p
        yield from _defs(p.body)
        yield from _defs(p.scope)
    elif isinstance(p, Select):
        yield from _defs(p.cont)
    elif isinstance(p, Offer):
        for b in p.branches:
            yield from _defs(b.body)
    elif isinstance(p, Par):
        yield from _defs(p.left)
        yield from _defs(p.right)
    elif isinstance(p, Restrict):
        yield from _defs(p.body)


def _unguarded_calls(p: Process, watched: frozenset[str]) -> Iterator[Call]:
    """Calls passing a watched variable before any prefix on that variable."""
    if isinstance(p, Call):
        if any(isinstance(a, Name) and a.name in watched for a in p.args):
            yield p
    elif isinstance(p, Select):
        rest = watched - {p.chan.name} if isinstance(p.chan, Name) else watched
        yield from _unguarded_calls(p.cont, rest)
    elif isinstance(p, Offer):
        rest = watched - {p.chan.name} if isinstance(p.chan, Name) else watched
        for b in p.branches:
            yield from _unguarded_calls(b.body, rest)
    elif isinstance(p, Par):
        yield from _unguarded_calls(p.left, watched)
        yield from _unguarded_calls(p.right, watched)
    elif isinstance(p, Def):
        yield from _unguarded_calls(p.body, watched)
        yield from _unguarded_calls(p.scope, watched)
    elif isinstance(p, Restrict):
        yield from _unguarded_calls(p.body, watched)


def guarded_definitions(p: Process) -> bool:
    """In every definition, calls mentioning a session-typed parameter occur
    only after an input or output on that parameter."""
    for d in _defs(p):
        watched = frozenset(x.name for x in d.params if is_session(x.sort))
        if next(_unguarded_calls(d.body, watched), None) is not None:
            return False
    return True


def _restrictions(p: Process) -> Iterator[Restrict]:
    if isinstance(p, Restrict):
        yield p
        yield from _restrictions(p.body)
    elif isinstance(p, Select):
        yield from _restrictions(p.cont)
    elif isinstance(p, Offer):
        for b in p.branches:
            yield from _restrictions(b.body)
    elif isinstance(p, Par):
        yield from _restrictions(p.left)
        yield from _restrictions(p.right)
    elif isinstance(p, Def):
        yield from _restrictions(p.body)
        yield from _restrictions(p.scope)


def _annotation(r: Restrict) -> Context | None:
    if r.context is not None:
        return r.context
    try:
        return projected_context(r.global_type, r.session)
    except (ProjectionUndefined, MergeFailure, IllFormed):
        return None


def only_plays_failure(p: Process, role: str, s: str, ctx: Context) -> str | None:
    """Why ``p`` does not only play ``role`` in ``s`` by ``ctx`` (None if it does)."""
    try:
        typecheck(None, ctx, p)
    except ProcessTypeError as e:
        return f"untypable: {e}"
    if not guarded_definitions(p):
        return "unguarded definition"
    fv = free_vars(p)
    if fv:
        return f"free variables {sorted(fv)}"
    ep = Endpoint(s, role)
    if ep not in ctx:
        return f"{ep} is not in the context"
    if is_end_like(ctx[ep]):
        return f"{ep} is already finished"
    rest = ctx.without(ep)
    if not end_predicate(rest):
        return f"other unfinished entries: {', '.join(_unfinished(rest))}"
    for r in _restrictions(p):
        ann = _annotation(r)
        if ann is None or not end_predicate(ann):
            return f"restriction of {r.session} is not end-only"
    return None


def only_plays(p: Process, role: str, s: str, ctx: Context) -> bool:
    return only_plays_failure(p, role, s, ctx) is None


# ---------------------------------------------------------------------------
# Single-session premises shared by the fidelity and property harnesses


def open_restriction(p: Process) -> tuple[str, GlobalType | None, Context | None, Process] | None:
    """Split a top-level ``new s : ... in body`` into its parts."""
    nf = normalize(p)
    if len(nf.restrictions) != 1:
        return None
    r = nf.restrictions[0]
    body = NormalForm((), nf.defs, nf.threads).to_process()
    return r.session, r.global_type, r.context, body


def role_components(ctx: Context, p: Process, s: str) -> dict[str, tuple[Process, Context]]:
    """Decompose ``p`` into one parallel component per role of ``s``."""
    for k in ctx:
        if not (isinstance(k, Endpoint) and k.session == s):
            raise PremiseViolation(f"context entry {k} is not an endpoint of {s}")
    nf = normalize(p)
    roles = [ep.role for ep in ctx.endpoints(s)]
    groups: dict[str, list] = {r: [] for r in roles}
    for t in nf.threads:
        played = {e.role for e in free_endpoints(t) if e.session == s}
        if len(played) != 1:
            from .surface import pretty

            raise PremiseViolation(f"thread {pretty(t)} plays {sorted(played) or 'no role'} in {s}")
        (r,) = played
        if r not in groups:
            raise PremiseViolation(f"role {r} has no context entry")
        groups[r].append(t)
    by_name = {d.name: d for d in nf.defs}
    owner: dict[str, str] = {}
    needed: dict[str, set[str]] = {}
    for r, ts in groups.items():
        todo = set().union(*(free_process_vars(t) for t in ts)) if ts else set()
        seen: set[str] = set()
        while todo:
            x = todo.pop()
            if x in seen or x not in by_name:
                continue
            seen.add(x)
            todo |= free_process_vars(by_name[x].body)
        for x in seen:
            if owner.setdefault(x, r) != r:
                raise PremiseViolation(f"definition {x} is shared by roles {owner[x]} and {r}")
        needed[r] = seen
    out = {}
    for r in roles:
        body = par(*groups[r])
        for d in reversed(nf.defs):
            if d.name in needed[r]:
                body = Def(d.name, d.params, d.body, body)
        used = set()
        for t in groups[r]:
            used |= {e.session for e in free_endpoints(t)}
        for rd in reversed(nf.restrictions):
            if rd.session in used:
                body = Restrict(rd.session, rd.global_type, rd.context, body)
        out[r] = (body, Context({Endpoint(s, r): ctx[Endpoint(s, r)]}))
    for rd in nf.restrictions:
        users = [r for r in roles if rd.session in {e.session for t in groups[r] for e in free_endpoints(t)}]
        if len(users) > 1:
            raise PremiseViolation(f"session {rd.session} is shared by roles {users}")
    return out


def check_premises(ctx: Context, p: Process, s: str, g: GlobalType | None) -> dict[str, tuple[Process, Context]]:
    """Hypotheses of session fidelity and of process deadlock-freedom/liveness."""
    if g is None:
        raise PremiseViolation(f"no global type for {s}")
    report = check_association(g, ctx, s)
    if not report.holds:
        raise PremiseViolation(f"context not associated: {report.failure}")
    try:
        typecheck(None, ctx, p)
    except ProcessTypeError as e:
        raise PremiseViolation(f"process untypable: {e}") from None
    comps = role_components(ctx, p, s)
    for r, (q, cq) in comps.items():
        if normalize(q).is_nil:
            if not end_predicate(cq):
                raise PremiseViolation(f"component of {r} is 0 but {Endpoint(s, r)} is unfinished")
            continue
        why = only_plays_failure(q, r, s, cq)
        if why:
            raise PremiseViolation(f"component of {r} does not only play {r}: {why}")
    return comps


def _resolve(ctx: Context | None, p: Process, s: str | None, g: GlobalType | None):
    """Accept either an explicit (ctx, p, s, g) or ``new s : G in p``."""
    if ctx is None:
        opened = open_restriction(p)
        if opened is None:
            raise PremiseViolation("expected a single top-level restriction")
        s2, g2, c2, body = opened
        if s is not None and s != s2:
            raise PremiseViolation(f"restricted session is {s2}, not {s}")
        if g2 is None:
            raise PremiseViolation(f"no global type for {s2}")
        ctx = c2 if c2 is not None else projected_context(g2, s2)
        return ctx, body, s2, g if g is not None else g2
    if s is None:
        sessions = ctx.sessions()
        if len(sessions) != 1:
            raise PremiseViolation("cannot tell which session to follow")
        s = sessions[0]
    return ctx, p, s, g


# ---------------------------------------------------------------------------
# Session fidelity


@dataclass
class FidelityReport:
    holds: bool
    states: int
    transitions: list[str] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"holds": self.holds, "states": self.states,
                "transitions": self.transitions, "failures": self.failures}


def _label_of(r) -> Transmission:
    return parse_label(r.label)


def _fidelity_successors(ctx, nf, g, s, call_depth):
    """Pairs (context, process, global type) reachable by some calls then one
    communication mirrored by the context, with the premises re-established."""
    found = []
    seen = {nf.key()}
    frontier = [nf]
    for _ in range(call_depth + 1):
        nxt = []
        for cur in frontier:
            for r in steps(cur):
                if r.rule == "R-call":
                    k = r.target.key()
                    if k not in seen:
                        seen.add(k)
                        nxt.append(r.target)
                    continue
                if r.rule != "R-comm":
                    continue
                lab = _label_of(r)
                if lab.session != s:
                    continue
                cstep = next((c for c in context_transmissions(ctx, s) if c.label == lab), None)
                if cstep is None:
                    continue
                for gs in global_steps(g, s):
                    if gs.label != lab:
                        continue
                    try:
                        check_premises(cstep.target, r.target.to_process(), s, gs.target)
                    except PremiseViolation:
                        continue
                    found.append((lab, cstep.target, r.target, gs.target))
                    break
        frontier = nxt
        if not frontier:
            break
    return found


def session_fidelity_harness(ctx: Context | None, p: Process, s: str | None = None,
                             global_type: GlobalType | None = None, max_states: int = 5000,
                             call_depth: int = 32) -> FidelityReport:
    """Whenever the context can move on ``s``, check that the process follows
    with some mirrored move after which the premises hold again.  Explores
    every such pair of moves reachable from the start.

    With ``ctx`` None, ``p`` must be ``new s : G in ...``.  Raises
    PremiseViolation when the hypotheses fail at the start.
    """
    ctx, p, s, g = _resolve(ctx, p, s, global_type)
    check_premises(ctx, p, s, g)
    start = (ctx, normalize(p), g)
    seen = {(ctx.key(), start[1].key(), canonical(g))}
    queue = deque([(start, [])])
    report = FidelityReport(True, 0)
    while queue:
        (c, nf, gi), trace = queue.popleft()
        report.states += 1
        if report.states > max_states:
            report.failures.append(f"gave up after {max_states} states")
            report.holds = False
            break
        if not context_transmissions(c, s):
            continue
        succ = _fidelity_successors(c, nf, gi, s, call_depth)
        if not succ:
            path = " ".join(trace) or "<start>"
            report.failures.append(f"after [{path}] the context moves but the process cannot follow")
            report.holds = False
            continue
        for lab, c2, nf2, g2 in succ:
            report.transitions.append(" ".join(trace + [str(lab)]))
            k = (c2.key(), nf2.key(), canonical(g2))
            if k not in seen:
                seen.add(k)
                queue.append(((c2, nf2, g2), trace + [str(lab)]))
    report.transitions = sorted(set(report.transitions))
    return report


# ---------------------------------------------------------------------------
# Deadlock-freedom and liveness of processes


@dataclass
class ProcessProperties:
    deadlock_free: bool
    live: bool
    states: int
    witness: str | None = None

    def to_json(self) -> dict:
        return {"deadlock_free": self.deadlock_free, "live": self.live,
                "states": self.states, "witness": self.witness}


def process_graph(p: Process | NormalForm, limit: int = 100_000):
    """Every normal form reachable from ``p``, with edges labelled by the
    printed threads that took part in each reduction."""
    from .lts import LimitExceeded
    from .surface import pretty

    start = p if isinstance(p, NormalForm) else normalize(p)
    nodes = [start]
    index = {start.key(): 0}
    edges: list[tuple[int, frozenset[str], int]] = []
    queue = deque([0])
    while queue:
        n = queue.popleft()
        cur = nodes[n]
        for r in steps(cur):
            k = r.target.key()
            if k not in index:
                if len(nodes) >= limit:
                    raise LimitExceeded(limit)
                index[k] = len(nodes)
                nodes.append(r.target)
                queue.append(index[k])
            actors = frozenset(pretty(cur.threads[i]) for i in r.actors)
            edges.append((n, actors, index[k]))
    return nodes, edges


def process_properties(p: Process | NormalForm, limit: int = 100_000) -> ProcessProperties:
    """Decide deadlock-freedom and liveness directly on the reduction graph.

    A prefix thread is live at a state if some path from there fires it.
    Threads untouched by a reduction persist unchanged, so it is enough to
    reach any state where a reduction involves an identical thread.
    """
    from .surface import pretty

    nodes, edges = process_graph(p, limit)
    has_out = {e[0] for e in edges}
    witness = None
    df = True
    for n, nf in enumerate(nodes):
        if n not in has_out and not nf.is_nil:
            df = False
            witness = f"stuck at {pretty(nf.to_process())}"
            break
    preds: dict[int, list[int]] = {}
    fires: dict[str, set[int]] = {}
    for a, actors, b in edges:
        preds.setdefault(b, []).append(a)
        for t in actors:
            fires.setdefault(t, set()).add(a)
    can_fire: dict[str, set[int]] = {}

    def reach(t: str) -> set[int]:
        if t not in can_fire:
            seen = set(fires.get(t, ()))
            todo = list(seen)
            while todo:
                m = todo.pop()
                for q in preds.get(m, ()):
                    if q not in seen:
                        seen.add(q)
                        todo.append(q)
            can_fire[t] = seen
        return can_fire[t]

    live = True
    for n, nf in enumerate(nodes):
        for t in nf.threads:
            if not isinstance(t, (Select, Offer)):
                continue
            text = pretty(t)
            if n not in reach(text):
                live = False
                witness = witness or f"{text} never fires from {pretty(nf.to_process())}"
                break
        if not live:
            break
    return ProcessProperties(df, live, len(nodes), witness)


def typed_process_properties(ctx: Context | None, p: Process, s: str | None = None,
                             global_type: GlobalType | None = None,
                             limit: int = 100_000) -> ProcessProperties:
    """Check the premises, then decide both properties on the reduction graph."""
    if ctx is None and next(_restrictions(p), None) is None and typable(None, Context(), p):
        # no session at all, so there is nothing to associate
        return process_properties(p, limit)
    ctx, p, s, g = _resolve(ctx, p, s, global_type)
    check_premises(ctx, p, s, g)
    return process_properties(p, limit)


# ---------------------------------------------------------------------------
# Subject reduction


@dataclass
class ReductionCheck:
    index: int
    rule: str
    label: str
    outcome: str  # "ok", "NotFound" or "Refuted"
    detail: str = ""
    context: Context | None = None

    def to_json(self) -> dict:
        from .surface import pretty

        return {"step": self.index, "rule": self.rule, "label": self.label, "outcome": self.outcome,
                "detail": self.detail, "context": pretty(self.context) if self.context is not None else None}


@dataclass
class SubjectReductionReport:
    checks: list[ReductionCheck] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return all(c.outcome == "ok" for c in self.checks)

    @property
    def refuted(self) -> bool:
        return any(c.outcome == "Refuted" for c in self.checks)

    def to_json(self) -> dict:
        return {"holds": self.holds, "checks": [c.to_json() for c in self.checks]}


def _open_restrictions(nf: NormalForm, ctx: Context, globals_: dict[str, GlobalType]):
    """Move top-level restrictions into the context, tracking their global types."""
    if not nf.restrictions:
        return nf, ctx, globals_
    body = NormalForm((), nf.defs, nf.threads).to_process()
    taken = set(ctx.sessions()) | set(globals_)
    ctx2, g2 = ctx, dict(globals_)
    for r in nf.restrictions:
        name = r.session
        if name in taken:
            name = fresh_name(name, taken | {x.session for x in nf.restrictions})
            body = _rename_many(body, {r.session: name})
        taken.add(name)
        if r.global_type is None:
            raise PremiseViolation(f"restriction of {r.session} has no global type")
        if r.context is not None:
            inner = Context({Endpoint(name, k.role): t for k, t in r.context.items()})
        else:
            inner = projected_context(r.global_type, name)
        ctx2 = ctx2.compose(inner)
        g2[name] = r.global_type
    return normalize(body), ctx2, g2


def _associated_all(ctx: Context, globals_: dict[str, GlobalType]) -> bool:
    for s in set(ctx.sessions()) | set(globals_):
        g = globals_.get(s)
        if g is None or not check_association(g, ctx.restrict(s), s).holds:
            return False
    return True


def _context_moves(ctx: Context, globals_: dict[str, GlobalType], horizon: int):
    """Contexts reachable in at most ``horizon`` transmissions (any session),
    breadth first, each with every matching choice of global types."""
    level = [(ctx, globals_, ())]
    seen = {(ctx.key(), tuple(sorted((s, canonical(g)) for s, g in globals_.items())))}
    yield from level
    for _ in range(horizon):
        nxt = []
        for c, gs, trace in level:
            for s in c.sessions():
                if s not in gs:
                    continue
                for st in context_transmissions(c, s):
                    for g_step in global_steps(gs[s], s):
                        if g_step.label != st.label:
                            continue
                        g2 = {**gs, s: g_step.target}
                        k = (st.target.key(), tuple(sorted((x, canonical(y)) for x, y in g2.items())))
                        if k in seen:
                            continue
                        seen.add(k)
                        nxt.append((st.target, g2, trace + (str(st.label),)))
        yield from nxt
        level = nxt


def subject_reduction_harness(theta: Mapping | None, ctx: Mapping | None, p: Process, steps_: int = 6,
                              seed: int = 0, horizon: int = 4,
                              globals_: Mapping[str, GlobalType] | None = None) -> SubjectReductionReport:
    """Follow ``steps_`` seeded reductions of ``p``; after each, look for a
    context reachable in at most ``horizon`` transmissions that types the
    reductum with every session still associated.

    Top-level restrictions are moved into the context as they appear.  An
    error or dynamic fault in a reductum is reported as Refuted; failing to
    find a context within the horizon as NotFound.
    """
    theta = dict(theta or {})
    ctx = ctx if isinstance(ctx, Context) else Context(ctx or {})
    gl = dict(globals_ or {})
    for s in ctx.sessions():
        if s not in gl:
            raise PremiseViolation(f"no global type for session {s}")
    nf, ctx, gl = _open_restrictions(normalize(p), ctx, gl)
    typecheck(theta, ctx, nf.to_process())
    if not _associated_all(ctx, gl):
        raise PremiseViolation("some session is not associated with its global type")
    rng = random.Random(seed)
    report = SubjectReductionReport()
    for i in range(1, steps_ + 1):
        try:
            succ = steps(nf)
        except DynamicFault as e:
            report.checks.append(ReductionCheck(i, "fault", "", "Refuted", str(e)))
            break
        if not succ:
            break
        r = rng.choice(succ)
        if has_error(r.target):
            report.checks.append(ReductionCheck(i, r.rule, r.label, "Refuted", "reductum has an error"))
            break
        nf2, ctx_open, gl_open = _open_restrictions(r.target, ctx, gl)
        proc = nf2.to_process()
        match = None
        for c2, g2, _trace in _context_moves(ctx_open, gl_open, horizon):
            if _associated_all(c2, g2) and typable(theta, c2, proc):
                match = (c2, g2)
                break
        if match is None:
            report.checks.append(ReductionCheck(i, r.rule, r.label, "NotFound",
                                                f"no context within {horizon} transmissions types the reductum"))
            break
        ctx, gl = match
        nf = nf2
        report.checks.append(ReductionCheck(i, r.rule, r.label, "ok", "", ctx))
    return report
