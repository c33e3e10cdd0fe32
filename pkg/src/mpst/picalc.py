"""Multiparty session pi-calculus: process syntax, structural-congruence
normal forms, one-step reduction and a seeded executor."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Union

from .core import Basic, Context, Endpoint, GlobalType, Sort


class DynamicFault(RuntimeError):
    """An untyped process misused a value (e.g. selected on an integer)."""


# ---------------------------------------------------------------------------
# Syntax


@dataclass(frozen=True)
class Lit:
    value: object
    sort: Basic


@dataclass(frozen=True)
class Name:
    """A value variable."""

    name: str


Value = Union[Lit, Name, Endpoint]
UNIT = Lit((), Basic.UNIT)


def literal(v: object) -> Lit:
    """Wrap a Python value, inferring its minimal sort."""
    if v == () or v is None:
        return UNIT
    if isinstance(v, bool):
        return Lit(v, Basic.BOOL)
    if isinstance(v, int):
        return Lit(v, Basic.INT)
    if isinstance(v, float):
        return Lit(v, Basic.REAL)
    if isinstance(v, str):
        return Lit(v, Basic.STR)
    raise TypeError(f"no basic sort for {v!r}")


@dataclass(frozen=True)
class Nil:
    pass


@dataclass(frozen=True)
class Err:
    pass


@dataclass(frozen=True)
class Restrict:
    """``new s : annotation in body``; the annotation is a global type, a
    context, or both (context checked against the global type)."""

    session: str
    global_type: GlobalType | None
    context: Context | None
    body: "Process"


@dataclass(frozen=True)
class Select:
    chan: Value
    to: str
    label: str
    payload: Value
    cont: "Process"


@dataclass(frozen=True)
class OfferBranch:
    label: str
    var: str
    body: "Process"


@dataclass(frozen=True)
class Offer:
    chan: Value
    frm: str
    branches: tuple[OfferBranch, ...]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(b.label for b in self.branches)

    def branch(self, label: str) -> OfferBranch | None:
        for b in self.branches:
            if b.label == label:
                return b
        return None


@dataclass(frozen=True)
class Param:
    name: str
    sort: Sort


@dataclass(frozen=True)
class Def:
    name: str
    params: tuple[Param, ...]
    body: "Process"
    scope: "Process"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple[Value, ...]


@dataclass(frozen=True)
class Par:
    left: "Process"
    right: "Process"


Process = Union[Nil, Err, Restrict, Select, Offer, Def, Call, Par]
NIL = Nil()


def par(*ps: Process) -> Process:
    """Right-nested parallel composition (``0`` when empty)."""
    ps = [p for p in ps]
    if not ps:
        return NIL
    out = ps[-1]
    for p in reversed(ps[:-1]):
        out = Par(p, out)
    return out


# ---------------------------------------------------------------------------
# Free names


def value_sessions(v: Value) -> set[str]:
    return {v.session} if isinstance(v, Endpoint) else set()


def free_sessions(p: Process) -> set[str]:
    if isinstance(p, Select):
        return value_sessions(p.chan) | value_sessions(p.payload) | free_sessions(p.cont)
    if isinstance(p, Offer):
        out = value_sessions(p.chan)
        for b in p.branches:
            out |= free_sessions(b.body)
        return out
    if isinstance(p, Par):
        return free_sessions(p.left) | free_sessions(p.right)
    if isinstance(p, Restrict):
        return free_sessions(p.body) - {p.session}
    if isinstance(p, Def):
        return free_sessions(p.body) | free_sessions(p.scope)
    if isinstance(p, Call):
        out = set()
        for a in p.args:
            out |= value_sessions(a)
        return out
    return set()


def free_endpoints(p: Process) -> set[Endpoint]:
    if isinstance(p, Select):
        out = {v for v in (p.chan, p.payload) if isinstance(v, Endpoint)}
        return out | free_endpoints(p.cont)
    if isinstance(p, Offer):
        out = {p.chan} if isinstance(p.chan, Endpoint) else set()
        for b in p.branches:
            out |= free_endpoints(b.body)
        return out
    if isinstance(p, Par):
        return free_endpoints(p.left) | free_endpoints(p.right)
    if isinstance(p, Restrict):
        return {e for e in free_endpoints(p.body) if e.session != p.session}
    if isinstance(p, Def):
        return free_endpoints(p.body) | free_endpoints(p.scope)
    if isinstance(p, Call):
        return {a for a in p.args if isinstance(a, Endpoint)}
    return set()


def _value_vars(v: Value) -> set[str]:
    return {v.name} if isinstance(v, Name) else set()


def free_vars(p: Process) -> set[str]:
    """Free value variables."""
    if isinstance(p, Select):
        return _value_vars(p.chan) | _value_vars(p.payload) | free_vars(p.cont)
    if isinstance(p, Offer):
        out = _value_vars(p.chan)
        for b in p.branches:
            out |= free_vars(b.body) - {b.var}
        return out
    if isinstance(p, Par):
        return free_vars(p.left) | free_vars(p.right)
    if isinstance(p, Restrict):
        return free_vars(p.body)
    if isinstance(p, Def):
        return (free_vars(p.body) - {x.name for x in p.params}) | free_vars(p.scope)
    if isinstance(p, Call):
        out = set()
        for a in p.args:
            out |= _value_vars(a)
        return out
    return set()


def free_keys(p: Process) -> set[Endpoint | str]:
    """Free endpoints and free variables: the context entries ``p`` uses."""
    return set(free_endpoints(p)) | free_vars(p)


def free_process_vars(p: Process) -> set[str]:
    if isinstance(p, Call):
        return {p.name}
    if isinstance(p, Select):
        return free_process_vars(p.cont)
    if isinstance(p, Offer):
        out: set[str] = set()
        for b in p.branches:
            out |= free_process_vars(b.body)
        return out
    if isinstance(p, Par):
        return free_process_vars(p.left) | free_process_vars(p.right)
    if isinstance(p, Restrict):
        return free_process_vars(p.body)
    if isinstance(p, Def):
        return (free_process_vars(p.body) | free_process_vars(p.scope)) - {p.name}
    return set()


def all_sessions(p: Process) -> set[str]:
    """Every session name occurring in ``p``, bound or free."""
    if isinstance(p, Restrict):
        return {p.session} | all_sessions(p.body)
    if isinstance(p, Select):
        return value_sessions(p.chan) | value_sessions(p.payload) | all_sessions(p.cont)
    if isinstance(p, Offer):
        out = value_sessions(p.chan)
        for b in p.branches:
            out |= all_sessions(b.body)
        return out
    if isinstance(p, Par):
        return all_sessions(p.left) | all_sessions(p.right)
    if isinstance(p, Def):
        return all_sessions(p.body) | all_sessions(p.scope)
    if isinstance(p, Call):
        out = set()
        for a in p.args:
            out |= value_sessions(a)
        return out
    return set()


def all_def_names(p: Process) -> set[str]:
    if isinstance(p, Def):
        return {p.name} | all_def_names(p.body) | all_def_names(p.scope)
    if isinstance(p, Call):
        return {p.name}
    if isinstance(p, Select):
        return all_def_names(p.cont)
    if isinstance(p, Offer):
        out: set[str] = set()
        for b in p.branches:
            out |= all_def_names(b.body)
        return out
    if isinstance(p, Par):
        return all_def_names(p.left) | all_def_names(p.right)
    if isinstance(p, Restrict):
        return all_def_names(p.body)
    return set()


def fresh_name(base: str, taken: set[str]) -> str:
    stem = base.split("_")[0] or base
    k = 1
    while f"{stem}_{k}" in taken:
        k += 1
    return f"{stem}_{k}"


# ---------------------------------------------------------------------------
# Renaming and substitution


def _rename_value(v: Value, old: str, new: str) -> Value:
    if isinstance(v, Endpoint) and v.session == old:
        return Endpoint(new, v.role)
    return v


def _rename_ctx(ctx: Context | None, old: str, new: str) -> Context | None:
    if ctx is None:
        return None
    return Context([(_rename_value(k, old, new) if isinstance(k, Endpoint) else k, v) for k, v in ctx.items()])


def rename_session(p: Process, old: str, new: str) -> Process:
    """Rename free occurrences of session ``old`` to ``new`` (``new`` must be fresh)."""
    if old == new:
        return p
    if isinstance(p, Select):
        return Select(_rename_value(p.chan, old, new), p.to, p.label,
                      _rename_value(p.payload, old, new), rename_session(p.cont, old, new))
    if isinstance(p, Offer):
        return Offer(_rename_value(p.chan, old, new), p.frm,
                     tuple(OfferBranch(b.label, b.var, rename_session(b.body, old, new)) for b in p.branches))
    if isinstance(p, Par):
        return Par(rename_session(p.left, old, new), rename_session(p.right, old, new))
    if isinstance(p, Restrict):
        if p.session == old:
            return p
        return Restrict(p.session, p.global_type, p.context, rename_session(p.body, old, new))
    if isinstance(p, Def):
        return Def(p.name, p.params, rename_session(p.body, old, new), rename_session(p.scope, old, new))
    if isinstance(p, Call):
        return Call(p.name, tuple(_rename_value(a, old, new) for a in p.args))
    return p


def rebind_session(r: Restrict, new: str) -> Restrict:
    """Alpha-rename the binder of a restriction."""
    return Restrict(new, r.global_type, _rename_ctx(r.context, r.session, new),
                    rename_session(r.body, r.session, new))


def rename_call(p: Process, old: str, new: str) -> Process:
    """Rename free calls of process variable ``old``."""
    if isinstance(p, Call):
        return Call(new, p.args) if p.name == old else p
    if isinstance(p, Select):
        return Select(p.chan, p.to, p.label, p.payload, rename_call(p.cont, old, new))
    if isinstance(p, Offer):
        return Offer(p.chan, p.frm, tuple(OfferBranch(b.label, b.var, rename_call(b.body, old, new))
                                          for b in p.branches))
    if isinstance(p, Par):
        return Par(rename_call(p.left, old, new), rename_call(p.right, old, new))
    if isinstance(p, Restrict):
        return Restrict(p.session, p.global_type, p.context, rename_call(p.body, old, new))
    if isinstance(p, Def):
        if p.name == old:
            return p
        return Def(p.name, p.params, rename_call(p.body, old, new), rename_call(p.scope, old, new))
    return p


def substitute(p: Process, bindings: dict[str, Value]) -> Process:
    """Capture-avoiding substitution of closed values for free variables."""
    if not bindings:
        return p
    incoming = set().union(*(value_sessions(v) for v in bindings.values()))

    def val(v: Value) -> Value:
        return bindings.get(v.name, v) if isinstance(v, Name) else v

    def drop(names: Iterable[str]) -> dict[str, Value]:
        names = set(names)
        return {k: v for k, v in bindings.items() if k not in names}

    if isinstance(p, Select):
        return Select(val(p.chan), p.to, p.label, val(p.payload), substitute(p.cont, bindings))
    if isinstance(p, Offer):
        return Offer(val(p.chan), p.frm, tuple(
            OfferBranch(b.label, b.var, substitute(b.body, drop([b.var]))) for b in p.branches))
    if isinstance(p, Par):
        return Par(substitute(p.left, bindings), substitute(p.right, bindings))
    if isinstance(p, Restrict):
        if p.session in incoming:
            taken = incoming | all_sessions(p)
            p = rebind_session(p, fresh_name(p.session, taken))
        return Restrict(p.session, p.global_type, p.context, substitute(p.body, bindings))
    if isinstance(p, Def):
        return Def(p.name, p.params, substitute(p.body, drop(x.name for x in p.params)),
                   substitute(p.scope, bindings))
    if isinstance(p, Call):
        return Call(p.name, tuple(val(a) for a in p.args))
    return p


# ---------------------------------------------------------------------------
# Normal forms


@dataclass(frozen=True)
class DefDecl:
    name: str
    params: tuple[Param, ...]
    body: Process


@dataclass(frozen=True)
class RestrictDecl:
    session: str
    global_type: GlobalType | None
    context: Context | None


Thread = Union[Select, Offer, Call, Err]


@dataclass(frozen=True)
class NormalForm:
    """``new s1 ... sn`` around ``def D1 ... Dm in`` a multiset of threads."""

    restrictions: tuple[RestrictDecl, ...] = ()
    defs: tuple[DefDecl, ...] = ()
    threads: tuple[Thread, ...] = ()

    @property
    def is_nil(self) -> bool:
        return not self.threads

    def def_named(self, name: str) -> DefDecl | None:
        for d in self.defs:
            if d.name == name:
                return d
        return None

    def to_process(self) -> Process:
        body = par(*self.threads)
        for d in reversed(self.defs):
            body = Def(d.name, d.params, d.body, body)
        for r in reversed(self.restrictions):
            body = Restrict(r.session, r.global_type, r.context, body)
        return body

    def key(self) -> tuple:
        """Key identifying the normal form up to reordering and renaming of
        restricted sessions."""
        return self._key

    @cached_property
    def _key(self) -> tuple:
        from .surface import pretty

        bound = [r.session for r in self.restrictions]
        masked = {s: "?" for s in bound}
        order = sorted(self.threads, key=lambda t: pretty(_rename_many(t, masked)))
        canon: dict[str, str] = {}
        for t in order:
            for s in _sessions_in_order(t):
                if s in masked and s not in canon:
                    canon[s] = f"#{len(canon)}"
        for s in sorted(bound):
            canon.setdefault(s, f"#{len(canon)}")

        def show(p: Process) -> str:
            return pretty(_rename_many(p, canon))

        restr = tuple(sorted(
            (canon[r.session],
             pretty(r.global_type) if r.global_type is not None else "",
             pretty(_rename_ctx(r.context, r.session, canon[r.session])) if r.context is not None else "")
            for r in self.restrictions))
        defs = tuple(f"{d.name}/{len(d.params)}=" + show(d.body) for d in self.defs)
        threads = tuple(sorted(show(t) for t in self.threads))
        return (restr, defs, threads)


def _rename_many(p: Process, mapping: dict[str, str]) -> Process:
    """Simultaneous renaming of free sessions."""
    if not mapping:
        return p
    staged = {old: f"%{i}" for i, old in enumerate(mapping)}
    for old, tmp in staged.items():
        p = rename_session(p, old, tmp)
    for old, tmp in staged.items():
        p = rename_session(p, tmp, mapping[old])
    return p


def _sessions_in_order(p: Process) -> Iterator[str]:
    if isinstance(p, Select):
        for v in (p.chan, p.payload):
            if isinstance(v, Endpoint):
                yield v.session
        yield from _sessions_in_order(p.cont)
    elif isinstance(p, Offer):
        if isinstance(p.chan, Endpoint):
            yield p.chan.session
        for b in p.branches:
            yield from _sessions_in_order(b.body)
    elif isinstance(p, Call):
        for a in p.args:
            if isinstance(a, Endpoint):
                yield a.session
    elif isinstance(p, Par):
        yield from _sessions_in_order(p.left)
        yield from _sessions_in_order(p.right)
    elif isinstance(p, Def):
        yield from _sessions_in_order(p.body)
        yield from _sessions_in_order(p.scope)
    elif isinstance(p, Restrict):
        yield from _sessions_in_order(p.body)


def normalize(p: Process | NormalForm) -> NormalForm:
    """Flatten parallel composition, float restrictions and definitions to the
    top (renaming bound names apart), drop ``0`` threads and unused binders."""
    if isinstance(p, NormalForm):
        p = p.to_process()
    taken_s = free_sessions(p)
    taken_d = free_process_vars(p)
    restrictions: list[RestrictDecl] = []
    defs: list[DefDecl] = []
    threads: list[Thread] = []

    def walk(q: Process) -> None:
        if isinstance(q, Nil):
            return
        if isinstance(q, Par):
            walk(q.left)
            walk(q.right)
        elif isinstance(q, Restrict):
            if q.session in taken_s:
                q = rebind_session(q, fresh_name(q.session, taken_s | all_sessions(q)))
            taken_s.add(q.session)
            restrictions.append(RestrictDecl(q.session, q.global_type, q.context))
            walk(q.body)
        elif isinstance(q, Def):
            if q.name in taken_d:
                new = fresh_name(q.name, taken_d | all_def_names(q))
                q = Def(new, q.params, rename_call(q.body, q.name, new), rename_call(q.scope, q.name, new))
            taken_d.add(q.name)
            defs.append(DefDecl(q.name, q.params, q.body))
            walk(q.scope)
        else:
            threads.append(q)

    walk(p)
    # garbage-collect definitions and restrictions nothing refers to
    live_defs: set[str] = set()
    frontier = set().union(*(free_process_vars(t) for t in threads)) if threads else set()
    by_name = {d.name: d for d in defs}
    while frontier:
        x = frontier.pop()
        if x in live_defs or x not in by_name:
            continue
        live_defs.add(x)
        frontier |= free_process_vars(by_name[x].body)
    kept_defs = tuple(d for d in defs if d.name in live_defs)
    used = set().union(*(free_sessions(t) for t in threads)) if threads else set()
    for d in kept_defs:
        used |= free_sessions(d.body)
    kept_restr = tuple(r for r in restrictions if r.session in used)
    from .surface import pretty

    ordered = tuple(sorted(threads, key=pretty))
    return NormalForm(kept_restr, kept_defs, ordered)


def structurally_congruent(p: Process, q: Process) -> bool:
    return normalize(p).key() == normalize(q).key()


# ---------------------------------------------------------------------------
# Reduction


@dataclass(frozen=True)
class Reduction:
    rule: str
    target: NormalForm
    # indices (into the source threads) of the threads that took part
    actors: tuple[int, ...] = field(default=(), compare=False)
    label: str = ""


def _check_channel(t: Thread) -> None:
    if isinstance(t, (Select, Offer)) and not isinstance(t.chan, Endpoint):
        raise DynamicFault(f"prefix on non-channel value {t.chan!r}")


def _wrap(nf: NormalForm, rest: list[Process], new: list[Process]) -> NormalForm:
    body = par(*rest, *new)
    for d in reversed(nf.defs):
        body = Def(d.name, d.params, d.body, body)
    for r in reversed(nf.restrictions):
        body = Restrict(r.session, r.global_type, r.context, body)
    return normalize(body)


def steps(nf: NormalForm) -> list[Reduction]:
    """All one-step reductions of a normal form, deduplicated up to congruence."""
    out: list[Reduction] = []
    threads = nf.threads
    for i, t in enumerate(threads):
        _check_channel(t)
    for i, recv in enumerate(threads):
        if not isinstance(recv, Offer):
            continue
        for j, send in enumerate(threads):
            if not isinstance(send, Select):
                continue
            assert isinstance(recv.chan, Endpoint) and isinstance(send.chan, Endpoint)
            if (send.chan.session != recv.chan.session or send.chan.role != recv.frm
                    or recv.chan.role != send.to):
                continue
            lab = f"{send.chan.session}:{send.chan.role}->{recv.chan.role}:{send.label}"
            b = recv.branch(send.label)
            if b is None:
                out.append(Reduction("R-err", _wrap(nf, _without(threads, i, j), [Err()]), (i, j), lab))
                continue
            if isinstance(send.payload, Name):
                raise DynamicFault(f"sending unbound variable {send.payload.name}")
            received = substitute(b.body, {b.var: send.payload})
            out.append(Reduction("R-comm", _wrap(nf, _without(threads, i, j), [received, send.cont]),
                                 (i, j), lab))
    for i, t in enumerate(threads):
        if not isinstance(t, Call):
            continue
        d = nf.def_named(t.name)
        if d is None:
            continue
        if len(d.params) != len(t.args):
            raise DynamicFault(f"{t.name} expects {len(d.params)} arguments, got {len(t.args)}")
        body = substitute(d.body, {x.name: a for x, a in zip(d.params, t.args)})
        out.append(Reduction("R-call", _wrap(nf, _without(threads, i), [body]), (i,), t.name))
    if len(out) < 2:
        return out
    seen = set()
    unique = []
    for r in sorted(out, key=lambda r: (r.rule, r.label, r.target.key())):
        k = (r.rule, r.label, r.target.key())
        if k not in seen:
            seen.add(k)
            unique.append(r)
    return unique


def _without(threads: tuple[Thread, ...], *idx: int) -> list[Process]:
    return [t for k, t in enumerate(threads) if k not in idx]


def reduce_steps(p: Process) -> list[Reduction]:
    """One-step successors of ``p`` (up to structural congruence)."""
    return steps(normalize(p))


def has_error(p: Process | NormalForm) -> bool:
    nf = p if isinstance(p, NormalForm) else normalize(p)
    return any(isinstance(t, Err) for t in nf.threads)


@dataclass
class TraceStep:
    index: int
    rule: str
    state: NormalForm
    label: str = ""


@dataclass
class Trace:
    initial: NormalForm
    steps: list[TraceStep]
    outcome: str  # "terminated", "stuck", "error" or "budget-exhausted"

    @property
    def final(self) -> NormalForm:
        return self.steps[-1].state if self.steps else self.initial

    @property
    def budget_exhausted(self) -> bool:
        return self.outcome == "budget-exhausted"

    def lines(self) -> list[str]:
        from .surface import pretty

        out = [f"0 init {pretty(self.initial.to_process())}"]
        for s in self.steps:
            out.append(f"{s.index} {s.rule} {pretty(s.state.to_process())}")
        out.append(f"# {self.outcome}")
        return out


def run(p: Process, max_steps: int = 1000, seed: int = 0) -> Trace:
    """Execute ``p`` choosing among successors with a seeded generator."""
    rng = random.Random(seed)
    nf = normalize(p)
    initial = nf
    trace: list[TraceStep] = []
    for k in range(1, max_steps + 1):
        if has_error(nf):
            return Trace(initial, trace, "error")
        succ = steps(nf)
        if not succ:
            return Trace(initial, trace, "terminated" if nf.is_nil else "stuck")
        r = rng.choice(succ)
        nf = r.target
        trace.append(TraceStep(k, r.rule, nf, r.label))
    if has_error(nf):
        return Trace(initial, trace, "error")
    if not steps(nf):
        return Trace(initial, trace, "terminated" if nf.is_nil else "stuck")
    return Trace(initial, trace, "budget-exhausted")
