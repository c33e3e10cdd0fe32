"""Abstract syntax for global types, local types, sorts, typing contexts and
transition labels, together with substitution, unfolding, canonical forms and
well-formedness diagnostics.

Recursion binders are stored by name.  ``canonical`` renames every binder to a
name derived from its nesting level, which gives a cheap alpha-normal form.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from enum import Enum
from functools import lru_cache
from typing import Iterable, Iterator, Mapping, Union


class IllFormed(ValueError):
    """Raised when an operation needs a closed, contractive type."""


class Basic(str, Enum):
    INT = "int"
    BOOL = "bool"
    REAL = "real"
    STR = "str"
    UNIT = "unit"

    def __str__(self) -> str:
        return self.value


# ---------------------------------------------------------------------------
# Type syntax.  Rec, Var and End are shared between global and local types.


def _node(cls):
    """Frozen dataclass whose hash is computed once; types are deep trees
    that get hashed over and over by caches and visited sets."""
    cls = dataclass(frozen=True)(cls)
    names = tuple(f.name for f in fields(cls))

    def __hash__(self):
        try:
            return self.__dict__["_hash"]
        except KeyError:
            h = hash((cls.__name__, *(getattr(self, n) for n in names)))
            object.__setattr__(self, "_hash", h)
            return h

    cls.__hash__ = __hash__
    return cls


@_node
class Branch:
    label: str
    payload: "Sort"
    cont: "AnyType"


@_node
class Comm:
    """Global transmission ``sender -> receiver { branches }``."""

    sender: str
    receiver: str
    branches: tuple[Branch, ...]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(b.label for b in self.branches)


@_node
class Internal:
    """Internal choice: send one of ``branches`` to ``peer``."""

    peer: str
    branches: tuple[Branch, ...]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(b.label for b in self.branches)

    def branch(self, label: str) -> Branch | None:
        for b in self.branches:
            if b.label == label:
                return b
        return None


@_node
class External:
    """External choice: receive one of ``branches`` from ``peer``."""

    peer: str
    branches: tuple[Branch, ...]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(b.label for b in self.branches)

    def branch(self, label: str) -> Branch | None:
        for b in self.branches:
            if b.label == label:
                return b
        return None


@_node
class Rec:
    var: str
    body: "AnyType"


@_node
class Var:
    name: str


@_node
class End:
    pass


END = End()

GlobalType = Union[Comm, Rec, Var, End]
LocalType = Union[Internal, External, Rec, Var, End]
AnyType = Union[Comm, Internal, External, Rec, Var, End]
Sort = Union[Basic, Internal, External, Rec, Var, End]
Choice = (Internal, External)


def is_basic(s: object) -> bool:
    return isinstance(s, Basic)


def is_session(s: object) -> bool:
    return isinstance(s, (Internal, External, Rec, Var, End))


def is_global(t: object) -> bool:
    """True when ``t`` is built from global constructors only (Rec/Var/End are shared)."""
    if isinstance(t, Comm):
        return True
    if isinstance(t, Rec):
        return is_global(t.body)
    return isinstance(t, (Var, End))


def _with_branches(t: AnyType, branches: Iterable[Branch]) -> AnyType:
    branches = tuple(branches)
    if isinstance(t, Comm):
        return Comm(t.sender, t.receiver, branches)
    return type(t)(t.peer, branches)


# ---------------------------------------------------------------------------
# Free variables, substitution, unfolding


@lru_cache(maxsize=None)
def free_vars(t: Sort) -> frozenset[str]:
    """Free recursion variables, including those occurring in payload positions."""
    if isinstance(t, Var):
        return frozenset([t.name])
    if isinstance(t, Rec):
        return free_vars(t.body) - {t.var}
    if isinstance(t, (Comm, Internal, External)):
        out: set[str] = set()
        for b in t.branches:
            out |= free_vars(b.payload)
            out |= free_vars(b.cont)
        return frozenset(out)
    return frozenset()


def is_closed(t: Sort) -> bool:
    return not free_vars(t)


def substitute(t: Sort, var: str, replacement: AnyType) -> Sort:
    """Replace free occurrences of ``var`` in ``t`` (payloads included).

    ``replacement`` is expected to be closed, so no capture can happen.
    """
    if var not in free_vars(t):
        return t
    if isinstance(t, Var):
        return replacement
    if isinstance(t, Rec):
        return Rec(t.var, substitute(t.body, var, replacement))
    return _with_branches(
        t,
        (Branch(b.label, substitute(b.payload, var, replacement), substitute(b.cont, var, replacement))
         for b in t.branches),
    )


def _rec_chain(t: AnyType) -> tuple[list[str], AnyType]:
    bound = []
    while isinstance(t, Rec):
        bound.append(t.var)
        t = t.body
    return bound, t


def unfold(t: AnyType) -> AnyType:
    """Unfold top-level recursion until the head is a prefix or ``end``."""
    if not isinstance(t, (Rec, Var)):
        return t
    chain, head = _rec_chain(t)
    if isinstance(head, Var) and head.name in chain:
        raise IllFormed(f"non-contractive recursion on {head.name}")
    if isinstance(t, Var) or free_vars(t):
        raise IllFormed(f"open type: free variables {sorted(free_vars(t))}")
    for _ in range(len(chain)):
        assert isinstance(t, Rec)
        t = substitute(t.body, t.var, t)
    return t


unfold_once = unfold


def roles_of(g: AnyType) -> frozenset[str]:
    """Roles occurring as sender or receiver (payloads are not inspected)."""
    if isinstance(g, Comm):
        out = {g.sender, g.receiver}
        for b in g.branches:
            out |= roles_of(b.cont)
        return frozenset(out)
    if isinstance(g, Rec):
        return roles_of(g.body)
    return frozenset()


# ---------------------------------------------------------------------------
# Canonical (alpha-normal) forms


def _canon(t: Sort, env: Mapping[str, str], depth: int) -> Sort:
    if isinstance(t, Basic) or isinstance(t, End):
        return t
    if isinstance(t, Var):
        return Var(env.get(t.name, t.name))
    if isinstance(t, Rec):
        name = f"t{depth}"
        return Rec(name, _canon(t.body, {**env, t.var: name}, depth + 1))
    return _with_branches(
        t,
        (Branch(b.label, _canon(b.payload, env, depth), _canon(b.cont, env, depth)) for b in t.branches),
    )


@lru_cache(maxsize=None)
def canonical(t: Sort) -> Sort:
    """Rename every recursion binder after its nesting level (t0, t1, ...)."""
    return _canon(t, {}, 0)


def canonical_key(t: Sort) -> Sort:
    """Hashable key, equal for exactly the alpha-equivalent closed types."""
    if free_vars(t):
        raise IllFormed(f"open type: free variables {sorted(free_vars(t))}")
    return canonical(t)


def alpha_equal(a: Sort, b: Sort) -> bool:
    if a == b:
        return True
    return canonical(a) == canonical(b)


def rename_binders(t: Sort, names: Mapping[str, str]) -> Sort:
    """Rename binders (and their bound occurrences) according to ``names``."""

    def go(t: Sort, env: Mapping[str, str]) -> Sort:
        if isinstance(t, (Basic, End)):
            return t
        if isinstance(t, Var):
            return Var(env.get(t.name, t.name))
        if isinstance(t, Rec):
            new = names.get(t.var, t.var)
            return Rec(new, go(t.body, {**env, t.var: new}))
        return _with_branches(t, (Branch(b.label, go(b.payload, env), go(b.cont, env)) for b in t.branches))

    return go(t, {})


def binder_names(t: Sort) -> Iterator[tuple[int, str]]:
    """Yield (nesting level, binder name) pairs of ``t``."""

    def go(t: Sort, depth: int) -> Iterator[tuple[int, str]]:
        if isinstance(t, Rec):
            yield depth, t.var
            yield from go(t.body, depth + 1)
        elif isinstance(t, (Comm, Internal, External)):
            for b in t.branches:
                yield from go(b.payload, depth)
                yield from go(b.cont, depth)

    return go(t, 0)


def readable(t: Sort, *hints: Sort) -> Sort:
    """Turn level-named binders of a canonical type back into names taken from
    ``hints`` when that is unambiguous; otherwise keep the canonical names."""
    mapping: dict[str, str] = {}
    for h in hints:
        for level, name in binder_names(h):
            mapping.setdefault(f"t{level}", name)
    if len(set(mapping.values())) != len(mapping):
        return t
    return rename_binders(t, mapping)


# ---------------------------------------------------------------------------
# Well-formedness


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    message: str
    path: tuple[str, ...] = ()

    def __str__(self) -> str:
        where = "/".join(self.path)
        return f"{self.kind}: {self.message}" + (f" at {where}" if where else "")


def well_formed(t: Sort) -> list[Diagnostic]:
    """Diagnostics for ``t``; empty iff closed, contractive, labels distinct,
    branches nonempty, no self-transmission and no open payload."""
    out: list[Diagnostic] = []

    def go(t: Sort, bound: frozenset[str], path: tuple[str, ...]) -> None:
        if isinstance(t, (Basic, End)):
            return
        if isinstance(t, Var):
            if t.name not in bound:
                out.append(Diagnostic("OpenType", f"free recursion variable {t.name}", path))
            return
        if isinstance(t, Rec):
            chain, head = _rec_chain(t)
            if isinstance(head, Var) and head.name in chain:
                out.append(Diagnostic("NonContractive", f"unguarded recursion variable {head.name}", path))
                return
            go(t.body, bound | {t.var}, path)
            return
        if not t.branches:
            out.append(Diagnostic("EmptyBranches", "choice without branches", path))
        if isinstance(t, Comm) and t.sender == t.receiver:
            out.append(Diagnostic("SelfReception", f"role {t.sender} sends to itself", path))
        seen: set[str] = set()
        for b in t.branches:
            if b.label in seen:
                out.append(Diagnostic("DuplicateLabel", f"label {b.label} repeated", path))
            seen.add(b.label)
            if not isinstance(b.payload, Basic):
                if free_vars(b.payload):
                    out.append(Diagnostic(
                        "OpenPayload", f"payload of {b.label} mentions {sorted(free_vars(b.payload))}",
                        path + (b.label,)))
                else:
                    for d in well_formed(b.payload):
                        out.append(Diagnostic(d.kind, d.message, path + (b.label, "payload") + d.path))
            go(b.cont, bound, path + (b.label,))

    go(t, frozenset(), ())
    return out


@lru_cache(maxsize=None)
def has_open_payload(t: Sort) -> bool:
    """True when some payload, at any depth, is not closed on its own."""
    if isinstance(t, Rec):
        return has_open_payload(t.body)
    if isinstance(t, (Comm, Internal, External)):
        for b in t.branches:
            if not isinstance(b.payload, Basic):
                if free_vars(b.payload) or has_open_payload(b.payload):
                    return True
            if has_open_payload(b.cont):
                return True
    return False


# ---------------------------------------------------------------------------
# Typing contexts


@dataclass(frozen=True, order=True)
class Endpoint:
    """Channel with role ``session[role]``."""

    session: str
    role: str

    def __str__(self) -> str:
        return f"{self.session}[{self.role}]"


ContextKey = Union[Endpoint, str]


def _key_order(k: ContextKey) -> tuple:
    if isinstance(k, Endpoint):
        return (1, k.session, k.role)
    return (0, k, "")


class Context(Mapping[ContextKey, Sort]):
    """Immutable typing context: endpoints ``s[p]`` and variables ``x`` mapped to sorts.

    Iteration order is deterministic (variables first, then endpoints by
    session and role).
    """

    __slots__ = ("_items", "_map", "_hash")

    def __init__(self, entries: Mapping[ContextKey, Sort] | Iterable[tuple[ContextKey, Sort]] = ()):
        pairs = list(entries.items()) if isinstance(entries, Mapping) else list(entries)
        mapping: dict[ContextKey, Sort] = {}
        for k, v in pairs:
            if k in mapping:
                raise ValueError(f"duplicate context key {k}")
            mapping[k] = v
        self._items = tuple(sorted(mapping.items(), key=lambda kv: _key_order(kv[0])))
        self._map = dict(self._items)
        self._hash = None

    def __getitem__(self, k: ContextKey) -> Sort:
        return self._map[k]

    def __iter__(self):
        return (k for k, _ in self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, Context):
            return self._items == other._items
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(self._items)
        return self._hash

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}: {v!r}" for k, v in self._items)
        return f"Context({{{inner}}})"

    def compose(self, other: "Context") -> "Context":
        """Disjoint union; raises ValueError when domains overlap."""
        clash = set(self) & set(other)
        if clash:
            raise ValueError(f"context composition undefined on {sorted(map(str, clash))}")
        return Context(list(self._items) + list(other._items))

    def update(self, changes: Mapping[ContextKey, Sort]) -> "Context":
        merged = dict(self._map)
        merged.update(changes)
        return Context(merged)

    def without(self, *keys: ContextKey) -> "Context":
        drop = set(keys)
        return Context([(k, v) for k, v in self._items if k not in drop])

    def restrict(self, session: str) -> "Context":
        """Keep exactly the endpoints of ``session``."""
        return Context([(k, v) for k, v in self._items if isinstance(k, Endpoint) and k.session == session])

    def endpoints(self, session: str | None = None) -> list[Endpoint]:
        return [k for k in self if isinstance(k, Endpoint) and (session is None or k.session == session)]

    def sessions(self) -> list[str]:
        return sorted({k.session for k in self if isinstance(k, Endpoint)})

    def key(self) -> tuple:
        """Canonical key: entries up to alpha-equivalence."""
        return tuple((k, canonical(v)) for k, v in self._items)


# ---------------------------------------------------------------------------
# Transition labels


@dataclass(frozen=True, order=True)
class OutputHalf:
    session: str
    subject: str
    peer: str
    label: str
    payload: Sort = field(compare=False)

    @property
    def subjects(self) -> frozenset[str]:
        return frozenset([self.subject])

    def __str__(self) -> str:
        return f"{self.session}:{self.subject}!{self.peer}:{self.label}"


@dataclass(frozen=True, order=True)
class InputHalf:
    session: str
    subject: str
    peer: str
    label: str
    payload: Sort = field(compare=False)

    @property
    def subjects(self) -> frozenset[str]:
        return frozenset([self.subject])

    def __str__(self) -> str:
        return f"{self.session}:{self.subject}?{self.peer}:{self.label}"


@dataclass(frozen=True, order=True)
class Transmission:
    session: str
    sender: str
    receiver: str
    label: str

    @property
    def subjects(self) -> frozenset[str]:
        return frozenset([self.sender, self.receiver])

    @property
    def pair(self) -> tuple[str, str]:
        return (self.sender, self.receiver)

    def __str__(self) -> str:
        return f"{self.session}:{self.sender}->{self.receiver}:{self.label}"


TransitionLabel = Union[OutputHalf, InputHalf, Transmission]


def parse_label(text: str) -> Transmission:
    """Inverse of ``str(Transmission)``: ``s:p->q:l``."""
    try:
        session, rest, label = text.split(":")
        sender, receiver = rest.split("->")
    except ValueError:
        raise ValueError(f"not a transmission label: {text!r}") from None
    return Transmission(session.strip(), sender.strip(), receiver.strip(), label.strip())
