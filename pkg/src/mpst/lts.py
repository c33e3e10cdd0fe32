"""Labelled transition systems of global types and typing contexts."""

from __future__ import annotations

import itertools
import os
from collections import deque
from dataclasses import dataclass, field

from .core import (
    Comm, Context, End, Endpoint, External, GlobalType, IllFormed, InputHalf, Internal,
    OutputHalf, Transmission, canonical, free_vars, roles_of, unfold,
)
from .subtyping import subtype
from .core import alpha_equal

DEFAULT_LIMIT = 100_000


def default_limit() -> int:
    """Exploration limit, overridable through the MPST_LIMIT environment variable."""
    try:
        return int(os.environ.get("MPST_LIMIT", DEFAULT_LIMIT))
    except ValueError:
        return DEFAULT_LIMIT


class LimitExceeded(RuntimeError):
    def __init__(self, limit: int):
        self.limit = limit
        super().__init__(f"state space exceeds {limit} nodes")


@dataclass(frozen=True)
class GlobalStep:
    label: Transmission
    target: GlobalType


@dataclass(frozen=True)
class ContextStep:
    label: object
    target: Context


# ---------------------------------------------------------------------------
# Global types


def global_steps(g: GlobalType, session: str = "s") -> list[GlobalStep]:
    """All transitions of a closed global type, sorted by label.

    The session name only decorates the labels.  Steps under a prefix are
    only kept when every branch can take them and their subjects avoid the
    roles of the prefix.
    """
    if free_vars(g):
        raise IllFormed(f"open global type: {sorted(free_vars(g))}")
    steps = _gsteps(g, frozenset(), session, set())
    uniq = {(s.label, canonical(s.target)): s for s in steps}
    return sorted(uniq.values(), key=lambda s: (s.label, repr(canonical(s.target))))


def _gsteps(g: GlobalType, blocked: frozenset[str], session: str, stack: set) -> list[GlobalStep]:
    g = unfold(g)
    if isinstance(g, End):
        return []
    assert isinstance(g, Comm)
    if roles_of(g) <= blocked:
        return []
    key = (canonical(g), blocked)
    if key in stack:
        # a derivation would need itself as a premise: none exists
        return []
    stack.add(key)
    try:
        out: list[GlobalStep] = []
        if g.sender not in blocked and g.receiver not in blocked:
            for b in g.branches:
                out.append(GlobalStep(Transmission(session, g.sender, g.receiver, b.label), b.cont))
        inner = blocked | {g.sender, g.receiver}
        per_branch = []
        for b in g.branches:
            by_label: dict[Transmission, list[GlobalType]] = {}
            for st in _gsteps(b.cont, inner, session, stack):
                by_label.setdefault(st.label, []).append(st.target)
            per_branch.append(by_label)
        common = set(per_branch[0])
        for d in per_branch[1:]:
            common &= set(d)
        for lab in sorted(common):
            for targets in itertools.product(*(d[lab] for d in per_branch)):
                branches = tuple(type(b)(b.label, b.payload, t) for b, t in zip(g.branches, targets))
                out.append(GlobalStep(lab, Comm(g.sender, g.receiver, branches)))
        return out
    finally:
        stack.discard(key)


# ---------------------------------------------------------------------------
# Typing contexts


def payload_compatible(sent, expected) -> bool:
    """Payload check of a synchronisation: subtyping, or identical sorts."""
    return alpha_equal(sent, expected) or subtype(sent, expected)


def _head(t):
    try:
        return unfold(t)
    except IllFormed:
        return None


def context_half_steps(ctx: Context, session: str) -> list[ContextStep]:
    out: list[ContextStep] = []
    for ep in ctx.endpoints(session):
        head = _head(ctx[ep])
        if isinstance(head, Internal):
            for b in head.branches:
                out.append(ContextStep(OutputHalf(session, ep.role, head.peer, b.label, b.payload),
                                       ctx.update({ep: b.cont})))
        elif isinstance(head, External):
            for b in head.branches:
                out.append(ContextStep(InputHalf(session, ep.role, head.peer, b.label, b.payload),
                                       ctx.update({ep: b.cont})))
    return out


def enabled_halves(ctx: Context, session: str) -> list:
    return [st.label for st in context_half_steps(ctx, session)]


def context_transmissions(ctx: Context, session: str) -> list[ContextStep]:
    out: list[ContextStep] = []
    heads = {ep.role: _head(ctx[ep]) for ep in ctx.endpoints(session)}
    for p, hp in heads.items():
        if not isinstance(hp, Internal):
            continue
        q = hp.peer
        hq = heads.get(q)
        if not isinstance(hq, External) or hq.peer != p:
            continue
        for bo in hp.branches:
            bi = hq.branch(bo.label)
            if bi is None or not payload_compatible(bo.payload, bi.payload):
                continue
            target = ctx.update({Endpoint(session, p): bo.cont, Endpoint(session, q): bi.cont})
            out.append(ContextStep(Transmission(session, p, q, bo.label), target))
    out.sort(key=lambda st: st.label)
    return out


# ---------------------------------------------------------------------------
# Reachable state graph


@dataclass
class StateGraph:
    session: str
    nodes: list[Context] = field(default_factory=list)
    edges: list[tuple[int, Transmission, int]] = field(default_factory=list)
    # for each node, the label path from the root (BFS tree)
    parent: dict[int, tuple[int, Transmission]] = field(default_factory=dict)

    def out_edges(self, n: int) -> list[tuple[int, Transmission, int]]:
        return self._out[n]

    def finalize(self) -> "StateGraph":
        self._out: list[list] = [[] for _ in self.nodes]
        for e in self.edges:
            self._out[e[0]].append(e)
        return self

    def trace_to(self, n: int) -> list[Transmission]:
        labels = []
        while n in self.parent:
            n, lab = self.parent[n]
            labels.append(lab)
        return labels[::-1]

    def __len__(self) -> int:
        return len(self.nodes)


def reachable_contexts(ctx: Context, session: str, limit: int | None = None) -> StateGraph:
    """Breadth-first exploration of transmissions from ``ctx``; node 0 is ``ctx``."""
    limit = default_limit() if limit is None else limit
    graph = StateGraph(session)
    index: dict[tuple, int] = {}

    def add(c: Context) -> tuple[int, bool]:
        k = c.key()
        if k in index:
            return index[k], False
        if len(graph.nodes) >= limit:
            raise LimitExceeded(limit)
        index[k] = len(graph.nodes)
        graph.nodes.append(c)
        return index[k], True

    add(ctx)
    queue = deque([0])
    while queue:
        n = queue.popleft()
        for st in context_transmissions(graph.nodes[n], session):
            m, new = add(st.target)
            graph.edges.append((n, st.label, m))
            if new:
                graph.parent[m] = (n, st.label)
                queue.append(m)
    return graph.finalize()


def replay(ctx: Context, labels, session: str) -> Context:
    """Follow transmission labels from ``ctx``; raises ValueError if one is not enabled."""
    for lab in labels:
        for st in context_transmissions(ctx, session):
            if st.label == lab:
                ctx = st.target
                break
        else:
            raise ValueError(f"{lab} is not enabled")
    return ctx


def global_graph(g: GlobalType, session: str, depth: int) -> tuple[list[GlobalType], list[tuple[int, Transmission, int]]]:
    """Global types reachable within ``depth`` steps, deduplicated up to alpha."""
    nodes = [g]
    index = {canonical(g): 0}
    edges = []
    frontier = [0]
    for _ in range(depth):
        nxt = []
        for n in frontier:
            for st in global_steps(nodes[n], session):
                k = canonical(st.target)
                if k not in index:
                    index[k] = len(nodes)
                    nodes.append(st.target)
                    nxt.append(index[k])
                edges.append((n, st.label, index[k]))
        frontier = nxt
    return nodes, edges
