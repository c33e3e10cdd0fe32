"""Association of global types with typing contexts, the soundness and
completeness correspondence checks, and decision procedures for safety,
deadlock freedom and liveness of typing contexts."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import networkx as nx

from .core import (
    Context, End, Endpoint, External, GlobalType, IllFormed, Internal, OutputHalf, Transmission,
    canonical, roles_of, unfold, well_formed,
)
from .lts import (
    StateGraph, context_half_steps, context_transmissions, global_steps, payload_compatible,
    reachable_contexts,
)
from .projection import MergeFailure, project, project_all
from .subtyping import subtype

# ---------------------------------------------------------------------------
# Association


@dataclass
class RoleResult:
    role: str
    projection: object | None
    entry: object | None
    subtype: bool
    failure: str | None = None


@dataclass
class AssociationReport:
    holds: bool
    role_results: list[RoleResult] = field(default_factory=list)
    end_part: list[Endpoint] = field(default_factory=list)
    failure: str | None = None

    def __bool__(self) -> bool:
        return self.holds

    def to_json(self) -> dict:
        from .surface import pretty

        return {
            "holds": self.holds,
            "failure": self.failure,
            "roles": [
                {"role": r.role,
                 "projection": pretty(r.projection) if r.projection is not None else None,
                 "entry": pretty(r.entry) if r.entry is not None else None,
                 "subtype": r.subtype,
                 "failure": r.failure}
                for r in self.role_results
            ],
            "end_part": [str(e) for e in self.end_part],
        }


def check_association(g: GlobalType, ctx: Context, s: str) -> AssociationReport:
    """Split ``ctx`` into projections of ``g`` (up to subtyping) and ``end`` entries."""
    diags = well_formed(g)
    if diags:
        return AssociationReport(False, failure="IllFormed: " + "; ".join(map(str, diags)))
    foreign = [k for k in ctx if not (isinstance(k, Endpoint) and k.session == s)]
    if foreign:
        return AssociationReport(False, failure="ForeignEntry: " + ", ".join(map(str, foreign)))
    roles = sorted(roles_of(g))
    proj, proj_failures = {}, {}
    for r in roles:
        try:
            proj[r] = project(g, r)
        except MergeFailure as e:
            proj_failures[r] = e
    results: list[RoleResult] = []
    ok = True
    for r in roles:
        ep = Endpoint(s, r)
        entry = ctx.get(ep)
        if r in proj_failures:
            results.append(RoleResult(r, None, entry, False, f"ProjectionUndefined: {proj_failures[r]}"))
            ok = False
        elif entry is None:
            results.append(RoleResult(r, proj[r], None, False, f"MissingEndpoint: {ep}"))
            ok = False
        else:
            sub = subtype(proj[r], entry)
            results.append(RoleResult(r, proj[r], entry, sub, None if sub else "NotSubtype"))
            ok = ok and sub
    end_part = [k for k in ctx.endpoints(s) if k.role not in roles_of(g)]
    bad_end = [k for k in end_part if not isinstance(ctx[k], End)]
    failure = None
    if bad_end:
        ok = False
        failure = "NonEndResidue: " + ", ".join(map(str, bad_end))
    elif not ok:
        failure = next(r.failure for r in results if r.failure)
    return AssociationReport(ok, results, end_part, failure)


def associated(g: GlobalType, ctx: Context, s: str) -> bool:
    return check_association(g, ctx, s).holds


def projected_context(g: GlobalType, s: str) -> Context:
    return Context({Endpoint(s, r): t for r, t in project_all(g).items()})


# ---------------------------------------------------------------------------
# Soundness and completeness of association (lock-step exploration)


@dataclass
class Violation:
    kind: str
    trace: list[Transmission]
    label: Transmission
    detail: str = ""

    def __str__(self) -> str:
        path = " ".join(map(str, self.trace)) or "<start>"
        return f"{self.kind} after [{path}] on {self.label}: {self.detail}"


class _Assoc:
    """Memoised association checks."""

    def __init__(self, s: str):
        self.s = s
        self.cache: dict = {}

    def __call__(self, g: GlobalType, ctx: Context) -> bool:
        k = (canonical(g), ctx.key())
        if k not in self.cache:
            self.cache[k] = associated(g, ctx, self.s)
        return self.cache[k]


def _lockstep(g, ctx, s, depth, visit):
    assoc = _Assoc(s)
    seen = {(canonical(g), ctx.key())}
    frontier = [(g, ctx, [])]
    violations: list[Violation] = []
    for _ in range(depth + 1):
        nxt = []
        for gi, ci, trace in frontier:
            gsteps = global_steps(gi, s)
            csteps = context_transmissions(ci, s)
            violations += visit(gi, ci, trace, gsteps, csteps, assoc)
            for cs in csteps:
                for gs in gsteps:
                    if gs.label == cs.label and assoc(gs.target, cs.target):
                        k = (canonical(gs.target), cs.target.key())
                        if k not in seen:
                            seen.add(k)
                            nxt.append((gs.target, cs.target, trace + [cs.label]))
        frontier = nxt
        if not frontier:
            break
    return violations


def check_soundness_correspondence(g: GlobalType, ctx: Context, s: str, depth: int = 6) -> list[Violation]:
    """Every global transmission p->q:l must be matched by some p->q:l' taken
    by both sides, with association preserved."""

    def visit(gi, ci, trace, gsteps, csteps, assoc):
        out = []
        for gs in gsteps:
            pair = gs.label.pair
            matched = any(
                g2.label.pair == pair and c2.label == g2.label and assoc(g2.target, c2.target)
                for g2 in gsteps for c2 in csteps)
            if not matched:
                out.append(Violation("soundness", trace, gs.label, "no matching pair step"))
        return out

    return _lockstep(g, ctx, s, depth, visit)


def check_completeness_correspondence(g: GlobalType, ctx: Context, s: str, depth: int = 6) -> list[Violation]:
    """Every context transmission must be mirrored by the global type."""

    def visit(gi, ci, trace, gsteps, csteps, assoc):
        out = []
        for cs in csteps:
            if not any(gs.label == cs.label and assoc(gs.target, cs.target) for gs in gsteps):
                out.append(Violation("completeness", trace, cs.label, "global type cannot follow"))
        return out

    return _lockstep(g, ctx, s, depth, visit)


# ---------------------------------------------------------------------------
# Safety, deadlock freedom, liveness


@dataclass
class PropertyVerdict:
    property: str  # Safe, DeadlockFree or Live
    holds: bool
    trace: list[Transmission] = field(default_factory=list)
    node: int | None = None
    detail: str = ""
    pending: str | None = None
    prefix: list[Transmission] = field(default_factory=list)
    cycle: list[tuple[int, Transmission, int]] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.holds

    def to_json(self) -> dict:
        witness = None
        if not self.holds:
            witness = {
                "trace": [str(l) for l in self.trace],
                "cycle": [{"from": a, "label": str(l), "to": b} for a, l, b in self.cycle],
                "prefix": [str(l) for l in self.prefix],
                "pending": self.pending,
                "detail": self.detail,
            }
        return {"property": self.property, "holds": self.holds, "witness": witness}


def _heads(ctx: Context, s: str) -> dict[str, object]:
    out = {}
    for ep in ctx.endpoints(s):
        try:
            out[ep.role] = unfold(ctx[ep])
        except IllFormed:
            out[ep.role] = ctx[ep]
    return out


def safety_violation(ctx: Context, s: str) -> str | None:
    """Why ``ctx`` itself (not its successors) breaks the communication clause."""
    heads = _heads(ctx, s)
    for p in sorted(heads):
        hp = heads[p]
        if not isinstance(hp, Internal):
            continue
        hq = heads.get(hp.peer)
        if not isinstance(hq, External) or hq.peer != p:
            continue
        for bo in hp.branches:
            bi = hq.branch(bo.label)
            if bi is None:
                return f"{s}:{p}!{hp.peer}:{bo.label} has no matching input at {hp.peer}"
            if not payload_compatible(bo.payload, bi.payload):
                from .surface import pretty_sort

                return (f"{s}:{p}!{hp.peer}:{bo.label} sends {pretty_sort(bo.payload)} but "
                        f"{hp.peer} expects {pretty_sort(bi.payload)}")
    return None


def check_safety(ctx: Context, s: str, limit: int | None = None,
                 graph: StateGraph | None = None) -> PropertyVerdict:
    graph = graph or reachable_contexts(ctx, s, limit)
    for n, node in enumerate(graph.nodes):
        why = safety_violation(node, s)
        if why:
            return PropertyVerdict("Safe", False, graph.trace_to(n), n, why)
    return PropertyVerdict("Safe", True)


def _all_end(ctx: Context, s: str) -> bool:
    return all(isinstance(h, End) for h in _heads(ctx, s).values())


def check_deadlock_free(ctx: Context, s: str, limit: int | None = None,
                        graph: StateGraph | None = None) -> PropertyVerdict:
    graph = graph or reachable_contexts(ctx, s, limit)
    for n, node in enumerate(graph.nodes):
        if not graph.out_edges(n) and not _all_end(node, s):
            stuck = ", ".join(str(ep) for ep in node.endpoints(s) if not isinstance(_heads(node, s)[ep.role], End))
            return PropertyVerdict("DeadlockFree", False, graph.trace_to(n), n, f"stuck with {stuck} unfinished")
    return PropertyVerdict("DeadlockFree", True)


def obligations(ctx: Context, s: str) -> list[tuple[tuple[str, str], str]]:
    """Pending half-actions as (sender, receiver) pairs with a printable form."""
    out = {}
    for st in context_half_steps(ctx, s):
        lab = st.label
        if isinstance(lab, OutputHalf):
            pair = (lab.subject, lab.peer)
            text = f"{s}:{lab.subject}!{lab.peer}"
        else:
            pair = (lab.peer, lab.subject)
            text = f"{s}:{lab.subject}?{lab.peer}"
        out.setdefault((pair, text), None)
    return sorted(out)


def fair_components(nodes: set[int], edges: list[tuple[int, Transmission, int]],
                    enabled: dict[int, set[tuple[str, str]]]) -> list[set[int]]:
    """Strongly connected node sets (with at least one edge) that support a
    fair infinite run: every pair enabled somewhere in the set labels an edge
    inside it.  Found by repeatedly discarding nodes that enable a pair the
    component can never take."""
    found: list[set[int]] = []
    work = [set(nodes)]
    while work:
        region = work.pop()
        g = nx.DiGraph()
        g.add_nodes_from(sorted(region))
        for a, lab, b in edges:
            if a in region and b in region:
                g.add_edge(a, b)
        comps = sorted((set(c) for c in nx.strongly_connected_components(g)), key=min)
        comp_of = {t: i for i, c in enumerate(comps) for t in c}
        inner_edges: dict[int, list] = {}
        for e in edges:
            a, _, b = e
            if a in region and b in region and comp_of[a] == comp_of[b]:
                inner_edges.setdefault(comp_of[a], []).append(e)
        for i, comp in enumerate(comps):
            inner = inner_edges.get(i)
            if not inner:
                continue
            taken = {lab.pair for _, lab, _ in inner}
            wanted = set().union(*(enabled[t] for t in comp))
            bad = wanted - taken
            if not bad:
                found.append(comp)
                continue
            rest = {t for t in comp if not (enabled[t] & bad)}
            if rest:
                work.append(rest)
    return sorted(found, key=min)


def check_live(ctx: Context, s: str, limit: int | None = None,
               graph: StateGraph | None = None) -> PropertyVerdict:
    graph = graph or reachable_contexts(ctx, s, limit)
    n_nodes = len(graph.nodes)
    enabled = {n: {lab.pair for _, lab, _ in graph.out_edges(n)} for n in range(n_nodes)}
    pending = {n: obligations(graph.nodes[n], s) for n in range(n_nodes)}
    for n in range(n_nodes):
        if not graph.out_edges(n) and pending[n]:
            return PropertyVerdict("Live", False, graph.trace_to(n), n,
                                   "terminal state with a pending action", pending[n][0][1])
    pairs = sorted({pair for obs in pending.values() for pair, _ in obs})
    for pair in pairs:
        kept = [e for e in graph.edges if e[1].pair != pair]
        comps = fair_components(set(range(n_nodes)), kept, enabled)
        if not comps:
            continue
        # nodes that can reach a fair component without using `pair`
        member = {t: i for i, c in enumerate(comps) for t in c}
        rev: dict[int, list[tuple[int, Transmission]]] = {}
        for a, lab, b in kept:
            rev.setdefault(b, []).append((a, lab))
        # BFS backwards; record the forward step toward the component
        toward: dict[int, tuple[Transmission, int] | None] = {t: None for t in member}
        queue = deque(sorted(member))
        while queue:
            b = queue.popleft()
            for a, lab in rev.get(b, []):
                if a not in toward:
                    toward[a] = (lab, b)
                    queue.append(a)
        for n in range(n_nodes):
            obs = [text for p, text in pending[n] if p == pair]
            if not obs or n not in toward:
                continue
            prefix = []
            cur = n
            while toward[cur] is not None:
                lab, cur = toward[cur]
                prefix.append(lab)
            comp = comps[member[cur]]
            cycle = sorted((e for e in kept if e[0] in comp and e[2] in comp), key=lambda e: (e[0], e[1], e[2]))
            return PropertyVerdict(
                "Live", False, graph.trace_to(n), n,
                f"fair cycle avoids {pair[0]}->{pair[1]}", obs[0], prefix, cycle)
    return PropertyVerdict("Live", True)


def check_properties(ctx: Context, s: str, limit: int | None = None) -> list[PropertyVerdict]:
    graph = reachable_contexts(ctx, s, limit)
    return [check_safety(ctx, s, graph=graph), check_deadlock_free(ctx, s, graph=graph),
            check_live(ctx, s, graph=graph)]


@dataclass
class VerificationReport:
    association: AssociationReport
    verdicts: list[PropertyVerdict]
    context: Context | None = None

    @property
    def holds(self) -> bool:
        return self.association.holds and all(v.holds for v in self.verdicts)


def check_all_by_association(g: GlobalType, s: str, limit: int | None = None) -> VerificationReport:
    """Project ``g``, check the association and the three context properties."""
    ctx = projected_context(g, s)
    assoc = check_association(g, ctx, s)
    return VerificationReport(assoc, check_properties(ctx, s, limit), ctx)
