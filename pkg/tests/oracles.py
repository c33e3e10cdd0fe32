"""Brute-force reference implementations used to cross-check the library.

Each oracle recomputes a verdict by a different route than the code under
test: liveness by enumerating node subsets that can host a fair lasso,
safety by reading the communication clause straight off the unfolded heads,
the association correspondence by comparing bounded trace sets, and typing
derivations by re-checking every rule instance locally.
"""

from __future__ import annotations

from itertools import combinations

from mpst.analysis import associated
from mpst.core import Context, Endpoint, End, External, Internal, is_basic, unfold
from mpst.lts import context_transmissions, global_steps
from mpst.picalc import Lit, Name, Nil, free_keys
from mpst.subtyping import subtype
from mpst.typesystem import AllEnd, HasSort, Signature

# ---------------------------------------------------------------------------
# Context properties


def heads(ctx: Context, s: str) -> dict[str, object]:
    return {ep.role: unfold(t) for ep, t in ctx.items() if isinstance(ep, Endpoint) and ep.session == s}


def pending_pairs(ctx: Context, s: str) -> set[tuple[str, str]]:
    """(sender, receiver) pairs owed a transmission by some enabled half action."""
    out = set()
    for role, h in heads(ctx, s).items():
        if isinstance(h, Internal):
            out.add((role, h.peer))
        elif isinstance(h, External):
            out.add((h.peer, role))
    return out


def _mask(indices) -> int:
    m = 0
    for i in indices:
        m |= 1 << i
    return m


def _strongly_connected(mask: int, adj: dict[int, int], n: int) -> bool:
    start = (mask & -mask).bit_length() - 1
    for succ in (adj, None):
        seen, todo = 1 << start, [start]
        while todo:
            a = todo.pop()
            nxt = succ[a] if succ is not None else _pred_mask(a, adj, n)
            new = nxt & mask & ~seen
            seen |= new
            todo += [i for i in range(n) if new >> i & 1]
        if seen != mask:
            return False
    return True


def _pred_mask(b: int, adj: dict[int, int], n: int) -> int:
    return _mask(a for a in range(n) if adj[a] >> b & 1)


def live_by_lasso_enumeration(graph, s: str) -> bool:
    """Live iff no maximal fair run leaves an obligation undischarged.

    Finite runs end in a terminal node.  Infinite runs on a finite graph
    eventually stay inside some node set C, taking edges of C forever; taking
    all of them is the fairest choice, so it suffices to try every subset C.
    """
    n = len(graph.nodes)
    pend = [pending_pairs(c, s) for c in graph.nodes]
    out = [[(lab.sender, lab.receiver, b) for a, lab, b in graph.edges if a == i] for i in range(n)]
    for i in range(n):
        if not out[i] and pend[i]:
            return False
    enabled = [{(p, q) for p, q, _ in out[i]} for i in range(n)]
    for o in set().union(*pend):
        adj = {i: _mask(b for p, q, b in out[i] if (p, q) != o) for i in range(n)}
        fair_masks = []
        for size in range(1, n + 1):
            for members in combinations(range(n), size):
                mask = _mask(members)
                taken = {(p, q) for i in members for p, q, b in out[i] if (p, q) != o and mask >> b & 1}
                if not taken:
                    continue
                if set().union(*(enabled[i] for i in members)) - taken:
                    continue
                if _strongly_connected(mask, {i: adj[i] & mask for i in range(n)}, n):
                    fair_masks.append(mask)
        if not fair_masks:
            continue
        target = 0
        for m in fair_masks:
            target |= m
        for i in range(n):
            if o not in pend[i]:
                continue
            seen, todo = 1 << i, [i]
            while todo:
                a = todo.pop()
                if target >> a & 1:
                    return False
                new = adj[a] & ~seen
                seen |= new
                todo += [b for b in range(n) if new >> b & 1]
    return True


def safe_by_clauses(graph, s: str) -> bool:
    """Every co-enabled output and matching input between two roles has the
    corresponding transmission edge, for every offered output label."""
    labels_out = {}
    for a, lab, b in graph.edges:
        labels_out.setdefault(a, set()).add((lab.sender, lab.receiver, lab.label))
    for i, ctx in enumerate(graph.nodes):
        hs = heads(ctx, s)
        for p, hp in hs.items():
            if not isinstance(hp, Internal):
                continue
            hq = hs.get(hp.peer)
            if not (isinstance(hq, External) and hq.peer == p):
                continue
            for br in hp.branches:
                if (p, hp.peer, br.label) not in labels_out.get(i, set()):
                    return False
    return True


def deadlock_free_by_scan(graph, s: str) -> bool:
    for i, ctx in enumerate(graph.nodes):
        stuck = not any(a == i for a, _, _ in graph.edges)
        if stuck and not all(isinstance(h, End) for h in heads(ctx, s).values()):
            return False
    return True


# ---------------------------------------------------------------------------
# Trace sets


def global_traces(g, s: str, depth: int) -> set[tuple[str, ...]]:
    out = {()}
    frontier = [((), g)]
    for _ in range(depth):
        nxt = []
        for tr, h in frontier:
            for st in global_steps(h, s):
                t2 = tr + (str(st.label),)
                out.add(t2)
                nxt.append((t2, st.target))
        frontier = nxt
    return out


def context_traces(ctx: Context, s: str, depth: int) -> set[tuple[str, ...]]:
    out = {()}
    frontier = [((), ctx)]
    for _ in range(depth):
        nxt = []
        for tr, c in frontier:
            for st in context_transmissions(c, s):
                t2 = tr + (str(st.label),)
                out.add(t2)
                nxt.append((t2, st.target))
        frontier = nxt
    return out


# ---------------------------------------------------------------------------
# Derivation validator


def _end_like(t) -> bool:
    return is_basic(t) or subtype(t, End())


def _key(v):
    if isinstance(v, Endpoint):
        return v
    if isinstance(v, Name):
        return v.name
    return None


def validate_derivation(d, theta=None) -> list[str]:
    """Local re-check of every rule instance; returns the problems found."""
    problems: list[str] = []

    def bad(node, why):
        problems.append(f"[{node.rule}] {node.judgement()}: {why}")

    def prem(node, i):
        return node.premises[i] if len(node.premises) > i else None

    for node in d.walk():
        r, ctx, subj = node.rule, node.ctx, node.subject
        th = dict(node.theta)
        if r == "T-end":
            if not isinstance(subj, AllEnd) or not all(_end_like(t) for t in ctx.values()):
                bad(node, "context not finished")
        elif r == "T-0":
            e = prem(node, 0)
            if not isinstance(subj, Nil) or e is None or e.rule != "T-end" or e.ctx != ctx:
                bad(node, "inaction without end premise")
        elif r == "T-par":
            l, rr = node.premises
            if set(l.ctx) & set(rr.ctx) or dict(l.ctx) | dict(rr.ctx) != dict(ctx):
                bad(node, "context is not split disjointly")
            if (l.subject, rr.subject) != (subj.left, subj.right):
                bad(node, "premises do not type the components")
        elif r == "T-sub" or r == "T-B":
            if not isinstance(subj, HasSort):
                bad(node, "not a value judgement")
            elif isinstance(subj.value, Lit):
                if not (is_basic(subj.sort) and subtype(subj.value.sort, subj.sort)):
                    bad(node, "literal sort mismatch")
            else:
                k = _key(subj.value)
                if set(ctx) != {k} or not subtype(ctx[k], subj.sort):
                    bad(node, "value not below its sort")
        elif r == "T-X":
            if not isinstance(subj, Signature) or th.get(subj.name) != subj.sorts:
                bad(node, "process variable not in scope with these sorts")
        elif r == "T-⊕":
            chan, pay, cont = node.premises
            k = _key(subj.chan)
            t = chan.subject.sort
            if not (isinstance(t, Internal) and t.peer == subj.to and t.labels == (subj.label,)):
                bad(node, "channel premise does not select the label")
                continue
            b = t.branches[0]
            if chan.ctx != Context({k: ctx[k]}) or not subtype(ctx[k], t):
                bad(node, "channel type not below the selection")
            if pay.subject.sort != b.payload or _end_like(b.payload) and not is_basic(b.payload):
                bad(node, "payload premise has the wrong sort")
            dk = _key(subj.payload)
            want = {x: y for x, y in ctx.items() if x not in (k, dk)}
            want[k] = b.cont
            if dict(cont.ctx) != want or cont.subject != subj.cont:
                bad(node, "continuation context is wrong")
        elif r == "T-&":
            chan, *bodies = node.premises
            k = _key(subj.chan)
            t = chan.subject.sort
            if not (isinstance(t, External) and t.peer == subj.frm and set(t.labels) == set(subj.labels)):
                bad(node, "channel premise does not cover the branches")
                continue
            if chan.ctx != Context({k: ctx[k]}) or not subtype(ctx[k], t):
                bad(node, "channel type not below the branching")
            for ob, bd in zip(subj.branches, bodies):
                tb = t.branch(ob.label)
                want = {x: y for x, y in ctx.items() if x != k}
                want[k] = tb.cont
                if ob.var != "_":
                    want[ob.var] = tb.payload
                if dict(bd.ctx) != want or bd.subject != ob.body:
                    bad(node, f"branch {ob.label} context is wrong")
        elif r == "T-def":
            body, scope = node.premises
            sorts = tuple(x.sort for x in subj.params)
            if dict(body.theta).get(subj.name) != sorts or dict(body.ctx) != {x.name: x.sort for x in subj.params}:
                bad(node, "definition body premise is wrong")
            if scope.ctx != ctx or scope.subject != subj.scope:
                bad(node, "scope premise is wrong")
        elif r == "T-call":
            lookup, rest, *args = node.premises
            if lookup.rule != "T-X" or lookup.subject.name != subj.name:
                bad(node, "no lookup premise")
            used = {_key(a) for a in subj.args} - {None}
            if rest.rule != "T-end" or dict(rest.ctx) != {x: y for x, y in ctx.items() if x not in used}:
                bad(node, "leftover context premise is wrong")
            for a, s_, ad in zip(subj.args, lookup.subject.sorts, args):
                if ad.subject != HasSort(a, s_):
                    bad(node, "argument premise is wrong")
        elif r == "T-G-ν":
            (body,) = node.premises
            inner = Context({x: y for x, y in body.ctx.items() if x not in ctx})
            if subj.session in ctx.sessions() or not associated(subj.global_type, inner, subj.session):
                bad(node, "restriction context is not associated")
            if any(body.ctx[x] != y for x, y in ctx.items()):
                bad(node, "outer context changed under restriction")
        else:
            bad(node, "unknown rule")
    return problems


def all_free_keys_typed(d) -> bool:
    """The root context covers every free channel and variable of the process."""
    return free_keys(d.subject) <= set(d.ctx)
