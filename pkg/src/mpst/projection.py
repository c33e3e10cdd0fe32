"""Projection of global types onto roles, using full merging of local types."""

from __future__ import annotations

from enum import Enum
from functools import lru_cache
from typing import Iterable

from .core import (
    Branch, Comm, End, External, IllFormed, Internal, LocalType, GlobalType, Rec, Var,
    alpha_equal, canonical, free_vars, readable, roles_of, well_formed,
)


class MergeReason(str, Enum):
    INTERNAL_CHOICE_CLASH = "InternalChoiceClash"
    PEER_MISMATCH = "PeerMismatch"
    PAYLOAD_MISMATCH = "PayloadMismatch"
    LABEL_PAYLOAD_CLASH = "LabelPayloadClash"
    SHAPE_MISMATCH = "ShapeMismatch"
    BINDER_MISMATCH = "BinderMismatch"

    def __str__(self) -> str:
        return self.value


class MergeFailure(Exception):
    """Two local types cannot be merged.  ``path`` is the label trace leading
    to the smallest offending pair; ``role`` is set when raised by projection."""

    def __init__(self, reason: MergeReason, path: tuple[str, ...] = (), detail: str = "",
                 role: str | None = None):
        self.reason = reason
        self.path = tuple(path)
        self.detail = detail
        self.role = role
        where = "/".join(self.path) or "<root>"
        who = f" (role {role})" if role else ""
        super().__init__(f"{reason.value} at {where}{who}: {detail}")

    def with_prefix(self, prefix: tuple[str, ...], role: str | None = None) -> "MergeFailure":
        return MergeFailure(self.reason, prefix + self.path, self.detail, role or self.role)

    def to_json(self) -> dict:
        return {"reason": self.reason.value, "path": list(self.path), "role": self.role, "detail": self.detail}


class ProjectionUndefined(Exception):
    def __init__(self, failures: dict[str, MergeFailure]):
        self.failures = failures
        super().__init__("; ".join(f"{r}: {f}" for r, f in sorted(failures.items())))


def _fail(reason: MergeReason, path: tuple[str, ...], detail: str) -> MergeFailure:
    return MergeFailure(reason, path, detail)


def _merge(a: LocalType, b: LocalType, path: tuple[str, ...]) -> LocalType:
    """Merge two types in canonical (level-named) form."""
    if isinstance(a, End) and isinstance(b, End):
        return a
    if isinstance(a, Var) and isinstance(b, Var):
        if a.name != b.name:
            raise _fail(MergeReason.BINDER_MISMATCH, path, f"{a.name} vs {b.name}")
        return a
    if isinstance(a, Rec) and isinstance(b, Rec):
        if a.var != b.var:
            raise _fail(MergeReason.BINDER_MISMATCH, path, f"{a.var} vs {b.var}")
        return Rec(a.var, _merge(a.body, b.body, path))
    if isinstance(a, Internal) and isinstance(b, Internal):
        if a.peer != b.peer:
            raise _fail(MergeReason.PEER_MISMATCH, path, f"outputs to {a.peer} vs {b.peer}")
        if set(a.labels) != set(b.labels):
            raise _fail(MergeReason.INTERNAL_CHOICE_CLASH, path,
                        f"output labels {sorted(a.labels)} vs {sorted(b.labels)}")
        out = []
        for ab in a.branches:
            bb = b.branch(ab.label)
            if not alpha_equal(ab.payload, bb.payload):
                raise _fail(MergeReason.INTERNAL_CHOICE_CLASH, path + (ab.label,), "output payloads differ")
            out.append(Branch(ab.label, ab.payload, _merge(ab.cont, bb.cont, path + (ab.label,))))
        return Internal(a.peer, tuple(out))
    if isinstance(a, External) and isinstance(b, External):
        if a.peer != b.peer:
            raise _fail(MergeReason.PEER_MISMATCH, path, f"inputs from {a.peer} vs {b.peer}")
        out = []
        for ab in a.branches:
            bb = b.branch(ab.label)
            if bb is None:
                out.append(ab)
                continue
            if not alpha_equal(ab.payload, bb.payload):
                raise _fail(MergeReason.LABEL_PAYLOAD_CLASH, path + (ab.label,),
                            f"label {ab.label} carries different payloads")
            out.append(Branch(ab.label, ab.payload, _merge(ab.cont, bb.cont, path + (ab.label,))))
        out += [bb for bb in b.branches if a.branch(bb.label) is None]
        return External(a.peer, tuple(out))
    raise _fail(MergeReason.SHAPE_MISMATCH, path, f"{_shape(a)} vs {_shape(b)}")


def _shape(t: LocalType) -> str:
    return {Internal: "internal choice", External: "external choice", Rec: "recursion",
            Var: "variable", End: "end"}.get(type(t), type(t).__name__)


def merge(t1: LocalType, t2: LocalType) -> LocalType:
    """Full merge of two closed local types; raises MergeFailure."""
    return readable(_merge(canonical(t1), canonical(t2), ()), t1, t2)


def merge_all(types: Iterable[LocalType]) -> LocalType:
    types = list(types)
    if not types:
        raise ValueError("merge of an empty family")
    out = canonical(types[0])
    for t in types[1:]:
        out = _merge(out, canonical(t), ())
    return readable(out, *types)


@lru_cache(maxsize=None)
def _project(g: GlobalType, p: str) -> LocalType:
    if isinstance(g, (End, Var)):
        return g
    if isinstance(g, Rec):
        if p not in roles_of(g.body) and not free_vars(g):
            return End()
        return Rec(g.var, _project(g.body, p))
    assert isinstance(g, Comm)
    if p == g.sender or p == g.receiver:
        branches = []
        for b in g.branches:
            try:
                cont = _project(b.cont, p)
            except MergeFailure as e:
                raise e.with_prefix((b.label,))
            branches.append(Branch(b.label, b.payload, cont))
        if p == g.sender:
            return Internal(g.receiver, tuple(branches))
        return External(g.sender, tuple(branches))
    result = None
    for b in g.branches:
        try:
            cont = _project(b.cont, p)
        except MergeFailure as e:
            raise e.with_prefix((b.label,))
        result = cont if result is None else _merge(result, cont, ())
    return result


def project(g: GlobalType, p: str) -> LocalType:
    """Local type of role ``p``; raises MergeFailure (with ``role`` set) when
    the projection is undefined and IllFormed on ill-formed input."""
    diags = well_formed(g)
    if diags:
        raise IllFormed("; ".join(map(str, diags)))
    try:
        out = _project(canonical(g), p)
    except MergeFailure as e:
        raise e.with_prefix((), role=p) from None
    if any(d.kind == "NonContractive" for d in well_formed(out)):
        raise MergeFailure(MergeReason.SHAPE_MISMATCH, (), "projection is not contractive", p)
    return readable(out, g)


def project_all(g: GlobalType) -> dict[str, LocalType]:
    """Projections onto every role of ``g`` (sorted by role name)."""
    out: dict[str, LocalType] = {}
    failures: dict[str, MergeFailure] = {}
    for p in sorted(roles_of(g)):
        try:
            out[p] = project(g, p)
        except MergeFailure as e:
            failures[p] = e
    if failures:
        raise ProjectionUndefined(failures)
    return out


def projectable(g: GlobalType) -> bool:
    try:
        project_all(g)
        return not well_formed(g)
    except (ProjectionUndefined, IllFormed):
        return False
