"""Coinductive session subtyping on closed local types and basic sorts."""

from __future__ import annotations

from functools import lru_cache

from .core import (
    Basic, Context, End, External, IllFormed, Internal, Sort, canonical, has_open_payload,
    is_basic, is_session, unfold,
)

_BASIC_EDGES = {(Basic.INT, Basic.REAL)}


def basic_subtype(b1: Basic, b2: Basic) -> bool:
    return b1 == b2 or (b1, b2) in _BASIC_EDGES


@lru_cache(maxsize=1 << 16)
def subtype(s1: Sort, s2: Sort) -> bool:
    """Decide ``s1 <= s2``.

    A subtype may offer more outputs and accept fewer inputs.  Output
    payloads are contravariant, input payloads covariant, continuations
    covariant.  Types with a payload that is not closed on its own are
    related to nothing.
    """
    if is_basic(s1) or is_basic(s2):
        return is_basic(s1) and is_basic(s2) and basic_subtype(s1, s2)
    if has_open_payload(s1) or has_open_payload(s2):
        return False
    try:
        return _sub(s1, s2, set())
    except IllFormed:
        return False


def _sort_sub(a: Sort, b: Sort, visited: set) -> bool:
    if is_basic(a) or is_basic(b):
        return is_basic(a) and is_basic(b) and basic_subtype(a, b)
    return _sub(a, b, visited)


def _sub(a: Sort, b: Sort, visited: set) -> bool:
    pair = (canonical(a), canonical(b))
    if pair in visited:
        return True
    visited.add(pair)
    a, b = unfold(a), unfold(b)
    if isinstance(a, End) and isinstance(b, End):
        return True
    if isinstance(a, Internal) and isinstance(b, Internal):
        if a.peer != b.peer:
            return False
        for bb in b.branches:
            ab = a.branch(bb.label)
            if ab is None:
                return False
            if not _sort_sub(bb.payload, ab.payload, visited):
                return False
            if not _sub(ab.cont, bb.cont, visited):
                return False
        return True
    if isinstance(a, External) and isinstance(b, External):
        if a.peer != b.peer:
            return False
        for ab in a.branches:
            bb = b.branch(ab.label)
            if bb is None:
                return False
            if not _sort_sub(ab.payload, bb.payload, visited):
                return False
            if not _sub(ab.cont, bb.cont, visited):
                return False
        return True
    return False


def equivalent(s1: Sort, s2: Sort) -> bool:
    return subtype(s1, s2) and subtype(s2, s1)


def context_subtype(g1: Context, g2: Context) -> bool:
    """Pointwise ordering: equal domains and each entry of ``g1`` below ``g2``'s."""
    if set(g1) != set(g2):
        return False
    return all(subtype(g1[k], g2[k]) for k in g1)


def is_end_like(s: Sort) -> bool:
    """``s <= end``: the entry may be discarded."""
    return is_session(s) and subtype(s, End())
