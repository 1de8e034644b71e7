"""Shared fixtures and the alpha-equivalence helper used across the suite."""

from __future__ import annotations

import pytest

from streamcore.ast import Apply, Assign, Comma, Lit, UnitTuple, Var
from streamcore.values import value_key


@pytest.fixture(scope="session")
def corpus():
    from streamcore.corpus import build_corpus

    return build_corpus()


# ---------------------------------------------------------------------------
# alpha equivalence of assignment sets
#
# Two flat bodies are compared up to a bijective renaming of the
# non-rigid variables (machine-introduced names); rigid names (face
# variables, typically) must match literally.


def _unify_name(a: str, b: str, fwd: dict, bwd: dict, rigid: set) -> bool:
    if a in rigid or b in rigid:
        return a == b
    if fwd.get(a, b) != b or bwd.get(b, a) != a:
        return False
    fwd[a] = b
    bwd[b] = a
    return True


def _unify_expr(a, b, fwd: dict, bwd: dict, rigid: set) -> bool:
    match (a, b):
        case (Var(x), Var(y)):
            return _unify_name(x, y, fwd, bwd, rigid)
        case (Lit(u), Lit(v)):
            return value_key(u) == value_key(v)
        case (UnitTuple(), UnitTuple()):
            return True
        case (Comma(l1, r1), Comma(l2, r2)):
            return _unify_expr(l1, l2, fwd, bwd, rigid) and _unify_expr(r1, r2, fwd, bwd, rigid)
        case (Apply(op1, arg1), Apply(op2, arg2)):
            return op1 == op2 and _unify_expr(arg1, arg2, fwd, bwd, rigid)
        case _:
            return False


def _unify_assign(a: Assign, b: Assign, fwd: dict, bwd: dict, rigid: set) -> bool:
    if len(a.targets) != len(b.targets):
        return False
    for t1, t2 in zip(a.targets, b.targets):
        if not _unify_name(t1, t2, fwd, bwd, rigid):
            return False
    return _unify_expr(a.rhs, b.rhs, fwd, bwd, rigid)


def alpha_match(got, want, rigid=()) -> dict | None:
    """Bijection from `got` names to `want` names making the multisets equal.

    Both arguments are sequences of Assign clauses.  Returns the renaming,
    or None when no bijection exists.
    """
    rigid = set(rigid)
    got = list(got)
    want = list(want)
    if len(got) != len(want):
        return None

    def go(i, used, fwd, bwd):
        if i == len(got):
            return fwd
        for j, w in enumerate(want):
            if j in used:
                continue
            f2, b2 = dict(fwd), dict(bwd)
            if _unify_assign(got[i], w, f2, b2, rigid):
                res = go(i + 1, used | {j}, f2, b2)
                if res is not None:
                    return res
        return None

    return go(0, frozenset(), {}, {})
