import pytest
from conftest import alpha_match

from streamcore.ast import (
    Apply,
    Assign,
    BoxAbs,
    Comma,
    ConsInvRef,
    Exists,
    GammaOp,
    PhiOp,
    Var,
    form_free_vars,
    iter_forms,
)
from streamcore.checks import classify_form
from streamcore.normalize import (
    CausalityError,
    causality_check,
    copy_propagate,
    normalize_fun,
    normalize_program,
    prenex,
    split_prenex,
)
from streamcore.parser import load_text
from streamcore.ast import FunDef


def norm(src, name, **kw):
    return normalize_fun(load_text(src), name, **kw)


def assigns_of(box):
    _, clauses = split_prenex(box.body)
    return [c for c in clauses if isinstance(c, Assign)]


def test_identity_normalizes_to_one_copy():
    box = norm("fun id = [ x -> y where y := x ]", "id")
    assert [(a.targets, a.rhs) for a in assigns_of(box)] == [(("y",), Var("x"))]


def test_delay_becomes_explicit_state():
    box = norm("fun delay = [ x -> y where y := delta[0](x) ]", "delay")
    face = box.face
    assert len(face.pre_state) == 1
    assert len(face.post_state) == 1
    assert dict(box.state_init) == {face.pre_state[0]: 0}
    # output reads the state; the post-state slot stores the input
    got = {(a.targets, a.rhs.name) for a in assigns_of(box) if isinstance(a.rhs, Var)}
    assert (("y",), face.pre_state[0]) in got


def test_sah_normalizes_to_the_guarded_merge():
    src = """
cons S / 0
cons H / 0
fun sah = [ x, t -> y where
  y := case t of { S() -> x | H() -> delta[0](y) } ]
"""
    box = norm(src, "sah")
    assert classify_form(FunDef("sah", box)) == 2
    s = box.face.pre_state[0]
    assert box.face.inputs == ("x", "t")
    assert box.face.outputs == ("y",)
    assert box.face.post_state == ("y",)
    want = [
        Assign(("c",), Apply(ConsInvRef("S"), Var("t"))),
        Assign(("v",), Apply(GammaOp(), Comma(Var("x"), Var("c")))),
        Assign(("d",), Apply(ConsInvRef("H"), Var("t"))),
        Assign(("w",), Apply(GammaOp(), Comma(Var(s), Var("d")))),
        Assign(("y",), Apply(PhiOp(), Comma(Var("v"), Var("w")))),
    ]
    ren = alpha_match(assigns_of(box), want, rigid={"x", "t", "y", s})
    assert ren is not None


def test_normalized_bodies_do_not_leak_variables():
    src = """
cons S / 0
cons H / 0
prim add 2 -> 1
fun sah = [ x, t -> y where
  y := case t of { S() -> x | H() -> delta[0](y) } ]
fun ma = [ x -> y where y := add(x, delta[0](x)) ]
"""
    db = load_text(src)
    _, boxes = normalize_program(db)
    for name, box in boxes.items():
        assert form_free_vars(box.body) <= set(box.face.all_vars()), name


def test_normalized_binders_are_distinct():
    src = """
cons S / 0
fun f = [ x -> y where
  y := case x of { S() -> delta[0](y) | v -> v } ]
"""
    box = norm(src, "f")
    binders, _ = split_prenex(box.body)
    assert len(binders) == len(set(binders))


def test_normalize_is_deterministic():
    src = "cons S / 0\nfun f = \\( S() -> 1 | v -> v )"
    assert norm(src, "f") == norm(src, "f")


def test_composite_expressions_are_decomposed():
    src = "prim add 2 -> 1\nfun f = [ x -> y where y := add(add(x, 1), add(x, 2)) ]"
    box = norm(src, "f")
    for a in assigns_of(box):
        if isinstance(a.rhs, Apply):
            from streamcore.ast import flatten_comma

            assert all(isinstance(x, Var) for x in flatten_comma(a.rhs.arg))


def test_calls_are_kept_abstract():
    src = """
prim add 2 -> 1
fun inc = [ x -> y where y := add(x, 1) ]
fun twice = [ a -> b where b := inc(inc(a)) ]
"""
    from streamcore.ast import FunRef

    _, boxes = normalize_program(load_text(src))
    ops = [a.rhs.op for a in assigns_of(boxes["twice"]) if isinstance(a.rhs, Apply)]
    assert FunRef("inc") in ops


def test_stateful_callee_state_threads_into_caller_face():
    src = """
fun delay = [ x -> y where y := delta[7](x) ]
fun outer = [ a -> b where b := delay(a) ]
"""
    _, boxes = normalize_program(load_text(src))
    box = boxes["outer"]
    assert len(box.face.pre_state) == 1
    assert dict(box.state_init)[box.face.pre_state[0]] == 7


def test_second_form_input_is_already_flat():
    src = """
cons S / 0
fun f = [ s@0 / x -> y / y where
  exists c, v ( c := ~S(x) /\\ v := gamma(s, c) /\\ y := phi(v, v) ) ]
"""
    db = load_text(src)
    box = normalize_fun(db, "f")
    ren = alpha_match(assigns_of(box), assigns_of(db.functions["f"].body), rigid={"s", "x", "y"})
    assert ren is not None


# -- copy propagation ----------------------------------------------------------


def test_copy_propagation_drops_plumbing():
    box = norm("prim add 2 -> 1\nfun f = [ x -> y where y := add(x, x) ]", "f", copyprop=False)
    tidy = copy_propagate(box)
    assert len(assigns_of(tidy)) < len(assigns_of(box))
    assert len(assigns_of(tidy)) == 1


def test_copy_propagation_is_idempotent():
    src = """
cons S / 0
cons H / 0
fun sah = [ x, t -> y where
  y := case t of { S() -> x | H() -> delta[0](y) } ]
"""
    box = norm(src, "sah")
    assert copy_propagate(box) == box


def test_copy_propagation_merges_output_into_post_state_slot():
    src = "fun f = [ x -> y where y := delta[0](x) ]"
    box = norm(src, "f", copyprop=False)
    tidy = copy_propagate(box)
    # the fresh post-state slot is a copy of the stored input
    assert tidy.face.post_state != box.face.post_state or len(assigns_of(tidy)) <= len(assigns_of(box))


def test_copy_propagation_keeps_semantics():
    from streamcore.relsem import FiniteDomain, enumerate_relation
    from streamcore.values import BOT, Term

    src = """
cons S / 0
cons H / 0
fun sah = [ x, t -> y where
  y := case t of { S() -> x | H() -> delta[0](y) } ]
"""
    raw = norm(src, "sah", copyprop=False)
    tidy = norm(src, "sah", copyprop=True)
    dom = FiniteDomain({"t": (Term("S"), Term("H"), BOT)}, default=(0, 1, BOT))

    def external(box):
        face = box.face
        rows = set()
        for (s, x, y, s2) in enumerate_relation(box, dom).rows:
            rows.add((s, x, y, s2))
        return rows

    # same face value behaviour once internal names are projected away
    raw_rows = {(s, x, y, s2) for (s, x, y, s2) in external(raw)}
    tidy_rows = {(s, x, y, s2) for (s, x, y, s2) in external(tidy)}
    assert raw_rows == tidy_rows


# -- prenex ---------------------------------------------------------------------


def test_prenex_lifts_binders_to_the_front():
    src = """
cons S / 0
fun f = [ x -> y where
  y := case x of { S() -> 1 | v -> v } ]
"""
    box = norm(src, "f", copyprop=False)
    p = prenex(box.body)
    assert isinstance(p, Exists)
    assert not any(isinstance(g, Exists) for g in iter_forms(p.body))


def test_split_prenex_returns_binders_and_clauses():
    src = "cons S / 0\nfun f = [ x -> y where y := case x of { S() -> 1 | v -> v } ]"
    box = norm(src, "f")
    binders, clauses = split_prenex(box.body)
    assert all(isinstance(c, Assign) for c in clauses)
    assert set(binders).isdisjoint(set(box.face.all_vars()))


# -- causality -------------------------------------------------------------------


def test_delay_breaks_dependency_cycles():
    src = """
prim add 2 -> 1
fun ok = [ x -> y where y := add(x, delta[0](y)) ]
"""
    box = norm(src, "ok")
    order = causality_check(box)
    assert order is not None


def test_instantaneous_cycle_is_rejected():
    src = """
prim add 2 -> 1
fun bad = [ x -> y where y := add(x, y) ]
"""
    with pytest.raises(CausalityError) as err:
        causality_check(norm(src, "bad"))
    assert "cycle" in str(err.value)


def test_causality_order_respects_dependencies():
    src = "prim add 2 -> 1\nfun f = [ x -> y where y := add(add(x, 1), 2) ]"
    box = norm(src, "f", copyprop=False)
    order = causality_check(box)
    seen = set(box.face.pre_state) | set(box.face.inputs)
    for a in order.assignments:
        from streamcore.ast import expr_free_vars

        assert expr_free_vars(a.rhs) <= seen
        seen |= set(a.targets)
