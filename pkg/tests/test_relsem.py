import itertools

import pytest

from streamcore.ast import Face
from streamcore.normalize import normalize_fun
from streamcore.parser import load_text
from streamcore.relsem import (
    AcceptableStateSpace,
    DeterminismError,
    DomainTooLarge,
    FiniteDomain,
    StepRelation,
    compose_io,
    compose_parallel,
    compose_state,
    enumerate_relation,
    eval_cons_inv,
    eval_gamma,
    eval_phi,
    eval_prim,
    externalize,
    i_relation,
    j_relation,
    k_relation,
    lifted,
    restrict_deterministic,
    run_relation,
    unroll,
)
from streamcore.values import BOT, UNIT, Term, all_defined

SAH_SRC = """
cons S / 0
cons H / 0
fun sah = [ x, t -> y where
  y := case t of { S() -> x | H() -> delta[0](y) } ]
"""


def sah_internal(carrier=(0, 1)):
    box = normalize_fun(load_text(SAH_SRC), "sah")
    dom = FiniteDomain({"t": (Term("S"), Term("H"), BOT)}, default=lifted(carrier))
    return enumerate_relation(box, dom)


# -- building blocks -------------------------------------------------------------


def test_prims_compute():
    assert eval_prim("add", (2, 3)) == (5,)
    assert eval_prim("min", (0.5, 1.0)) == (0.5,)


def test_prims_are_strict():
    assert eval_prim("add", (BOT, 3)) == (BOT,)
    assert eval_prim("mul", (2, BOT)) == (BOT,)


def test_unknown_prim_is_an_error():
    with pytest.raises(ValueError):
        eval_prim("frobnicate", (1,))


def test_destructuring_a_matching_term():
    assert eval_cons_inv("P", 2, Term("P", (1, 2))) == ((1, 2), UNIT)
    assert eval_cons_inv("S", 0, Term("S")) == ((), UNIT)


def test_destructuring_anything_else_gives_bottom():
    assert eval_cons_inv("S", 0, Term("H")) == ((), BOT)
    assert eval_cons_inv("P", 2, 7) == ((BOT, BOT), BOT)
    assert eval_cons_inv("P", 2, BOT) == ((BOT, BOT), BOT)


def test_guard_passes_value_when_controls_defined():
    assert eval_gamma(5, (UNIT, UNIT)) == 5
    assert eval_gamma(BOT, (UNIT,)) is BOT


def test_guard_blocks_on_any_undefined_control():
    assert eval_gamma(5, (UNIT, BOT)) is BOT
    assert eval_gamma(5, (BOT,)) is BOT


def test_merge_collects_defined_alternatives():
    assert eval_phi((BOT, 3)) == {3}
    assert eval_phi((3, 3)) == {3}
    assert eval_phi((BOT, BOT)) == {BOT}
    assert eval_phi((1, 2)) == {1, 2}


def test_guard_definedness_is_conjunction():
    # over every control vector up to arity 4, the guard is defined exactly
    # when all controls are
    for k in range(1, 5):
        for vec in itertools.product((UNIT, BOT), repeat=k):
            got = eval_gamma(UNIT, vec)
            assert (got is not BOT) == all(v is not BOT for v in vec)


def test_merge_definedness_is_disjunction():
    for k in range(1, 5):
        for vec in itertools.product((UNIT, BOT), repeat=k):
            got = eval_phi(vec)
            assert (BOT not in got) == any(v is not BOT for v in vec)


# -- finite domains --------------------------------------------------------------


def test_lifted_adds_bottom_once():
    assert lifted((0, 1)) == (0, 1, BOT)
    assert lifted((0, BOT)) == (0, BOT)


def test_domain_lookup_precedence():
    dom = FiniteDomain({"x": (7,)}, default=(0, 1), controls=frozenset({"c"}))
    assert dom.for_var("x") == (7,)
    assert dom.for_var("c") == (UNIT, BOT)
    assert dom.for_var("anything") == (0, 1)


# -- step relations --------------------------------------------------------------


def test_rows_are_sorted_and_deduplicated():
    face = Face((), ("a",), ("b",), ())
    rows = [((), (1,), (1,), ()), ((), (0,), (0,), ()), ((), (1,), (1,), ())]
    r = StepRelation.from_rows(face, "internal", rows)
    assert r.rows == (((), (0,), (0,), ()), ((), (1,), (1,), ()))


def test_a_relation_is_rows_or_step_not_both():
    face = Face((), ("a",), ("b",), ())
    with pytest.raises(ValueError):
        StepRelation(face, "internal")
    with pytest.raises(ValueError):
        StepRelation(face, "internal", rows=(), step=lambda s, a: set())


def test_step_fn_from_rows_groups_outcomes():
    face = Face((), ("a",), ("b",), ())
    r = StepRelation.from_rows(face, "internal", [((), (0,), (1,), ()), ((), (0,), (2,), ())])
    assert r.step_fn()((), (0,)) == {((1,), ()), ((2,), ())}
    assert r.step_fn()((), (9,)) == set()


def test_enumerating_the_identity_box():
    box = normalize_fun(load_text("fun id = [ x -> y where y := x ]"), "id")
    r = enumerate_relation(box, FiniteDomain(default=(0, 1, BOT)))
    assert set(r.rows) == {((), (v,), (v,), ()) for v in (0, 1, BOT)}
    assert len(r.rows) == 3


def test_enumerated_sample_hold_is_left_total_and_functional():
    r = sah_internal()
    seen = {}
    for s, a, b, s2 in r.rows:
        assert (s, a) not in seen
        seen[(s, a)] = (b, s2)
    # every (state, input) point of the lifted space appears
    assert len(seen) == 3 * 3 * 3


def test_enumerated_sample_hold_rows_follow_the_select_hold_law():
    for (s,), (x, t), (y,), (s2,) in sah_internal().rows:
        if t == Term("S"):
            assert y == x and s2 == y
        elif t == Term("H"):
            assert y == s and s2 == y
        else:
            assert t is BOT and y is BOT and s2 is BOT


def test_enumeration_respects_the_bound():
    box = normalize_fun(load_text(SAH_SRC), "sah")
    with pytest.raises(DomainTooLarge) as err:
        enumerate_relation(box, bound=3)
    assert err.value.size > 3


def test_join_of_two_defined_alternatives_forks_the_row():
    src = """
fun fork = [ x -> y where
  exists a, b ( a := x /\\ b := 1 /\\ y := phi(a, b) ) ]
"""
    box = normalize_fun(load_text(src), "fork")
    r = enumerate_relation(box, FiniteDomain(default=(0, 1)))
    outs = {b for _, (x,), (b,), _ in r.rows if x == 0}
    assert outs == {0, 1}


# -- externalize and determinism ---------------------------------------------------


def test_externalize_keeps_defined_io_rows():
    ext = externalize(sah_internal())
    assert ext.mode == "external"
    # select works from any pre-state (3*2), hold needs a defined one (2*2)
    assert len(ext.rows) == 3 * 2 + 2 * 2
    for s, a, b, s2 in ext.rows:
        assert all_defined(a) and all_defined(b)


def test_externalize_counts_mixed_definedness_outputs():
    face = Face((), ("a",), ("b1", "b2"), ())
    r = StepRelation.from_rows(face, "internal", [((), (0,), (0, BOT), ())])
    ext = externalize(r)
    assert ext.rows == ()
    assert any("mixed" in n for n in ext.notes)


def test_restricting_sample_hold_is_deterministic():
    det = restrict_deterministic(
        externalize(sah_internal()),
        AcceptableStateSpace(lambda s: all_defined(s), "defined states"),
    )
    assert det.mode == "deterministic"
    assert len(det.rows) == 8


def test_missing_transition_is_reported():
    face = Face(("s",), ("a",), ("b",), ("s2",))
    rows = [((0,), (0,), (0,), (0,)), ((1,), (1,), (1,), (1,))]
    r = StepRelation.from_rows(face, "external", rows)
    with pytest.raises(DeterminismError) as err:
        restrict_deterministic(r, AcceptableStateSpace(lambda s: True))
    assert "no transition" in str(err.value)


def test_forked_transition_is_reported_with_witness():
    face = Face((), ("a",), ("b",), ())
    rows = [((), (0,), (1,), ()), ((), (0,), (2,), ())]
    r = StepRelation.from_rows(face, "external", rows)
    with pytest.raises(DeterminismError) as err:
        restrict_deterministic(r, AcceptableStateSpace(lambda s: True))
    assert err.value.witness is not None
    s, a, outcomes = err.value.witness
    assert a == (0,) and len(outcomes) == 2


def test_escaping_the_acceptable_space_is_reported():
    face = Face(("s",), (), (), ("s2",))
    r = StepRelation.from_rows(face, "external", [((0,), (), (), (5,))])
    with pytest.raises(DeterminismError) as err:
        restrict_deterministic(r, AcceptableStateSpace(lambda s: s[0] in (0, 1)))
    assert "leaves" in str(err.value)


# -- composition -----------------------------------------------------------------


def test_parallel_composition_concatenates_wires():
    q = j_relation([(0, 1)])
    r = j_relation([(0, 1, 2)])
    both = compose_parallel(q, r)
    assert len(both.rows) == 6
    assert both.face.inputs == ("a1", "a1'")
    assert all(a == b for _, a, b, _ in both.rows)


def test_piping_composition_feeds_outputs_forward():
    double = StepRelation.from_rows(
        Face((), ("a",), ("b",), ()), "internal", [((), (v,), (2 * v,), ()) for v in (0, 1, 2)]
    )
    inc = StepRelation.from_rows(
        Face((), ("u",), ("w",), ()), "internal", [((), (v,), (v + 1,), ()) for v in range(5)]
    )
    piped = compose_io(double, inc)
    assert {(a, b) for _, (a,), (b,), _ in [(r[0], r[1], r[2], r[3]) for r in piped.rows]} == {
        (0, 1),
        (1, 3),
        (2, 5),
    }


def test_piping_width_mismatch_is_an_error():
    with pytest.raises(ValueError):
        compose_io(j_relation([(0,)]), j_relation([(0,), (0,)]))


def test_state_threading_width_mismatch_is_an_error():
    with pytest.raises(ValueError):
        compose_state(k_relation([(0,)]), k_relation([(0,), (0,)]))


def test_modes_must_agree_to_compose():
    q = sah_internal()
    with pytest.raises(ValueError):
        compose_parallel(q, externalize(sah_internal()))


def test_unit_of_parallel_composition():
    r = sah_internal()
    assert compose_parallel(r, i_relation()).rows == r.rows
    assert compose_parallel(i_relation(), r).rows == r.rows
    assert compose_parallel(r, i_relation()).face == r.face


def test_unit_of_piping_composition():
    r = sah_internal()
    dom_x = (0, 1, BOT)
    dom_t = (Term("S"), Term("H"), BOT)
    j = j_relation([dom_x, dom_t])
    assert compose_io(j, r).rows == r.rows
    j_out = j_relation([dom_x])
    assert compose_io(r, j_out).rows == r.rows


def test_unit_of_state_threading():
    r = sah_internal()
    k = k_relation([(0, 1, BOT)])
    assert compose_state(k, r).rows == r.rows
    assert compose_state(r, k).rows == r.rows


def test_unrolling_once_is_the_relation_itself():
    r = sah_internal()
    assert unroll(r, 1) is r


def test_unrolled_relation_agrees_with_two_plain_steps():
    det = restrict_deterministic(
        externalize(sah_internal()),
        AcceptableStateSpace(lambda s: all_defined(s)),
    )
    two = unroll(det, 2)
    S, H = Term("S"), Term("H")
    stream = [(1, S), (0, H), (1, H), (0, S)]
    outs1, states1 = run_relation(det, (0,), stream)
    outs2, states2 = run_relation(two, (0,), [(1, S, 0, H), (1, H, 0, S)])
    assert [v for o in outs2 for v in o] == [v for o in outs1 for v in o]
    assert states2[-1] == states1[-1]


def test_step_mode_composition_runs_like_rows_mode():
    det = restrict_deterministic(
        externalize(sah_internal()),
        AcceptableStateSpace(lambda s: all_defined(s)),
    )
    q_step = StepRelation.from_step(det.face, det.mode, det.step_fn())
    r_step = StepRelation.from_step(det.face, det.mode, det.step_fn())
    pair_rows = compose_parallel(det, det)
    pair_step = compose_parallel(q_step, r_step)
    S, H = Term("S"), Term("H")
    stream = [(1, S, 0, H), (0, H, 1, S)]
    outs_a, _ = run_relation(pair_rows, (0, 1), stream)
    outs_b, _ = run_relation(pair_step, (0, 1), stream)
    assert outs_a == outs_b


def test_running_a_relation_over_a_stream():
    det = restrict_deterministic(
        externalize(sah_internal((0, 1, 2))),
        AcceptableStateSpace(lambda s: all_defined(s)),
    )
    S, H = Term("S"), Term("H")
    outs, states = run_relation(det, (0,), [(1, S), (2, H), (0, H), (2, S)])
    assert [y for (y,) in outs] == [1, 1, 1, 2]
    assert states == [(1,), (1,), (1,), (2,)]


def test_running_a_forked_relation_fails():
    face = Face((), ("a",), ("b",), ())
    r = StepRelation.from_rows(face, "external", [((), (0,), (1,), ()), ((), (0,), (2,), ())])
    with pytest.raises(DeterminismError):
        run_relation(r, (), [(0,)])
