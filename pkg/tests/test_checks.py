import pytest

from streamcore.checks import ShapeError, check_sanity, check_shape, classify_form
from streamcore.parser import load_text, load_with_diagnostics, parse


def sanity(src, kind=None):
    """Sanity violations of a parseable (if not loadable) program."""
    db, _ = load_with_diagnostics([parse(src)])
    out = check_sanity(db)
    if kind is not None:
        out = [v for v in out if v.kind == kind]
    return out


def test_clean_program_has_no_violations():
    src = """
cons S / 0
cons H / 0
fun sah = [ x, t -> y where
  y := case t of { S() -> x | H() -> delta[0](y) } ]
"""
    assert sanity(src) == []


def test_repeated_pattern_variable_is_nonlinear():
    out = sanity("cons P / 2\nfun f = \\( P(a, a) -> a )", "linearity")
    assert out and out[0].var == "a"


def test_repeated_face_input_is_nonlinear():
    out = sanity("fun f = [ x, x -> y where y := x ]", "linearity")
    assert out and out[0].var == "x"


def test_binder_bound_twice_breaks_barendregt():
    src = """
cons S / 0
fun f = [ x -> y where
  y := case x, x of { S(), c -> c | c, S() -> c } ]
"""
    out = sanity(src, "barendregt")
    assert any(v.var == "c" for v in out)


def test_binder_shadowing_face_variable_breaks_barendregt():
    src = "cons S / 0\nfun f = [ x -> y where y := case x of { S() -> 0 | x -> x } ]"
    out = sanity(src, "barendregt")
    assert any(v.var == "x" for v in out)


def test_double_assignment_rejected():
    out = sanity("fun f = [ x -> y where y := x /\\ y := x ]", "single-assignment")
    assert out and out[0].var == "y"


def test_disjunctive_alternatives_are_not_double_assignment():
    src = "fun f = [ x -> y where (y := x \\/ y := 0) ]"
    assert sanity(src, "single-assignment") == []


def test_unassigned_variable_reported():
    out = sanity("fun f = [ x -> y where y := z ]", "determinism")
    assert out and out[0].var == "z"


def test_loader_turns_violations_into_error_diagnostics():
    _, diags = load_with_diagnostics([parse("fun f = [ x -> y where y := x /\\ y := x ]")])
    assert any(d.severity == "error" and d.kind == "single-assignment" for d in diags)


def test_bot_literal_warns_outside_disjunction():
    out = sanity("fun f = [ x -> y where y := _|_ ]", "bot-literal")
    assert out and out[0].severity == "warning"


def test_bot_literal_fine_inside_disjunction():
    src = "fun f = [ x -> y where (y := x \\/ y := _|_) ]"
    assert sanity(src, "bot-literal") == []


# -- shape --------------------------------------------------------------------


def test_shapes_of_loaded_functions():
    src = """
prim add 2 -> 1
fun one = [ x -> y where y := add(x, 1) ]
fun two = [ a, b -> c, d where c := add(a, b) /\\ d := a ]
"""
    table = check_shape(load_text(src))
    assert table.funs["one"].in_arity == 1
    assert table.funs["one"].out_arity == 1
    assert table.funs["two"].in_arity == 2
    assert table.funs["two"].out_arity == 2


def shape_error(src):
    db, _ = load_with_diagnostics([parse(src)])
    with pytest.raises(ShapeError):
        check_shape(db)


def test_wrong_primitive_arity_is_a_shape_error():
    shape_error("prim add 2 -> 1\nfun f = [ x -> y where y := add(x) ]")


def test_wrong_constructor_arity_is_a_shape_error():
    shape_error("cons P / 2\nfun f = [ x -> y where y := P(x) ]")


def test_assignment_width_mismatch_is_a_shape_error():
    shape_error("prim add 2 -> 1\nfun f = [ x -> y where y, z := add(x, x) ]")


def test_call_width_follows_callee_face():
    src = """
prim add 2 -> 1
fun inc = [ x -> y where y := add(x, 1) ]
fun twice = [ a -> b where b := inc(inc(a)) ]
"""
    table = check_shape(load_text(src))
    assert table.funs["twice"].in_arity == 1


# -- form classification --------------------------------------------------------


def test_first_form_classification():
    src = """
cons S / 0
cons H / 0
fun sah = [ x, t -> y where
  y := case t of { S() -> x | H() -> delta[0](y) } ]
"""
    db = load_text(src)
    assert classify_form(db.functions["sah"]) == 1


def test_lambda_is_first_form():
    db = load_text("cons S / 0\nfun f = \\( S() -> 0 | v -> v )")
    assert classify_form(db.functions["f"]) == 1


def test_second_form_classification():
    src = """
cons S / 0
fun f = [ s@0 / x -> y / y where
  exists c, v ( c := ~S(x) /\\ v := gamma(s, c) /\\ y := phi(v, v) ) ]
"""
    db = load_text(src)
    assert classify_form(db.functions["f"]) == 2


def test_third_form_classification():
    src = """
cons S / 0
fun f = [ s@0 / x -> y / y where
  exists c ( c := ~S(x) /\\ (c = _|_ \\/ y := x) /\\ (c /= _|_ \\/ y := s) ) ]
"""
    db = load_text(src)
    assert classify_form(db.functions["f"]) == 3


def test_stateful_box_with_case_is_mixed():
    src = """
cons S / 0
fun f = [ s@0 / x -> y / y where
  y := case x of { S() -> s | v -> v } ]
"""
    db = load_text(src)
    assert classify_form(db.functions["f"]) == "mixed"


def test_loader_tags_functions_with_their_form():
    db = load_text("fun f = [ x -> y where y := x ]")
    assert db.functions["f"].form_tag == 1
