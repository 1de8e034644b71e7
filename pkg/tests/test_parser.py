import pytest

from streamcore.ast import (
    Assign,
    BoxAbs,
    ConsPat,
    IsBot,
    IsNotBot,
    Lambda,
    PatVar,
)
from streamcore.parser import (
    LoadError,
    ParseError,
    load,
    load_text,
    load_with_diagnostics,
    parse,
)
from streamcore.pretty import show_program
from streamcore.values import BOT, Term

SAH = """
-- comments run to the end of the line
cons S / 0
cons H / 0

fun sah = [ x, t -> y where
  y := case t of { S() -> x | H() -> delta[0](y) } ]
"""


def test_load_text_builds_lookup_tables():
    db = load_text(SAH)
    assert set(db.constructors) == {"S", "H"}
    assert db.constructors["S"].arity == 0
    assert "sah" in db.functions
    assert isinstance(db.functions["sah"].body, BoxAbs)


def test_show_parse_round_trip_on_sah():
    db = load_text(SAH)
    again = load_text(show_program(db))
    assert again.decls == db.decls


def test_show_parse_round_trip_on_second_form():
    src = """
cons S / 0
fun f = [ s@0 / x -> y / y where
  exists c, v ( c := ~S(x) /\\ v := gamma(s, c) /\\ y := phi(v, v) ) ]
"""
    db = load_text(src)
    again = load_text(show_program(db))
    assert again.decls == db.decls


def test_lambda_with_rules():
    src = "cons C / 1\nfun f = \\( C(a) -> a | v -> v )"
    db = load_text(src)
    body = db.functions["f"].body
    assert isinstance(body, Lambda)


def test_parse_error_carries_position():
    with pytest.raises(ParseError) as err:
        load_text("fun f = [ x -> y where y := ? ]", unit="bad.sc")
    assert "bad.sc:1:" in str(err.value)


def test_prim_declaration_shape():
    db = load_text("prim add 2 -> 1")
    shape = db.primitives["add"].shape
    assert (shape.in_arity, shape.out_arity) == (2, 1)


def test_unknown_name_is_an_error():
    with pytest.raises(LoadError):
        load_text("fun f = [ x -> y where y := frob(x) ]")


def test_nullary_pattern_must_be_written_with_parens():
    # a bare constructor name in a pattern would silently bind a variable
    with pytest.raises(LoadError) as err:
        load_text("cons S / 0\nfun f = \\( S -> 1 )")
    assert any("shadows a constructor" in d.message for d in err.value.diagnostics)


def test_constructor_arity_checked_in_patterns():
    with pytest.raises(LoadError):
        load_text("cons P / 2\nfun f = \\( P(a) -> a )")


def test_case_arms_use_pattern_nodes():
    from streamcore.ast import Choice, Match

    db = load_text("cons S / 0\nfun f = \\( S() -> 0 | v -> v )")
    rule = db.functions["f"].body.rule
    pats = []

    def walk(r):
        if isinstance(r, Choice):
            walk(r.left)
            walk(r.right)
        elif isinstance(r, Match):
            pats.append(r.pattern)

    walk(rule)
    kinds = [type(p) for p in pats]
    # first arm tests the constructor, second binds a variable
    assert kinds == [ConsPat, PatVar]


def test_identical_redeclarations_across_units_merge():
    a = parse("prim add 2 -> 1\nfun f = [ x -> y where y := add(x, x) ]", "a.sc")
    b = parse("prim add 2 -> 1\nfun g = [ x -> y where y := add(x, 1) ]", "b.sc")
    db = load([a, b])
    assert set(db.functions) == {"f", "g"}


def test_conflicting_redeclaration_is_an_error():
    a = parse("prim add 2 -> 1", "a.sc")
    b = parse("prim add 1 -> 1", "b.sc")
    with pytest.raises(LoadError):
        load([a, b])


def test_duplicate_fun_is_an_error():
    a = parse("fun f = [ x -> y where y := x ]", "a.sc")
    b = parse("fun f = [ x -> y where y := x ]", "b.sc")
    with pytest.raises(LoadError):
        load([a, b])


def test_reserved_prefix_warns_but_loads():
    db, diags = load_with_diagnostics(
        [parse("fun f = [ %x -> y where y := %x ]", "w.sc")]
    )
    assert "f" in db.functions
    assert any(d.severity == "warning" and d.kind == "fresh-prefix" for d in diags)


def test_diagnostic_json_schema():
    _, diags = load_with_diagnostics(
        [parse("fun f = [ %x -> y where y := %x ]", "w.sc")]
    )
    blob = diags[0].to_json()
    assert blob["schema"] == "streamcore/1"
    assert blob["severity"] == "warning"


def test_initial_values_only_on_pre_state():
    with pytest.raises(ParseError):
        load_text("fun f = [ s / x@1 -> y / s where y := x ]")


def test_bottom_initial_value_rejected():
    with pytest.raises(LoadError):
        load_text("fun f = [ s@_|_ / x -> y / s2 where y := x /\\ s2 := x ]")


def test_face_with_pre_state_needs_post_state():
    with pytest.raises(ParseError):
        load_text("fun f = [ s@0 / x -> y where y := x ]")


def test_bottom_tests_parse():
    src = """
cons S / 0
fun f = [ x -> y where
  exists c ( c := ~S(x) /\\ (c = _|_ \\/ y := 1) /\\ (c /= _|_ \\/ y := 0) ) ]
"""
    db = load_text(src)
    forms = []

    def walk(f):
        for attr in ("left", "right", "body"):
            if hasattr(f, attr):
                walk(getattr(f, attr))
        forms.append(f)

    walk(db.functions["f"].body.body)
    kinds = {type(f) for f in forms}
    assert IsBot in kinds and IsNotBot in kinds


def test_delta_init_literal():
    db = load_text("cons Z / 0\nfun f = [ x -> y where y := delta[Z()](x) ]")
    rhss = []

    def exprs(f):
        if isinstance(f, Assign):
            rhss.append(f.rhs)
        for attr in ("left", "right", "body"):
            if hasattr(f, attr):
                exprs(getattr(f, attr))

    exprs(db.functions["f"].body.body)
    assert any(
        getattr(getattr(e, "op", None), "inits", None) == (Term("Z"),) for e in rhss
    )


def test_delta_init_unknown_constructor_rejected():
    with pytest.raises(LoadError):
        load_text("fun f = [ x -> y where y := delta[Q()](x) ]")


def test_bot_literal_parses_in_expressions():
    db = load_text("fun f = [ x -> y where y := _|_ ]")
    assign = None

    def find(f):
        nonlocal assign
        if isinstance(f, Assign):
            assign = f
        for attr in ("left", "right", "body"):
            if hasattr(f, attr):
                find(getattr(f, attr))

    find(db.functions["f"].body.body)
    assert assign.rhs.value is BOT
