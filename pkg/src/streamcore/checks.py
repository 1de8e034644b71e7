"""Well-formedness checks: hygiene conditions, arity checking, form classification."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Optional, Union

from .ast import (
    Abs,
    And,
    Apply,
    Assign,
    BotForm,
    BoxAbs,
    Case,
    Choice,
    Comma,
    ConsDecl,
    ConsInvRef,
    ConsRef,
    DeltaOp,
    Exists,
    Expr,
    Face,
    Form,
    FunDef,
    FunRef,
    GammaOp,
    IsBot,
    IsNotBot,
    Lambda,
    Let,
    Lit,
    Match,
    NamedRef,
    Or,
    Pat,
    PatComma,
    PatUnit,
    PatVar,
    ConsPat,
    PhiOp,
    PrimRef,
    ProgramDB,
    RuleTree,
    Shape,
    Span,
    Top,
    UnitTuple,
    Var,
    abs_all_idents,
    abs_free_vars,
    abs_patterns,
    collect_pat_exists_binders,
    flatten_comma,
    iter_abs_exprs,
    iter_exprs,
    iter_forms,
    iter_matches,
    pat_vars,
)
from .values import BOT

__all__ = [
    "SanityViolation",
    "check_sanity",
    "ShapeError",
    "ShapeTable",
    "check_shape",
    "classify_form",
]


# ---------------------------------------------------------------------------
# Sanity (hygiene) checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SanityViolation:
    kind: str  # linearity | barendregt | single-assignment | determinism | bot-literal
    where: str  # function name
    var: Optional[str]
    message: str
    severity: str = "error"
    span: Optional[Span] = None


def check_sanity(db: ProgramDB) -> list[SanityViolation]:
    """All hygiene violations in the database, in declaration order."""
    out: list[SanityViolation] = []
    for fd in (d for d in db.decls if isinstance(d, FunDef)):
        out.extend(_check_fun(fd))
    return out


def _check_fun(fd: FunDef) -> list[SanityViolation]:
    a = fd.body
    out: list[SanityViolation] = []

    def bad(kind, var, msg, severity="error", span=None):
        out.append(SanityViolation(kind, fd.name, var, msg, severity, span))

    # Linearity: no repeated variable inside a pattern; face left side linear.
    for p in abs_patterns(a):
        for v, n in Counter(pat_vars(p)).items():
            if n > 1:
                bad("linearity", v, f"variable {v} occurs {n} times in one pattern")
    if isinstance(a, BoxAbs):
        left = a.face.pre_state + a.face.inputs
        for v, n in Counter(left).items():
            if n > 1:
                bad("linearity", v, f"variable {v} occurs {n} times on the face input side")

    # Barendregt: pattern/exists binders pairwise distinct and fresh.
    binders = collect_pat_exists_binders(a)
    for v, n in Counter(binders).items():
        if n > 1:
            bad("barendregt", v, f"binder {v} is bound {n} times")
    free = abs_free_vars(a)
    if isinstance(a, BoxAbs):
        free = free | set(a.face.all_vars())
    for v in sorted(set(binders) & free):
        bad("barendregt", v, f"binder {v} shadows a free or face variable")

    # Single assignment: at most one definition per variable (alternative
    # definitions inside a disjunction are different branches of one spec
    # and do not count as re-assignment).
    conj_targets = _conjunctive_targets(a)
    for v, n in Counter(conj_targets).items():
        if n > 1:
            bad("single-assignment", v, f"variable {v} is assigned {n} times")

    # Determinism: every variable is an input, a binder, or assigned.
    assigned = set(_all_targets(a)) | {v for p in abs_patterns(a) for v in pat_vars(p)}
    allowed = set()
    if isinstance(a, BoxAbs):
        allowed = set(a.face.pre_state) | set(a.face.inputs)
    for v in sorted(abs_all_idents(a) - assigned - allowed):
        bad("determinism", v, f"variable {v} is never assigned")

    # Undefined-value literals are legal but suspicious outside disjunctive specs.
    for e, under_or in _exprs_with_or_context(a):
        if isinstance(e, Lit) and e.value is BOT and not under_or:
            bad("bot-literal", None, "literal _|_ outside a disjunctive specification", severity="warning", span=e.span)
    return out


def _all_targets(a: Abs) -> list[str]:
    """Assignment targets and let binders, counting disjuncts too."""
    targets: list[str] = []

    def in_expr(e: Expr):
        for sub in iter_exprs(e):
            if isinstance(sub, Let):
                targets.extend(sub.binder)

    match a:
        case Lambda(rule):
            for m in iter_matches(rule):
                in_expr(m.body)
        case BoxAbs(_, body):
            for f in iter_forms(body):
                if isinstance(f, Assign):
                    targets.extend(f.targets)
                    in_expr(f.rhs)
    return targets


def _conjunctive_targets(a: Abs) -> list[str]:
    """Targets assigned along the conjunctive spine (not under any Or)."""
    targets: list[str] = []

    def in_expr(e: Expr):
        for sub in iter_exprs(e):
            if isinstance(sub, Let):
                targets.extend(sub.binder)

    def walk(f: Form):
        match f:
            case And(l, r):
                walk(l)
                walk(r)
            case Exists(_, body):
                walk(body)
            case Assign(ts, rhs):
                targets.extend(ts)
                in_expr(rhs)
            case _:
                pass

    match a:
        case Lambda(rule):
            for m in iter_matches(rule):
                in_expr(m.body)
        case BoxAbs(_, body):
            walk(body)
    return targets


def _exprs_with_or_context(a: Abs):
    """Yield (expr-node, under_or) for every expression in the abstraction."""

    def from_expr(e: Expr, under: bool):
        for sub in iter_exprs(e):
            yield sub, under

    match a:
        case Lambda(rule):
            for m in iter_matches(rule):
                yield from from_expr(m.body, False)
        case BoxAbs(_, body):

            def walk(f: Form, under: bool):
                match f:
                    case And(l, r):
                        yield from walk(l, under)
                        yield from walk(r, under)
                    case Or(l, r):
                        yield from walk(l, True)
                        yield from walk(r, True)
                    case Exists(_, b):
                        yield from walk(b, under)
                    case Assign(_, rhs):
                        yield from from_expr(rhs, under)
                    case _:
                        return

            yield from walk(body, False)


# ---------------------------------------------------------------------------
# Shape checking
# ---------------------------------------------------------------------------


class ShapeError(Exception):
    def __init__(self, message: str, *, expected=None, found=None, span: Optional[Span] = None, where: str = ""):
        super().__init__(message)
        self.message = message
        self.expected = expected
        self.found = found
        self.span = span
        self.where = where


@dataclass
class ShapeTable:
    """Shapes per function plus per-node width annotations (keyed by node id)."""

    funs: dict[str, Shape] = field(default_factory=dict)
    widths: dict[int, int] = field(default_factory=dict)

    def width_of(self, node) -> int:
        return self.widths[id(node)]


def check_shape(db: ProgramDB) -> ShapeTable:
    """Arity-check every definition; raises ShapeError on the first mismatch."""
    table = ShapeTable()
    for d in db.decls:
        if isinstance(d, FunDef):
            table.funs[d.name] = _abs_shape(d.body, db, table, d.name)
    return table


def _err(msg, *, expected=None, found=None, span=None, where=""):
    raise ShapeError(msg, expected=expected, found=found, span=span, where=where)


def _abs_shape(a: Abs, db: ProgramDB, table: ShapeTable, where: str) -> Shape:
    match a:
        case Lambda(rule):
            widths = [
                (_pat_width(m.pattern, db, table, where), _expr_width(m.body, db, table, where))
                for m in iter_matches(rule)
            ]
            ins = {w for w, _ in widths}
            outs = {w for _, w in widths}
            if len(ins) > 1:
                _err(f"{where}: rule patterns disagree on arity {sorted(ins)}", found=sorted(ins), where=where)
            if len(outs) > 1:
                _err(f"{where}: rule bodies disagree on arity {sorted(outs)}", found=sorted(outs), where=where)
            return Shape(None, ins.pop(), outs.pop())
        case BoxAbs(face, body):
            if len(face.pre_state) != len(face.post_state):
                _err(
                    f"{where}: face has {len(face.pre_state)} pre-state but {len(face.post_state)} post-state variables",
                    expected=len(face.pre_state),
                    found=len(face.post_state),
                    where=where,
                )
            _form_widths(body, db, table, where)
            return Shape(len(face.pre_state), len(face.inputs), len(face.outputs))
    raise TypeError(f"not an abstraction: {a!r}")


def _form_widths(f: Form, db: ProgramDB, table: ShapeTable, where: str) -> None:
    match f:
        case Top() | BotForm() | IsBot() | IsNotBot():
            return
        case And(l, r) | Or(l, r):
            _form_widths(l, db, table, where)
            _form_widths(r, db, table, where)
        case Exists(_, body):
            _form_widths(body, db, table, where)
        case Assign(targets, rhs):
            w = _expr_width(rhs, db, table, where)
            if w != len(targets):
                _err(
                    f"{where}: assignment to {len(targets)} variable(s) from an arity-{w} expression",
                    expected=len(targets),
                    found=w,
                    span=f.span,
                    where=where,
                )
        case _:
            raise TypeError(f"not a formula: {f!r}")


def _expr_width(e: Expr, db: ProgramDB, table: ShapeTable, where: str) -> int:
    w = _expr_width_inner(e, db, table, where)
    table.widths[id(e)] = w
    return w


def _expr_width_inner(e: Expr, db: ProgramDB, table: ShapeTable, where: str) -> int:
    match e:
        case UnitTuple():
            return 0
        case Var() | Lit():
            return 1
        case Comma(l, r):
            return _expr_width(l, db, table, where) + _expr_width(r, db, table, where)
        case Apply(op, arg):
            aw = _expr_width(arg, db, table, where)
            return _apply_width(op, aw, db, table, where, e.span)
        case Let(binder, bound, body):
            bw = _expr_width(bound, db, table, where)
            if bw != len(binder):
                _err(
                    f"{where}: let binds {len(binder)} variable(s) from an arity-{bw} expression",
                    expected=len(binder),
                    found=bw,
                    span=e.span,
                    where=where,
                )
            return _expr_width(body, db, table, where)
        case Case(scrut, rules):
            sw = _expr_width(scrut, db, table, where)
            outs = set()
            for m in iter_matches(rules):
                pw = _pat_width(m.pattern, db, table, where)
                if pw != sw:
                    _err(
                        f"{where}: pattern of arity {pw} against a scrutinee of arity {sw}",
                        expected=sw,
                        found=pw,
                        span=m.span,
                        where=where,
                    )
                outs.add(_expr_width(m.body, db, table, where))
            if len(outs) != 1:
                _err(f"{where}: case branches disagree on arity {sorted(outs)}", found=sorted(outs), span=e.span, where=where)
            return outs.pop()
    raise TypeError(f"not an expression: {e!r}")


def _apply_width(op, arg_width: int, db: ProgramDB, table: ShapeTable, where: str, span) -> int:
    match op:
        case NamedRef(name):
            _err(f"{where}: unresolved operation {name}", span=span, where=where)
        case ConsRef(name):
            decl = db.constructors.get(name)
            if decl is None:
                _err(f"{where}: unknown constructor {name}", span=span, where=where)
            if arg_width != decl.arity:
                _err(
                    f"{where}: constructor {name} expects {decl.arity} argument(s), got {arg_width}",
                    expected=decl.arity,
                    found=arg_width,
                    span=span,
                    where=where,
                )
            return 1
        case ConsInvRef(name):
            decl = db.constructors.get(name)
            if decl is None:
                _err(f"{where}: unknown constructor {name}", span=span, where=where)
            if arg_width != 1:
                _err(
                    f"{where}: ~{name} takes one argument, got {arg_width}",
                    expected=1,
                    found=arg_width,
                    span=span,
                    where=where,
                )
            return decl.arity + 1
        case PrimRef(name):
            decl = db.primitives.get(name)
            if decl is None:
                _err(f"{where}: unknown primitive {name}", span=span, where=where)
            if arg_width != decl.shape.in_arity:
                _err(
                    f"{where}: primitive {name} expects {decl.shape.in_arity} argument(s), got {arg_width}",
                    expected=decl.shape.in_arity,
                    found=arg_width,
                    span=span,
                    where=where,
                )
            return decl.shape.out_arity
        case FunRef(name):
            sh = table.funs.get(name)
            if sh is None:
                _err(f"{where}: function {name} used before its definition", span=span, where=where)
            if arg_width == sh.in_arity:
                return sh.out_arity
            if sh.state_arity and arg_width == sh.state_arity + sh.in_arity:
                # state-threading call: pre-state travels with the arguments,
                # post-state comes back with the results
                return sh.out_arity + sh.state_arity
            _err(
                f"{where}: function {name} expects {sh.in_arity} argument(s), got {arg_width}",
                expected=sh.in_arity,
                found=arg_width,
                span=span,
                where=where,
            )
        case DeltaOp(inits):
            if inits is not None and len(inits) != arg_width:
                _err(
                    f"{where}: delta has {len(inits)} initial value(s) for {arg_width} wire(s)",
                    expected=arg_width,
                    found=len(inits),
                    span=span,
                    where=where,
                )
            return arg_width
        case GammaOp():
            if arg_width < 1:
                _err(f"{where}: gamma needs a data argument", span=span, where=where)
            return 1
        case PhiOp():
            if arg_width < 1:
                _err(f"{where}: phi needs at least one argument", span=span, where=where)
            return 1
    raise TypeError(f"not an op: {op!r}")


def _pat_width(p: Pat, db: ProgramDB, table: ShapeTable, where: str) -> int:
    match p:
        case PatUnit():
            return 0
        case PatVar():
            return 1
        case PatComma(l, r):
            return _pat_width(l, db, table, where) + _pat_width(r, db, table, where)
        case ConsPat(cons, arg):
            decl = db.constructors.get(cons)
            if decl is None:
                _err(f"{where}: unknown constructor {cons} in pattern", span=p.span, where=where)
            w = _pat_width(arg, db, table, where)
            if w != decl.arity:
                _err(
                    f"{where}: constructor pattern {cons} expects {decl.arity} argument(s), got {w}",
                    expected=decl.arity,
                    found=w,
                    span=p.span,
                    where=where,
                )
            return 1
    raise TypeError(f"not a pattern: {p!r}")


# ---------------------------------------------------------------------------
# Form classification
# ---------------------------------------------------------------------------


def classify_form(fd: FunDef) -> Union[int, str]:
    """Lowest of the three normal forms the definition fits, else "mixed"."""
    a = fd.body
    if _form1_ok(a):
        return 1
    if _form2_ok(a):
        return 2
    if _form3_ok(a):
        return 3
    return "mixed"


def _ops_in(a: Abs):
    for e in _all_abs_exprs(a):
        if isinstance(e, Apply):
            yield e.op


def _all_abs_exprs(a: Abs):
    match a:
        case Lambda(rule):
            for m in iter_matches(rule):
                yield from iter_exprs(m.body)
        case BoxAbs(_, body):
            for f in iter_forms(body):
                if isinstance(f, Assign):
                    yield from iter_exprs(f.rhs)


def _form1_ok(a: Abs) -> bool:
    for op in _ops_in(a):
        if isinstance(op, (ConsInvRef, GammaOp, PhiOp, NamedRef)):
            return False
    match a:
        case Lambda():
            return True
        case BoxAbs(face, body):
            if face.pre_state or face.post_state:
                return False
            return all(isinstance(f, (Top, And, Exists, Assign)) for f in iter_forms(body))
    return False


def _flat_assign(f: Assign) -> bool:
    match f.rhs:
        case Var() | Lit():
            return True
        case Apply(op, arg):
            if isinstance(op, NamedRef):
                return False
            return all(isinstance(x, Var) for x in flatten_comma(arg))
        case _:
            return False


def _flat_box(a: Abs, allowed_forms, banned_ops) -> bool:
    if not isinstance(a, BoxAbs):
        return False
    for f in iter_forms(a.body):
        if not isinstance(f, allowed_forms):
            return False
        if isinstance(f, Assign) and not _flat_assign(f):
            return False
    return not any(isinstance(op, banned_ops) for op in _ops_in(a))


def _form2_ok(a: Abs) -> bool:
    return _flat_box(a, (Top, And, Exists, Assign), (DeltaOp, NamedRef))


def _form3_ok(a: Abs) -> bool:
    return _flat_box(
        a,
        (Top, BotForm, And, Or, Exists, Assign, IsBot, IsNotBot),
        (DeltaOp, GammaOp, PhiOp, NamedRef),
    )
