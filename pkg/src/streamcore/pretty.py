"""Concrete-syntax rendering. parse(show(x)) reproduces x up to spans."""
from __future__ import annotations

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
    ConsPat,
    ConsRef,
    Declaration,
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
    PhiOp,
    PrimDecl,
    PrimRef,
    ProgramDB,
    RuleTree,
    Top,
    UnitTuple,
    Var,
)
from .values import show_value

__all__ = ["show_expr", "show_pat", "show_rule", "show_form", "show_face", "show_abs", "show_decl", "show_program"]


def show_expr(e: Expr) -> str:
    match e:
        case UnitTuple():
            return "()"
        case Comma(l, r):
            return f"{show_expr(l)}, {show_expr(r)}"
        case Var(name):
            return name
        case Lit(value):
            return show_value(value)
        case Apply(op, arg):
            return f"{_show_op(op)}({_show_args(arg)})"
        case Let(binder, bound, body):
            b = ", ".join(binder) if binder else "()"
            return f"let {b} := {show_expr(bound)} in {show_expr(body)}"
        case Case(scrut, rules):
            return f"case {show_expr(scrut)} of {{ {show_rule(rules)} }}"
    raise TypeError(f"not an expression: {e!r}")


def _show_args(arg: Expr) -> str:
    # inside call parentheses the argument tuple needs no extra parens
    match arg:
        case UnitTuple():
            return ""
        case _:
            return show_expr(arg)


def _show_op(op) -> str:
    match op:
        case NamedRef(name) | FunRef(name) | ConsRef(name) | PrimRef(name):
            return name
        case ConsInvRef(name):
            return f"~{name}"
        case DeltaOp(inits):
            if inits is None:
                return "delta"
            return f"delta[{', '.join(show_value(v) for v in inits)}]"
        case GammaOp():
            return "gamma"
        case PhiOp():
            return "phi"
    raise TypeError(f"not an op: {op!r}")


def show_pat(p: Pat) -> str:
    match p:
        case PatUnit():
            return "()"
        case PatVar(name):
            return name
        case PatComma(l, r):
            return f"{show_pat(l)}, {show_pat(r)}"
        case ConsPat(cons, arg):
            match arg:
                case PatUnit():
                    return f"{cons}()"
                case _:
                    return f"{cons}({show_pat(arg)})"
    raise TypeError(f"not a pattern: {p!r}")


def show_rule(r: RuleTree) -> str:
    match r:
        case Match(p, body):
            return f"{show_pat(p)} -> {show_expr(body)}"
        case Choice(l, rr):
            return f"{show_rule(l)} | {show_rule(rr)}"
    raise TypeError(f"not a rule tree: {r!r}")


def show_form(f: Form, indent: str = "") -> str:
    """Render a formula; conjuncts go one per line when indent is given."""
    sep = f" /\\\n{indent}" if indent else " /\\ "
    return sep.join(_show_conjunct(g) for g in _conjuncts(f))


def _conjuncts(f: Form) -> list[Form]:
    match f:
        case And(l, r):
            return _conjuncts(l) + _conjuncts(r)
        case _:
            return [f]


def _show_conjunct(f: Form) -> str:
    match f:
        case Top():
            return "tt"
        case BotForm():
            return "ff"
        case Or():
            return f"({_show_disjuncts(f)})"
        case Exists(binder, body):
            b = ", ".join(binder) if binder else "()"
            inner = show_form(body)
            return f"exists {b} ({inner})"
        case Assign(targets, rhs):
            t = ", ".join(targets) if targets else "()"
            return f"{t} := {show_expr(rhs)}"
        case IsBot(v):
            return f"{v} = _|_"
        case IsNotBot(v):
            return f"{v} /= _|_"
        case And():
            return f"({show_form(f)})"
    raise TypeError(f"not a formula: {f!r}")


def _show_disjuncts(f: Form) -> str:
    match f:
        case Or(l, r):
            return f"{_show_disjuncts(l)} \\/ {_show_disjuncts(r)}"
        case And():
            return f"({show_form(f)})"
        case _:
            return _show_conjunct(f)


def show_face(face: Face, inits: dict[str, object] | None = None) -> str:
    inits = inits or {}

    def var(v: str) -> str:
        if v in inits:
            return f"{v}@{show_value(inits[v])}"
        return v

    def vec(vs, annotate=False) -> str:
        if not vs:
            return "()"
        return ", ".join(var(v) if annotate else v for v in vs)

    io = f"{vec(face.inputs)} -> {vec(face.outputs)}"
    if face.pre_state or face.post_state:
        return f"{vec(face.pre_state, annotate=True)} / {io} / {vec(face.post_state)}"
    return io


def show_abs(a: Abs, multiline: bool = True) -> str:
    match a:
        case Lambda(rule):
            return f"\\( {show_rule(rule)} )"
        case BoxAbs(face, body, state_init):
            head = show_face(face, dict(state_init))
            if multiline:
                return f"[ {head} where\n  {show_form(body, indent='  ')} ]"
            return f"[ {head} where {show_form(body)} ]"
    raise TypeError(f"not an abstraction: {a!r}")


def show_decl(d: Declaration) -> str:
    match d:
        case ConsDecl(name, arity):
            return f"cons {name} / {arity}"
        case PrimDecl(name, shape):
            if shape.state_arity:
                return f"prim {name} {shape.state_arity} / {shape.in_arity} -> {shape.out_arity} / {shape.state_arity}"
            return f"prim {name} {shape.in_arity} -> {shape.out_arity}"
        case FunDef(name, body):
            return f"fun {name} = {show_abs(body)}"
    raise TypeError(f"not a declaration: {d!r}")


def show_program(db: ProgramDB) -> str:
    chunks = []
    for d in db.decls:
        text = show_decl(d)
        if isinstance(d, FunDef) and chunks:
            chunks.append("")
        chunks.append(text)
    return "\n".join(chunks) + "\n"
