"""Syntax trees for the stream calculus: expressions, patterns, rules, formulas,
abstractions, declarations, and the checked program database."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

from .values import Value

Ident = str
VarVec = tuple[Ident, ...]


@dataclass(frozen=True)
class Span:
    line: int
    col: int

    def __repr__(self):
        return f"{self.line}:{self.col}"


def _span_field():
    return field(default=None, compare=False, repr=False)


# ---------------------------------------------------------------------------
# Operation references
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NamedRef:
    """An applied identifier the loader has not resolved yet."""

    name: Ident


@dataclass(frozen=True)
class FunRef:
    name: Ident


@dataclass(frozen=True)
class ConsRef:
    name: Ident


@dataclass(frozen=True)
class ConsInvRef:
    name: Ident


@dataclass(frozen=True)
class PrimRef:
    name: Ident


@dataclass(frozen=True)
class DeltaOp:
    """Unit delay. `inits` optionally gives initial values, one per wire."""

    inits: Optional[tuple[Value, ...]] = None


@dataclass(frozen=True)
class GammaOp:
    """Guard: first argument is data, the rest are controls."""


@dataclass(frozen=True)
class PhiOp:
    """Join of alternative definitions (a phi node)."""


OpRef = Union[NamedRef, FunRef, ConsRef, ConsInvRef, PrimRef, DeltaOp, GammaOp, PhiOp]


def op_display(op: OpRef) -> str:
    match op:
        case NamedRef(name) | FunRef(name) | ConsRef(name) | PrimRef(name):
            return name
        case ConsInvRef(name):
            return f"~{name}"
        case DeltaOp():
            return "delta"
        case GammaOp():
            return "gamma"
        case PhiOp():
            return "phi"
    raise TypeError(f"not an op: {op!r}")


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UnitTuple:
    """The empty tuple ()."""

    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class Comma:
    left: Expr
    right: Expr
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class Var:
    name: Ident
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class Lit:
    value: Value
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class Apply:
    op: OpRef
    arg: Expr
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class Let:
    binder: VarVec
    bound: Expr
    body: Expr
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class Case:
    scrutinee: Expr
    rules: RuleTree
    span: Optional[Span] = _span_field()


Expr = Union[UnitTuple, Comma, Var, Lit, Apply, Let, Case]


# ---------------------------------------------------------------------------
# Patterns and rule trees
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PatUnit:
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class PatComma:
    left: Pat
    right: Pat
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class PatVar:
    name: Ident
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class ConsPat:
    cons: Ident
    arg: Pat
    span: Optional[Span] = _span_field()


Pat = Union[PatUnit, PatComma, PatVar, ConsPat]


@dataclass(frozen=True)
class Match:
    pattern: Pat
    body: Expr
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class Choice:
    left: RuleTree
    right: RuleTree
    span: Optional[Span] = _span_field()


RuleTree = Union[Match, Choice]


# ---------------------------------------------------------------------------
# Formulas
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Top:
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class BotForm:
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class And:
    left: Form
    right: Form
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class Or:
    left: Form
    right: Form
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class Exists:
    binder: VarVec
    body: Form
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class Assign:
    targets: VarVec
    rhs: Expr
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class IsBot:
    var: Ident
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class IsNotBot:
    var: Ident
    span: Optional[Span] = _span_field()


Form = Union[Top, BotForm, And, Or, Exists, Assign, IsBot, IsNotBot]


# ---------------------------------------------------------------------------
# Faces and abstractions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Face:
    pre_state: VarVec = ()
    inputs: VarVec = ()
    outputs: VarVec = ()
    post_state: VarVec = ()

    def all_vars(self) -> VarVec:
        return self.pre_state + self.inputs + self.outputs + self.post_state


@dataclass(frozen=True)
class Lambda:
    rule: RuleTree
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class BoxAbs:
    face: Face
    body: Form
    state_init: tuple[tuple[Ident, Value], ...] = ()
    span: Optional[Span] = _span_field()

    def init_map(self) -> dict[Ident, Value]:
        return dict(self.state_init)


Abs = Union[Lambda, BoxAbs]


# ---------------------------------------------------------------------------
# Shapes and declarations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Shape:
    """Arities of a stateful operation: state / in -> out / state."""

    state_arity: Optional[int]
    in_arity: int
    out_arity: int

    def __repr__(self):
        st = "?" if self.state_arity is None else str(self.state_arity)
        return f"{st}/{self.in_arity}->{self.out_arity}/{st}"


@dataclass(frozen=True)
class ConsDecl:
    name: Ident
    arity: int
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class PrimDecl:
    name: Ident
    shape: Shape
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class FunDef:
    name: Ident
    body: Abs
    form_tag: Union[int, str, None] = None
    span: Optional[Span] = _span_field()


Declaration = Union[ConsDecl, PrimDecl, FunDef]


@dataclass
class ProgramDB:
    """Declarations in order, with name lookup tables."""

    decls: tuple[Declaration, ...]
    constructors: dict[Ident, ConsDecl] = field(default_factory=dict)
    primitives: dict[Ident, PrimDecl] = field(default_factory=dict)
    functions: dict[Ident, FunDef] = field(default_factory=dict)

    @classmethod
    def from_decls(cls, decls) -> ProgramDB:
        db = cls(tuple(decls))
        for d in db.decls:
            match d:
                case ConsDecl(name=n):
                    db.constructors[n] = d
                case PrimDecl(name=n):
                    db.primitives[n] = d
                case FunDef(name=n):
                    db.functions[n] = d
        return db

    def replace_fun(self, fd: FunDef) -> None:
        self.functions[fd.name] = fd
        self.decls = tuple(fd if isinstance(d, FunDef) and d.name == fd.name else d for d in self.decls)


# ---------------------------------------------------------------------------
# Structural helpers
# ---------------------------------------------------------------------------


def flatten_comma(e: Expr) -> list[Expr]:
    """Leaves of a comma tree, left to right. UnitTuple flattens to []."""
    match e:
        case UnitTuple():
            return []
        case Comma(l, r):
            return flatten_comma(l) + flatten_comma(r)
        case _:
            return [e]


def comma_of(parts: list[Expr]) -> Expr:
    if not parts:
        return UnitTuple()
    e = parts[0]
    for p in parts[1:]:
        e = Comma(e, p)
    return e


def and_of(forms: list[Form]) -> Form:
    """Conjunction of a list, Top for the empty list."""
    if not forms:
        return Top()
    f = forms[0]
    for g in forms[1:]:
        f = And(f, g)
    return f


def or_of(forms: list[Form]) -> Form:
    """Disjunction of a nonempty list; a single element stays bare."""
    if not forms:
        raise ValueError("empty disjunction")
    f = forms[0]
    for g in forms[1:]:
        f = Or(f, g)
    return f


def conjuncts_of(f: Form) -> list[Form]:
    """Flatten a conjunction tree; Top disappears."""
    match f:
        case Top():
            return []
        case And(l, r):
            return conjuncts_of(l) + conjuncts_of(r)
        case _:
            return [f]


def flatten_pat_comma(p: Pat) -> list[Pat]:
    match p:
        case PatUnit():
            return []
        case PatComma(l, r):
            return flatten_pat_comma(l) + flatten_pat_comma(r)
        case _:
            return [p]


def pat_vars(p: Pat) -> list[Ident]:
    """Pattern variables in left-to-right order."""
    match p:
        case PatUnit():
            return []
        case PatVar(name):
            return [name]
        case PatComma(l, r):
            return pat_vars(l) + pat_vars(r)
        case ConsPat(_, arg):
            return pat_vars(arg)
    raise TypeError(f"not a pattern: {p!r}")


def expr_free_vars(e: Expr) -> set[Ident]:
    match e:
        case UnitTuple() | Lit():
            return set()
        case Var(name):
            return {name}
        case Comma(l, r):
            return expr_free_vars(l) | expr_free_vars(r)
        case Apply(_, arg):
            return expr_free_vars(arg)
        case Let(binder, bound, body):
            return expr_free_vars(bound) | (expr_free_vars(body) - set(binder))
        case Case(scrut, rules):
            return expr_free_vars(scrut) | rule_free_vars(rules)
    raise TypeError(f"not an expression: {e!r}")


def rule_free_vars(r: RuleTree) -> set[Ident]:
    match r:
        case Match(p, body):
            return expr_free_vars(body) - set(pat_vars(p))
        case Choice(l, rr):
            return rule_free_vars(l) | rule_free_vars(rr)
    raise TypeError(f"not a rule tree: {r!r}")


def form_free_vars(f: Form) -> set[Ident]:
    match f:
        case Top() | BotForm():
            return set()
        case And(l, r) | Or(l, r):
            return form_free_vars(l) | form_free_vars(r)
        case Exists(binder, body):
            return form_free_vars(body) - set(binder)
        case Assign(targets, rhs):
            return set(targets) | expr_free_vars(rhs)
        case IsBot(v) | IsNotBot(v):
            return {v}
    raise TypeError(f"not a formula: {f!r}")


def abs_free_vars(a: Abs) -> set[Ident]:
    match a:
        case Lambda(rule):
            return rule_free_vars(rule)
        case BoxAbs(face, body):
            return form_free_vars(body) - set(face.all_vars())
    raise TypeError(f"not an abstraction: {a!r}")


def iter_exprs(e: Expr) -> Iterator[Expr]:
    """All expression nodes in a tree, preorder."""
    yield e
    match e:
        case Comma(l, r):
            yield from iter_exprs(l)
            yield from iter_exprs(r)
        case Apply(_, arg):
            yield from iter_exprs(arg)
        case Let(_, bound, body):
            yield from iter_exprs(bound)
            yield from iter_exprs(body)
        case Case(scrut, rules):
            yield from iter_exprs(scrut)
            for m in iter_matches(rules):
                yield from iter_exprs(m.body)


def iter_matches(r: RuleTree) -> Iterator[Match]:
    """Match leaves of a choice tree, left to right."""
    match r:
        case Match():
            yield r
        case Choice(l, rr):
            yield from iter_matches(l)
            yield from iter_matches(rr)


def iter_forms(f: Form) -> Iterator[Form]:
    yield f
    match f:
        case And(l, r) | Or(l, r):
            yield from iter_forms(l)
            yield from iter_forms(r)
        case Exists(_, body):
            yield from iter_forms(body)


def iter_abs_exprs(a: Abs) -> Iterator[Expr]:
    match a:
        case Lambda(rule):
            for m in iter_matches(rule):
                yield from iter_exprs(m.body)
        case BoxAbs(_, body):
            for f in iter_forms(body):
                if isinstance(f, Assign):
                    yield from iter_exprs(f.rhs)


def iter_pats(p: Pat) -> Iterator[Pat]:
    yield p
    match p:
        case PatComma(l, r):
            yield from iter_pats(l)
            yield from iter_pats(r)
        case ConsPat(_, arg):
            yield from iter_pats(arg)


def abs_patterns(a: Abs) -> list[Pat]:
    """Top patterns of every match anywhere in the abstraction."""
    pats = []
    match a:
        case Lambda(rule):
            trees = [rule]
        case BoxAbs():
            trees = []
    for e in iter_abs_exprs(a):
        if isinstance(e, Case):
            trees.append(e.rules)
    for t in trees:
        pats.extend(m.pattern for m in iter_matches(t))
    return pats


def collect_pat_exists_binders(a: Abs) -> list[Ident]:
    """Every variable bound by a pattern or an exists, with repetition."""
    binders: list[Ident] = []
    for p in abs_patterns(a):
        binders.extend(pat_vars(p))
    match a:
        case BoxAbs(_, body):
            for f in iter_forms(body):
                if isinstance(f, Exists):
                    binders.extend(f.binder)
    return binders


def collect_assign_targets(a: Abs) -> list[Ident]:
    """Every let binder and assignment target, with repetition."""
    targets: list[Ident] = []

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


def abs_all_idents(a: Abs) -> set[Ident]:
    """Every identifier occurring anywhere in the abstraction."""
    names: set[Ident] = set()

    def in_pat(p: Pat):
        names.update(pat_vars(p))

    def in_expr(e: Expr):
        for sub in iter_exprs(e):
            match sub:
                case Var(n):
                    names.add(n)
                case Let(binder, _, _):
                    names.update(binder)
                case Case(_, rules):
                    for m in iter_matches(rules):
                        in_pat(m.pattern)

    match a:
        case Lambda(rule):
            for m in iter_matches(rule):
                in_pat(m.pattern)
                in_expr(m.body)
        case BoxAbs(face, body):
            names.update(face.all_vars())
            for f in iter_forms(body):
                match f:
                    case Exists(binder, _):
                        names.update(binder)
                    case Assign(targets, rhs):
                        names.update(targets)
                        in_expr(rhs)
                    case IsBot(v) | IsNotBot(v):
                        names.add(v)
    return names
