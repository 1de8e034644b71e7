"""Concrete-syntax frontend: lexer, parser, and the checked program loader."""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Optional

from . import checks
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
    Shape,
    Span,
    Top,
    UnitTuple,
    Var,
    comma_of,
    iter_exprs,
    iter_forms,
    iter_matches,
    iter_pats,
)
from .values import BOT, UNIT, Term, Value

__all__ = ["ParseError", "LoadError", "Diagnostic", "SourceUnit", "parse", "load", "load_text", "load_paths"]

KEYWORDS = {
    "fun", "cons", "prim", "let", "in", "case", "of", "where",
    "delta", "gamma", "phi", "exists", "tt", "ff",
}

_TOKEN_RES = [
    ("WS", re.compile(r"[ \t\r\n]+")),
    ("COMMENT", re.compile(r"--[^\n]*")),
    ("ARROW", re.compile(r"->")),
    ("NUMBER", re.compile(r"-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?")),
    ("BOT", re.compile(r"_\|_")),
    ("ANDOP", re.compile(r"/\\")),
    ("NEQ", re.compile(r"/=")),
    ("OROP", re.compile(r"\\/")),
    ("LAMBDA", re.compile(r"\\\(")),
    ("ASSIGN", re.compile(r":=")),
    ("IDENT", re.compile(r"[A-Za-z][A-Za-z0-9_']*")),
    ("FRESH", re.compile(r"%[A-Za-z0-9_']+")),
    ("LPAREN", re.compile(r"\(")),
    ("RPAREN", re.compile(r"\)")),
    ("LBRACK", re.compile(r"\[")),
    ("RBRACK", re.compile(r"\]")),
    ("LBRACE", re.compile(r"\{")),
    ("RBRACE", re.compile(r"\}")),
    ("COMMA", re.compile(r",")),
    ("SLASH", re.compile(r"/")),
    ("BAR", re.compile(r"\|")),
    ("TILDE", re.compile(r"~")),
    ("EQ", re.compile(r"=")),
    ("AT", re.compile(r"@")),
]


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int, unit: str = "<string>"):
        super().__init__(f"{unit}:{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col
        self.unit = unit


def tokenize(text: str, unit: str = "<string>") -> list[Token]:
    tokens: list[Token] = []
    pos, line, col = 0, 1, 1
    n = len(text)
    while pos < n:
        for kind, rx in _TOKEN_RES:
            m = rx.match(text, pos)
            if not m:
                continue
            tok = m.group()
            if kind == "IDENT" and tok in KEYWORDS:
                kind = tok
            if kind == "FRESH":
                kind = "IDENT"
            if kind not in ("WS", "COMMENT"):
                tokens.append(Token(kind, tok, line, col))
            newlines = tok.count("\n")
            if newlines:
                line += newlines
                col = len(tok) - tok.rfind("\n")
            else:
                col += len(tok)
            pos = m.end()
            break
        else:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col, unit)
    tokens.append(Token("EOF", "", line, col))
    return tokens


@dataclass(frozen=True)
class SourceUnit:
    name: str
    decls: tuple[Declaration, ...]


class _Parser:
    def __init__(self, tokens: list[Token], unit: str):
        self.toks = tokens
        self.pos = 0
        self.unit = unit

    # -- token plumbing ----------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.toks[self.pos]
        if t.kind != "EOF":
            self.pos += 1
        return t

    def at(self, kind: str) -> bool:
        return self.peek().kind == kind

    def eat(self, kind: str) -> Optional[Token]:
        if self.at(kind):
            return self.next()
        return None

    def expect(self, kind: str, what: str = "") -> Token:
        t = self.peek()
        if t.kind != kind:
            want = what or kind
            got = t.text or t.kind
            raise ParseError(f"expected {want}, found {got!r}", t.line, t.col, self.unit)
        return self.next()

    def fail(self, message: str):
        t = self.peek()
        raise ParseError(message, t.line, t.col, self.unit)

    def span(self, t: Token) -> Span:
        return Span(t.line, t.col)

    # -- declarations ------------------------------------------------------

    def parse_unit(self) -> SourceUnit:
        decls = []
        while not self.at("EOF"):
            decls.append(self.parse_decl())
        return SourceUnit(self.unit, tuple(decls))

    def parse_decl(self) -> Declaration:
        t = self.peek()
        if self.eat("cons"):
            name = self.expect("IDENT", "constructor name")
            self.expect("SLASH", "'/'")
            arity = self.nat()
            return ConsDecl(name.text, arity, span=self.span(t))
        if self.eat("prim"):
            name = self.expect("IDENT", "primitive name")
            first = self.nat()
            if self.eat("SLASH"):
                in_a = self.nat()
                self.expect("ARROW", "'->'")
                out_a = self.nat()
                self.expect("SLASH", "'/'")
                post = self.nat()
                if post != first:
                    self.fail(f"primitive {name.text}: state arities differ ({first} vs {post})")
                return PrimDecl(name.text, Shape(first, in_a, out_a), span=self.span(t))
            self.expect("ARROW", "'->'")
            out_a = self.nat()
            return PrimDecl(name.text, Shape(0, first, out_a), span=self.span(t))
        if self.eat("fun"):
            name = self.expect("IDENT", "function name")
            self.expect("EQ", "'='")
            body = self.parse_abs()
            return FunDef(name.text, body, span=self.span(t))
        self.fail(f"expected a declaration, found {t.text!r}")

    def nat(self) -> int:
        t = self.expect("NUMBER", "a natural number")
        try:
            v = int(t.text)
        except ValueError:
            raise ParseError(f"expected an integer, found {t.text}", t.line, t.col, self.unit)
        if v < 0:
            raise ParseError("arity cannot be negative", t.line, t.col, self.unit)
        return v

    # -- abstractions ------------------------------------------------------

    def parse_abs(self) -> Abs:
        t = self.peek()
        if self.eat("LAMBDA"):
            rule = self.parse_rules()
            self.expect("RPAREN", "')'")
            return Lambda(rule, span=self.span(t))
        if self.at("LBRACK"):
            return self.parse_box()
        self.fail("expected an abstraction ('\\(' or '[')")

    def parse_box(self) -> BoxAbs:
        t = self.expect("LBRACK")
        first, first_inits = self.parse_varvec(allow_inits=True)
        if self.eat("SLASH"):
            pre, pre_inits = first, first_inits
            inputs, _ = self.parse_varvec()
        else:
            if first_inits:
                self.fail("initial values (@) belong on pre-state variables only")
            pre, pre_inits = (), []
            inputs = first
        self.expect("ARROW", "'->'")
        outputs, _ = self.parse_varvec()
        if self.eat("SLASH"):
            post, _ = self.parse_varvec()
        else:
            post = ()
        if bool(pre) != bool(post) and (pre or post):
            if not post:
                self.fail("face with pre-state needs a post-state segment")
        self.expect("where", "'where'")
        body = self.parse_formula()
        self.expect("RBRACK", "']'")
        face = Face(pre, inputs, outputs, post)
        return BoxAbs(face, body, state_init=tuple(pre_inits), span=self.span(t))

    def parse_varvec(self, allow_inits: bool = False) -> tuple[tuple[str, ...], list[tuple[str, Value]]]:
        # `()` denotes the empty vector
        if self.at("LPAREN") and self.peek(1).kind == "RPAREN":
            self.next()
            self.next()
            return (), []
        names: list[str] = []
        inits: list[tuple[str, Value]] = []
        while True:
            t = self.expect("IDENT", "a variable name")
            names.append(t.text)
            if self.at("AT"):
                if not allow_inits:
                    self.fail("initial values (@) belong on pre-state variables only")
                self.next()
                inits.append((t.text, self.parse_value()))
            if not self.eat("COMMA"):
                break
        return tuple(names), inits

    # -- value literals (delta inits, face annotations) ---------------------

    def parse_value(self) -> Value:
        t = self.peek()
        if self.eat("BOT"):
            return BOT
        if self.at("LPAREN") and self.peek(1).kind == "RPAREN":
            self.next()
            self.next()
            return UNIT
        if self.at("NUMBER"):
            return self.number_value(self.next())
        if self.at("IDENT"):
            name = self.next().text
            self.expect("LPAREN", "'(' after constructor name")
            args = []
            if not self.at("RPAREN"):
                while True:
                    args.append(self.parse_value())
                    if not self.eat("COMMA"):
                        break
            self.expect("RPAREN", "')'")
            return Term(name, tuple(args))
        raise ParseError(f"expected a value literal, found {t.text!r}", t.line, t.col, self.unit)

    def number_value(self, t: Token) -> Value:
        if any(c in t.text for c in ".eE"):
            return float(t.text)
        return int(t.text)

    # -- rules and patterns --------------------------------------------------

    def parse_rules(self) -> RuleTree:
        rules = [self.parse_match()]
        while self.eat("BAR"):
            rules.append(self.parse_match())
        tree: RuleTree = rules[0]
        for r in rules[1:]:
            tree = Choice(tree, r)
        return tree

    def parse_match(self) -> Match:
        t = self.peek()
        pat = self.parse_pat()
        self.expect("ARROW", "'->'")
        body = self.parse_expr()
        return Match(pat, body, span=self.span(t))

    def parse_pat(self) -> Pat:
        parts = [self.parse_pat_atom()]
        while self.eat("COMMA"):
            parts.append(self.parse_pat_atom())
        pat = parts[0]
        for p in parts[1:]:
            pat = PatComma(pat, p)
        return pat

    def parse_pat_atom(self) -> Pat:
        t = self.peek()
        if self.eat("LPAREN"):
            if self.eat("RPAREN"):
                return PatUnit(span=self.span(t))
            inner = self.parse_pat()
            self.expect("RPAREN", "')'")
            return inner
        if self.at("IDENT"):
            name = self.next()
            if self.eat("LPAREN"):
                if self.eat("RPAREN"):
                    return ConsPat(name.text, PatUnit(), span=self.span(name))
                arg = self.parse_pat()
                self.expect("RPAREN", "')'")
                return ConsPat(name.text, arg, span=self.span(name))
            return PatVar(name.text, span=self.span(name))
        self.fail("expected a pattern")

    # -- expressions ---------------------------------------------------------

    def parse_expr(self) -> Expr:
        parts = [self.parse_app()]
        while self.eat("COMMA"):
            parts.append(self.parse_app())
        if len(parts) == 1:
            return parts[0]
        return comma_of(parts)

    def parse_app(self) -> Expr:
        t = self.peek()
        if self.eat("LPAREN"):
            if self.eat("RPAREN"):
                return UnitTuple(span=self.span(t))
            inner = self.parse_expr()
            self.expect("RPAREN", "')'")
            return inner
        if self.at("NUMBER"):
            return Lit(self.number_value(self.next()), span=self.span(t))
        if self.eat("BOT"):
            return Lit(BOT, span=self.span(t))
        if self.eat("TILDE"):
            name = self.expect("IDENT", "constructor name after '~'")
            arg = self.parse_call_args()
            return Apply(ConsInvRef(name.text), arg, span=self.span(t))
        if self.eat("delta"):
            inits = None
            if self.eat("LBRACK"):
                vs = [self.parse_value()]
                while self.eat("COMMA"):
                    vs.append(self.parse_value())
                self.expect("RBRACK", "']'")
                inits = tuple(vs)
            arg = self.parse_call_args()
            return Apply(DeltaOp(inits), arg, span=self.span(t))
        if self.eat("gamma"):
            return Apply(GammaOp(), self.parse_call_args(), span=self.span(t))
        if self.eat("phi"):
            return Apply(PhiOp(), self.parse_call_args(), span=self.span(t))
        if self.eat("let"):
            binder, _ = self.parse_varvec()
            self.expect("ASSIGN", "':='")
            bound = self.parse_expr()
            self.expect("in", "'in'")
            body = self.parse_expr()
            return Let(binder, bound, body, span=self.span(t))
        if self.eat("case"):
            scrut = self.parse_expr()
            self.expect("of", "'of'")
            self.expect("LBRACE", "'{'")
            rules = self.parse_rules()
            self.expect("RBRACE", "'}'")
            return Case(scrut, rules, span=self.span(t))
        if self.at("IDENT"):
            name = self.next()
            if self.at("LPAREN"):
                arg = self.parse_call_args()
                return Apply(NamedRef(name.text), arg, span=self.span(name))
            return Var(name.text, span=self.span(name))
        self.fail("expected an expression")

    def parse_call_args(self) -> Expr:
        t = self.expect("LPAREN", "'('")
        if self.eat("RPAREN"):
            return UnitTuple(span=self.span(t))
        arg = self.parse_expr()
        self.expect("RPAREN", "')'")
        return arg

    # -- formulas --------------------------------------------------------------

    def parse_formula(self) -> Form:
        f = self.parse_and()
        while self.eat("OROP"):
            f = Or(f, self.parse_and())
        return f

    def parse_and(self) -> Form:
        f = self.parse_form_atom()
        while self.eat("ANDOP"):
            f = And(f, self.parse_form_atom())
        return f

    def parse_form_atom(self) -> Form:
        t = self.peek()
        if self.eat("tt"):
            return Top(span=self.span(t))
        if self.eat("ff"):
            return BotForm(span=self.span(t))
        if self.eat("exists"):
            binder, _ = self.parse_varvec()
            self.expect("LPAREN", "'('")
            body = self.parse_formula()
            self.expect("RPAREN", "')'")
            return Exists(binder, body, span=self.span(t))
        if self.at("LPAREN"):
            if self.peek(1).kind == "RPAREN" and self.peek(2).kind == "ASSIGN":
                self.next()
                self.next()
                self.next()
                rhs = self.parse_expr()
                return Assign((), rhs, span=self.span(t))
            self.next()
            inner = self.parse_formula()
            self.expect("RPAREN", "')'")
            return inner
        if self.at("IDENT"):
            if self.peek(1).kind == "EQ" and self.peek(2).kind == "BOT":
                name = self.next().text
                self.next()
                self.next()
                return IsBot(name, span=self.span(t))
            if self.peek(1).kind == "NEQ" and self.peek(2).kind == "BOT":
                name = self.next().text
                self.next()
                self.next()
                return IsNotBot(name, span=self.span(t))
            names = [self.expect("IDENT").text]
            while self.eat("COMMA"):
                names.append(self.expect("IDENT", "a variable name").text)
            self.expect("ASSIGN", "':=' (or '= _|_' / '/= _|_')")
            rhs = self.parse_expr()
            return Assign(tuple(names), rhs, span=self.span(t))
        self.fail("expected a formula")


def parse(text: str, unit: str = "<string>") -> SourceUnit:
    """Parse one source unit. Raises ParseError with position on bad input."""
    p = _Parser(tokenize(text, unit), unit)
    return p.parse_unit()


# ---------------------------------------------------------------------------
# Loading: merge, resolve, check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # error | warning
    kind: str
    message: str
    unit: str = ""
    fun: str = ""
    line: Optional[int] = None
    col: Optional[int] = None

    def to_json(self) -> dict:
        d = {"schema": "streamcore/1", "severity": self.severity, "kind": self.kind, "message": self.message}
        if self.unit:
            d["unit"] = self.unit
        if self.fun:
            d["fun"] = self.fun
        if self.line is not None:
            d["line"] = self.line
            d["col"] = self.col
        return d


class LoadError(Exception):
    def __init__(self, diagnostics: list[Diagnostic]):
        errors = [d for d in diagnostics if d.severity == "error"]
        super().__init__(f"{len(errors)} error(s) while loading program")
        self.diagnostics = diagnostics


def load(units: list[SourceUnit]) -> ProgramDB:
    """Merge units into a checked ProgramDB. Raises LoadError on any error."""
    db, diags = load_with_diagnostics(units)
    if any(d.severity == "error" for d in diags):
        raise LoadError(diags)
    return db


def load_with_diagnostics(units: list[SourceUnit]) -> tuple[ProgramDB, list[Diagnostic]]:
    diags: list[Diagnostic] = []
    decls: list[Declaration] = []
    unit_of: dict[int, str] = {}
    for u in units:
        for d in u.decls:
            decls.append(d)
            unit_of[id(d)] = u.name

    # one flat namespace; a repeated cons/prim declaration is fine if it
    # agrees with the first one (files stay standalone), a clash is an error
    seen: dict[str, Declaration] = {}
    pruned: list[Declaration] = []
    for d in decls:
        name = d.name
        prev = seen.get(name)
        if prev is None:
            seen[name] = d
            pruned.append(d)
            continue
        agree = (
            isinstance(d, ConsDecl) and isinstance(prev, ConsDecl) and d.arity == prev.arity
        ) or (
            isinstance(d, PrimDecl) and isinstance(prev, PrimDecl) and d.shape == prev.shape
        )
        if not agree:
            diags.append(
                Diagnostic(
                    "error", "duplicate", f"{name} is declared more than once", unit=unit_of[id(d)],
                    line=d.span.line if d.span else None, col=d.span.col if d.span else None,
                )
            )
    decls = pruned

    # resolve applied names; declarations are only visible after their point
    cons_vis: dict[str, int] = {}
    prim_vis: set[str] = set()
    fun_vis: set[str] = set()
    resolved: list[Declaration] = []
    for d in decls:
        unit = unit_of[id(d)]
        match d:
            case ConsDecl(name=n, arity=k):
                cons_vis[n] = k
                resolved.append(d)
            case PrimDecl(name=n):
                prim_vis.add(n)
                resolved.append(d)
            case FunDef(name=n, body=a):
                r = _Resolver(cons_vis, prim_vis, fun_vis, unit, n, diags)
                resolved.append(replace(d, body=r.abs(a)))
                fun_vis.add(n)

    db = ProgramDB.from_decls(resolved)
    if any(dg.severity == "error" for dg in diags):
        return db, diags

    for v in checks.check_sanity(db):
        diags.append(Diagnostic(v.severity, v.kind, v.message, fun=v.where,
                                line=v.span.line if v.span else None, col=v.span.col if v.span else None))
    try:
        checks.check_shape(db)
    except checks.ShapeError as e:
        diags.append(Diagnostic("error", "shape", e.message, fun=e.where,
                                line=e.span.line if e.span else None, col=e.span.col if e.span else None))
    if not any(dg.severity == "error" for dg in diags):
        for fd in list(db.functions.values()):
            db.replace_fun(replace(fd, form_tag=checks.classify_form(fd)))
    return db, diags


def load_text(text: str, unit: str = "<string>") -> ProgramDB:
    return load([parse(text, unit)])


def load_paths(paths) -> ProgramDB:
    units = []
    for p in paths:
        with open(p, "r", encoding="utf-8") as fh:
            units.append(parse(fh.read(), unit=str(p)))
    return load(units)


class _Resolver:
    """Rewrites NamedRef nodes to resolved op references and validates names."""

    def __init__(self, cons: dict[str, int], prims: set[str], funs: set[str], unit: str, fun: str, diags: list[Diagnostic]):
        self.cons = cons
        self.prims = prims
        self.funs = funs
        self.unit = unit
        self.fun = fun
        self.diags = diags

    def err(self, message: str, span: Optional[Span], kind: str = "resolve"):
        self.diags.append(
            Diagnostic("error", kind, message, unit=self.unit, fun=self.fun,
                       line=span.line if span else None, col=span.col if span else None)
        )

    def warn(self, message: str, span: Optional[Span], kind: str):
        self.diags.append(
            Diagnostic("warning", kind, message, unit=self.unit, fun=self.fun,
                       line=span.line if span else None, col=span.col if span else None)
        )

    def check_ident(self, name: str, span: Optional[Span]):
        if name.startswith("%"):
            self.warn(f"variable {name} uses the normalizer's reserved prefix", span, "fresh-prefix")

    def value_ok(self, v: Value, span: Optional[Span]) -> None:
        if v is BOT:
            self.err("an initial value cannot be _|_", span)
        elif isinstance(v, Term):
            arity = self.cons.get(v.cons)
            if arity is None:
                self.err(f"unknown constructor {v.cons} in initial value", span)
            elif arity != len(v.args):
                self.err(f"constructor {v.cons} expects {arity} argument(s), got {len(v.args)}", span)
            for a in v.args:
                self.value_ok(a, span)

    def abs(self, a: Abs) -> Abs:
        match a:
            case Lambda(rule):
                return replace(a, rule=self.rule(rule))
            case BoxAbs(face, body, state_init):
                for v in face.all_vars():
                    self.check_ident(v, a.span)
                for name, v in state_init:
                    if name not in face.pre_state:
                        self.err(f"initial value for {name}, which is not a pre-state variable", a.span)
                    self.value_ok(v, a.span)
                return replace(a, body=self.form(body))
        raise TypeError(f"not an abstraction: {a!r}")

    def rule(self, r: RuleTree) -> RuleTree:
        match r:
            case Match(p, body):
                self.pat(p)
                return replace(r, body=self.expr(body))
            case Choice(l, rr):
                return replace(r, left=self.rule(l), right=self.rule(rr))
        raise TypeError(f"not a rule tree: {r!r}")

    def pat(self, p: Pat) -> None:
        for sub in iter_pats(p):
            match sub:
                case PatVar(name):
                    if name in self.cons:
                        self.err(
                            f"pattern variable {name} shadows a constructor; "
                            f"write {name}() to match it",
                            sub.span,
                        )
                    self.check_ident(name, sub.span)
                case ConsPat(cons, _):
                    if cons not in self.cons:
                        self.err(f"unknown constructor {cons} in pattern", sub.span)
                case _:
                    pass

    def form(self, f: Form) -> Form:
        match f:
            case And(l, r):
                return replace(f, left=self.form(l), right=self.form(r))
            case Or(l, r):
                return replace(f, left=self.form(l), right=self.form(r))
            case Exists(binder, body):
                for b in binder:
                    self.check_ident(b, f.span)
                return replace(f, body=self.form(body))
            case Assign(targets, rhs):
                for t in targets:
                    self.check_ident(t, f.span)
                return replace(f, rhs=self.expr(rhs))
            case _:
                return f

    def expr(self, e: Expr) -> Expr:
        match e:
            case UnitTuple() | Lit():
                return e
            case Var(name):
                self.check_ident(name, e.span)
                return e
            case Comma(l, r):
                return replace(e, left=self.expr(l), right=self.expr(r))
            case Apply(op, arg):
                return replace(e, op=self.op(op, e.span), arg=self.expr(arg))
            case Let(binder, bound, body):
                for b in binder:
                    self.check_ident(b, e.span)
                return replace(e, bound=self.expr(bound), body=self.expr(body))
            case Case(scrut, rules):
                return replace(e, scrutinee=self.expr(scrut), rules=self.rule(rules))
        raise TypeError(f"not an expression: {e!r}")

    def op(self, op, span):
        match op:
            case NamedRef(name):
                if name in self.cons:
                    return ConsRef(name)
                if name in self.prims:
                    return PrimRef(name)
                if name in self.funs:
                    return FunRef(name)
                self.err(f"unknown operation {name} (functions must be declared before use)", span)
                return op
            case ConsInvRef(name):
                if name not in self.cons:
                    self.err(f"unknown constructor {name}", span)
                return op
            case DeltaOp(inits):
                if inits is not None:
                    for v in inits:
                        self.value_ok(v, span)
                return op
            case _:
                return op
