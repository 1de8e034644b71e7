"""Translation of functional definitions into flat state-transition boxes,
plus the cleanup passes: prenexing, copy propagation, causality ordering."""
from __future__ import annotations

import heapq
import re
from dataclasses import dataclass, field, replace
from typing import Optional

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
    ConsInvRef,
    ConsPat,
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
    PhiOp,
    PrimRef,
    ProgramDB,
    RuleTree,
    Top,
    UnitTuple,
    Var,
    VarVec,
    abs_all_idents,
    and_of,
    comma_of,
    conjuncts_of,
    expr_free_vars,
    iter_forms,
    pat_vars,
)
from .values import Value

__all__ = [
    "FreshSupply",
    "Judgement",
    "RewriteEnv",
    "rewrite_expr",
    "rewrite_pat",
    "rewrite_rule",
    "rewrite_abs",
    "prenex",
    "copy_propagate",
    "causality_check",
    "CausalityError",
    "DependencyOrder",
    "normalize_fun",
    "normalize_program",
]


@dataclass
class FreshSupply:
    """Generates machine variables %1, %2, ... distinct from any name in use."""

    counter: int = 0

    def fresh(self) -> str:
        self.counter += 1
        return f"%{self.counter}"

    def fresh_vec(self, n: int) -> VarVec:
        return tuple(self.fresh() for _ in range(n))

    @classmethod
    def above(cls, names) -> "FreshSupply":
        top = 0
        for n in names:
            m = re.fullmatch(r"%(\d+)", n)
            if m:
                top = max(top, int(m.group(1)))
        return cls(top)


@dataclass(frozen=True)
class Judgement:
    """A rewritten fragment with its wiring context."""

    formula: Form
    pre_state: VarVec = ()
    inputs: VarVec = ()
    outputs: VarVec = ()
    post_state: VarVec = ()


@dataclass
class RewriteEnv:
    """Operation tables the rewrite needs, plus collected initial values."""

    cons_arity: dict[str, int] = field(default_factory=dict)
    prim_out: dict[str, int] = field(default_factory=dict)
    fun_faces: dict[str, tuple[Face, dict[str, Value]]] = field(default_factory=dict)
    state_init: dict[str, Value] = field(default_factory=dict)

    @classmethod
    def empty(cls) -> "RewriteEnv":
        return cls()

    @classmethod
    def for_db(cls, db: ProgramDB, normalized: Optional[dict[str, BoxAbs]] = None) -> "RewriteEnv":
        env = cls(
            cons_arity={c.name: c.arity for c in db.constructors.values()},
            prim_out={p.name: p.shape.out_arity for p in db.primitives.values()},
        )
        for name, box in (normalized or {}).items():
            env.fun_faces[name] = (box.face, box.init_map())
        return env


def _and(*forms: Form) -> Form:
    parts: list[Form] = []
    for f in forms:
        parts.extend(conjuncts_of(f))
    return and_of(parts)


def _vars(names: VarVec) -> Expr:
    return comma_of([Var(n) for n in names])


# ---------------------------------------------------------------------------
# Renaming (used by the box rule and the case rule)
# ---------------------------------------------------------------------------


def rename_expr(e: Expr, m: dict[str, str]) -> Expr:
    match e:
        case UnitTuple() | Lit():
            return e
        case Var(name):
            return replace(e, name=m.get(name, name)) if name in m else e
        case Comma(l, r):
            return replace(e, left=rename_expr(l, m), right=rename_expr(r, m))
        case Apply(_, arg):
            return replace(e, arg=rename_expr(arg, m))
        case Let(binder, bound, body):
            return replace(
                e,
                binder=tuple(m.get(b, b) for b in binder),
                bound=rename_expr(bound, m),
                body=rename_expr(body, m),
            )
        case Case(scrut, rules):
            return replace(e, scrutinee=rename_expr(scrut, m), rules=_rename_rule(rules, m))
    raise TypeError(f"not an expression: {e!r}")


def _rename_rule(r: RuleTree, m: dict[str, str]) -> RuleTree:
    match r:
        case Match(p, body):
            return replace(r, pattern=_rename_pat(p, m), body=rename_expr(body, m))
        case Choice(l, rr):
            return replace(r, left=_rename_rule(l, m), right=_rename_rule(rr, m))
    raise TypeError(f"not a rule tree: {r!r}")


def _rename_pat(p: Pat, m: dict[str, str]) -> Pat:
    match p:
        case PatUnit():
            return p
        case PatVar(name):
            return replace(p, name=m.get(name, name)) if name in m else p
        case PatComma(l, r):
            return replace(p, left=_rename_pat(l, m), right=_rename_pat(r, m))
        case ConsPat(_, arg):
            return replace(p, arg=_rename_pat(arg, m))
    raise TypeError(f"not a pattern: {p!r}")


def rename_form(f: Form, m: dict[str, str]) -> Form:
    """Rename every occurrence, binders included. Callers guarantee freshness."""
    match f:
        case Top() | BotForm():
            return f
        case And(l, r):
            return replace(f, left=rename_form(l, m), right=rename_form(r, m))
        case Or(l, r):
            return replace(f, left=rename_form(l, m), right=rename_form(r, m))
        case Exists(binder, body):
            return replace(f, binder=tuple(m.get(b, b) for b in binder), body=rename_form(body, m))
        case Assign(targets, rhs):
            return replace(f, targets=tuple(m.get(t, t) for t in targets), rhs=rename_expr(rhs, m))
        case IsBot(v):
            return replace(f, var=m.get(v, v)) if v in m else f
        case IsNotBot(v):
            return replace(f, var=m.get(v, v)) if v in m else f
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# Expression rewriting
# ---------------------------------------------------------------------------


def rewrite_expr(e: Expr, fresh: FreshSupply, env: Optional[RewriteEnv] = None) -> Judgement:
    """Flatten an expression to a conjunction of atomic assignments."""
    env = env if env is not None else RewriteEnv.empty()
    match e:
        case UnitTuple():
            return Judgement(Top())
        case Lit(value):
            y = fresh.fresh()
            return Judgement(Assign((y,), Lit(value)), outputs=(y,))
        case Var(name):
            y = fresh.fresh()
            return Judgement(Assign((y,), Var(name)), outputs=(y,))
        case Comma(l, r):
            jl = rewrite_expr(l, fresh, env)
            jr = rewrite_expr(r, fresh, env)
            return Judgement(
                _and(jl.formula, jr.formula),
                pre_state=jl.pre_state + jr.pre_state,
                inputs=jl.inputs + jr.inputs,
                outputs=jl.outputs + jr.outputs,
                post_state=jl.post_state + jr.post_state,
            )
        case Apply(op, arg):
            return _rewrite_apply(op, arg, fresh, env)
        case Let(binder, bound, body):
            jb = rewrite_expr(bound, fresh, env)
            if len(jb.outputs) != len(binder):
                raise ValueError(f"let binds {len(binder)} variables from {len(jb.outputs)} outputs")
            copies = [Assign((b,), Var(y)) for b, y in zip(binder, jb.outputs)]
            jbody = rewrite_expr(body, fresh, env)
            return Judgement(
                Exists(
                    jb.outputs,
                    _and(jb.formula, and_of(copies), jbody.formula),
                ) if jb.outputs else _and(jb.formula, jbody.formula),
                pre_state=jb.pre_state + jbody.pre_state,
                inputs=jb.inputs + jbody.inputs,
                outputs=jbody.outputs,
                post_state=jb.post_state + jbody.post_state,
            )
        case Case(scrut, rules):
            js = rewrite_expr(scrut, fresh, env)
            jr = rewrite_rule(rules, fresh, env)
            if len(jr.inputs) != len(js.outputs):
                raise ValueError("case scrutinee arity does not match rule patterns")
            rewired = rename_form(jr.formula, dict(zip(jr.inputs, js.outputs)))
            inner = _and(js.formula, rewired)
            formula: Form = Exists(js.outputs, inner) if js.outputs else inner
            return Judgement(
                formula,
                pre_state=js.pre_state + jr.pre_state,
                inputs=js.inputs,
                outputs=jr.outputs,
                post_state=js.post_state + jr.post_state,
            )
    raise TypeError(f"not an expression: {e!r}")


def _close_over(xs: VarVec, f: Form) -> Form:
    """Bind argument conduits that the surrounding operation consumed."""
    return Exists(xs, f) if xs else f


def _rewrite_apply(op, arg: Expr, fresh: FreshSupply, env: RewriteEnv) -> Judgement:
    ja = rewrite_expr(arg, fresh, env)
    xs = ja.outputs
    match op:
        case ConsRef(name):
            y = fresh.fresh()
            assign = Assign((y,), Apply(ConsRef(name), _vars(xs)))
            return replace(ja, formula=_close_over(xs, _and(ja.formula, assign)), outputs=(y,))
        case PrimRef(name):
            out = env.prim_out.get(name)
            if out is None:
                raise ValueError(f"unknown primitive {name}")
            ys = fresh.fresh_vec(out)
            assign = Assign(ys, Apply(PrimRef(name), _vars(xs)))
            return replace(ja, formula=_close_over(xs, _and(ja.formula, assign)), outputs=ys)
        case ConsInvRef(name):
            arity = env.cons_arity.get(name)
            if arity is None:
                raise ValueError(f"unknown constructor {name}")
            ys = fresh.fresh_vec(arity)
            c = fresh.fresh()
            assign = Assign(ys + (c,), Apply(ConsInvRef(name), _vars(xs)))
            return replace(ja, formula=_close_over(xs, _and(ja.formula, assign)), outputs=ys + (c,))
        case GammaOp():
            y = fresh.fresh()
            assign = Assign((y,), Apply(GammaOp(), _vars(xs)))
            return replace(ja, formula=_close_over(xs, _and(ja.formula, assign)), outputs=(y,))
        case PhiOp():
            y = fresh.fresh()
            assign = Assign((y,), Apply(PhiOp(), _vars(xs)))
            return replace(ja, formula=_close_over(xs, _and(ja.formula, assign)), outputs=(y,))
        case DeltaOp(inits):
            m = len(xs)
            ts = fresh.fresh_vec(m)
            ys = fresh.fresh_vec(m)
            ts2 = fresh.fresh_vec(m)
            outs = [Assign((y,), Var(t)) for y, t in zip(ys, ts)]
            steps = [Assign((t2,), Var(x)) for t2, x in zip(ts2, xs)]
            if inits is not None:
                for t, v in zip(ts, inits):
                    env.state_init[t] = v
            return Judgement(
                _close_over(xs, _and(ja.formula, and_of(outs), and_of(steps))),
                pre_state=ja.pre_state + ts,
                inputs=ja.inputs,
                outputs=ys,
                post_state=ja.post_state + ts2,
            )
        case FunRef(name):
            entry = env.fun_faces.get(name)
            if entry is None:
                raise ValueError(f"function {name} has no translated interface yet")
            face, callee_inits = entry
            if len(xs) != len(face.inputs):
                raise ValueError(f"call to {name} with {len(xs)} arguments, face wants {len(face.inputs)}")
            s = len(face.pre_state)
            ts = fresh.fresh_vec(s)
            ts2 = fresh.fresh_vec(s)
            ys = fresh.fresh_vec(len(face.outputs))
            assign = Assign(ys + ts2, Apply(FunRef(name), _vars(ts + xs)))
            for t, orig in zip(ts, face.pre_state):
                if orig in callee_inits:
                    env.state_init[t] = callee_inits[orig]
            return Judgement(
                _close_over(xs, _and(ja.formula, assign)),
                pre_state=ja.pre_state + ts,
                inputs=ja.inputs,
                outputs=ys,
                post_state=ja.post_state + ts2,
            )
        case NamedRef(name):
            raise ValueError(f"unresolved operation {name}")
    raise TypeError(f"not an op: {op!r}")


# ---------------------------------------------------------------------------
# Pattern and rule rewriting
# ---------------------------------------------------------------------------


def rewrite_pat(p: Pat, fresh: FreshSupply, env: Optional[RewriteEnv] = None) -> Judgement:
    """Turn a pattern into inverse-constructor plumbing.

    The judgement's inputs are the fresh conduits the scrutinee flows in
    through; its outputs are the control variables the match produces.
    """
    env = env if env is not None else RewriteEnv.empty()
    match p:
        case PatUnit():
            return Judgement(Top())
        case PatVar(name):
            y = fresh.fresh()
            return Judgement(Assign((name,), Var(y)), inputs=(y,))
        case PatComma(l, r):
            jl = rewrite_pat(l, fresh, env)
            jr = rewrite_pat(r, fresh, env)
            return Judgement(
                _and(jl.formula, jr.formula),
                inputs=jl.inputs + jr.inputs,
                outputs=jl.outputs + jr.outputs,
            )
        case ConsPat(cons, arg):
            jsub = rewrite_pat(arg, fresh, env)
            x = fresh.fresh()
            c = fresh.fresh()
            assign = Assign(jsub.inputs + (c,), Apply(ConsInvRef(cons), Var(x)))
            body = _and(assign, jsub.formula)
            formula: Form = Exists(jsub.inputs, body) if jsub.inputs else body
            return Judgement(formula, inputs=(x,), outputs=(c,) + jsub.outputs)
    raise TypeError(f"not a pattern: {p!r}")


def rewrite_rule(r: RuleTree, fresh: FreshSupply, env: Optional[RewriteEnv] = None) -> Judgement:
    """Turn a rule tree into guarded data flow joined by phi nodes."""
    env = env if env is not None else RewriteEnv.empty()
    match r:
        case Match(p, body):
            jp = rewrite_pat(p, fresh, env)
            jb = rewrite_expr(body, fresh, env)
            controls = jp.outputs
            zs = fresh.fresh_vec(len(jb.outputs))
            guards = []
            for z, y in zip(zs, jb.outputs):
                if controls:
                    guards.append(Assign((z,), Apply(GammaOp(), _vars((y,) + controls))))
                else:
                    guards.append(Assign((z,), Var(y)))
            inner = _and(jp.formula, jb.formula, and_of(guards))
            # the pattern's own variables are meaningless outside this arm
            bound = tuple(pat_vars(p)) + controls + jb.outputs
            formula: Form = Exists(bound, inner) if bound else inner
            return Judgement(
                formula,
                pre_state=jb.pre_state,
                inputs=jp.inputs,
                outputs=zs,
                post_state=jb.post_state,
            )
        case Choice(l, rr):
            jl = rewrite_rule(l, fresh, env)
            jr = rewrite_rule(rr, fresh, env)
            if len(jl.inputs) != len(jr.inputs) or len(jl.outputs) != len(jr.outputs):
                raise ValueError("rule branches disagree on arity")
            ins = fresh.fresh_vec(len(jl.inputs))
            zs = fresh.fresh_vec(len(jl.outputs))
            feed = [Assign((u,), Var(x)) for u, x in zip(jl.inputs, ins)]
            feed += [Assign((w,), Var(x)) for w, x in zip(jr.inputs, ins)]
            joins = [
                Assign((z,), Apply(PhiOp(), Comma(Var(v), Var(x))))
                for z, v, x in zip(zs, jl.outputs, jr.outputs)
            ]
            bound = jl.inputs + jl.outputs + jr.inputs + jr.outputs
            inner = _and(jl.formula, jr.formula, and_of(feed), and_of(joins))
            formula: Form = Exists(bound, inner) if bound else inner
            return Judgement(
                formula,
                pre_state=jl.pre_state + jr.pre_state,
                inputs=ins,
                outputs=zs,
                post_state=jl.post_state + jr.post_state,
            )
    raise TypeError(f"not a rule tree: {r!r}")


# ---------------------------------------------------------------------------
# Formula and abstraction rewriting
# ---------------------------------------------------------------------------


def rewrite_form(f: Form, fresh: FreshSupply, env: RewriteEnv) -> Judgement:
    match f:
        case Top():
            return Judgement(Top())
        case And(l, r):
            jl = rewrite_form(l, fresh, env)
            jr = rewrite_form(r, fresh, env)
            return Judgement(
                _and(jl.formula, jr.formula),
                pre_state=jl.pre_state + jr.pre_state,
                outputs=jl.outputs + jr.outputs,
                post_state=jl.post_state + jr.post_state,
            )
        case Assign(targets, rhs):
            je = rewrite_expr(rhs, fresh, env)
            if len(je.outputs) != len(targets):
                raise ValueError(f"assignment of {len(je.outputs)} outputs to {len(targets)} targets")
            copies = [Assign((t,), Var(y)) for t, y in zip(targets, je.outputs)]
            inner = _and(je.formula, and_of(copies))
            formula: Form = Exists(je.outputs, inner) if je.outputs else inner
            return Judgement(
                formula,
                pre_state=je.pre_state,
                outputs=targets,
                post_state=je.post_state,
            )
        case Exists(binder, body):
            jb = rewrite_form(body, fresh, env)
            return Judgement(
                Exists(binder, jb.formula),
                pre_state=jb.pre_state,
                outputs=tuple(v for v in jb.outputs if v not in binder),
                post_state=jb.post_state,
            )
        case _:
            raise ValueError("only tt, conjunction, assignment and exists can be translated")


def rewrite_abs(a: Abs, fresh: Optional[FreshSupply] = None, env: Optional[RewriteEnv] = None) -> BoxAbs:
    """Translate a checked functional definition into a flat box."""
    fresh = fresh if fresh is not None else FreshSupply.above(abs_all_idents(a))
    env = env if env is not None else RewriteEnv.empty()
    match a:
        case Lambda(rule):
            j = rewrite_rule(rule, fresh, env)
            face = Face(j.pre_state, j.inputs, j.outputs, j.post_state)
            inits = tuple((v, env.state_init[v]) for v in j.pre_state if v in env.state_init)
            return BoxAbs(face, j.formula, state_init=inits)
        case BoxAbs(face, body, src_inits):
            targets = {t for g in iter_forms(body) if isinstance(g, Assign) for t in g.targets}
            reads: list[Ident] = []
            for v in face.pre_state + face.inputs:
                if v not in reads:
                    reads.append(v)
            if set(reads) & targets:
                raise ValueError("source box assigns one of the variables it reads")
            writes: list[Ident] = []
            for v in face.outputs + face.post_state:
                # a slot that repeats a read (state passthrough) or another
                # write slot needs no proxy of its own
                if v in targets and v not in writes:
                    writes.append(v)
            j = rewrite_form(body, fresh, env)
            proxies_in = fresh.fresh_vec(len(reads))
            proxies_out = fresh.fresh_vec(len(writes))
            ren = dict(zip(reads, proxies_in)) | dict(zip(writes, proxies_out))
            body2 = rename_form(j.formula, ren)
            feed = [Assign((w,), Var(y)) for w, y in zip(proxies_in, reads)]
            emit = [Assign((z,), Var(x)) for z, x in zip(writes, proxies_out)]
            bound = proxies_in + proxies_out
            inner = _and(body2, and_of(feed), and_of(emit))
            formula: Form = Exists(bound, inner) if bound else inner
            new_face = Face(
                face.pre_state + j.pre_state,
                face.inputs,
                face.outputs,
                face.post_state + j.post_state,
            )
            inits = dict(src_inits)
            for v in j.pre_state:
                if v in env.state_init:
                    inits[v] = env.state_init[v]
            init_vec = tuple((v, inits[v]) for v in new_face.pre_state if v in inits)
            return BoxAbs(new_face, formula, state_init=init_vec)
    raise TypeError(f"not an abstraction: {a!r}")


# ---------------------------------------------------------------------------
# Prenexing and copy propagation
# ---------------------------------------------------------------------------


def prenex(f: Form) -> Form:
    """Pull every exists to the front and flatten the conjunction."""
    binders: list[str] = []
    atoms: list[Form] = []

    def walk(g: Form):
        match g:
            case Top():
                return
            case And(l, r):
                walk(l)
                walk(r)
            case Exists(binder, body):
                binders.extend(binder)
                walk(body)
            case _:
                atoms.append(g)

    walk(f)
    body = and_of(atoms)
    return Exists(tuple(binders), body) if binders else body


def split_prenex(f: Form) -> tuple[list[str], list[Form]]:
    g = prenex(f)
    if isinstance(g, Exists):
        return list(g.binder), conjuncts_of(g.body)
    return [], conjuncts_of(g)


def copy_propagate(a: BoxAbs) -> BoxAbs:
    """Remove variable-to-variable plumbing introduced by the translation.

    Three rewrites run to a fixed point:
    - a copy into a non-face variable is inlined into its uses and dropped;
    - a copy from a bound helper into a face variable renames the helper;
    - a machine-named face output/post-state slot copied from a source-named
      output merges with it (the face slot is renamed).
    """
    if not isinstance(a, BoxAbs):
        raise TypeError("copy propagation works on boxes")
    binders, clauses = split_prenex(a.body)
    face = a.face
    bound = set(binders)
    face_vars = set(face.all_vars())

    def rename_all(m: dict[str, str]):
        nonlocal clauses
        clauses = [rename_form(c, m) for c in clauses]

    changed = True
    while changed:
        changed = False
        for i, c in enumerate(clauses):
            if not (isinstance(c, Assign) and len(c.targets) == 1 and isinstance(c.rhs, Var)):
                continue
            v, u = c.targets[0], c.rhs.name
            if v == u:
                del clauses[i]
                changed = True
                break
            if v not in face_vars:
                del clauses[i]
                rename_all({v: u})
                bound.discard(v)
                changed = True
                break
            if u in bound:
                del clauses[i]
                rename_all({u: v})
                bound.discard(u)
                changed = True
                break
            slots = set(face.outputs) | set(face.post_state)
            m: dict[str, str] | None = None
            if v.startswith("%") and v in slots and u in face.outputs:
                m = {v: u}
            elif not v.startswith("%") and u.startswith("%") and u in slots:
                # an output copied from a machine-named sibling slot: the two
                # face positions denote the same wire, so share the name
                m = {u: v}
            if m is not None:
                del clauses[i]
                rename_all(m)
                face = Face(
                    face.pre_state,
                    face.inputs,
                    tuple(m.get(x, x) for x in face.outputs),
                    tuple(m.get(x, x) for x in face.post_state),
                )
                face_vars = set(face.all_vars())
                changed = True
                break

    used: set[str] = set()
    for c in clauses:
        used |= {t for f2 in iter_forms(c) if isinstance(f2, Assign) for t in f2.targets}
        for f2 in iter_forms(c):
            match f2:
                case Assign(_, rhs):
                    used |= expr_free_vars(rhs)
                case IsBot(w) | IsNotBot(w):
                    used.add(w)
    keep = tuple(b for b in binders if b in bound and b in used)
    body = and_of(clauses)
    if keep:
        body = Exists(keep, body)
    return BoxAbs(face, body, state_init=a.state_init)


# ---------------------------------------------------------------------------
# Causality
# ---------------------------------------------------------------------------


class CausalityError(Exception):
    def __init__(self, cycle: list[str]):
        super().__init__(f"instantaneous dependency cycle: {' -> '.join(cycle + cycle[:1])}")
        self.cycle = cycle


@dataclass(frozen=True)
class DependencyOrder:
    assignments: tuple[Assign, ...]
    variables: tuple[str, ...]


def causality_check(a: BoxAbs) -> DependencyOrder:
    """Order the box's assignments so reads come after writes.

    Raises CausalityError with one offending cycle if none exists. Ties are
    broken by original position, so the order is deterministic.
    """
    _, clauses = split_prenex(a.body)
    assigns: list[Assign] = []
    for c in clauses:
        if isinstance(c, Assign):
            assigns.append(c)
        else:
            raise ValueError("causality ordering needs a box of plain assignments")

    def_of: dict[str, int] = {}
    for i, c in enumerate(assigns):
        for t in c.targets:
            def_of[t] = i

    deps: list[set[int]] = []
    for c in assigns:
        reads = expr_free_vars(c.rhs)
        deps.append({def_of[r] for r in reads if r in def_of})

    indegree = [len(d - {i}) for i, d in enumerate(deps)]
    users: dict[int, set[int]] = {i: set() for i in range(len(assigns))}
    for i, d in enumerate(deps):
        for j in d - {i}:
            users[j].add(i)
        if i in d:
            raise CausalityError(list(assigns[i].targets))
    ready = [i for i, n in enumerate(indegree) if n == 0]
    heapq.heapify(ready)
    order: list[int] = []
    while ready:
        i = heapq.heappop(ready)
        order.append(i)
        for j in sorted(users[i]):
            indegree[j] -= 1
            if indegree[j] == 0:
                heapq.heappush(ready, j)
    if len(order) != len(assigns):
        stuck = sorted(set(range(len(assigns))) - set(order))
        cycle = _find_cycle(stuck, deps)
        raise CausalityError([t for i in cycle for t in assigns[i].targets])
    ordered = tuple(assigns[i] for i in order)
    return DependencyOrder(ordered, tuple(t for c in ordered for t in c.targets))


def _find_cycle(stuck: list[int], deps: list[set[int]]) -> list[int]:
    remaining = set(stuck)
    start = stuck[0]
    seen: list[int] = []
    node = start
    while node not in seen:
        seen.append(node)
        node = min(d for d in deps[node] if d in remaining)
    return seen[seen.index(node):]


# ---------------------------------------------------------------------------
# Whole-program driver
# ---------------------------------------------------------------------------


def normalize_fun(db: ProgramDB, name: str, *, copyprop: bool = True,
                  normalized: Optional[dict[str, BoxAbs]] = None) -> BoxAbs:
    """Translate one definition, using already-translated callees for calls."""
    fd = db.functions[name]
    env = RewriteEnv.for_db(db, normalized)
    box = rewrite_abs(fd.body, FreshSupply.above(abs_all_idents(fd.body)), env)
    if copyprop:
        box = copy_propagate(box)
    else:
        box = replace(box, body=prenex(box.body))
    return box


def normalize_program(db: ProgramDB, *, copyprop: bool = True) -> tuple[ProgramDB, dict[str, BoxAbs]]:
    """Translate every definition in order; later ones may call earlier ones."""
    normalized: dict[str, BoxAbs] = {}
    out = ProgramDB.from_decls(db.decls)
    for d in db.decls:
        if isinstance(d, FunDef):
            box = normalize_fun(db, d.name, copyprop=copyprop, normalized=normalized)
            normalized[d.name] = box
            out.replace_fun(replace(d, body=box, form_tag=None))
    from .checks import classify_form

    for fd in list(out.functions.values()):
        out.replace_fun(replace(fd, form_tag=classify_form(fd)))
    return out, normalized
