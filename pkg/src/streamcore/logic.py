"""Constraint-level view of normalized programs.

Rewrites second-form boxes into pure clause systems (no merge/guard
operators, only disjunctions and bottom-tests), and provides a small
finite-model enumerator over those systems: `satisfy` lists the
assignments of a formula over a finite carrier, `analyze_matching`
reports missing/overlapping case branches.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .ast import (
    And,
    Apply,
    Assign,
    BotForm,
    BoxAbs,
    Case,
    Comma,
    ConsInvRef,
    ConsPat,
    ConsRef,
    DeltaOp,
    Expr,
    Exists,
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
    RuleTree,
    Top,
    UnitTuple,
    Var,
    and_of,
    conjuncts_of,
    expr_free_vars,
    flatten_comma,
    flatten_pat_comma,
    form_free_vars,
    iter_abs_exprs,
    iter_exprs,
    or_of,
)
from .normalize import split_prenex
from .relsem import (  # noqa: F401  (re-exported: domains live with the evaluator)
    DomainTooLarge,
    FiniteDomain,
    eval_flat_rhs,
    eval_prim,
)
from .values import BOT, Value, is_defined, value_key


# ---------------------------------------------------------------------------
# second form -> third form


def _flat_vars(e: Expr, what: str) -> list[str]:
    names = []
    for part in flatten_comma(e):
        if not isinstance(part, Var):
            raise ValueError(f"{what} arguments must be variables")
        names.append(part.name)
    return names


def _reduce_clause(c: Form) -> list[Form]:
    """Expand one guard/merge assignment into plain clauses; pass others through."""
    if not isinstance(c, Assign) or not isinstance(c.rhs, Apply):
        return [c]
    match c.rhs.op:
        case GammaOp():
            (y,) = c.targets
            args = _flat_vars(c.rhs.arg, "guard")
            x, controls = args[0], args[1:]
            if not controls:
                return [Assign((y,), Var(x))]
            out: list[Form] = []
            for ci in controls:
                # whenever some control is undefined, y must be undefined
                out.append(Or(IsNotBot(ci), Assign((y,), Lit(BOT))))
            # and when every control is defined, y copies x
            passthrough: Form = Assign((y,), Var(x))
            for ci in reversed(controls):
                passthrough = Or(IsBot(ci), passthrough)
            out.append(passthrough)
            return out
        case PhiOp():
            (y,) = c.targets
            xs = _flat_vars(c.rhs.arg, "merge")
            out = [or_of([Assign((y,), Var(xj)) for xj in xs])]
            for xj in xs:
                # a defined branch forces the merge to be defined
                out.append(Or(IsBot(xj), IsNotBot(y)))
            return out
        case DeltaOp():
            raise ValueError("delay survived normalization; reduce expects a flat box")
        case _:
            return [c]


def reduce_to_third(a: BoxAbs) -> BoxAbs:
    """Replace guard/merge assignments by disjunctive clauses over bottom-tests."""
    binders, clauses = split_prenex(a.body)
    reduced: list[Form] = []
    for c in clauses:
        reduced.extend(_reduce_clause(c))
    body: Form = and_of(reduced)
    if binders:
        body = Exists(tuple(binders), body)
    return BoxAbs(a.face, body, a.state_init)


# ---------------------------------------------------------------------------
# clause-set view (for inspection and tests)


@dataclass(frozen=True)
class ClauseSet:
    binders: tuple[str, ...]
    clauses: tuple[tuple[Form, ...], ...]  # each inner tuple is a disjunction of literals


def _disjuncts(f: Form) -> list[Form]:
    match f:
        case Or(left, right):
            return _disjuncts(left) + _disjuncts(right)
        case _:
            return [f]


def to_clause_set(f: Form) -> ClauseSet:
    binders, clauses = split_prenex(f)
    out = []
    for c in clauses:
        lits = _disjuncts(c)
        for lit in lits:
            if not isinstance(lit, (Assign, IsBot, IsNotBot, Top, BotForm)):
                raise ValueError(f"not in clause form: {lit!r}")
        out.append(tuple(lits))
    return ClauseSet(tuple(binders), tuple(out))


def infer_controls(a: BoxAbs) -> frozenset[str]:
    """Variables carrying match-control tokens: the tag output of each destructor."""
    controls = set()
    _, clauses = split_prenex(a.body)
    for c in clauses:
        if isinstance(c, Assign) and isinstance(c.rhs, Apply) and isinstance(c.rhs.op, ConsInvRef):
            controls.add(c.targets[-1])
    return frozenset(controls)


# ---------------------------------------------------------------------------
# finite-model enumeration


def _all_form_vars(f: Form) -> tuple[set[str], set[str]]:
    """(free variables, existential binders) mentioned anywhere in `f`."""
    free = form_free_vars(f)
    binders: set[str] = set()

    def walk(g: Form) -> None:
        match g:
            case And(l, r) | Or(l, r):
                walk(l)
                walk(r)
            case Exists(b, body):
                binders.update(b)
                walk(body)
            case _:
                pass

    walk(f)
    return free, binders


def _eval_formula(f: Form, env: dict[str, Value]) -> bool:
    match f:
        case Top():
            return True
        case BotForm():
            return False
        case And(l, r):
            return _eval_formula(l, env) and _eval_formula(r, env)
        case Or(l, r):
            return _eval_formula(l, env) or _eval_formula(r, env)
        case Exists(_, body):
            # binders are enumerated alongside free variables and the witness
            # projected away afterwards, so the body is checked directly
            return _eval_formula(body, env)
        case IsBot(v):
            return env[v] is BOT
        case IsNotBot(v):
            return env[v] is not BOT
        case Assign(targets, rhs):
            got = tuple(env[t] for t in targets)
            return any(got == r for r in eval_flat_rhs(rhs, env, len(targets)))
    raise ValueError(f"cannot evaluate formula node: {f!r}")


def satisfy(
    f: Form | BoxAbs,
    dom: FiniteDomain | None = None,
    fixed: dict[str, Value] | None = None,
    bound: int = 10**7,
) -> list[dict[str, Value]]:
    """All assignments of the free variables of `f` over a finite carrier.

    Conjuncts act as constraints in a backtracking search: an assignment
    whose right-hand side is known pins its targets (the computed value
    need not lie in the carrier), a disjunction branches on its disjuncts,
    and a variable nothing pins is enumerated from its carrier column.
    Rows are the distinct valuations of the free variables, existential
    binders projected away, sorted by value.  `fixed` pins variables up
    front; `bound` caps the number of search steps.  A box is taken to
    mean its body, whose free variables are the face.
    """
    if isinstance(f, BoxAbs):
        f = f.body
    dom = dom or FiniteDomain({})
    fixed = dict(fixed or {})
    free, binders = _all_form_vars(f)
    names = sorted(free | binders)
    cols: dict[str, tuple[Value, ...]] = {}
    for v in names:
        cols[v] = (fixed[v],) if v in fixed else tuple(dom.for_var(v))

    g = f
    while isinstance(g, Exists):
        g = g.body
    pending0 = [(c, frozenset(form_free_vars(c))) for c in conjuncts_of(g)]

    rows: list[dict[str, Value]] = []
    seen: set[tuple] = set()
    ordered_free = sorted(free)
    steps = 0

    def emit(env: dict[str, Value]) -> None:
        loose = [v for v in ordered_free if v not in env]
        for combo in itertools.product(*(cols[v] for v in loose)):
            full = env | dict(zip(loose, combo))
            row = {v: full[v] for v in ordered_free}
            key = tuple(value_key(row[v]) for v in ordered_free)
            if key not in seen:
                seen.add(key)
                rows.append(row)

    def pin(env: dict[str, Value], targets, vals) -> dict[str, Value] | None:
        env2 = dict(env)
        for t, val in zip(targets, vals):
            if t in env2:
                if value_key(env2[t]) != value_key(val):
                    return None
            else:
                env2[t] = val
        return env2

    def search(env: dict[str, Value], pending) -> None:
        nonlocal steps
        steps += 1
        if steps > bound:
            raise DomainTooLarge(steps, bound)
        # propagate: discharge decided clauses, pin determined assignments
        progress = True
        while progress:
            progress = False
            remaining = []
            for c, cv in pending:
                if cv <= env.keys():
                    if not _eval_clause(c, env, cols):
                        return
                    progress = True
                    continue
                if isinstance(c, Assign) and expr_free_vars(c.rhs) <= env.keys():
                    outs = eval_flat_rhs(c.rhs, env, len(c.targets))
                    if len(outs) == 1:
                        env2 = pin(env, c.targets, outs[0])
                        if env2 is None:
                            return
                        env = env2
                        progress = True
                        continue
                remaining.append((c, cv))
            pending = remaining
        if not pending:
            emit(env)
            return
        # branch, most forced first: a multi-valued assignment, then a free
        # column, then a disjunction.  Assignment targets are derived, never
        # drawn from the carrier, so they are enumerated only as a last
        # resort (a circular system nothing else decides).
        for i, (c, cv) in enumerate(pending):
            if isinstance(c, Assign) and expr_free_vars(c.rhs) <= env.keys():
                rest = pending[:i] + pending[i + 1 :]
                for vals in eval_flat_rhs(c.rhs, env, len(c.targets)):
                    env2 = pin(env, c.targets, vals)
                    if env2 is not None:
                        search(env2, rest)
                return
        blocked = {v for _, cv in pending for v in cv if v not in env}
        targeted = set()
        for c, _ in pending:
            targeted |= _clause_targets(c)
        loose = blocked - targeted
        if loose:
            v = min(loose, key=lambda u: (len(cols[u]), u))
            for val in cols[v]:
                search(env | {v: val}, pending)
            return
        for i, (c, cv) in enumerate(pending):
            if isinstance(c, Or):
                rest = pending[:i] + pending[i + 1 :]
                for d in _disjuncts(c):
                    search(env, rest + [(d, frozenset(form_free_vars(d)))])
                return
        v = min(blocked, key=lambda u: (len(cols[u]), u))
        for val in cols[v]:
            search(env | {v: val}, pending)

    search(dict(fixed), pending0)
    rows.sort(key=lambda r: tuple(value_key(r[v]) for v in ordered_free))
    return rows


def _clause_targets(f: Form) -> set[str]:
    """Variables assigned anywhere in a clause, disjuncts included."""
    match f:
        case Assign(targets, _):
            return set(targets)
        case And(l, r) | Or(l, r):
            return _clause_targets(l) | _clause_targets(r)
        case Exists(_, body):
            return _clause_targets(body)
        case _:
            return set()


def _eval_clause(f: Form, env: dict[str, Value], cols: dict[str, tuple[Value, ...]]) -> bool:
    """Truth of a clause whose free variables are all in `env`.

    Inner existential binders (a non-prenex input) are enumerated from
    their carrier columns.
    """
    match f:
        case And(l, r):
            return _eval_clause(l, env, cols) and _eval_clause(r, env, cols)
        case Or(l, r):
            return _eval_clause(l, env, cols) or _eval_clause(r, env, cols)
        case Exists(bs, body):
            loose = [b for b in bs if b not in env]
            return any(
                _eval_clause(body, env | dict(zip(loose, combo)), cols)
                for combo in itertools.product(*(cols[b] for b in loose))
            )
        case _:
            return _eval_formula(f, env)


# ---------------------------------------------------------------------------
# case-branch analysis


class _NotSupported(Exception):
    pass


def _match_leaf(p: Pat, v: Value) -> dict[str, Value] | None:
    """Bind a single-width pattern against one value; None when inactive."""
    match p:
        case PatVar(name):
            return {name: v}
        case ConsPat(cons, arg):
            from .values import Term

            leaves = flatten_pat_comma(arg)
            if not (isinstance(v, Term) and v.cons == cons and len(v.args) == len(leaves)):
                return None
            return _match_vec(leaves, tuple(v.args))
    raise _NotSupported(f"pattern not supported: {p!r}")


def _match_vec(leaves: list[Pat], vs: tuple[Value, ...]) -> dict[str, Value] | None:
    if len(leaves) != len(vs):
        return None
    env: dict[str, Value] = {}
    for p, v in zip(leaves, vs):
        got = _match_leaf(p, v)
        if got is None:
            return None
        env.update(got)
    return env


def _eval_expr_multi(e: Expr, env: dict[str, Value]) -> set[tuple[Value, ...]]:
    """All value tuples an expression can take; branches of a case may overlap."""
    match e:
        case UnitTuple():
            return {()}
        case Lit(v):
            return {(v,)}
        case Var(name):
            if name not in env:
                raise _NotSupported(f"unbound variable {name}")
            return {(env[name],)}
        case Comma(left, right):
            out = set()
            for l in _eval_expr_multi(left, env):
                for r in _eval_expr_multi(right, env):
                    out.add(l + r)
            return out
        case Apply(op, arg):
            argsets = _eval_expr_multi(arg, env)
            out = set()
            for args in argsets:
                match op:
                    case ConsRef(name):
                        from .values import Term

                        if all(is_defined(x) for x in args):
                            out.add((Term(name, tuple(args)),))
                        else:
                            out.add((BOT,))
                    case PrimRef(name):
                        out.add(eval_prim(name, args))
                    case _:
                        raise _NotSupported(f"cannot evaluate {op!r} statically")
            return out
        case Let(binder, bound, body):
            out = set()
            for vals in _eval_expr_multi(bound, env):
                if len(vals) != len(binder):
                    raise _NotSupported("let width mismatch")
                inner = dict(env)
                inner.update(zip(binder, vals))
                out |= _eval_expr_multi(body, inner)
            return out
        case Case(scrutinee, rules):
            out = set()
            width = None
            for vs in _eval_expr_multi(scrutinee, env):
                results = set()
                for _, leaves, body in _case_branches(rules):
                    bound = _match_vec(leaves, vs)
                    if bound is None:
                        continue
                    inner = dict(env)
                    inner.update(bound)
                    results |= _eval_expr_multi(body, inner)
                if results:
                    for r in results:
                        width = len(r)
                    out |= results
                else:
                    out.add(None)  # placeholder: no branch fired
            if None in out:
                out.discard(None)
                if width is None:
                    # no firing anywhere: width unknown, fall back to 1
                    width = 1
                out.add((BOT,) * width)
            return out
    raise _NotSupported(f"expression not supported: {e!r}")


def _case_branches(rules: RuleTree) -> list[tuple[int, list[Pat], Expr]]:
    out: list[tuple[int, list[Pat], Expr]] = []

    def walk(r: RuleTree) -> None:
        match r:
            case Match(pattern, body):
                out.append((len(out), flatten_pat_comma(pattern), body))
            case _:
                walk(r.left)
                walk(r.right)

    walk(rules)
    return out


def _definitions(fd: FunDef) -> dict[str, Expr]:
    """Map assigned variable -> rhs for box-level single-target clauses."""
    if not isinstance(fd.body, BoxAbs):
        return {}
    defs: dict[str, Expr] = {}
    for c in conjuncts_of(_strip_exists(fd.body.body)):
        if isinstance(c, Assign):
            if len(c.targets) == 1:
                defs[c.targets[0]] = c.rhs
            else:
                for t in c.targets:
                    defs[t] = None  # multi-target: cut the chase here
    return defs


def _strip_exists(f: Form) -> Form:
    while isinstance(f, Exists):
        f = f.body
    return f


def _expr_has_state(e: Expr) -> bool:
    for sub in iter_exprs(e):
        if isinstance(sub, Apply) and isinstance(sub.op, (DeltaOp, FunRef, NamedRef)):
            return True
    return False


def _expr_free(e: Expr) -> set[str]:
    from .ast import expr_free_vars

    return expr_free_vars(e)


@dataclass(frozen=True)
class CaseReport:
    label: str
    support: tuple[str, ...]
    missing: tuple[dict[str, Value], ...]
    overlapping: tuple[dict[str, Value], ...]
    notes: tuple[str, ...] = ()


@dataclass
class MatchReport:
    fun: str
    cases: list[CaseReport] = field(default_factory=list)

    @property
    def missing(self) -> list[dict[str, Value]]:
        return [m for c in self.cases for m in c.missing]

    @property
    def overlapping(self) -> list[dict[str, Value]]:
        return [m for c in self.cases for m in c.overlapping]

    def ok(self) -> bool:
        return not self.missing and not self.overlapping


def _support_of(
    scrutinee: Expr, defs: dict[str, Expr]
) -> tuple[list[str], list[tuple[str, Expr]]]:
    """Chase scrutinee dependencies through plain definitions.

    Returns base variables (enumerated over the domain) and the definitions to
    replay, innermost first.  A variable defined by a delayed or multi-target
    clause is cut off and treated as a base variable.
    """
    base: list[str] = []
    plan: list[tuple[str, Expr]] = []
    done: set[str] = set()
    visiting: set[str] = set()

    def visit(v: str) -> None:
        if v in done:
            return
        if v in visiting:
            raise _NotSupported(f"circular definition of {v}")
        rhs = defs.get(v)
        if rhs is None or _expr_has_state(rhs):
            done.add(v)
            base.append(v)
            return
        visiting.add(v)
        for dep in sorted(_expr_free(rhs)):
            visit(dep)
        visiting.discard(v)
        done.add(v)
        plan.append((v, rhs))

    for v in sorted(_expr_free(scrutinee)):
        visit(v)
    return base, plan


def _valuation_key(val: dict[str, Value]) -> tuple:
    return tuple((k, value_key(v)) for k, v in sorted(val.items()))


def analyze_matching(
    fd: FunDef, dom: FiniteDomain | None = None, bound: int = 10**6
) -> MatchReport:
    """Report case-site valuations with no active branch or several.

    Base variables (inputs, pre-state, anything behind a delay) range over the
    defined part of the domain; intermediate definitions are replayed.
    """
    dom = dom or FiniteDomain({})
    report = MatchReport(fd.name)
    defs = _definitions(fd)
    sites: list[tuple[str, Expr, RuleTree]] = []
    if isinstance(fd.body, Lambda):
        # the whole input vector is scrutinized; synthesize its names
        width = len(_case_branches(fd.body.rule)[0][1])
        names = tuple(f"arg{i+1}" for i in range(width))
        scrut: Expr = (
            UnitTuple()
            if width == 0
            else Var(names[0])
            if width == 1
            else _comma_vars(names)
        )
        sites.append(("input match", scrut, fd.body.rule))
    count = 0
    for e in iter_abs_exprs(fd.body):
        if isinstance(e, Case):
            count += 1
            sites.append((f"case #{count}", e.scrutinee, e.rules))

    for label, scrutinee, rules in sites:
        try:
            report.cases.append(_analyze_site(label, scrutinee, rules, defs, dom, bound))
        except _NotSupported as exc:
            report.cases.append(
                CaseReport(label, (), (), (), notes=(f"skipped: {exc}",))
            )
    return report


def _comma_vars(names: tuple[str, ...]) -> Expr:
    e: Expr = Var(names[0])
    for n in names[1:]:
        e = Comma(e, Var(n))
    return e


def _analyze_site(
    label: str,
    scrutinee: Expr,
    rules: RuleTree,
    defs: dict[str, Expr],
    dom: FiniteDomain,
    bound: int,
) -> CaseReport:
    base, plan = _support_of(scrutinee, defs)
    branches = _case_branches(rules)
    columns = []
    size = 1
    for v in base:
        col = tuple(x for x in dom.for_var(v) if is_defined(x))
        if not col:
            raise _NotSupported(f"empty domain for {v}")
        columns.append(col)
        size *= len(col)
        if size > bound:
            raise DomainTooLarge(size, bound)
    missing: list[dict[str, Value]] = []
    overlapping: list[dict[str, Value]] = []
    seen_miss: set[tuple] = set()
    seen_over: set[tuple] = set()
    for combo in itertools.product(*columns):
        valuation = dict(zip(base, combo))
        envs: list[dict[str, Value]] = [dict(valuation)]
        for v, rhs in plan:
            next_envs = []
            for env in envs:
                for vals in _eval_expr_multi(rhs, env):
                    e2 = dict(env)
                    if len(vals) == 1:
                        e2[v] = vals[0]
                    else:
                        raise _NotSupported(f"wide definition of {v}")
                    next_envs.append(e2)
            envs = next_envs
        miss = over = False
        for env in envs:
            for vs in _eval_expr_multi(scrutinee, env):
                if not all(is_defined(x) for x in vs):
                    continue  # an undefined scrutinee yields bottom, not a coverage hole
                active = [i for i, leaves, _ in branches if _match_vec(leaves, vs) is not None]
                if not active:
                    miss = True
                elif len(active) > 1:
                    over = True
        key = _valuation_key(valuation)
        if miss and key not in seen_miss:
            seen_miss.add(key)
            missing.append(valuation)
        if over and key not in seen_over:
            seen_over.add(key)
            overlapping.append(valuation)
    cols = dict(zip(base, columns))
    missing = _project_cylinders(missing, base, cols)
    overlapping = _project_cylinders(overlapping, base, cols)
    missing.sort(key=_valuation_key)
    overlapping.sort(key=_valuation_key)
    return CaseReport(label, tuple(base), tuple(missing), tuple(overlapping))


def _project_cylinders(
    vals: list[dict[str, Value]],
    base: tuple[str, ...],
    columns: dict[str, tuple[Value, ...]],
) -> list[dict[str, Value]]:
    """Drop support variables that do not constrain a valuation set.

    A variable is dropped when, grouped by the remaining variables, every
    group covers the variable's whole column: the set is a cylinder along
    that axis and the variable carries no information.  A fully covered
    site minimizes to the single empty valuation, meaning "always".
    """
    if not vals:
        return []
    keep = list(base)
    rows = [dict(v) for v in vals]
    changed = True
    while changed:
        changed = False
        for v in keep:
            others = [u for u in keep if u != v]
            groups: dict[tuple, set] = {}
            for r in rows:
                k = tuple(value_key(r[u]) for u in others)
                groups.setdefault(k, set()).add(value_key(r[v]))
            full = {value_key(x) for x in columns[v]}
            if not all(g == full for g in groups.values()):
                continue
            keep = others
            seen: set[tuple] = set()
            projected: list[dict[str, Value]] = []
            for r in rows:
                k = tuple(value_key(r[u]) for u in keep)
                if k not in seen:
                    seen.add(k)
                    projected.append({u: r[u] for u in keep})
            rows = projected
            changed = True
            break
    return rows
