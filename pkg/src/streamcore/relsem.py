"""Relational semantics: building-block evaluators, relation enumeration,
externalization, determinism restriction, and the three compositions."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from .ast import (
    Apply,
    Assign,
    BoxAbs,
    Comma,
    ConsInvRef,
    ConsRef,
    DeltaOp,
    Expr,
    Face,
    FunRef,
    GammaOp,
    Lit,
    NamedRef,
    PhiOp,
    PrimRef,
    UnitTuple,
    Var,
    expr_free_vars,
    flatten_comma,
)
from .normalize import causality_check
from .values import BOT, UNIT, Term, Value, all_defined, value_key

__all__ = [
    "eval_prim",
    "eval_cons_inv",
    "eval_gamma",
    "eval_phi",
    "PRIMITIVES",
    "FiniteDomain",
    "DomainTooLarge",
    "lifted",
    "StepRelation",
    "Row",
    "enumerate_relation",
    "externalize",
    "AcceptableStateSpace",
    "DeterminismError",
    "restrict_deterministic",
    "compose_parallel",
    "compose_io",
    "compose_state",
    "unroll",
    "i_relation",
    "j_relation",
    "k_relation",
    "run_relation",
]


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------


def _bool_term(b: bool) -> Term:
    return Term("T") if b else Term("F")


def _num(fn):
    return fn


PRIMITIVES: dict[str, tuple[Callable, int]] = {
    "add": (lambda a, b: a + b, 1),
    "sub": (lambda a, b: a - b, 1),
    "mul": (lambda a, b: a * b, 1),
    "div": (lambda a, b: BOT if b == 0 else a / b, 1),
    "neg": (lambda a: -a, 1),
    "min": (lambda a, b: min(a, b), 1),
    "max": (lambda a, b: max(a, b), 1),
    "lt": (lambda a, b: _bool_term(a < b), 1),
    "le": (lambda a, b: _bool_term(a <= b), 1),
    "gt": (lambda a, b: _bool_term(a > b), 1),
    "ge": (lambda a, b: _bool_term(a >= b), 1),
    "eq": (lambda a, b: _bool_term(a == b), 1),
}


def eval_prim(name: str, args: Sequence[Value]) -> tuple[Value, ...]:
    """Apply a library primitive, strictly lifted: any _|_ argument gives _|_."""
    entry = PRIMITIVES.get(name)
    if entry is None:
        raise ValueError(f"unknown primitive {name}")
    fn, out_arity = entry
    if not all_defined(args):
        return (BOT,) * out_arity
    result = fn(*args)
    if out_arity == 1:
        return (result,)
    return tuple(result)


def eval_cons_inv(cons: str, arity: int, v: Value) -> tuple[tuple[Value, ...], Value]:
    """Destructure v by constructor: (arguments, control).

    A match yields the argument tuple and the unit control; anything else
    (other constructors, numbers, _|_) yields all-_|_ arguments and _|_.
    """
    if isinstance(v, Term) and v.cons == cons and len(v.args) == arity:
        return v.args, UNIT
    return (BOT,) * arity, BOT


def eval_gamma(x: Value, controls: Sequence[Value]) -> Value:
    """Guard: x if every control is defined, else _|_."""
    if all_defined(controls):
        return x
    return BOT


def eval_phi(values: Sequence[Value]) -> set[Value]:
    """Join alternatives: the defined members, or {_|_} if there are none."""
    defined = {v for v in values if v is not BOT}
    return defined or {BOT}


# ---------------------------------------------------------------------------
# Finite domains
# ---------------------------------------------------------------------------


class DomainTooLarge(Exception):
    def __init__(self, size: int, bound: int):
        super().__init__(f"enumeration space has {size} points, bound is {bound}")
        self.size = size
        self.bound = bound


DEFAULT_CARRIER: tuple[Value, ...] = (0, 1, 2, BOT)


def lifted(values: Iterable[Value]) -> tuple[Value, ...]:
    """A value set extended with _|_."""
    vs = tuple(values)
    return vs if BOT in vs else vs + (BOT,)


@dataclass
class FiniteDomain:
    """Per-variable value sets for enumeration.

    Explicit entries are used verbatim. Control variables range over
    {unit, _|_}; everything else falls back to the default carrier.
    """

    assignments: dict[str, tuple[Value, ...]] = field(default_factory=dict)
    default: tuple[Value, ...] = DEFAULT_CARRIER
    controls: frozenset[str] = frozenset()

    def for_var(self, name: str) -> tuple[Value, ...]:
        if name in self.assignments:
            return self.assignments[name]
        if name in self.controls:
            return (UNIT, BOT)
        return self.default


# ---------------------------------------------------------------------------
# Step relations
# ---------------------------------------------------------------------------

Row = tuple[tuple[Value, ...], tuple[Value, ...], tuple[Value, ...], tuple[Value, ...]]


def row_key(row: Row):
    return tuple(tuple(value_key(v) for v in part) for part in row)


@dataclass
class StepRelation:
    """A step relation: either an enumerated tuple set or an executable step.

    Rows are (pre-state, input, output, post-state) tuples, kept sorted.
    """

    face: Face
    mode: str  # internal | external | deterministic
    rows: Optional[tuple[Row, ...]] = None
    step: Optional[Callable[[tuple[Value, ...], tuple[Value, ...]], set]] = None
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        if (self.rows is None) == (self.step is None):
            raise ValueError("a relation is either enumerated or executable")

    @classmethod
    def from_rows(cls, face: Face, mode: str, rows: Iterable[Row], notes=()) -> "StepRelation":
        return cls(face, mode, rows=tuple(sorted(set(rows), key=row_key)), notes=tuple(notes))

    @classmethod
    def from_step(cls, face: Face, mode: str, step, notes=()) -> "StepRelation":
        return cls(face, mode, step=step, notes=tuple(notes))

    def require_rows(self) -> tuple[Row, ...]:
        if self.rows is None:
            raise ValueError("this operation needs an enumerated relation")
        return self.rows

    def step_fn(self):
        """A set-valued step function, from either representation."""
        if self.step is not None:
            return self.step
        table: dict[tuple, set] = {}
        for s, a, b, s2 in self.rows:
            table.setdefault((s, a), set()).add((b, s2))
        return lambda s, a: table.get((s, a), set())


# ---------------------------------------------------------------------------
# Enumeration
# ---------------------------------------------------------------------------


def enumerate_relation(a: BoxAbs, dom: Optional[FiniteDomain] = None, bound: int = 10**7) -> StepRelation:
    """Enumerate a flat box over finite domains, branching on joins.

    Pre-state and input variables range over the domain; assignments run in
    dependency order; a phi with several defined alternatives forks the row.
    Face or internal variables never assigned range over the domain too and
    are reported in the relation's notes.
    """
    dom = dom or FiniteDomain()
    order = causality_check(a)
    face = a.face
    assigned = {t for c in order.assignments for t in c.targets}
    base = list(dict.fromkeys(face.pre_state + face.inputs))
    reads: set[str] = set()
    for c in order.assignments:
        reads |= expr_free_vars(c.rhs)
    loose = sorted((reads | set(face.outputs) | set(face.post_state)) - assigned - set(base))
    enum_vars = base + loose

    size = 1
    for v in enum_vars:
        size *= len(dom.for_var(v))
        if size > bound:
            raise DomainTooLarge(size, bound)

    rows: list[Row] = []
    spaces = [dom.for_var(v) for v in enum_vars]
    for point in itertools.product(*spaces):
        env0 = dict(zip(enum_vars, point))
        for env in _run_assignments(order.assignments, env0):
            rows.append(
                (
                    tuple(env[v] for v in face.pre_state),
                    tuple(env[v] for v in face.inputs),
                    tuple(env[v] for v in face.outputs),
                    tuple(env[v] for v in face.post_state),
                )
            )
    notes = tuple(f"unconstrained: {v}" for v in loose)
    return StepRelation.from_rows(face, "internal", rows, notes=notes)


def _run_assignments(assignments: Sequence[Assign], env0: dict[str, Value]) -> list[dict[str, Value]]:
    envs = [env0]
    for c in assignments:
        nxt: list[dict[str, Value]] = []
        for env in envs:
            for results in eval_flat_rhs(c.rhs, env, len(c.targets)):
                if len(results) != len(c.targets):
                    raise ValueError(
                        f"assignment to {len(c.targets)} variables got {len(results)} values"
                    )
                e2 = dict(env)
                e2.update(zip(c.targets, results))
                nxt.append(e2)
        envs = nxt
    return envs


def eval_flat_rhs(e: Expr, env: dict[str, Value], n_targets: int) -> list[tuple[Value, ...]]:
    """Possible value tuples of a flat right-hand side (joins may branch)."""
    match e:
        case Var(name):
            return [(env[name],)]
        case Lit(v):
            return [(v,)]
        case Apply(op, arg):
            parts = flatten_comma(arg)
            if not all(isinstance(x, (Var, Lit)) for x in parts):
                raise ValueError("operation arguments must be variables (flat box)")
            args = tuple(env[x.name] if isinstance(x, Var) else x.value for x in parts)
            match op:
                case PrimRef(name):
                    return [eval_prim(name, args)]
                case ConsRef(name):
                    if not all_defined(args):
                        return [(BOT,)]
                    return [(Term(name, args),)]
                case ConsInvRef(name):
                    # targets are (arguments..., control), fixing the arity
                    vs, ctrl = eval_cons_inv(name, n_targets - 1, args[0])
                    return [vs + (ctrl,)]
                case GammaOp():
                    return [(eval_gamma(args[0], args[1:]),)]
                case PhiOp():
                    return [(v,) for v in sorted(eval_phi(args), key=value_key)]
                case FunRef(name):
                    raise ValueError(f"call to {name} must be inlined before enumeration")
                case DeltaOp():
                    raise ValueError("delays cannot appear in a flat box")
                case NamedRef(name):
                    raise ValueError(f"unresolved operation {name}")
        case UnitTuple():
            return [()]
        case Comma():
            raise ValueError("tuple right-hand sides are not flat")
    raise TypeError(f"cannot evaluate {e!r}")


# ---------------------------------------------------------------------------
# Externalization and determinism
# ---------------------------------------------------------------------------


def externalize(r: StepRelation) -> StepRelation:
    """Drop rows with undefined inputs or outputs; state stays as it is."""
    rows = r.require_rows()
    kept = []
    mixed = 0
    for s, a, b, s2 in rows:
        if not all_defined(a):
            continue
        if all_defined(b):
            kept.append((s, a, b, s2))
        elif any(v is not BOT for v in b):
            mixed += 1
    notes = r.notes + ((f"mixed-definedness output rows dropped: {mixed}",) if mixed else ())
    return StepRelation.from_rows(r.face, "external", kept, notes=notes)


@dataclass(frozen=True)
class AcceptableStateSpace:
    contains: Callable[[tuple[Value, ...]], bool]
    description: str = ""


class DeterminismError(Exception):
    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


def restrict_deterministic(r: StepRelation, space: AcceptableStateSpace) -> StepRelation:
    """Check the relation is a total function on the acceptable states.

    Every (state, input) with an acceptable state must have exactly one
    outcome, whose post-state is again acceptable.
    """
    rows = r.require_rows()
    groups: dict[tuple, set] = {}
    inputs = sorted({a for _, a, _, _ in rows}, key=lambda t: tuple(value_key(v) for v in t))
    states = sorted(
        {s for s, _, _, _ in rows if space.contains(s)}, key=lambda t: tuple(value_key(v) for v in t)
    )
    for s, a, b, s2 in rows:
        if space.contains(s):
            groups.setdefault((s, a), set()).add((b, s2))
    for s in states:
        for a in inputs:
            outcomes = groups.get((s, a), set())
            if not outcomes:
                raise DeterminismError(f"no transition from state {s} on input {a}", witness=(s, a, ()))
            if len(outcomes) > 1:
                raise DeterminismError(
                    f"{len(outcomes)} transitions from state {s} on input {a}",
                    witness=(s, a, tuple(sorted(outcomes, key=lambda o: row_key((s, a) + o)))),
                )
            ((b, s2),) = outcomes
            if not space.contains(s2):
                raise DeterminismError(
                    f"state {s} on input {a} leaves the acceptable space (reaches {s2})",
                    witness=(s, a, ((b, s2),)),
                )
    kept = [(s, a, b, s2) for s, a, b, s2 in rows if space.contains(s)]
    return StepRelation.from_rows(r.face, "deterministic", kept, notes=r.notes)


# ---------------------------------------------------------------------------
# Compositions
# ---------------------------------------------------------------------------


def _merge_faces(fq: Face, fr: Face) -> tuple[Face, dict[str, str]]:
    used = set(fq.all_vars())
    ren: dict[str, str] = {}

    def pick(v: str) -> str:
        w = v
        while w in used:
            w += "'"
        used.add(w)
        if w != v:
            ren[v] = w
        return w

    renamed = Face(
        tuple(pick(v) for v in fr.pre_state),
        tuple(pick(v) for v in fr.inputs),
        tuple(pick(v) for v in fr.outputs),
        tuple(pick(v) for v in fr.post_state),
    )
    return renamed, ren


def _require_same_mode(q: StepRelation, r: StepRelation) -> str:
    if q.mode != r.mode:
        raise ValueError(f"cannot compose a {q.mode} relation with a {r.mode} one")
    return q.mode


def compose_parallel(q: StepRelation, r: StepRelation) -> StepRelation:
    """Side-by-side product: states, inputs and outputs concatenate."""
    mode = _require_same_mode(q, r)
    fr, _ = _merge_faces(q.face, r.face)
    face = Face(
        q.face.pre_state + fr.pre_state,
        q.face.inputs + fr.inputs,
        q.face.outputs + fr.outputs,
        q.face.post_state + fr.post_state,
    )
    if q.rows is not None and r.rows is not None:
        rows = [
            (sq + sr, aq + ar, bq + br, sq2 + sr2)
            for sq, aq, bq, sq2 in q.rows
            for sr, ar, br, sr2 in r.rows
        ]
        return StepRelation.from_rows(face, mode, rows, notes=q.notes + r.notes)
    qs, rs = q.step_fn(), r.step_fn()
    nq_s, nq_a = len(q.face.pre_state), len(q.face.inputs)

    def step(s, a):
        out = set()
        for bq, sq2 in qs(s[:nq_s], a[:nq_a]):
            for br, sr2 in rs(s[nq_s:], a[nq_a:]):
                out.add((bq + br, sq2 + sr2))
        return out

    return StepRelation.from_step(face, mode, step, notes=q.notes + r.notes)


def compose_io(q: StepRelation, r: StepRelation) -> StepRelation:
    """Pipe q's outputs into r's inputs; states run side by side."""
    mode = _require_same_mode(q, r)
    if len(q.face.outputs) != len(r.face.inputs):
        raise ValueError(
            f"cannot pipe {len(q.face.outputs)} outputs into {len(r.face.inputs)} inputs"
        )
    fr, _ = _merge_faces(q.face, r.face)
    face = Face(
        q.face.pre_state + fr.pre_state,
        q.face.inputs,
        fr.outputs,
        q.face.post_state + fr.post_state,
    )
    if q.rows is not None and r.rows is not None:
        by_in: dict[tuple, list] = {}
        for sr, ar, br, sr2 in r.rows:
            by_in.setdefault(ar, []).append((sr, br, sr2))
        rows = []
        for sq, aq, bq, sq2 in q.rows:
            for sr, br, sr2 in by_in.get(bq, []):
                rows.append((sq + sr, aq, br, sq2 + sr2))
        return StepRelation.from_rows(face, mode, rows, notes=q.notes + r.notes)
    qs, rs = q.step_fn(), r.step_fn()
    nq_s = len(q.face.pre_state)

    def step(s, a):
        out = set()
        for bq, sq2 in qs(s[:nq_s], a):
            for br, sr2 in rs(s[nq_s:], bq):
                out.add((br, sq2 + sr2))
        return out

    return StepRelation.from_step(face, mode, step, notes=q.notes + r.notes)


def compose_state(q: StepRelation, r: StepRelation) -> StepRelation:
    """Thread q's post-state into r's pre-state; I/O runs side by side."""
    mode = _require_same_mode(q, r)
    if len(q.face.post_state) != len(r.face.pre_state):
        raise ValueError(
            f"cannot thread {len(q.face.post_state)} post-states into {len(r.face.pre_state)} pre-states"
        )
    fr, _ = _merge_faces(q.face, r.face)
    face = Face(
        q.face.pre_state,
        q.face.inputs + fr.inputs,
        q.face.outputs + fr.outputs,
        fr.post_state,
    )
    if q.rows is not None and r.rows is not None:
        by_pre: dict[tuple, list] = {}
        for sr, ar, br, sr2 in r.rows:
            by_pre.setdefault(sr, []).append((ar, br, sr2))
        rows = []
        for sq, aq, bq, sq2 in q.rows:
            for ar, br, sr2 in by_pre.get(sq2, []):
                rows.append((sq, aq + ar, bq + br, sr2))
        return StepRelation.from_rows(face, mode, rows, notes=q.notes + r.notes)
    qs, rs = q.step_fn(), r.step_fn()
    nq_a = len(q.face.inputs)

    def step(s, a):
        out = set()
        for bq, smid in qs(s, a[:nq_a]):
            for br, sfin in rs(smid, a[nq_a:]):
                out.add((bq + br, sfin))
        return out

    return StepRelation.from_step(face, mode, step, notes=q.notes + r.notes)


def unroll(r: StepRelation, n: int) -> StepRelation:
    """n-fold state-threading of r with itself (n >= 1)."""
    if n < 1:
        raise ValueError("unroll needs n >= 1")
    acc = r
    for _ in range(n - 1):
        acc = compose_state(acc, r)
    return acc


def i_relation() -> StepRelation:
    """Neutral element of parallel composition: no state, no wires."""
    return StepRelation.from_rows(Face(), "internal", [((), (), (), ())])


def j_relation(domains: Sequence[Sequence[Value]]) -> StepRelation:
    """Identity on values: passes inputs through, stateless."""
    names = tuple(f"a{i + 1}" for i in range(len(domains)))
    face = Face((), names, tuple(f"b{i + 1}" for i in range(len(domains))), ())
    rows = [((), a, a, ()) for a in itertools.product(*domains)]
    return StepRelation.from_rows(face, "internal", rows)


def k_relation(domains: Sequence[Sequence[Value]]) -> StepRelation:
    """Identity on states: holds the state, no I/O."""
    names = tuple(f"s{i + 1}" for i in range(len(domains)))
    face = Face(names, (), (), tuple(f"t{i + 1}" for i in range(len(domains))))
    rows = [(s, (), (), s) for s in itertools.product(*domains)]
    return StepRelation.from_rows(face, "internal", rows)


def run_relation(r: StepRelation, state: tuple[Value, ...], inputs: Iterable[tuple[Value, ...]]):
    """Drive a functional relation over an input stream.

    Returns (outputs, states): per-step output tuples and the state after
    each step. Raises DeterminismError if any step is not single-valued.
    """
    fn = r.step_fn()
    outs: list[tuple[Value, ...]] = []
    states: list[tuple[Value, ...]] = []
    for a in inputs:
        outcomes = fn(state, a)
        if len(outcomes) != 1:
            raise DeterminismError(
                f"{len(outcomes)} outcomes from state {state} on input {a}",
                witness=(state, a, tuple(outcomes)),
            )
        ((b, s2),) = outcomes
        outs.append(b)
        states.append(s2)
        state = s2
    return outs, states
