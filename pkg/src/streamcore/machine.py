"""Deterministic stream execution of flat definitions.

A `MachineProgram` is a flat box compiled down to an ordered list of
assignments: calls inlined, dependencies resolved, initial state filled in.
Each `step` evaluates the list once; `run` drives it over a stream.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .ast import (
    Apply,
    Assign,
    BoxAbs,
    Face,
    FunRef,
    PhiOp,
    ProgramDB,
    Var,
    and_of,
)
from .normalize import FreshSupply, causality_check, normalize_program
from .relsem import StepRelation, eval_flat_rhs, unroll
from .values import BOT, Value, all_defined, show_value, value_to_json


class NondeterminismTrap(Exception):
    """A merge had more than one defined branch at runtime."""


class UndefinedOutputTrap(Exception):
    """A defined input produced an undefined output or next state."""


@dataclass(frozen=True)
class MachineProgram:
    name: str
    face: Face
    assignments: tuple[Assign, ...]
    initial_state: tuple[Value, ...]
    det_certificate: str = "dynamic"

    def step(
        self, state: Sequence[Value], inputs: Sequence[Value]
    ) -> tuple[tuple[Value, ...], tuple[Value, ...]]:
        face = self.face
        if len(state) != len(face.pre_state):
            raise ValueError(
                f"{self.name}: expected {len(face.pre_state)} state values, got {len(state)}"
            )
        if len(inputs) != len(face.inputs):
            raise ValueError(
                f"{self.name}: expected {len(face.inputs)} inputs, got {len(inputs)}"
            )
        if not all_defined(state) or not all_defined(inputs):
            raise ValueError(f"{self.name}: machine state and inputs must be defined")
        env: dict[str, Value] = dict(zip(face.pre_state, state))
        env.update(zip(face.inputs, inputs))
        for a in self.assignments:
            outcomes = eval_flat_rhs(a.rhs, env, len(a.targets))
            if len(outcomes) > 1:
                vals = ", ".join(show_value(o[0]) for o in outcomes)
                raise NondeterminismTrap(
                    f"{self.name}: merge into {', '.join(a.targets)} has "
                    f"several defined branches ({vals})"
                )
            env.update(zip(a.targets, outcomes[0]))
        outs = tuple(env[v] for v in face.outputs)
        post = tuple(env[v] for v in face.post_state)
        if not all_defined(outs):
            raise UndefinedOutputTrap(
                f"{self.name}: undefined output for inputs {tuple(map(show_value, inputs))}"
            )
        if not all_defined(post):
            raise UndefinedOutputTrap(f"{self.name}: next state is undefined")
        return outs, post

    def run(
        self,
        inputs: Iterable[Sequence[Value]],
        state: Optional[Sequence[Value]] = None,
    ) -> "Trace":
        st = tuple(self.initial_state if state is None else state)
        start = st
        ins: list[tuple[Value, ...]] = []
        outs: list[tuple[Value, ...]] = []
        states: list[tuple[Value, ...]] = []
        for a in inputs:
            a = tuple(a)
            b, st = self.step(st, a)
            ins.append(a)
            outs.append(b)
            states.append(st)
        return Trace(self.face, start, ins, outs, states)

    def as_relation(self) -> StepRelation:
        """Expose the machine as a single-valued step relation."""

        def step(s, a):
            b, s2 = self.step(s, a)
            return {(b, s2)}

        return StepRelation.from_step(self.face, "deterministic", step)

    def run_unrolled(
        self,
        n: int,
        inputs: Sequence[Sequence[Value]],
        state: Optional[Sequence[Value]] = None,
    ) -> "Trace":
        """Run in blocks of `n` steps through the unrolled relation.

        A stream whose length is not a multiple of `n` is handled by
        pushing full blocks through the unrolled relation and finishing
        the remainder with plain steps from the carried state.
        """
        if n < 1:
            raise ValueError("block size must be at least 1")
        rel = unroll(self.as_relation(), n)
        fn = rel.step_fn()
        st = tuple(self.initial_state if state is None else state)
        start = st
        ins = [tuple(a) for a in inputs]
        outs: list[tuple[Value, ...]] = []
        w = len(self.face.outputs)
        whole = len(ins) - len(ins) % n
        for i in range(0, whole, n):
            block = sum(ins[i : i + n], ())
            ((b, st),) = fn(st, block)
            for j in range(n):
                outs.append(b[j * w : (j + 1) * w])
        for a in ins[whole:]:
            b1, st = self.step(st, a)
            outs.append(tuple(b1))
        # the unrolled block exposes only its final state; recover the
        # per-step states from the plain machine
        plain = self.run(ins, state=start)
        return Trace(self.face, start, ins, outs, plain.states)


@dataclass
class Trace:
    face: Face
    initial_state: tuple[Value, ...]
    inputs: list[tuple[Value, ...]]
    outputs: list[tuple[Value, ...]]
    states: list[tuple[Value, ...]]

    def rows(self):
        for i, (a, b, s) in enumerate(zip(self.inputs, self.outputs, self.states)):
            yield i, a, b, s

    def write_csv(self, fh, trace_state: bool = False) -> None:
        w = csv.writer(fh)
        header = ["step"]
        header += [f"in:{v}" for v in self.face.inputs]
        header += [f"out:{v}" for v in self.face.outputs]
        if trace_state:
            header += [f"state:{v}" for v in self.face.post_state]
        w.writerow(header)
        for i, a, b, s in self.rows():
            row = [i, *map(show_value, a), *map(show_value, b)]
            if trace_state:
                row += list(map(show_value, s))
            w.writerow(row)

    def write_jsonl(self, fh, trace_state: bool = False) -> None:
        for i, a, b, s in self.rows():
            rec = {
                "step": i,
                "in": {v: value_to_json(x) for v, x in zip(self.face.inputs, a)},
                "out": {v: value_to_json(x) for v, x in zip(self.face.outputs, b)},
            }
            if trace_state:
                rec["state"] = {v: value_to_json(x) for v, x in zip(self.face.post_state, s)}
            fh.write(json.dumps(rec) + "\n")


# ---------------------------------------------------------------------------
# compilation


def _inline_calls(
    db: ProgramDB,
    assigns: Sequence[Assign],
    machines: dict[str, "MachineProgram"],
    fresh: FreshSupply,
) -> list[Assign]:
    out: list[Assign] = []
    for a in assigns:
        if not (isinstance(a.rhs, Apply) and isinstance(a.rhs.op, FunRef)):
            out.append(a)
            continue
        callee = machines[a.rhs.op.name]
        cf = callee.face
        args = [x.name for x in _flat_args(a.rhs.arg)]
        if len(args) != len(cf.pre_state) + len(cf.inputs):
            raise ValueError(f"call to {callee.name}: argument arity mismatch")
        if len(a.targets) != len(cf.outputs) + len(cf.post_state):
            raise ValueError(f"call to {callee.name}: result arity mismatch")
        ren: dict[str, str] = {}
        extras: list[tuple[str, str]] = []  # (duplicate slot in caller, callee var)
        for v, w in zip(cf.pre_state + cf.inputs, args):
            ren.setdefault(v, w)
        for v, w in zip(cf.outputs + cf.post_state, a.targets):
            if v in ren:
                # one callee variable feeding several result slots
                extras.append((w, v))
            else:
                ren[v] = w
        for c in callee.assignments:
            for t in c.targets:
                if t not in ren:
                    ren[t] = fresh.fresh()
            out.append(_rename_assign(c, ren))
        for w, v in extras:
            out.append(Assign((w,), Var(ren[v])))
    return out


def _flat_args(e) -> list[Var]:
    from .ast import flatten_comma

    parts = flatten_comma(e)
    if not all(isinstance(p, Var) for p in parts):
        raise ValueError("call arguments must be variables")
    return parts


def _rename_assign(a: Assign, ren: dict[str, str]) -> Assign:
    from .normalize import rename_form

    renamed = rename_form(a, ren)
    assert isinstance(renamed, Assign)
    return renamed


def compile_machine(
    db: ProgramDB,
    name: str,
    *,
    copyprop: bool = True,
    certificate: Optional[str] = None,
    _boxes: Optional[dict[str, BoxAbs]] = None,
    _cache: Optional[dict[str, "MachineProgram"]] = None,
) -> MachineProgram:
    """Normalize a definition and fix an executable assignment order."""
    machines: dict[str, MachineProgram] = {} if _cache is None else _cache
    if name in machines:
        return machines[name]
    if _boxes is None:
        _, _boxes = normalize_program(db, copyprop=copyprop)
    box = _boxes[name]
    order = causality_check(box).assignments
    # compile callees first so their assignment lists can be spliced in
    for a in order:
        if isinstance(a.rhs, Apply) and isinstance(a.rhs.op, FunRef):
            callee = a.rhs.op.name
            if callee not in machines:
                compile_machine(
                    db, callee, copyprop=copyprop, _boxes=_boxes, _cache=machines
                )
    fresh = FreshSupply.above(
        {v for a in order for v in a.targets} | set(box.face.all_vars())
    )
    assigns = _inline_calls(db, order, machines, fresh)
    inits = box.init_map()
    initial = tuple(inits.get(v, 0) for v in box.face.pre_state)
    if certificate is None:
        has_phi = any(
            isinstance(a.rhs, Apply) and isinstance(a.rhs.op, PhiOp) for a in assigns
        )
        certificate = "dynamic" if has_phi else "phi-free"
    m = MachineProgram(name, box.face, tuple(assigns), initial, certificate)
    # inlining must not have broken the evaluation order
    causality_check(BoxAbs(box.face, and_of(list(assigns))))
    machines[name] = m
    return m
