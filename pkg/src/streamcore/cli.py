"""Command-line front end.

Subcommands: check (diagnostics), normalize (print the flat form), analyze
(case-branch report), run (drive a compiled machine over generated inputs),
relations (enumerate the step relation), graph (DOT wiring diagram).
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from typing import Iterable, Optional, Sequence

from . import __version__
from .ast import (
    Apply,
    Assign,
    ConsInvRef,
    FunDef,
    GammaOp,
    ProgramDB,
    Var,
    flatten_comma,
)
from .checks import ShapeError
from .logic import analyze_matching, reduce_to_third, satisfy
from .machine import compile_machine
from .normalize import CausalityError, causality_check, normalize_fun, split_prenex
from .parser import Diagnostic, LoadError, load_paths, load_with_diagnostics, parse
from .pretty import show_decl, show_face
from .relsem import (
    AcceptableStateSpace,
    DeterminismError,
    DomainTooLarge,
    FiniteDomain,
    enumerate_relation,
    externalize,
    restrict_deterministic,
)
from .values import BOT, Value, all_defined, parse_value, show_value, value_to_json


def _load(ns) -> ProgramDB:
    units = []
    for path in ns.files:
        with open(path) as fh:
            units.append(parse(fh.read(), unit=path))
    db, diags = load_with_diagnostics(units)
    for d in diags:
        if d.severity != "error":
            _emit_diag(d, ns)
    errors = [d for d in diags if d.severity == "error"]
    if errors:
        raise LoadError(errors)
    return db


def _emit_diag(d: Diagnostic, ns) -> None:
    if getattr(ns, "format", "text") == "json":
        print(json.dumps(d.to_json()), file=sys.stderr)
    else:
        where = d.unit or "<input>"
        if d.line is not None:
            where += f":{d.line}:{d.col}"
        print(f"{where}: {d.severity}: {d.message}", file=sys.stderr)


def _pick_fun(db: ProgramDB, name: Optional[str]) -> FunDef:
    if not db.functions:
        raise SystemExit("no definitions in input")
    if name is None:
        if len(db.functions) == 1:
            return next(iter(db.functions.values()))
        names = ", ".join(db.functions)
        raise SystemExit(f"several definitions ({names}); pick one with --fun")
    if name not in db.functions:
        raise SystemExit(f"no definition named {name}")
    return db.functions[name]


# ---------------------------------------------------------------------------
# domains and input generators


def _split_top(text: str, sep: str = ",") -> list[str]:
    """Split on `sep` outside parentheses, so constructor terms survive."""
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


def _parse_domain(specs: Optional[Sequence[str]], default: Optional[str]) -> FiniteDomain:
    assignments: dict[str, tuple[Value, ...]] = {}
    for spec in specs or ():
        if "=" not in spec:
            raise SystemExit(f"bad --domain {spec!r}; expected VAR=v1,v2,...")
        var, vals = spec.split("=", 1)
        assignments[var.strip()] = tuple(parse_value(v) for v in _split_top(vals))
    if default is not None:
        carrier = tuple(parse_value(v) for v in _split_top(default))
        return FiniteDomain(assignments, default=carrier)
    return FiniteDomain(assignments)


def _generator(spec: str, rng: random.Random) -> Iterable[Value]:
    kind, _, rest = spec.partition(":")
    if kind == "impulse":
        yield 1
        while True:
            yield 0
    elif kind == "zeros":
        while True:
            yield 0
    elif kind == "const":
        v = parse_value(rest)
        while True:
            yield v
    elif kind == "cycle":
        vals = [parse_value(v) for v in _split_top(rest)]
        if not vals:
            raise SystemExit("cycle: needs at least one value")
        while True:
            yield from vals
    elif kind == "randint":
        try:
            lo, hi = (int(x) for x in _split_top(rest))
        except ValueError:
            raise SystemExit("randint: expected LO,HI") from None
        while True:
            yield rng.randint(lo, hi)
    else:
        raise SystemExit(f"unknown generator {kind!r}")


# ---------------------------------------------------------------------------
# subcommands


def cmd_check(ns) -> int:
    units = []
    for path in ns.files:
        with open(path) as fh:
            units.append(parse(fh.read(), unit=path))
    db, diags = load_with_diagnostics(units)
    for d in diags:
        _emit_diag(d, ns)
    if any(d.severity == "error" for d in diags):
        return 1
    for fd in db.functions.values():
        tag = fd.form_tag if fd.form_tag is not None else "mixed"
        if ns.format == "json":
            print(json.dumps({"schema": "streamcore/1", "fun": fd.name, "form": tag}))
        else:
            print(f"{fd.name}: ok (form {tag})")
    return 0


def cmd_normalize(ns) -> int:
    db = _load(ns)
    fd = _pick_fun(db, ns.fun)
    box = normalize_fun(db, fd.name, copyprop=not ns.no_copyprop)
    if ns.to == 3:
        box = reduce_to_third(box)
    print(show_decl(FunDef(fd.name, box)))
    return 0


def cmd_analyze(ns) -> int:
    db = _load(ns)
    fd = _pick_fun(db, ns.fun)
    dom = _parse_domain(ns.domain, ns.default)
    if not ns.domain and not ns.default:
        # constructors give a natural carrier when none is supplied
        nullary = tuple(
            _term(c.name) for c in db.constructors.values() if c.arity == 0
        )
        if nullary:
            dom = FiniteDomain({}, default=nullary)
    report = analyze_matching(fd, dom)
    if ns.format == "json":
        doc = {
            "schema": "streamcore/1",
            "fun": fd.name,
            "ok": report.ok(),
            "cases": [
                {
                    "label": c.label,
                    "support": list(c.support),
                    "missing": [_valuation_json(m) for m in c.missing],
                    "overlapping": [_valuation_json(m) for m in c.overlapping],
                    "notes": list(c.notes),
                }
                for c in report.cases
            ],
        }
        print(json.dumps(doc))
    else:
        for c in report.cases:
            print(f"{fd.name} {c.label}: support {', '.join(c.support) or '-'}")
            for n in c.notes:
                print(f"  note: {n}")
            for m in c.missing:
                print(f"  missing: {_valuation_text(m)}")
            for m in c.overlapping:
                print(f"  overlapping: {_valuation_text(m)}")
            if not c.missing and not c.overlapping and not c.notes:
                print("  total and disjoint")
    return 0 if report.ok() else 1


def _term(name: str):
    from .values import Term

    return Term(name)


def _valuation_json(m: dict[str, Value]) -> dict:
    return {k: value_to_json(v) for k, v in m.items()}


def _valuation_text(m: dict[str, Value]) -> str:
    return ", ".join(f"{k}={show_value(v)}" for k, v in m.items())


def cmd_run(ns) -> int:
    db = _load(ns)
    fd = _pick_fun(db, ns.fun)
    m = compile_machine(db, fd.name)
    face = m.face
    specs = ns.input or []
    if len(specs) != len(face.inputs):
        raise SystemExit(
            f"{fd.name} has {len(face.inputs)} input wire(s) "
            f"({', '.join(face.inputs)}); pass one --input per wire"
        )
    rng = random.Random(ns.seed)
    gens = [_generator(s, rng) for s in specs]
    inputs = [tuple(next(g) for g in gens) for _ in range(ns.steps)]
    if ns.unroll > 1:
        trace = m.run_unrolled(ns.unroll, inputs)
    else:
        trace = m.run(inputs)
    if ns.out == "jsonl":
        trace.write_jsonl(sys.stdout, trace_state=ns.trace_state)
    else:
        trace.write_csv(sys.stdout, trace_state=ns.trace_state)
    return 0


def cmd_relations(ns) -> int:
    db = _load(ns)
    fd = _pick_fun(db, ns.fun)
    box = normalize_fun(db, fd.name)
    dom = _parse_domain(ns.domain, ns.default)
    r = enumerate_relation(box, dom, bound=ns.bound)
    if ns.mode in ("external", "deterministic"):
        r = externalize(r)
    if ns.mode == "deterministic":
        r = restrict_deterministic(
            r, AcceptableStateSpace(all_defined, "defined states")
        )
    for note in r.notes:
        print(f"note: {note}", file=sys.stderr)
    for s, a, b, s2 in r.rows:
        print(
            json.dumps(
                {
                    "s": [value_to_json(v) for v in s],
                    "x": [value_to_json(v) for v in a],
                    "y": [value_to_json(v) for v in b],
                    "s_": [value_to_json(v) for v in s2],
                }
            )
        )
    return 0


def cmd_graph(ns) -> int:
    db = _load(ns)
    fd = _pick_fun(db, ns.fun)
    box = normalize_fun(db, fd.name)
    order = causality_check(box).assignments
    controls = set()
    for a in order:
        if isinstance(a.rhs, Apply) and isinstance(a.rhs.op, ConsInvRef):
            controls.add(a.targets[-1])
    lines = [f"digraph {fd.name} {{", "  rankdir=LR;"]
    face = box.face

    def vnode(v: str) -> str:
        return f'"{v}"'

    for v in face.inputs:
        lines.append(f"  {vnode(v)} [shape=rarrow];")
    for v in face.outputs:
        lines.append(f"  {vnode(v)} [shape=doublecircle];")
    for v in face.pre_state + face.post_state:
        lines.append(f"  {vnode(v)} [shape=diamond];")
    for v in controls:
        lines.append(f"  {vnode(v)} [shape=circle, style=dashed];")
    for i, a in enumerate(order):
        from .ast import op_display

        if isinstance(a.rhs, Apply):
            label = op_display(a.rhs.op)
            args = [x for x in flatten_comma(a.rhs.arg) if isinstance(x, Var)]
        else:
            label = ":="
            args = [a.rhs] if isinstance(a.rhs, Var) else []
        op = f'op{i}'
        lines.append(f'  {op} [shape=box, label="{label}"];')
        is_gamma = isinstance(a.rhs, Apply) and isinstance(a.rhs.op, GammaOp)
        for j, x in enumerate(args):
            dashed = (is_gamma and j > 0) or x.name in controls
            style = " [style=dashed]" if dashed else ""
            lines.append(f"  {vnode(x.name)} -> {op}{style};")
        for t in a.targets:
            style = " [style=dashed]" if t in controls else ""
            lines.append(f"  {op} -> {vnode(t)}{style};")
    lines.append("}")
    print("\n".join(lines))
    return 0


# ---------------------------------------------------------------------------


def build_arg_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="streamcore", description="stream program toolkit"
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, domain=False):
        sp.add_argument("files", nargs="+", help="source files")
        sp.add_argument("--fun", help="definition to use (default: the only one)")
        sp.add_argument("--format", choices=("text", "json"), default="text")
        if domain:
            sp.add_argument(
                "--domain",
                action="append",
                metavar="VAR=v1,v2,...",
                help="finite carrier for one variable (repeatable)",
            )
            sp.add_argument(
                "--default",
                metavar="v1,v2,...",
                help="carrier for variables without their own --domain",
            )

    sp = sub.add_parser("check", help="parse and report diagnostics")
    sp.add_argument("files", nargs="+")
    sp.add_argument("--format", choices=("text", "json"), default="text")
    sp.set_defaults(handler=cmd_check)

    sp = sub.add_parser("normalize", help="print the flat form of a definition")
    common(sp)
    sp.add_argument("--to", type=int, choices=(2, 3), default=2)
    sp.add_argument("--no-copyprop", action="store_true")
    sp.set_defaults(handler=cmd_normalize)

    sp = sub.add_parser("analyze", help="report missing/overlapping case branches")
    common(sp, domain=True)
    sp.set_defaults(handler=cmd_analyze)

    sp = sub.add_parser("run", help="execute a definition over generated inputs")
    common(sp)
    sp.add_argument("--steps", type=int, default=16)
    sp.add_argument(
        "--input",
        action="append",
        metavar="GEN",
        help="impulse | zeros | const:V | cycle:v1,v2,... | randint:LO,HI "
        "(one per input wire)",
    )
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", choices=("csv", "jsonl"), default="csv")
    sp.add_argument("--trace-state", action="store_true")
    sp.add_argument("--unroll", type=int, default=1, metavar="N",
                    help="run through the N-step unrolled relation")
    sp.set_defaults(handler=cmd_run)

    sp = sub.add_parser("relations", help="enumerate the step relation")
    common(sp, domain=True)
    sp.add_argument(
        "--mode",
        choices=("internal", "external", "deterministic"),
        default="external",
    )
    sp.add_argument("--bound", type=int, default=10**7)
    sp.set_defaults(handler=cmd_relations)

    sp = sub.add_parser("graph", help="emit a DOT wiring diagram")
    common(sp)
    sp.set_defaults(handler=cmd_graph)

    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    ns = build_arg_parser().parse_args(argv)
    try:
        return ns.handler(ns)
    except LoadError as e:
        for d in e.diagnostics:
            _emit_diag(d, ns)
        return 1
    except (CausalityError, DeterminismError, DomainTooLarge, ShapeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
