"""Walk one program through every stage of the toolkit.

Parses the select/hold sampler, flattens it, schedules it, reduces it to
constraint form, enumerates its step relation, and finally runs it as a
machine -- printing each intermediate so the whole pipeline fits on a screen.
"""

import argparse

from streamcore.checks import check_sanity, classify_form
from streamcore.logic import reduce_to_third, to_clause_set
from streamcore.machine import compile_machine
from streamcore.normalize import causality_check, normalize_fun
from streamcore.parser import load_text
from streamcore.pretty import show_abs, show_form
from streamcore.relsem import FiniteDomain, enumerate_relation, externalize
from streamcore.values import BOT, Term

SOURCE = """
cons S / 0
cons H / 0
fun sah = [ x, t -> y where
  y := case t of { S() -> x | H() -> delta[0](y) } ]
"""


def banner(title):
    print(f"\n== {title} " + "=" * max(0, 64 - len(title)))


def main():
    argparse.ArgumentParser(description=__doc__).parse_args()

    banner("source")
    print(SOURCE.strip())
    db = load_text(SOURCE)
    fd = db.functions["sah"]
    print(f"\nsanity: {len(check_sanity(db))} findings, form {classify_form(fd)}")

    banner("flattened (explicit state, guards and merges)")
    box = normalize_fun(db, "sah")
    print(show_abs(box))

    banner("schedule")
    order = causality_check(box)
    for a in order.assignments:
        print(f"  {', '.join(a.targets)}")

    banner("constraint form (no operators, just clauses)")
    third = reduce_to_third(box)
    print(show_form(third.body, indent="  "))
    cs = to_clause_set(third.body)
    print(f"\n{len(cs.clauses)} clauses over {len(cs.binders)} bound variables")

    banner("step relation over x in {0,1}, t in {S,H}")
    dom = FiniteDomain({"t": (Term("S"), Term("H"), BOT)}, default=(0, 1, BOT))
    rel = externalize(enumerate_relation(box, dom))
    face = rel.face
    print("  " + " ".join(face.pre_state) + " | " + " ".join(face.inputs)
          + " -> " + " ".join(face.outputs) + " | " + " ".join(face.post_state))
    for s, a, b, s2 in rel.rows:
        print(f"  {s} | {a} -> {b} | {s2}")

    banner("machine run")
    m = compile_machine(db, "sah")
    stream = [(1, Term("S")), (2, Term("H")), (3, Term("H")), (4, Term("S"))]
    trace = m.run(stream)
    for k, (a, b) in enumerate(zip(stream, trace.outputs)):
        print(f"  step {k}: in={a} out={b}")


if __name__ == "__main__":
    main()
