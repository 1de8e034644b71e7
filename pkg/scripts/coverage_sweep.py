"""Branch-coverage report for every case site in the bundled programs.

For each function with case sites, enumerates the scrutinee's carrier and
reports valuations no branch accepts (holes) and valuations several branches
accept (races).  A deliberately broken sampler is included so both kinds of
finding show up in the output.
"""

import argparse

from streamcore.corpus import load_corpus
from streamcore.logic import analyze_matching
from streamcore.parser import load_text
from streamcore.relsem import FiniteDomain
from streamcore.values import Term

BROKEN = """
cons S / 0
cons H / 0
fun leaky = [ x, t -> y where
  y := case t of { S() -> x } ]
fun racy = [ x, t -> y where
  y := case t of { S() -> x | S() -> 0 | H() -> delta[0](y) } ]
"""


def show(report):
    verdict = "ok" if report.ok() else "PROBLEMS"
    print(f"{report.fun}: {len(report.cases)} case site(s) -- {verdict}")
    for case in report.cases:
        print(f"  {case.label}: {len(case.support)} scrutinee column(s)")
        for m in case.missing:
            vals = ", ".join(f"{k}={v}" for k, v in sorted(m.items()))
            print(f"    hole: no branch accepts {vals or 'any valuation'}")
        for m in case.overlapping:
            vals = ", ".join(f"{k}={v}" for k, v in sorted(m.items()))
            print(f"    race: several branches accept {vals or 'every valuation'}")
        for note in case.notes:
            print(f"    note: {note}")


def main():
    argparse.ArgumentParser(description=__doc__).parse_args()

    db = load_corpus()
    tokens = FiniteDomain(
        {
            "t": (Term("S"), Term("H")),
            "gate": (Term("T"), Term("F")),
            "st": tuple(Term(c) for c in ("Attack", "Decay", "Sustain", "Release")),
        },
        default=(0, 1),
    )
    for name in ("sah", "adsr"):
        show(analyze_matching(db.functions[name], tokens))
        print()

    print("-- deliberately broken variants " + "-" * 35)
    broken = load_text(BROKEN)
    for name in ("leaky", "racy"):
        show(analyze_matching(broken.functions[name], tokens))
        print()


if __name__ == "__main__":
    main()
