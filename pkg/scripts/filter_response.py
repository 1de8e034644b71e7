"""Impulse and step responses of the bundled order-(4,3) filter.

Runs the corpus filter machine on a unit impulse and a unit step and prints
both responses side by side, with a crude terminal bar for the impulse so
the decay is visible at a glance.  Use --csv to get the raw columns instead.
"""

import argparse

from streamcore.corpus import build_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=24)
    ap.add_argument("--csv", action="store_true", help="emit step,impulse,step_response")
    args = ap.parse_args()

    entry = build_corpus()["arma"]
    n = args.steps
    impulse = [y for (y,) in entry.machine.run(entry.encode([1.0] + [0.0] * (n - 1))).outputs]
    step = [y for (y,) in entry.machine.run(entry.encode([1.0] * n)).outputs]

    if args.csv:
        print("step,impulse,step_response")
        for k, (a, b) in enumerate(zip(impulse, step)):
            print(f"{k},{a!r},{b!r}")
        return

    top = max(abs(y) for y in impulse)
    print(f"{'k':>3}  {'impulse':>12}  {'step':>12}")
    for k, (a, b) in enumerate(zip(impulse, step)):
        bar = "#" * round(28 * abs(a) / top)
        print(f"{k:>3}  {a:>12.6f}  {b:>12.6f}  {bar}")
    print(f"\nsteady state of the step response: {step[-1]:.6f}")


if __name__ == "__main__":
    main()
