"""Worked examples shipped with the package.

Three small stream programs (sample-and-hold, an ARMA filter, an envelope
follower), their sources as data files, straight-line reference
implementations to check the compiled machines against, and a builder that
compiles each machine together with a determinism certificate.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Callable, Sequence

from ..ast import ProgramDB
from ..logic import analyze_matching
from ..machine import MachineProgram, compile_machine
from ..normalize import normalize_fun
from ..parser import load_paths, load_text, parse
from ..relsem import (
    AcceptableStateSpace,
    FiniteDomain,
    enumerate_relation,
    externalize,
    restrict_deterministic,
)
from ..values import BOT, Term, Value, all_defined

SOURCES = ("sah.sc", "arma.sc", "adsr.sc")


def corpus_sources() -> dict[str, str]:
    root = resources.files(__package__)
    return {name: (root / name).read_text() for name in SOURCES}


def load_corpus() -> ProgramDB:
    from ..parser import load

    units = [parse(text, unit=name) for name, text in corpus_sources().items()]
    return load(units)


# ---------------------------------------------------------------------------
# reference implementations (straight-line, no shared code with the machines)


def oracle_sah(pairs: Sequence[tuple[float, str]], s0: float = 0) -> list[float]:
    """pairs are (value, "S" | "H")."""
    out = []
    held = s0
    for x, tok in pairs:
        y = x if tok == "S" else held
        out.append(y)
        held = y
    return out


ARMA_AR = (0.4, 0.3, 0.2, -0.1)
ARMA_MA = (0.3, 0.2, -0.1)


def oracle_arma(xs: Sequence[float]) -> list[float]:
    ys: list[float] = []
    for t, x in enumerate(xs):
        y = float(x)
        for n, p in enumerate(ARMA_AR, start=1):
            if t - n >= 0:
                y += p * ys[t - n]
        for n, q in enumerate(ARMA_MA, start=1):
            if t - n >= 0:
                y += q * xs[t - n]
        ys.append(y)
    return ys


def oracle_adsr(gates: Sequence[bool]) -> list[float]:
    """Emitted level per step; the output trails the internal level by one."""
    level = 0.0
    phase = "release"
    out: list[float] = []
    for gate in gates:
        out.append(level)
        if gate:
            phase = "attack" if phase == "release" else phase
        else:
            phase = "release"
        if phase == "attack":
            y = min(level + 0.5, 1.0)
        elif phase == "decay":
            y = max(level - 0.25, 0.5)
        elif phase == "sustain":
            y = level
        else:
            y = max(level - 0.25, 0.0)
        if phase == "attack" and y >= 1.0:
            phase = "decay"
        elif phase == "decay" and 0.5 >= y:
            phase = "sustain"
        level = y
    return out


# ---------------------------------------------------------------------------
# input encodings


def encode_sah(pairs: Sequence[tuple[float, str]]) -> list[tuple[Value, Value]]:
    return [(x, Term(tok)) for x, tok in pairs]


def encode_gates(gates: Sequence[bool]) -> list[tuple[Value]]:
    return [(Term("T") if g else Term("F"),) for g in gates]


# ---------------------------------------------------------------------------
# certified machines


@dataclass(frozen=True)
class CorpusEntry:
    machine: MachineProgram
    oracle: Callable
    encode: Callable


def _certify_sah(db: ProgramDB) -> str:
    box = normalize_fun(db, "sah")
    dom = FiniteDomain(
        {"t": (Term("S"), Term("H"), BOT)}, default=(0, 1, BOT)
    )
    det = restrict_deterministic(
        externalize(enumerate_relation(box, dom)),
        AcceptableStateSpace(lambda s: all_defined(s), "defined states"),
    )
    return f"enumerated: single-valued on {len(det.rows)} reachable rows"


def _certify_adsr(db: ProgramDB) -> str:
    levels = tuple(k * 0.25 for k in range(5))
    phases = tuple(Term(c) for c in ("Attack", "Decay", "Sustain", "Release"))
    dom = FiniteDomain(
        {
            "gate": (Term("T"), Term("F")),
            "st": phases,
            "out": levels,
        }
    )
    report = analyze_matching(db.functions["adsr"], dom)
    if not report.ok():
        raise ValueError(f"adsr branch analysis failed: {report}")
    sites = len(report.cases)
    return f"match-analysis: {sites} case sites total and disjoint"


def build_corpus() -> dict[str, CorpusEntry]:
    db = load_corpus()
    sah = compile_machine(db, "sah", certificate=_certify_sah(db))
    arma = compile_machine(db, "arma")  # no merges survive: certified phi-free
    adsr = compile_machine(db, "adsr", certificate=_certify_adsr(db))
    return {
        "sah": CorpusEntry(sah, oracle_sah, encode_sah),
        "arma": CorpusEntry(arma, oracle_arma, lambda xs: [(x,) for x in xs]),
        "adsr": CorpusEntry(adsr, oracle_adsr, encode_gates),
    }
