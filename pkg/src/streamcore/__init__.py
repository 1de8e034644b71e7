"""Toolkit for a small stream-programming calculus.

Programs are written as functional definitions over streams, translated to
flat dataflow boxes, read as step relations over a finite carrier, and run
as deterministic machines.
"""

__version__ = "0.1.0"

from .ast import (
    BoxAbs,
    Face,
    FunDef,
    Lambda,
    ProgramDB,
    Shape,
)
from .checks import (
    SanityViolation,
    ShapeError,
    ShapeTable,
    check_sanity,
    check_shape,
    classify_form,
)
from .logic import (
    ClauseSet,
    MatchReport,
    analyze_matching,
    reduce_to_third,
    satisfy,
    to_clause_set,
)
from .machine import (
    MachineProgram,
    NondeterminismTrap,
    Trace,
    UndefinedOutputTrap,
    compile_machine,
)
from .normalize import (
    CausalityError,
    causality_check,
    copy_propagate,
    normalize_fun,
    normalize_program,
)
from .parser import (
    Diagnostic,
    LoadError,
    ParseError,
    load,
    load_paths,
    load_text,
    parse,
)
from .pretty import show_abs, show_decl, show_program
from .relsem import (
    AcceptableStateSpace,
    DeterminismError,
    DomainTooLarge,
    FiniteDomain,
    StepRelation,
    compose_io,
    compose_parallel,
    compose_state,
    enumerate_relation,
    externalize,
    i_relation,
    j_relation,
    k_relation,
    restrict_deterministic,
    run_relation,
    unroll,
)
from .values import BOT, UNIT, Term, Value, parse_value, show_value

__all__ = [
    "__version__",
    "BOT", "UNIT", "Term", "Value", "parse_value", "show_value",
    "BoxAbs", "Face", "FunDef", "Lambda", "ProgramDB", "Shape",
    "SanityViolation", "ShapeError", "ShapeTable",
    "check_sanity", "check_shape", "classify_form",
    "ClauseSet", "MatchReport", "analyze_matching", "reduce_to_third",
    "satisfy", "to_clause_set",
    "MachineProgram", "NondeterminismTrap", "Trace", "UndefinedOutputTrap",
    "compile_machine",
    "CausalityError", "causality_check", "copy_propagate",
    "normalize_fun", "normalize_program",
    "Diagnostic", "LoadError", "ParseError",
    "load", "load_paths", "load_text", "parse",
    "show_abs", "show_decl", "show_program",
    "AcceptableStateSpace", "DeterminismError", "DomainTooLarge",
    "FiniteDomain", "StepRelation",
    "compose_io", "compose_parallel", "compose_state",
    "enumerate_relation", "externalize",
    "i_relation", "j_relation", "k_relation",
    "restrict_deterministic", "run_relation", "unroll",
]
