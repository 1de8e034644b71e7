import csv
import io
import json

import pytest

from streamcore.ast import Apply, FunRef
from streamcore.machine import (
    MachineProgram,
    NondeterminismTrap,
    Trace,
    UndefinedOutputTrap,
    compile_machine,
)
from streamcore.parser import load_text
from streamcore.relsem import run_relation
from streamcore.values import BOT, Term

S, H = Term("S"), Term("H")


# -- stepping -------------------------------------------------------------------


def test_select_and_hold_step_table(corpus):
    m = corpus["sah"].machine
    assert m.step((0,), (1, S)) == ((1,), (1,))
    assert m.step((1,), (2, H)) == ((1,), (1,))
    assert m.step((1,), (3, H)) == ((1,), (1,))
    assert m.step((1,), (4, S)) == ((4,), (4,))


def test_step_validates_widths(corpus):
    m = corpus["sah"].machine
    with pytest.raises(ValueError):
        m.step((0, 0), (1, S))
    with pytest.raises(ValueError):
        m.step((0,), (1,))


def test_step_rejects_undefined_inputs(corpus):
    m = corpus["sah"].machine
    with pytest.raises(ValueError):
        m.step((0,), (BOT, S))
    with pytest.raises(ValueError):
        m.step((BOT,), (1, S))


def test_runtime_merge_conflict_is_trapped():
    src = """
fun fork = [ x -> y where
  exists a, b ( a := x /\\ b := 1 /\\ y := phi(a, b) ) ]
"""
    m = compile_machine(load_text(src), "fork")
    with pytest.raises(NondeterminismTrap) as err:
        m.step((), (0,))
    assert "merge into y" in str(err.value)
    # agreeing branches are fine
    assert m.step((), (1,)) == ((1,), ())


def test_undefined_output_is_trapped():
    src = """
cons S / 0
fun g = [ x, t -> y where
  exists c ( c := ~S(t) /\\ y := gamma(x, c) ) ]
"""
    m = compile_machine(load_text(src), "g")
    assert m.step((), (5, S)) == ((5,), ())
    with pytest.raises(UndefinedOutputTrap):
        m.step((), (5, Term("Q")))


# -- running --------------------------------------------------------------------


def test_running_the_select_hold_stream(corpus):
    m = corpus["sah"].machine
    trace = m.run([(1, S), (2, H), (3, H), (4, S)])
    assert [y for (y,) in trace.outputs] == [1, 1, 1, 4]
    assert trace.states == [(1,), (1,), (1,), (4,)]
    assert trace.initial_state == (0,)
    assert len(trace.inputs) == 4


def test_run_accepts_an_explicit_start_state(corpus):
    m = corpus["sah"].machine
    trace = m.run([(7, H)], state=(9,))
    assert trace.outputs == [(9,)]


def test_impulse_response_prefix(corpus):
    entry = corpus["arma"]
    trace = entry.machine.run(entry.encode([1.0] + [0.0] * 7))
    got = [y for (y,) in trace.outputs]
    want = [1.0, 0.7, 0.78, 0.622, 0.5228, 0.48172, 0.395928, 0.3452472]
    assert got == pytest.approx(want, abs=1e-12)


def test_envelope_follows_the_gate(corpus):
    entry = corpus["adsr"]
    trace = entry.machine.run(entry.encode([True] * 4 + [False] * 4))
    got = [y for (y,) in trace.outputs]
    assert got == [0.0, 0.5, 1.0, 0.75, 0.5, 0.25, 0.0, 0.0]


def test_machines_match_their_reference_implementations(corpus):
    probes = {
        "sah": [(3, "S"), (1, "H"), (4, "S"), (1, "H"), (5, "H")],
        "arma": [0.5, -1.0, 2.0, 0.0, 0.25, -0.125],
        "adsr": [True, True, True, False, True, False, False, False],
    }
    for name, entry in corpus.items():
        xs = probes[name]
        got = [y for (y,) in entry.machine.run(entry.encode(xs)).outputs]
        assert got == pytest.approx(entry.oracle(xs), abs=1e-12), name


# -- block execution -------------------------------------------------------------


def test_blocked_run_equals_plain_run(corpus):
    entry = corpus["arma"]
    xs = entry.encode([1.0] + [0.0] * 6)  # 7 steps: not a multiple of 2 or 5
    plain = entry.machine.run(xs)
    for n in (1, 2, 5):
        blocked = entry.machine.run_unrolled(n, xs)
        assert blocked.outputs == plain.outputs
        assert blocked.states == plain.states


def test_blocked_run_rejects_silly_block_sizes(corpus):
    with pytest.raises(ValueError):
        corpus["sah"].machine.run_unrolled(0, [(1, S)])


def test_machine_as_relation_runs_identically(corpus):
    m = corpus["sah"].machine
    stream = [(1, S), (2, H), (4, S)]
    outs, states = run_relation(m.as_relation(), m.initial_state, stream)
    trace = m.run(stream)
    assert outs == trace.outputs
    assert states == trace.states


# -- compilation -----------------------------------------------------------------


def test_calls_are_inlined_into_straight_line_code():
    src = """
prim add 2 -> 1
fun inc = [ x -> y where y := add(x, 1) ]
fun twice = [ a -> b where b := inc(inc(a)) ]
"""
    m = compile_machine(load_text(src), "twice")
    assert all(not (isinstance(a.rhs, Apply) and isinstance(a.rhs.op, FunRef)) for a in m.assignments)
    assert m.step((), (5,)) == ((7,), ())


def test_inlining_a_stateful_callee():
    src = """
fun delay = [ x -> y where y := delta[3](x) ]
fun outer = [ a -> b where b := delay(a) ]
"""
    m = compile_machine(load_text(src), "outer")
    assert m.initial_state == (3,)
    trace = m.run([(10,), (20,), (30,)])
    assert [y for (y,) in trace.outputs] == [3, 10, 20]


def test_inlining_a_callee_that_feeds_two_result_slots():
    # the callee's single variable is both its output and its next state,
    # so the call result needs a duplicated wire
    src = """
cons S / 0
cons H / 0
fun sah = [ x, t -> y where
  y := case t of { S() -> x | H() -> delta[0](y) } ]
fun wrap = [ a, t -> b where b := sah(a, t) ]
"""
    db = load_text(src)
    wrap = compile_machine(db, "wrap")
    sah = compile_machine(db, "sah")
    stream = [(1, S), (2, H), (3, S), (4, H)]
    assert wrap.run(stream).outputs == sah.run(stream).outputs


def test_certificates_name_the_reason(corpus):
    assert corpus["sah"].machine.det_certificate.startswith("enumerated: single-valued")
    assert corpus["arma"].machine.det_certificate == "phi-free"
    assert corpus["adsr"].machine.det_certificate.startswith("match-analysis:")


def test_a_merge_free_machine_is_certified_statically():
    m = compile_machine(load_text("fun id = [ x -> y where y := x ]"), "id")
    assert m.det_certificate == "phi-free"


# -- traces ----------------------------------------------------------------------


def test_csv_trace_round_trips(corpus):
    m = corpus["sah"].machine
    trace = m.run([(1, S), (2, H)])
    buf = io.StringIO()
    trace.write_csv(buf, trace_state=True)
    rows = list(csv.reader(io.StringIO(buf.getvalue())))
    assert rows[0] == ["step", "in:x", "in:t", "out:y", "state:y"]
    assert rows[1] == ["0", "1", "S()", "1", "1"]
    assert rows[2] == ["1", "2", "H()", "1", "1"]


def test_jsonl_trace_is_one_record_per_step(corpus):
    m = corpus["sah"].machine
    trace = m.run([(1, S), (2, H)])
    buf = io.StringIO()
    trace.write_jsonl(buf)
    recs = [json.loads(line) for line in buf.getvalue().splitlines()]
    assert len(recs) == 2
    assert recs[0]["step"] == 0
    assert recs[0]["out"] == {"y": 1}
    assert recs[1]["in"]["t"] == {"cons": "H", "args": []}
    assert "state" not in recs[0]
