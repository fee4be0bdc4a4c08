"""Reference interpreter: runs, traces, equivalence, backend parity."""

import random

import pytest

from stmlforge.cparse import parse
from stmlforge.errors import InterpError
from stmlforge.interp import (
    Env,
    available_backends,
    equivalent,
    make_env,
    run,
)

TWO_LOOPS = """\
float c[N], v[N], a, b;
int i;
for (i = 0; i < N; i++) {
    c[i] = a * v[i];
}
for (i = 0; i < N; i++) {
    c[i] += b * v[i];
}
"""

HOISTED = """\
float c[N], v[N], a, b, k;
int i;
k = a + b;
for (i = 0; i < N; i++) {
    c[i] = k * v[i];
}
"""


def fig_env():
    return Env(scalars={"N": 3, "a": 2, "b": 3}, arrays={"v": [1, 2, 3]})


class TestRun:
    def test_two_loop_form_scales_and_accumulates(self):
        out = run(parse(TWO_LOOPS), fig_env())
        assert out.arrays["c"] == [5.0, 10.0, 15.0]

    def test_hoisted_form_same_function(self):
        out = run(parse(HOISTED), fig_env())
        assert out.arrays["c"] == [5.0, 10.0, 15.0]

    def test_empty_body_keeps_input(self):
        out = run(parse(""), Env(scalars={"x": 4.0}))
        assert out.scalars == {}
        assert out.arrays == {}

    def test_out_of_bounds_aborts_distinguishably(self):
        src = "int v[4], i;\nfor (i = 0; i <= 4; i++) { v[i] = 0; }\n"
        with pytest.raises(InterpError) as exc:
            run(parse(src), Env())
        assert exc.value.kind == "out-of-bounds"

    def test_unbound_scalar_read(self):
        with pytest.raises(InterpError) as exc:
            run(parse("int a, b;\na = b + 1;\n"), Env())
        assert exc.value.kind == "unbound-variable"

    def test_division_semantics(self):
        out = run(parse("int a, b, q;\nfloat x, y, z;\nq = a / b;\nz = x / y;\n"),
                  Env(scalars={"a": 7, "b": 2, "x": 7.0, "y": 2.0}))
        assert out.scalars["q"] == 3.0
        assert out.scalars["z"] == 3.5

    def test_negative_trunc_division(self):
        out = run(parse("int a, b, q, r;\nq = a / b;\nr = a % b;\n"),
                  Env(scalars={"a": -7, "b": 2}))
        assert out.scalars["q"] == -3.0  # C truncates toward zero
        assert out.scalars["r"] == -1.0

    def test_if_else_and_logic(self):
        src = """\
int v[4], c[4], i;
for (i = 0; i < 4; i++) {
    if (v[i] > 0 && v[i] != 3) {
        c[i] = 1;
    } else {
        c[i] = 0;
    }
}
"""
        out = run(parse(src), Env(arrays={"v": [5, -2, 3, 1]}))
        assert out.arrays["c"] == [1.0, 0.0, 0.0, 1.0]

    def test_function_call_by_value_and_array_ref(self):
        src = """\
float v[4], total;
void bump(float xs[], float d) {
    int i;
    for (i = 0; i < 4; i++) {
        xs[i] = xs[i] + d;
    }
}
total = 0;
bump(v, 1);
total = v[0] + v[1] + v[2] + v[3];
"""
        out = run(parse(src), Env(arrays={"v": [1, 2, 3, 4]}))
        assert out.arrays["v"] == [2.0, 3.0, 4.0, 5.0]
        assert out.scalars["total"] == 14.0

    def test_entry_function(self):
        src = "int r;\nint fill() {\n    r = 42;\n    return 0;\n}\n"
        out = run(parse(src), Env(), entry="fill")
        assert out.scalars["r"] == 42.0

    def test_deterministic(self):
        p = parse(TWO_LOOPS)
        env = fig_env()
        assert run(p, env).arrays == run(p, env).arrays

    @pytest.mark.parametrize("backend", available_backends())
    def test_runaway_loop_exhausts_fuel(self, backend):
        src = "int i, n;\nn = 0;\nfor (i = 0; i < 1; n++) {\n    n = n;\n}\n"
        with pytest.raises(InterpError) as exc:
            run(parse(src), Env(), backend=backend, fuel=10_000)
        assert exc.value.kind == "fuel-exhausted"


class TestTrace:
    def test_trace_records_global_accesses(self):
        out = run(parse("int a, b;\na = 1;\nb = a;\n"), Env(), trace=True)
        assert ("w", "a", None) in out.trace
        assert ("r", "a", None) in out.trace
        assert ("w", "b", None) in out.trace

    def test_trace_records_array_offsets(self, corpus_sources):
        p = parse(corpus_sources["stencil_read.c"])
        out = run(p, Env(scalars={"N": 6}, arrays={"c": [1, 2, 3, 4, 5, 6]}), trace=True)
        offs = {ev[4] for ev in out.trace if ev[0] == "off" and ev[1] == "r" and ev[3] == "c"}
        assert offs == {-1, 0, 1}

    def test_untraced_run_has_empty_trace(self):
        out = run(parse("int a;\na = 1;\n"), Env())
        assert out.trace == []


class TestEquivalence:
    def test_reflexive(self):
        p = parse(TWO_LOOPS)
        assert equivalent(p, p, trials=20, seed=1).passed

    def test_two_loop_form_equals_hoisted_form(self):
        report = equivalent(parse(TWO_LOOPS), parse(HOISTED), trials=100, seed=2)
        assert report.passed and report.trials == 100

    def test_mutant_fails_with_counterexample(self):
        mutant = TWO_LOOPS.replace("c[i] += b * v[i];", "c[i] = a * v[i] - b * v[i];")
        report = equivalent(parse(TWO_LOOPS), parse(mutant), trials=100, seed=3)
        assert not report.passed
        assert report.counterexample is not None
        assert report.counterexample.name == "c"

    def test_integer_programs_compared_exactly(self, corpus_sources):
        p = parse(corpus_sources["int_sum.c"])
        assert equivalent(p, p, trials=10, seed=4).passed

    def test_env_generation_respects_extent_expressions(self, corpus_sources):
        p = parse(corpus_sources["nested.c"])
        env = make_env([p], random.Random(5))
        n, m = int(env.scalars["N"]), int(env.scalars["M"])
        assert len(env.arrays["m"]) == n * m
        run(p, env)  # must not hit bounds errors


@pytest.mark.skipif(len(available_backends()) < 2, reason="compiled core not built")
class TestBackendParity:
    def test_opcode_tables_agree(self):
        import stmlforge.interp._vmcore as core
        from stmlforge.interp import bytecode

        for name, value in core.OPCODE_VALUES.items():
            assert getattr(bytecode, name) == value

    def test_results_and_traces_match(self, corpus_sources):
        for name, src in corpus_sources.items():
            p = parse(src)
            env = make_env([p], random.Random(11))
            results = {}
            for backend in available_backends():
                try:
                    results[backend] = run(p, env, trace=True, backend=backend)
                except InterpError as exc:
                    results[backend] = ("error", exc.kind)
            a, b = results["python"], results["cython"]
            if isinstance(a, tuple) or isinstance(b, tuple):
                assert a == b, name
                continue
            assert a.scalars == b.scalars, name
            assert a.arrays == b.arrays, name
            assert a.trace == b.trace, name
