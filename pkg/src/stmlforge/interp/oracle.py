"""Reference execution and randomized semantic-equivalence checking."""

from __future__ import annotations

import math
import random
from array import array
from dataclasses import dataclass, field
from typing import Optional

from ..csyntax import Binary, Ident, IntLit, Program, Unary, walk
from ..errors import InterpError
from .bytecode import compile_program

from . import _vmpy

try:
    from . import _vmcore
except ImportError:  # pragma: no cover - build-dependent
    _vmcore = None

_active_backend = "cython" if _vmcore is not None else "python"


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _vmcore is not None else [])


def backend_name() -> str:
    return _active_backend


def set_backend(name: str) -> None:
    global _active_backend
    if name not in available_backends():
        raise ValueError(f"backend {name!r} not available (have {available_backends()})")
    _active_backend = name


def _stepper(backend: Optional[str]):
    name = backend or _active_backend
    if name == "python":
        return _vmpy
    if name == "cython" and _vmcore is not None:
        return _vmcore
    raise ValueError(f"backend {name!r} not available")


@dataclass
class Env:
    """Interpreter environment: scalar and array bindings plus, after a run,
    the ordered access trace."""

    scalars: dict[str, float] = field(default_factory=dict)
    arrays: dict[str, list[float]] = field(default_factory=dict)
    trace: list = field(default_factory=list)


def _eval_extent(expr, scalars: dict[str, float]) -> int:
    if isinstance(expr, IntLit):
        return expr.value
    if isinstance(expr, Ident):
        if expr.name not in scalars:
            raise InterpError(
                "unbound-variable", f"array extent symbol {expr.name!r} is not bound"
            )
        return int(scalars[expr.name])
    if isinstance(expr, Binary):
        left = _eval_extent(expr.left, scalars)
        right = _eval_extent(expr.right, scalars)
        if expr.op == "+":
            return left + right
        if expr.op == "-":
            return left - right
        if expr.op == "*":
            return left * right
        if expr.op == "/":
            return int(left / right)
    if isinstance(expr, Unary) and expr.op == "-":
        return -_eval_extent(expr.operand, scalars)
    raise InterpError("unsupported", "array extent must be an integer expression")


def run(
    program: Program,
    env: Env,
    entry: Optional[str] = None,
    trace: bool = False,
    backend: Optional[str] = None,
    fuel: int = 500_000_000,
) -> Env:
    """Execute the program (top-level statements, or a zero-argument entry
    function) on a copy of env; returns the final environment with trace.
    `fuel` bounds the instruction count so runaway loops abort."""
    code = compile_program(program)
    gvals = array("d", [0.0] * len(code.global_names))
    ginit = bytearray(len(code.global_names))
    for i, name in enumerate(code.global_names):
        if name in env.scalars:
            gvals[i] = float(env.scalars[name])
            ginit[i] = 1

    scalar_view = {n: gvals[i] for i, n in enumerate(code.global_names) if ginit[i]}
    lengths = []
    for i, name in enumerate(code.array_names):
        if name in env.arrays:
            lengths.append(len(env.arrays[name]))
        else:
            lengths.append(_eval_extent(code.array_extents[i], scalar_view))
    abase = array("i", [0] * len(lengths))
    total = 0
    for i, n in enumerate(lengths):
        if n < 0:
            raise InterpError("out-of-bounds", f"array {code.array_names[i]!r} has negative extent")
        abase[i] = total
        total += n
    abuf = array("d", [0.0] * total)
    for i, name in enumerate(code.array_names):
        if name in env.arrays:
            src = env.arrays[name]
            abuf[abase[i] : abase[i] + lengths[i]] = array("d", [float(x) for x in src])
    asize = array("i", lengths)

    if entry is None:
        entry_idx = -1
    else:
        if entry not in code.func_index:
            raise InterpError("unbound-variable", f"no function named {entry!r}")
        entry_idx = code.func_index[entry]
        fc = code.funcs[entry_idx]
        if fc.n_scalar_params or any(s == "l" for s, _ in fc.arr_descs):
            raise InterpError("unsupported", "entry function must take no parameters")

    trace_list: Optional[list] = [] if trace else None
    _stepper(backend).run_module(
        code, gvals, ginit, abuf, abase, asize, trace_list, entry_idx, fuel
    )

    out = Env()
    for i, name in enumerate(code.global_names):
        if ginit[i]:
            out.scalars[name] = gvals[i]
    for i, name in enumerate(code.array_names):
        out.arrays[name] = list(abuf[abase[i] : abase[i] + asize[i]])
    out.trace = trace_list or []
    return out


# ---------------------------------------------------------------------------
# Random environments and equivalence


def _extent_symbols(programs: list[Program]) -> set[str]:
    syms = set()
    for p in programs:
        code = compile_program(p)
        for extent in code.array_extents:
            for node in walk(extent):
                if isinstance(node, Ident):
                    syms.add(node.name)
    return syms


def make_env(programs: list[Program], rng: random.Random, length_range=(2, 8)) -> Env:
    """One random environment covering every free name of the given
    programs. Integer scalars draw from [-100, 100], floats from [-1, 1];
    array lengths come from the declared extents, with symbolic extent names
    bound to the drawn sizes."""
    env = Env()
    codes = [compile_program(p) for p in programs]
    for sym in sorted(_extent_symbols(programs)):
        env.scalars[sym] = float(rng.randint(*length_range))
    for code in codes:
        for i, name in enumerate(code.global_names):
            if name in env.scalars:
                continue
            if code.global_types[i] == "int":
                env.scalars[name] = float(rng.randint(-100, 100))
            else:
                env.scalars[name] = rng.uniform(-1.0, 1.0)
    for code in codes:
        for i, name in enumerate(code.array_names):
            if name in env.arrays:
                continue
            n = _eval_extent(code.array_extents[i], env.scalars)
            if code.array_types[i] == "int":
                env.arrays[name] = [float(rng.randint(-100, 100)) for _ in range(n)]
            else:
                env.arrays[name] = [rng.uniform(-1.0, 1.0) for _ in range(n)]
    return env


def _is_int_program(programs: list[Program]) -> bool:
    for p in programs:
        code = compile_program(p)
        if any(t != "int" for t in code.global_types):
            return False
        if any(t != "int" for t in code.array_types):
            return False
    return True


@dataclass
class Counterexample:
    trial: int
    env: Env
    name: str
    index: Optional[int]
    got_left: object
    got_right: object


@dataclass
class EquivalenceReport:
    passed: bool
    trials: int
    counterexample: Optional[Counterexample] = None

    def __bool__(self):
        return self.passed


def _values_match(a: float, b: float, exact: bool) -> bool:
    if exact:
        return a == b
    return math.isclose(a, b, rel_tol=1e-6, abs_tol=1e-9)


def equivalent(
    p1: Program,
    p2: Program,
    trials: int = 100,
    seed: int = 0,
    entry: Optional[str] = None,
    backend: Optional[str] = None,
) -> EquivalenceReport:
    """Randomized behavioral comparison: exact for integer programs,
    1e-6 relative tolerance per element otherwise. Shared names are
    compared; fresh temporaries introduced by a rewrite are ignored."""
    rng = random.Random(seed)
    exact = _is_int_program([p1, p2])
    for t in range(trials):
        env = make_env([p1, p2], rng)
        outcome = []
        for p in (p1, p2):
            try:
                outcome.append(run(p, env, entry=entry, backend=backend))
            except InterpError as exc:
                outcome.append(exc)
        left, right = outcome
        if isinstance(left, InterpError) or isinstance(right, InterpError):
            lk = left.kind if isinstance(left, InterpError) else None
            rk = right.kind if isinstance(right, InterpError) else None
            if lk == rk:
                continue  # both abort identically: observationally equal
            return EquivalenceReport(False, t + 1, Counterexample(t, env, "<abort>", None, lk, rk))
        for name in sorted(set(left.scalars) & set(right.scalars)):
            if not _values_match(left.scalars[name], right.scalars[name], exact):
                return EquivalenceReport(
                    False, t + 1,
                    Counterexample(t, env, name, None, left.scalars[name], right.scalars[name]),
                )
        for name in sorted(set(left.arrays) & set(right.arrays)):
            la, ra = left.arrays[name], right.arrays[name]
            if len(la) != len(ra):
                return EquivalenceReport(
                    False, t + 1, Counterexample(t, env, name, None, len(la), len(ra))
                )
            for i, (x, y) in enumerate(zip(la, ra)):
                if not _values_match(x, y, exact):
                    return EquivalenceReport(
                        False, t + 1, Counterexample(t, env, name, i, x, y)
                    )
    return EquivalenceReport(True, trials)
