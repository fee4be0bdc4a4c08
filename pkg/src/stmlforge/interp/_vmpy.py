"""Pure-Python bytecode stepper; the reference semantics for the VM.

The compiled stepper in ``_vmcore`` mirrors this instruction loop exactly.
Both operate on IEEE doubles, so results are bit-identical across backends.
"""

from __future__ import annotations

import math

from ..errors import InterpError
from .bytecode import (
    ADD,
    CALL,
    CALL_DEPTH_LIMIT,
    CONST,
    DUP,
    EQ,
    FDIV,
    GE,
    GT,
    IDIV,
    JMP,
    JZ,
    LDARR,
    LE,
    LOADG,
    LOADL,
    LOOPENTER,
    LOOPEXIT,
    LT,
    MOD,
    MUL,
    NE,
    NEG,
    NOT,
    POP,
    RET,
    STARR,
    STOREG,
    STOREL,
    SUB,
    ModuleCode,
    STACK_LIMIT,
)

BACKEND_NAME = "python"


class Runtime:
    """Mutable global state for one execution.

    Arrays live in one flat double buffer with per-array base/size tables;
    the compiled stepper uses the same layout. `fuel` bounds the total
    instruction count so runaway loops abort instead of hanging.
    """

    __slots__ = ("code", "gvals", "ginit", "abuf", "abase", "asize", "trace", "fuel")

    def __init__(self, code: ModuleCode, gvals, ginit, abuf, abase, asize, trace, fuel):
        self.code = code
        self.gvals = gvals
        self.ginit = ginit
        self.abuf = abuf
        self.abase = abase
        self.asize = asize
        self.trace = trace  # list or None
        self.fuel = fuel


def _read_global(rt: Runtime, slot: int) -> float:
    if not rt.ginit[slot]:
        raise InterpError(
            "unbound-variable", f"variable {rt.code.global_names[slot]!r} read before any value was bound"
        )
    if rt.trace is not None:
        rt.trace.append(("r", rt.code.global_names[slot], None))
    return rt.gvals[slot]


def exec_func(rt: Runtime, fidx: int, scalar_args, arrmap, depth: int) -> float:
    if depth > CALL_DEPTH_LIMIT:
        raise InterpError("call-depth", "call depth limit exceeded")
    code = rt.code
    fc = code.funcs[fidx] if fidx >= 0 else code.toplevel
    ops, args, consts = fc.ops, fc.args, fc.consts
    trace = rt.trace

    locals_ = [0.0] * fc.n_locals
    linit = [False] * fc.n_locals
    for i, v in enumerate(scalar_args):
        locals_[i] = v
        linit[i] = True

    stack = [0.0] * STACK_LIMIT
    sp = 0
    pc = 0
    loop_stack = []

    def arr_storage(didx: int) -> int:
        scope, num = fc.arr_descs[didx]
        return num if scope == "g" else arrmap[num]

    def check_index(storage: int, raw: float) -> int:
        idx = int(raw)
        n = rt.asize[storage]
        if idx < 0 or idx >= n:
            raise InterpError(
                "out-of-bounds",
                f"index {idx} outside {code.array_names[storage]}[0..{n - 1}]",
            )
        return idx

    def record_offsets(mode: str, storage: int, idx: int):
        for meta in loop_stack:
            if not meta.canonical:
                continue
            var = locals_[meta.slot] if meta.scope == "l" else rt.gvals[meta.slot]
            trace.append(("off", mode, meta.node_id, code.array_names[storage], int(idx - var)))

    fuel = rt.fuel
    while True:
        fuel -= 1
        if fuel < 0:
            rt.fuel = 0
            raise InterpError("fuel-exhausted", "instruction budget exceeded (runaway loop?)")
        op = ops[pc]
        arg = args[pc]
        pc += 1
        if op == CONST:
            stack[sp] = consts[arg]
            sp += 1
            if sp >= STACK_LIMIT - 2:
                raise InterpError("stack-overflow", "expression too deep")
        elif op == LOADG:
            stack[sp] = _read_global(rt, arg)
            sp += 1
        elif op == STOREG:
            sp -= 1
            rt.gvals[arg] = stack[sp]
            rt.ginit[arg] = True
            if trace is not None:
                trace.append(("w", code.global_names[arg], None))
        elif op == LOADL:
            if not linit[arg]:
                raise InterpError("unbound-variable", "local read before assignment")
            stack[sp] = locals_[arg]
            sp += 1
        elif op == STOREL:
            sp -= 1
            locals_[arg] = stack[sp]
            linit[arg] = True
        elif op == LDARR:
            storage = arr_storage(arg)
            idx = check_index(storage, stack[sp - 1])
            stack[sp - 1] = rt.abuf[rt.abase[storage] + idx]
            if trace is not None:
                trace.append(("r", code.array_names[storage], idx))
                record_offsets("r", storage, idx)
        elif op == STARR:
            storage = arr_storage(arg)
            value = stack[sp - 1]
            idx = check_index(storage, stack[sp - 2])
            sp -= 2
            rt.abuf[rt.abase[storage] + idx] = value
            if trace is not None:
                trace.append(("w", code.array_names[storage], idx))
                record_offsets("w", storage, idx)
        elif op == ADD:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] + stack[sp]
        elif op == SUB:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] - stack[sp]
        elif op == MUL:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] * stack[sp]
        elif op == FDIV:
            sp -= 1
            if stack[sp] == 0.0:
                raise InterpError("div-by-zero", "division by zero")
            stack[sp - 1] = stack[sp - 1] / stack[sp]
        elif op == IDIV:
            sp -= 1
            if stack[sp] == 0.0:
                raise InterpError("div-by-zero", "division by zero")
            stack[sp - 1] = float(math.trunc(stack[sp - 1] / stack[sp]))
        elif op == MOD:
            sp -= 1
            if stack[sp] == 0.0:
                raise InterpError("div-by-zero", "modulo by zero")
            stack[sp - 1] = math.fmod(stack[sp - 1], stack[sp])
        elif op == NEG:
            stack[sp - 1] = -stack[sp - 1]
        elif op == NOT:
            stack[sp - 1] = 1.0 if stack[sp - 1] == 0.0 else 0.0
        elif op == LT:
            sp -= 1
            stack[sp - 1] = 1.0 if stack[sp - 1] < stack[sp] else 0.0
        elif op == LE:
            sp -= 1
            stack[sp - 1] = 1.0 if stack[sp - 1] <= stack[sp] else 0.0
        elif op == GT:
            sp -= 1
            stack[sp - 1] = 1.0 if stack[sp - 1] > stack[sp] else 0.0
        elif op == GE:
            sp -= 1
            stack[sp - 1] = 1.0 if stack[sp - 1] >= stack[sp] else 0.0
        elif op == EQ:
            sp -= 1
            stack[sp - 1] = 1.0 if stack[sp - 1] == stack[sp] else 0.0
        elif op == NE:
            sp -= 1
            stack[sp - 1] = 1.0 if stack[sp - 1] != stack[sp] else 0.0
        elif op == JMP:
            pc = arg
        elif op == JZ:
            sp -= 1
            if stack[sp] == 0.0:
                pc = arg
        elif op == CALL:
            callee, n_scalars, binding = fc.callsites[arg]
            sp -= n_scalars
            call_args = stack[sp : sp + n_scalars]
            callee_map = [num if scope == "g" else arrmap[num] for scope, num in binding]
            rt.fuel = fuel
            stack[sp] = exec_func(rt, callee, call_args, callee_map, depth + 1)
            fuel = rt.fuel
            sp += 1
        elif op == RET:
            rt.fuel = fuel
            return stack[sp - 1]
        elif op == POP:
            sp -= 1
        elif op == DUP:
            stack[sp] = stack[sp - 1]
            sp += 1
        elif op == LOOPENTER:
            loop_stack.append(fc.loop_metas[arg])
        elif op == LOOPEXIT:
            loop_stack.pop()
        else:
            raise InterpError("internal", f"bad opcode {op}")


def run_module(
    code: ModuleCode, gvals, ginit, abuf, abase, asize, trace, entry: int,
    fuel: int = 500_000_000,
) -> None:
    rt = Runtime(code, gvals, ginit, abuf, abase, asize, trace, fuel)
    exec_func(rt, entry, [], [], 0)
