# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled bytecode stepper; mirrors ``_vmpy`` instruction for instruction.

Opcode values are hard-coded here and cross-checked against
``bytecode.py`` by a unit test.
"""

from libc.math cimport fmod, trunc

from ..errors import InterpError

BACKEND_NAME = "cython"

DEF OP_CONST = 0
DEF OP_LOADG = 1
DEF OP_STOREG = 2
DEF OP_LOADL = 3
DEF OP_STOREL = 4
DEF OP_LDARR = 5
DEF OP_STARR = 6
DEF OP_ADD = 7
DEF OP_SUB = 8
DEF OP_MUL = 9
DEF OP_FDIV = 10
DEF OP_IDIV = 11
DEF OP_MOD = 12
DEF OP_NEG = 13
DEF OP_NOT = 14
DEF OP_LT = 15
DEF OP_LE = 16
DEF OP_GT = 17
DEF OP_GE = 18
DEF OP_EQ = 19
DEF OP_NE = 20
DEF OP_JMP = 21
DEF OP_JZ = 22
DEF OP_CALL = 23
DEF OP_RET = 24
DEF OP_POP = 25
DEF OP_DUP = 26
DEF OP_LOOPENTER = 27
DEF OP_LOOPEXIT = 28

DEF STACK_CAP = 512
DEF LOCALS_CAP = 256
DEF LOOPS_CAP = 64
DEF DEPTH_CAP = 64

OPCODE_VALUES = {
    "CONST": OP_CONST, "LOADG": OP_LOADG, "STOREG": OP_STOREG,
    "LOADL": OP_LOADL, "STOREL": OP_STOREL, "LDARR": OP_LDARR,
    "STARR": OP_STARR, "ADD": OP_ADD, "SUB": OP_SUB, "MUL": OP_MUL,
    "FDIV": OP_FDIV, "IDIV": OP_IDIV, "MOD": OP_MOD, "NEG": OP_NEG,
    "NOT": OP_NOT, "LT": OP_LT, "LE": OP_LE, "GT": OP_GT, "GE": OP_GE,
    "EQ": OP_EQ, "NE": OP_NE, "JMP": OP_JMP, "JZ": OP_JZ, "CALL": OP_CALL,
    "RET": OP_RET, "POP": OP_POP, "DUP": OP_DUP,
    "LOOPENTER": OP_LOOPENTER, "LOOPEXIT": OP_LOOPEXIT,
}


cdef class _Runtime:
    cdef object code
    cdef double[:] gvals
    cdef unsigned char[:] ginit
    cdef double[:] abuf
    cdef int[:] abase
    cdef int[:] asize
    cdef object trace  # list or None
    cdef list func_cache  # prepared per-function tables
    cdef long long fuel


cdef class _Func:
    cdef int[:] ops
    cdef int[:] args
    cdef double[:] consts
    cdef int n_locals
    cdef list arr_descs    # (is_local, num)
    cdef list callsites    # (func_idx, n_scalars, [(is_local, num)])
    cdef list loop_metas   # (is_local, slot, node_id, canonical)
    cdef object name


cdef _Func _prepare(object fc):
    cdef _Func f = _Func()
    f.ops = fc.ops
    f.args = fc.args
    f.consts = fc.consts if len(fc.consts) else memoryview(bytearray(8)).cast("d")
    f.n_locals = fc.n_locals
    f.arr_descs = [(1 if scope == "l" else 0, num) for scope, num in fc.arr_descs]
    f.callsites = [
        (idx, n, [(1 if scope == "l" else 0, num) for scope, num in binding])
        for idx, n, binding in fc.callsites
    ]
    f.loop_metas = [
        (1 if m.scope == "l" else 0, m.slot, m.node_id, 1 if m.canonical else 0)
        for m in fc.loop_metas
    ]
    f.name = fc.name
    return f


cdef int _storage_of(_Func f, int didx, int* arrmap) except -2:
    cdef int is_local, num
    is_local, num = f.arr_descs[didx]
    if is_local:
        return arrmap[num]
    return num


cdef double _exec(_Runtime rt, int fidx, double* scalar_args, int n_args,
                  int* arrmap, int depth) except? -1e308:
    cdef _Func f
    if fidx >= 0:
        f = <_Func> rt.func_cache[fidx]
    else:
        f = <_Func> rt.func_cache[len(rt.func_cache) - 1]
    if depth > DEPTH_CAP:
        raise InterpError("call-depth", "call depth limit exceeded")

    cdef double stack[STACK_CAP]
    cdef double locals_[LOCALS_CAP]
    cdef unsigned char linit[LOCALS_CAP]
    cdef int loop_stack[LOOPS_CAP]
    cdef int n_loops = 0
    cdef int sp = 0
    cdef int pc = 0
    cdef int op, arg, i, idx, storage, base, n
    cdef double value, var
    cdef int is_local, slot, node_id, canonical
    cdef object trace = rt.trace
    cdef int callee, n_scalars
    cdef list binding
    cdef double call_args[32]
    cdef int callee_map[32]
    cdef long long fuel = rt.fuel

    if f.n_locals > LOCALS_CAP:
        raise InterpError("internal", "too many locals")
    for i in range(f.n_locals):
        locals_[i] = 0.0
        linit[i] = 0
    for i in range(n_args):
        locals_[i] = scalar_args[i]
        linit[i] = 1

    while True:
        fuel -= 1
        if fuel < 0:
            rt.fuel = 0
            raise InterpError("fuel-exhausted", "instruction budget exceeded (runaway loop?)")
        op = f.ops[pc]
        arg = f.args[pc]
        pc += 1
        if op == OP_CONST:
            if sp >= STACK_CAP - 2:
                raise InterpError("stack-overflow", "expression too deep")
            stack[sp] = f.consts[arg]
            sp += 1
        elif op == OP_LOADG:
            if not rt.ginit[arg]:
                raise InterpError(
                    "unbound-variable",
                    f"variable {rt.code.global_names[arg]!r} read before any value was bound",
                )
            if trace is not None:
                trace.append(("r", rt.code.global_names[arg], None))
            stack[sp] = rt.gvals[arg]
            sp += 1
        elif op == OP_STOREG:
            sp -= 1
            rt.gvals[arg] = stack[sp]
            rt.ginit[arg] = 1
            if trace is not None:
                trace.append(("w", rt.code.global_names[arg], None))
        elif op == OP_LOADL:
            if not linit[arg]:
                raise InterpError("unbound-variable", "local read before assignment")
            stack[sp] = locals_[arg]
            sp += 1
        elif op == OP_STOREL:
            sp -= 1
            locals_[arg] = stack[sp]
            linit[arg] = 1
        elif op == OP_LDARR:
            storage = _storage_of(f, arg, arrmap)
            idx = <int> stack[sp - 1]
            n = rt.asize[storage]
            if idx < 0 or idx >= n:
                raise InterpError(
                    "out-of-bounds",
                    f"index {idx} outside {rt.code.array_names[storage]}[0..{n - 1}]",
                )
            stack[sp - 1] = rt.abuf[rt.abase[storage] + idx]
            if trace is not None:
                trace.append(("r", rt.code.array_names[storage], idx))
                for i in range(n_loops):
                    is_local, slot, node_id, canonical = f.loop_metas[loop_stack[i]]
                    if not canonical:
                        continue
                    var = locals_[slot] if is_local else rt.gvals[slot]
                    trace.append(("off", "r", node_id, rt.code.array_names[storage],
                                  <int> (idx - var)))
        elif op == OP_STARR:
            storage = _storage_of(f, arg, arrmap)
            value = stack[sp - 1]
            idx = <int> stack[sp - 2]
            sp -= 2
            n = rt.asize[storage]
            if idx < 0 or idx >= n:
                raise InterpError(
                    "out-of-bounds",
                    f"index {idx} outside {rt.code.array_names[storage]}[0..{n - 1}]",
                )
            rt.abuf[rt.abase[storage] + idx] = value
            if trace is not None:
                trace.append(("w", rt.code.array_names[storage], idx))
                for i in range(n_loops):
                    is_local, slot, node_id, canonical = f.loop_metas[loop_stack[i]]
                    if not canonical:
                        continue
                    var = locals_[slot] if is_local else rt.gvals[slot]
                    trace.append(("off", "w", node_id, rt.code.array_names[storage],
                                  <int> (idx - var)))
        elif op == OP_ADD:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] + stack[sp]
        elif op == OP_SUB:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] - stack[sp]
        elif op == OP_MUL:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] * stack[sp]
        elif op == OP_FDIV:
            sp -= 1
            if stack[sp] == 0.0:
                raise InterpError("div-by-zero", "division by zero")
            stack[sp - 1] = stack[sp - 1] / stack[sp]
        elif op == OP_IDIV:
            sp -= 1
            if stack[sp] == 0.0:
                raise InterpError("div-by-zero", "division by zero")
            stack[sp - 1] = trunc(stack[sp - 1] / stack[sp])
        elif op == OP_MOD:
            sp -= 1
            if stack[sp] == 0.0:
                raise InterpError("div-by-zero", "modulo by zero")
            stack[sp - 1] = fmod(stack[sp - 1], stack[sp])
        elif op == OP_NEG:
            stack[sp - 1] = -stack[sp - 1]
        elif op == OP_NOT:
            stack[sp - 1] = 1.0 if stack[sp - 1] == 0.0 else 0.0
        elif op == OP_LT:
            sp -= 1
            stack[sp - 1] = 1.0 if stack[sp - 1] < stack[sp] else 0.0
        elif op == OP_LE:
            sp -= 1
            stack[sp - 1] = 1.0 if stack[sp - 1] <= stack[sp] else 0.0
        elif op == OP_GT:
            sp -= 1
            stack[sp - 1] = 1.0 if stack[sp - 1] > stack[sp] else 0.0
        elif op == OP_GE:
            sp -= 1
            stack[sp - 1] = 1.0 if stack[sp - 1] >= stack[sp] else 0.0
        elif op == OP_EQ:
            sp -= 1
            stack[sp - 1] = 1.0 if stack[sp - 1] == stack[sp] else 0.0
        elif op == OP_NE:
            sp -= 1
            stack[sp - 1] = 1.0 if stack[sp - 1] != stack[sp] else 0.0
        elif op == OP_JMP:
            pc = arg
        elif op == OP_JZ:
            sp -= 1
            if stack[sp] == 0.0:
                pc = arg
        elif op == OP_CALL:
            callee, n_scalars, binding = f.callsites[arg]
            if n_scalars > 32 or len(binding) > 32:
                raise InterpError("internal", "too many call arguments")
            sp -= n_scalars
            for i in range(n_scalars):
                call_args[i] = stack[sp + i]
            for i in range(len(binding)):
                is_local, slot = binding[i]
                callee_map[i] = arrmap[slot] if is_local else slot
            rt.fuel = fuel
            stack[sp] = _exec(rt, callee, call_args, n_scalars, callee_map, depth + 1)
            fuel = rt.fuel
            sp += 1
        elif op == OP_RET:
            rt.fuel = fuel
            return stack[sp - 1]
        elif op == OP_POP:
            sp -= 1
        elif op == OP_DUP:
            stack[sp] = stack[sp - 1]
            sp += 1
        elif op == OP_LOOPENTER:
            if n_loops >= LOOPS_CAP:
                raise InterpError("internal", "loop nesting too deep")
            loop_stack[n_loops] = arg
            n_loops += 1
        elif op == OP_LOOPEXIT:
            n_loops -= 1
        else:
            raise InterpError("internal", f"bad opcode {op}")


def run_module(code, gvals, ginit, abuf, abase, asize, trace, entry, fuel=500_000_000):
    cdef _Runtime rt = _Runtime()
    rt.code = code
    rt.fuel = fuel
    rt.gvals = gvals
    rt.ginit = ginit
    rt.abuf = abuf if len(abuf) else memoryview(bytearray(8)).cast("d")
    rt.abase = abase if len(abase) else memoryview(bytearray(4)).cast("i")
    rt.asize = asize if len(asize) else memoryview(bytearray(4)).cast("i")
    rt.trace = trace
    rt.func_cache = [_prepare(fc) for fc in code.funcs] + [_prepare(code.toplevel)]
    cdef double noargs[1]
    cdef int nomap[1]
    _exec(rt, entry, noargs, 0, nomap, 0)
