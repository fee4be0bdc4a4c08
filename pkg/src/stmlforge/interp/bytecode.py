"""Compile the C-subset AST to a compact stack bytecode.

Both the Cython stepper and the pure-Python fallback execute this exact
format, so the backends are interchangeable. All values are IEEE doubles in
both backends (Python floats are C doubles), which keeps integer programs
exact below 2**53 and makes results bit-identical across backends.
"""

from __future__ import annotations

from array import array
from dataclasses import dataclass, field

from ..csyntax import (
    ArrayRef,
    Assign,
    Binary,
    Block,
    Call,
    DeclInit,
    DeclStmt,
    Expr,
    ExprStmt,
    FloatLit,
    For,
    FuncDef,
    Ident,
    If,
    IntLit,
    Program,
    Return,
    Unary,
    walk,
)
from ..errors import InterpError
from ..properties import Analyzer

# opcode table (mirrored by the Cython stepper; checked by a unit test)
CONST = 0
LOADG = 1
STOREG = 2
LOADL = 3
STOREL = 4
LDARR = 5
STARR = 6
ADD = 7
SUB = 8
MUL = 9
FDIV = 10
IDIV = 11
MOD = 12
NEG = 13
NOT = 14
LT = 15
LE = 16
GT = 17
GE = 18
EQ = 19
NE = 20
JMP = 21
JZ = 22
CALL = 23
RET = 24
POP = 25
DUP = 26
LOOPENTER = 27
LOOPEXIT = 28

OPCODE_NAMES = {
    v: k
    for k, v in list(globals().items())
    if k.isupper() and isinstance(v, int) and k != "OPCODE_NAMES"
}

STACK_LIMIT = 512
CALL_DEPTH_LIMIT = 64


@dataclass
class LoopMeta:
    scope: str  # 'g' | 'l'
    slot: int
    node_id: int
    canonical: bool


@dataclass
class FuncCode:
    name: str
    ops: array
    args: array
    consts: array
    n_locals: int = 0
    n_scalar_params: int = 0
    arr_descs: list = field(default_factory=list)  # ('g', gidx) | ('l', lslot)
    callsites: list = field(default_factory=list)  # (func_idx, n_scalar_args, [arrdesc])
    loop_metas: list = field(default_factory=list)


@dataclass
class ModuleCode:
    global_names: list[str]
    global_types: list[str]
    array_names: list[str]
    array_types: list[str]
    array_extents: list  # Expr or None
    funcs: list[FuncCode]
    toplevel: FuncCode
    func_index: dict[str, int]

    def gslot(self, name: str) -> int:
        return self.global_names.index(name)


def _numeric_type(a: str, b: str) -> str:
    if "double" in (a, b):
        return "double"
    if "float" in (a, b):
        return "float"
    return "int"


class _FuncCompiler:
    def __init__(self, mod: "_ModuleCompiler", name: str, params=None, rettype="void",
                 local_decls=None):
        self.mod = mod
        self.name = name
        self.ops: list[int] = []
        self.args: list[int] = []
        self.consts: list[float] = []
        self.arr_descs: list = []
        self.callsites: list = []
        self.loop_metas: list[LoopMeta] = []
        self.rettype = rettype
        # local scalar slots: scalar params first, then declared locals
        self.local_slots: dict[str, int] = {}
        self.local_types: dict[str, str] = {}
        # local array params: name -> local array slot
        self.local_arrays: dict[str, int] = {}
        self.local_array_types: dict[str, str] = {}
        self.n_scalar_params = 0
        if params:
            for p in params:
                if p.is_array:
                    self.local_arrays[p.name] = len(self.local_arrays)
                    self.local_array_types[p.name] = p.ctype
                else:
                    self.local_slots[p.name] = len(self.local_slots)
                    self.local_types[p.name] = p.ctype
                    self.n_scalar_params += 1
        for name_, ctype in (local_decls or []):
            if name_ not in self.local_slots:
                self.local_slots[name_] = len(self.local_slots)
                self.local_types[name_] = ctype

    # -- emission -------------------------------------------------------------

    def emit(self, op: int, arg: int = 0) -> int:
        self.ops.append(op)
        self.args.append(arg)
        return len(self.ops) - 1

    def patch(self, at: int, target: int):
        self.args[at] = target

    def const(self, value: float) -> int:
        value = float(value)
        for i, c in enumerate(self.consts):
            if c == value and (value != 0.0 or str(c) == str(value)):
                return i
        self.consts.append(value)
        return len(self.consts) - 1

    def arr_desc(self, name: str):
        if name in self.local_arrays:
            desc = ("l", self.local_arrays[name])
        elif name in self.mod.array_slots:
            desc = ("g", self.mod.array_slots[name])
        else:
            raise InterpError("unbound-variable", f"array {name!r} is not declared")
        for i, d in enumerate(self.arr_descs):
            if d == desc:
                return i
        self.arr_descs.append(desc)
        return len(self.arr_descs) - 1

    # -- typing ---------------------------------------------------------------

    def type_of(self, e: Expr) -> str:
        if isinstance(e, IntLit):
            return "int"
        if isinstance(e, FloatLit):
            return "double"
        if isinstance(e, Ident):
            if e.name in self.local_types:
                return self.local_types[e.name]
            return self.mod.global_type(e.name)
        if isinstance(e, ArrayRef):
            if e.base in self.local_array_types:
                return self.local_array_types[e.base]
            return self.mod.array_type(e.base)
        if isinstance(e, Unary):
            return "int" if e.op == "!" else self.type_of(e.operand)
        if isinstance(e, Binary):
            if e.op in ("<", "<=", ">", ">=", "==", "!=", "&&", "||"):
                return "int"
            return _numeric_type(self.type_of(e.left), self.type_of(e.right))
        if isinstance(e, (Assign, DeclInit)):
            target = e.target if isinstance(e, Assign) else Ident(e.name)
            return self.type_of(target)
        if isinstance(e, Call):
            idx = self.mod.func_index.get(e.name)
            if idx is None:
                raise InterpError("unsupported", f"call to undefined function {e.name!r}")
            return self.mod.func_rettypes[idx]
        raise InterpError("unsupported", f"cannot type expression {type(e).__name__}")

    # -- scalars ---------------------------------------------------------------

    def load_scalar(self, name: str):
        if name in self.local_slots:
            self.emit(LOADL, self.local_slots[name])
        else:
            self.emit(LOADG, self.mod.gslot(name))

    def store_scalar(self, name: str):
        if name in self.local_slots:
            self.emit(STOREL, self.local_slots[name])
        else:
            self.emit(STOREG, self.mod.gslot(name))

    # -- expressions ------------------------------------------------------------

    def expr(self, e: Expr, want_value: bool = True):
        if isinstance(e, IntLit):
            if want_value:
                self.emit(CONST, self.const(e.value))
            return
        if isinstance(e, FloatLit):
            if want_value:
                self.emit(CONST, self.const(e.value))
            return
        if isinstance(e, Ident):
            if want_value:
                self.load_scalar(e.name)
            return
        if isinstance(e, ArrayRef):
            self.expr(e.index)
            self.emit(LDARR, self.arr_desc(e.base))
            if not want_value:
                self.emit(POP)
            return
        if isinstance(e, Unary):
            self.unary(e, want_value)
            return
        if isinstance(e, Binary):
            self.binary(e, want_value)
            return
        if isinstance(e, (Assign, DeclInit)):
            self.assign(e, want_value)
            return
        if isinstance(e, Call):
            self.call(e)
            if not want_value:
                self.emit(POP)
            return
        raise InterpError("unsupported", f"cannot execute {type(e).__name__}")

    def unary(self, e: Unary, want_value: bool):
        if e.op in ("++", "--"):
            delta_op = ADD if e.op == "++" else SUB
            if isinstance(e.operand, Ident):
                self.load_scalar(e.operand.name)
                if want_value and not e.prefix:
                    self.emit(DUP)
                self.emit(CONST, self.const(1))
                self.emit(delta_op)
                if want_value and e.prefix:
                    self.emit(DUP)
                self.store_scalar(e.operand.name)
            elif isinstance(e.operand, ArrayRef):
                # c[i]++ : uncommon; evaluate the index once
                self.expr(e.operand.index)
                self.emit(DUP)
                self.emit(LDARR, self.arr_desc(e.operand.base))
                if want_value and not e.prefix:
                    self.emit(DUP)
                    self.emit(STOREL, self._scratch())
                self.emit(CONST, self.const(1))
                self.emit(delta_op)
                self.emit(STARR, self.arr_desc(e.operand.base))
                if want_value:
                    if e.prefix:
                        self.expr(e.operand.index)
                        self.emit(LDARR, self.arr_desc(e.operand.base))
                    else:
                        self.emit(LOADL, self._scratch())
            else:
                raise InterpError("unsupported", "++/-- target")
            return
        self.expr(e.operand)
        if e.op == "-":
            self.emit(NEG)
        elif e.op == "!":
            self.emit(NOT)
        else:
            raise InterpError("unsupported", f"unary {e.op}")
        if not want_value:
            self.emit(POP)

    def _scratch(self) -> int:
        if "$scratch" not in self.local_slots:
            self.local_slots["$scratch"] = len(self.local_slots)
            self.local_types["$scratch"] = "double"
        return self.local_slots["$scratch"]

    def binary(self, e: Binary, want_value: bool):
        if e.op in ("&&", "||"):
            # short-circuit, result is 0/1
            self.expr(e.left)
            j1 = self.emit(JZ, 0)
            if e.op == "&&":
                self.expr(e.right)
                j2 = self.emit(JZ, 0)
                self.emit(CONST, self.const(1))
                jend = self.emit(JMP, 0)
                self.patch(j1, len(self.ops))
                self.patch(j2, len(self.ops))
                self.emit(CONST, self.const(0))
                self.patch(jend, len(self.ops))
            else:
                # left false -> evaluate right; left true -> 1
                self.emit(CONST, self.const(1))
                jend = self.emit(JMP, 0)
                self.patch(j1, len(self.ops))
                self.expr(e.right)
                j2 = self.emit(JZ, 0)
                self.emit(CONST, self.const(1))
                jend2 = self.emit(JMP, 0)
                self.patch(j2, len(self.ops))
                self.emit(CONST, self.const(0))
                self.patch(jend, len(self.ops))
                self.patch(jend2, len(self.ops))
            if not want_value:
                self.emit(POP)
            return
        self.expr(e.left)
        self.expr(e.right)
        table = {"+": ADD, "-": SUB, "*": MUL, "<": LT, "<=": LE, ">": GT,
                 ">=": GE, "==": EQ, "!=": NE}
        if e.op in table:
            self.emit(table[e.op])
        elif e.op == "/":
            self.emit(IDIV if self.type_of(e) == "int" else FDIV)
        elif e.op == "%":
            if self.type_of(e) != "int":
                raise InterpError("unsupported", "% on floating operands")
            self.emit(MOD)
        else:
            raise InterpError("unsupported", f"operator {e.op}")
        if not want_value:
            self.emit(POP)

    def assign(self, e, want_value: bool):
        if isinstance(e, DeclInit):
            self.expr(e.value)
            if want_value:
                self.emit(DUP)
            self.store_scalar(e.name)
            return
        target, op = e.target, e.op
        if isinstance(target, Ident):
            if op == "=":
                self.expr(e.value)
            else:
                self.load_scalar(target.name)
                self.expr(e.value)
                self.emit({"+=": ADD, "-=": SUB, "*=": MUL}[op])
            if want_value:
                self.emit(DUP)
            self.store_scalar(target.name)
            return
        if isinstance(target, ArrayRef):
            desc = self.arr_desc(target.base)
            self.expr(target.index)
            if op == "=":
                self.expr(e.value)
            else:
                self.emit(DUP)
                self.emit(LDARR, desc)
                self.expr(e.value)
                self.emit({"+=": ADD, "-=": SUB, "*=": MUL}[op])
            if want_value:
                self.emit(DUP)
                self.emit(STOREL, self._scratch())
            self.emit(STARR, desc)
            if want_value:
                self.emit(LOADL, self._scratch())
            return
        raise InterpError("unsupported", "assignment target")

    def call(self, e: Call):
        idx = self.mod.func_index.get(e.name)
        if idx is None:
            raise InterpError("unsupported", f"call to undefined function {e.name!r}")
        params = self.mod.func_params[idx]
        if len(params) != len(e.args):
            raise InterpError("unsupported", f"arity mismatch calling {e.name!r}")
        arr_binding = []
        n_scalars = 0
        for p, a in zip(params, e.args):
            if p.is_array:
                if not isinstance(a, Ident):
                    raise InterpError("unsupported", "array arguments must be array names")
                name = a.name
                if name in self.local_arrays:
                    arr_binding.append(("l", self.local_arrays[name]))
                elif name in self.mod.array_slots:
                    arr_binding.append(("g", self.mod.array_slots[name]))
                else:
                    raise InterpError("unbound-variable", f"array {name!r} is not declared")
            else:
                self.expr(a)
                n_scalars += 1
        self.callsites.append((idx, n_scalars, arr_binding))
        self.emit(CALL, len(self.callsites) - 1)

    # -- statements ---------------------------------------------------------------

    def stmt(self, s):
        if isinstance(s, ExprStmt):
            self.expr(s.expr, want_value=False)
        elif isinstance(s, DeclStmt):
            for d in s.declarators:
                if d.init is not None:
                    self.expr(d.init)
                    self.store_scalar(d.name)
        elif isinstance(s, Block):
            for inner in s.stmts:
                self.stmt(inner)
        elif isinstance(s, If):
            self.expr(s.cond)
            jfalse = self.emit(JZ, 0)
            self.stmt(s.then)
            if s.els is not None:
                jend = self.emit(JMP, 0)
                self.patch(jfalse, len(self.ops))
                self.stmt(s.els)
                self.patch(jend, len(self.ops))
            else:
                self.patch(jfalse, len(self.ops))
        elif isinstance(s, For):
            self.for_stmt(s)
        elif isinstance(s, Return):
            if s.value is None:
                self.emit(CONST, self.const(0))
            else:
                self.expr(s.value)
            self.emit(RET)
        else:
            raise InterpError("unsupported", f"cannot execute {type(s).__name__}")

    def for_stmt(self, s: For):
        if s.init is not None:
            self.expr(s.init, want_value=False)
        meta = self._loop_meta(s)
        self.emit(LOOPENTER, meta)
        top = len(self.ops)
        jend = None
        if s.cond is not None:
            self.expr(s.cond)
            jend = self.emit(JZ, 0)
        self.stmt(s.body)
        if s.step is not None:
            self.expr(s.step, want_value=False)
        self.emit(JMP, top)
        if jend is not None:
            self.patch(jend, len(self.ops))
        self.emit(LOOPEXIT)

    def _loop_meta(self, s: For) -> int:
        var = self.mod.analyzer.canonical_loop(s)
        node_id = self.mod.node_ids.get(id(s), -1)
        if var is None:
            meta = LoopMeta("g", -1, node_id, False)
        elif var in self.local_slots:
            meta = LoopMeta("l", self.local_slots[var], node_id, True)
        elif var in self.mod.global_slots:
            meta = LoopMeta("g", self.mod.global_slots[var], node_id, True)
        else:
            meta = LoopMeta("g", -1, node_id, False)
        self.loop_metas.append(meta)
        return len(self.loop_metas) - 1

    def finish(self) -> FuncCode:
        self.emit(CONST, self.const(0))
        self.emit(RET)
        return FuncCode(
            name=self.name,
            ops=array("i", self.ops),
            args=array("i", self.args),
            consts=array("d", self.consts),
            n_locals=len(self.local_slots),
            n_scalar_params=self.n_scalar_params,
            arr_descs=self.arr_descs,
            callsites=self.callsites,
            loop_metas=self.loop_metas,
        )


class _ModuleCompiler:
    def __init__(self, program: Program):
        self.program = program
        self.analyzer = Analyzer()
        self.node_ids = {id(n): nid for nid, n in program.node_table.items()}

        self.global_slots: dict[str, int] = {}
        self.global_types: dict[str, str] = {}
        self.array_slots: dict[str, int] = {}
        self.array_types: dict[str, str] = {}
        self.array_extents: list = []

        for item in program.items:
            if isinstance(item, DeclStmt):
                for d in item.declarators:
                    if d.extent is not None:
                        if d.name not in self.array_slots:
                            self.array_slots[d.name] = len(self.array_slots)
                            self.array_types[d.name] = item.ctype
                            self.array_extents.append(d.extent)
                    else:
                        self._add_global(d.name, item.ctype)

        self.funcs = [it for it in program.items if isinstance(it, FuncDef)]
        self.func_index = {f.name: i for i, f in enumerate(self.funcs)}
        self.func_params = [f.params for f in self.funcs]
        self.func_rettypes = [f.rettype for f in self.funcs]

        # any other name used in scalar position defaults to int
        func_scope_names = set()
        for f in self.funcs:
            func_scope_names.update(p.name for p in f.params)
            for n in walk(f.body):
                if isinstance(n, DeclStmt):
                    func_scope_names.update(d.name for d in n.declarators)
        for n in walk(program):
            if isinstance(n, Ident) and n.name not in self.array_slots \
                    and n.name not in self.func_index and n.name not in func_scope_names:
                self._add_global(n.name, "int")

    def _add_global(self, name: str, ctype: str):
        if name not in self.global_slots:
            self.global_slots[name] = len(self.global_slots)
            self.global_types[name] = ctype

    def gslot(self, name: str) -> int:
        if name not in self.global_slots:
            raise InterpError("unbound-variable", f"variable {name!r} is not in scope")
        return self.global_slots[name]

    def global_type(self, name: str) -> str:
        return self.global_types.get(name, "int")

    def array_type(self, name: str) -> str:
        if name not in self.array_types:
            raise InterpError("unbound-variable", f"array {name!r} is not declared")
        return self.array_types[name]

    def compile(self) -> ModuleCode:
        func_codes = []
        for f in self.funcs:
            local_decls = []
            for n in walk(f.body):
                if isinstance(n, DeclStmt):
                    local_decls += [(d.name, n.ctype) for d in n.declarators]
                elif isinstance(n, DeclInit):
                    local_decls.append((n.name, n.ctype))
            fc = _FuncCompiler(self, f.name, f.params, f.rettype, local_decls)
            fc.stmt(f.body)
            func_codes.append(fc.finish())

        top = _FuncCompiler(self, "<toplevel>")
        # for-header declarations at top level live in the global scope
        in_funcs = {id(n) for f in self.funcs for n in walk(f.body)}
        for n in walk(self.program):
            if isinstance(n, DeclInit) and id(n) not in in_funcs:
                self._add_global(n.name, n.ctype)
        for item in self.program.items:
            if isinstance(item, (DeclStmt,)) or isinstance(item, FuncDef):
                if isinstance(item, DeclStmt):
                    top.stmt(item)
                continue
            top.stmt(item)

        names = [None] * len(self.global_slots)
        for name, slot in self.global_slots.items():
            names[slot] = name
        arr_names = [None] * len(self.array_slots)
        for name, slot in self.array_slots.items():
            arr_names[slot] = name
        return ModuleCode(
            global_names=names,
            global_types=[self.global_types[n] for n in names],
            array_names=arr_names,
            array_types=[self.array_types[n] for n in arr_names],
            array_extents=self.array_extents,
            funcs=func_codes,
            toplevel=top.finish(),
            func_index=dict(self.func_index),
        )


def compile_program(program: Program) -> ModuleCode:
    cached = getattr(program, "_vmcode", None)
    if cached is not None:
        return cached
    code = _ModuleCompiler(program).compile()
    program._vmcode = code
    return code
