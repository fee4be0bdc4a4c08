"""Canonical pretty-printer: 4-space indent, one statement per line, braces
on every block, pragmas emitted immediately above their anchor."""

from __future__ import annotations

from .csyntax import (
    ArrayRef,
    Assign,
    Binary,
    Block,
    Call,
    CstmtsSlot,
    DeclInit,
    DeclStmt,
    ExprStmt,
    FloatLit,
    For,
    FuncDef,
    Ident,
    If,
    IntLit,
    ListExpr,
    Metavar,
    Program,
    Return,
    Stmt,
    TupleExpr,
    Unary,
)

_PREC = {
    "||": 2,
    "&&": 3,
    "==": 4, "!=": 4,
    "<": 5, "<=": 5, ">": 5, ">=": 5,
    "+": 6, "-": 6,
    "*": 7, "/": 7, "%": 7,
}
_ASSIGN_PREC = 1
_UNARY_PREC = 8


def expr_text(e) -> str:
    return _expr(e, 0)


def _expr(e, parent_prec: int) -> str:
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, FloatLit):
        return e.text
    if isinstance(e, Ident):
        return e.name
    if isinstance(e, ArrayRef):
        return f"{e.base}[{_expr(e.index, 0)}]"
    if isinstance(e, Call):
        return f"{e.name}({', '.join(_expr(a, 0) for a in e.args)})"
    if isinstance(e, TupleExpr):
        return f"({', '.join(_expr(a, 0) for a in e.items)})"
    if isinstance(e, ListExpr):
        return f"[{', '.join(_expr(a, 0) for a in e.items)}]"
    if isinstance(e, Unary):
        if e.op in ("++", "--"):
            inner = _expr(e.operand, _UNARY_PREC)
            return f"{e.op}{inner}" if e.prefix else f"{inner}{e.op}"
        operand = _expr(e.operand, _UNARY_PREC)
        if e.op == "-" and operand.startswith("-"):
            operand = f"({operand})"  # avoid fusing into a '--' token
        text = f"{e.op}{operand}"
        return text if parent_prec <= _UNARY_PREC else f"({text})"
    if isinstance(e, Binary):
        if isinstance(e.op, Metavar):
            # operator metavariable: only the functional form reparses
            return f"bin_oper({_expr(e.op, 0)}, {_expr(e.left, 0)}, {_expr(e.right, 0)})"
        prec = _PREC.get(e.op, 6)
        left = _expr(e.left, prec)
        right = _expr(e.right, prec + 1)  # left-associative
        text = f"{left} {e.op} {right}"
        return text if prec >= parent_prec else f"({text})"
    if isinstance(e, Assign):
        text = f"{_expr(e.target, _UNARY_PREC)} {e.op} {_expr(e.value, _ASSIGN_PREC)}"
        return text if parent_prec <= _ASSIGN_PREC else f"({text})"
    if isinstance(e, DeclInit):
        return f"{e.ctype} {e.name} = {_expr(e.value, _ASSIGN_PREC)}"
    if isinstance(e, Metavar):
        return f"{e.kind}({e.name})"
    raise TypeError(f"cannot print expression {type(e).__name__}")


class _Printer:
    def __init__(self, include_pragmas=True, pragma_override=None):
        self.lines = []
        self.include_pragmas = include_pragmas
        # pragma_override: callable(node) -> list[str] | None, used by the
        # annotation layer to emit store-driven pragmas instead of raw ones.
        self.pragma_override = pragma_override

    def emit(self, depth: int, text: str):
        self.lines.append("    " * depth + text)

    def pragmas_for(self, node) -> list[str]:
        if not self.include_pragmas:
            return []
        if self.pragma_override is not None:
            lines = self.pragma_override(node)
            if lines is not None:
                return lines
        return list(node.pragmas)

    def stmt(self, s: Stmt, depth: int):
        for line in self.pragmas_for(s):
            self.emit(depth, line)
        if isinstance(s, ExprStmt):
            self.emit(depth, f"{expr_text(s.expr)};")
        elif isinstance(s, DeclStmt):
            parts = []
            for d in s.declarators:
                text = d.name
                if d.extent is not None:
                    text += f"[{expr_text(d.extent)}]"
                if d.init is not None:
                    text += f" = {expr_text(d.init)}"
                parts.append(text)
            self.emit(depth, f"{s.ctype} {', '.join(parts)};")
        elif isinstance(s, Block):
            self.emit(depth, "{")
            for inner in s.stmts:
                self.stmt(inner, depth + 1)
            self.emit(depth, "}")
        elif isinstance(s, For):
            init = expr_text(s.init) if s.init is not None else ""
            cond = expr_text(s.cond) if s.cond is not None else ""
            step = expr_text(s.step) if s.step is not None else ""
            self.emit(depth, f"for ({init}; {cond}; {step}) {{")
            for inner in s.body.stmts:
                self.stmt(inner, depth + 1)
            self.emit(depth, "}")
        elif isinstance(s, If):
            self.emit(depth, f"if ({expr_text(s.cond)}) {{")
            for inner in s.then.stmts:
                self.stmt(inner, depth + 1)
            if s.els is None:
                self.emit(depth, "}")
            else:
                self.emit(depth, "} else {")
                for inner in s.els.stmts:
                    self.stmt(inner, depth + 1)
                self.emit(depth, "}")
        elif isinstance(s, Return):
            if s.value is None:
                self.emit(depth, "return;")
            else:
                self.emit(depth, f"return {expr_text(s.value)};")
        elif isinstance(s, CstmtsSlot):
            self.emit(depth, f"{s.var.kind}({s.var.name});")
        else:
            printer = getattr(s, "print_into", None)
            if printer is None:
                raise TypeError(f"cannot print statement {type(s).__name__}")
            printer(self, depth)

    def funcdef(self, f: FuncDef, depth: int):
        for line in self.pragmas_for(f):
            self.emit(depth, line)
        params = ", ".join(
            f"{p.ctype} {p.name}[]" if p.is_array else f"{p.ctype} {p.name}"
            for p in f.params
        )
        self.emit(depth, f"{f.rettype} {f.name}({params}) {{")
        for inner in f.body.stmts:
            self.stmt(inner, depth + 1)
        self.emit(depth, "}")


def print_program(p: Program, include_pragmas: bool = True, pragma_override=None) -> str:
    pr = _Printer(include_pragmas, pragma_override)
    for item in p.items:
        if isinstance(item, FuncDef):
            pr.funcdef(item, 0)
        else:
            pr.stmt(item, 0)
    return "\n".join(pr.lines) + ("\n" if pr.lines else "")


def print_fragment(fragment) -> str:
    """Print a statement, statement list, or expression fragment."""
    if isinstance(fragment, list):
        pr = _Printer()
        for s in fragment:
            pr.stmt(s, 0)
        return "\n".join(pr.lines) + ("\n" if pr.lines else "")
    if isinstance(fragment, Stmt):
        pr = _Printer()
        pr.stmt(fragment, 0)
        return "\n".join(pr.lines) + "\n"
    if isinstance(fragment, Program):
        return print_program(fragment)
    return expr_text(fragment)
