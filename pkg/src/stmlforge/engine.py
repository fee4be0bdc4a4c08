"""Pattern matching, condition checking, and rule application.

Positions: an expression rule anchors at the matched expression node; a
statement rule whose pattern starts with a concrete statement anchors at the
first matched statement; a pattern that starts with a cstmts pad spans a
whole statement list and anchors at the list's owner (block or root).
Candidates enumerate deterministically by (pre-order position, rule order,
split order) with sequence splits tried shortest-first, leftmost-first.
"""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field
from typing import Optional, Union

from .annotations import AnnotationStore, Entry, prop_text
from .cprint import _Printer, expr_text
from .csyntax import (
    ArrayRef,
    Assign,
    Binary,
    Block,
    Call,
    CstmtsSlot,
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
    ListExpr,
    Metavar,
    Program,
    Return,
    Stmt,
    TupleExpr,
    Unary,
    identifiers,
    node_count,
    stmt_list_of,
    walk,
)
from .errors import NotApplicableError, RuleSyntaxError
from .properties import Predicates, Tri, tri_and
from .ruledsl import GenIf, GenIfElse, GenList, Rule

Binding = dict[str, object]  # metavar name -> Expr | Stmt | list[Stmt] | op str


# ---------------------------------------------------------------------------
# Structural matching (pragma fields are ignored)


def _match_expr(tmpl: Expr, node, binds: Binding):
    """Yield extended bindings for template-vs-node; at most one per call
    except through nested sequence choices (none at expression level)."""
    if isinstance(tmpl, Metavar):
        if tmpl.kind != "cexpr":
            return
        if tmpl.name in binds:
            if _equal_fragment(binds[tmpl.name], node):
                yield binds
            return
        if isinstance(node, (Expr,)) and not isinstance(node, Metavar):
            new = dict(binds)
            new[tmpl.name] = node
            yield new
        return
    if isinstance(tmpl, Binary):
        if isinstance(node, Binary):
            if isinstance(tmpl.op, Metavar):
                name = tmpl.op.name
                if name in binds:
                    if binds[name] != node.op:
                        return
                    op_binds = binds
                else:
                    op_binds = dict(binds)
                    op_binds[name] = node.op
            elif tmpl.op == node.op:
                op_binds = binds
            else:
                return
            for b1 in _match_expr(tmpl.left, node.left, op_binds):
                yield from _match_expr(tmpl.right, node.right, b1)
        return
    if isinstance(tmpl, Assign):
        if isinstance(node, Assign) and tmpl.op == node.op:
            for b1 in _match_expr(tmpl.target, node.target, binds):
                yield from _match_expr(tmpl.value, node.value, b1)
        elif isinstance(node, DeclInit) and tmpl.op == "=":
            # `int i = 0` in a for-header matches the plain assignment
            # pattern; the declaredness is not reproduced by generate.
            for b1 in _match_expr(tmpl.target, Ident(node.name), binds):
                yield from _match_expr(tmpl.value, node.value, b1)
        return
    if isinstance(tmpl, Ident):
        if isinstance(node, Ident) and tmpl.name == node.name:
            yield binds
        return
    if isinstance(tmpl, IntLit):
        if isinstance(node, IntLit) and tmpl.value == node.value:
            yield binds
        return
    if isinstance(tmpl, FloatLit):
        if isinstance(node, FloatLit) and tmpl.value == node.value:
            yield binds
        return
    if isinstance(tmpl, ArrayRef):
        if isinstance(node, ArrayRef) and tmpl.base == node.base:
            yield from _match_expr(tmpl.index, node.index, binds)
        return
    if isinstance(tmpl, Unary):
        if isinstance(node, Unary) and tmpl.op == node.op and tmpl.prefix == node.prefix:
            yield from _match_expr(tmpl.operand, node.operand, binds)
        return
    if isinstance(tmpl, Call):
        if isinstance(node, Call) and tmpl.name == node.name and len(tmpl.args) == len(node.args):
            states = [binds]
            for ta, na in zip(tmpl.args, node.args):
                states = [b2 for b in states for b2 in _match_expr(ta, na, b)]
            yield from states
        return
    if isinstance(tmpl, TupleExpr):
        if isinstance(node, TupleExpr) and len(tmpl.items) == len(node.items):
            states = [binds]
            for ti, ni in zip(tmpl.items, node.items):
                states = [b2 for b in states for b2 in _match_expr(ti, ni, b)]
            yield from states
        return


def _equal_fragment(a, b) -> bool:
    """Structural equality that ignores pragma attachments."""
    if isinstance(a, list) or isinstance(b, list):
        if not (isinstance(a, list) and isinstance(b, list)) or len(a) != len(b):
            return False
        return all(_equal_fragment(x, y) for x, y in zip(a, b))
    if isinstance(a, str) or isinstance(b, str):
        return a == b
    if isinstance(a, Stmt) and isinstance(b, Stmt):
        return _stmt_text(a) == _stmt_text(b)
    return a == b


def _match_stmt(tmpl: Stmt, node: Stmt, binds: Binding):
    if isinstance(tmpl, CstmtsSlot):
        if tmpl.var.kind == "cstmt":
            name = tmpl.var.name
            if name in binds:
                if _equal_fragment(binds[name], node):
                    yield binds
                return
            new = dict(binds)
            new[name] = node
            yield new
        return
    if isinstance(tmpl, ExprStmt):
        if isinstance(node, ExprStmt):
            yield from _match_expr(tmpl.expr, node.expr, binds)
        return
    if isinstance(tmpl, For):
        if not isinstance(node, For):
            return
        slots = [(tmpl.init, node.init), (tmpl.cond, node.cond), (tmpl.step, node.step)]
        states = [binds]
        for t, n in slots:
            if t is None and n is None:
                continue
            if t is None or n is None:
                return
            states = [b2 for b in states for b2 in _match_expr(t, n, b)]
            if not states:
                return
        for b in states:
            yield from _match_seq(tmpl.body.stmts, node.body.stmts, b)
        return
    if isinstance(tmpl, If):
        if not isinstance(node, If):
            return
        if (tmpl.els is None) != (node.els is None):
            return
        for b1 in _match_expr(tmpl.cond, node.cond, binds):
            for b2 in _match_seq(tmpl.then.stmts, node.then.stmts, b1):
                if tmpl.els is None:
                    yield b2
                else:
                    yield from _match_seq(tmpl.els.stmts, node.els.stmts, b2)
        return
    if isinstance(tmpl, Return):
        if isinstance(node, Return):
            if tmpl.value is None and node.value is None:
                yield binds
            elif tmpl.value is not None and node.value is not None:
                yield from _match_expr(tmpl.value, node.value, binds)
        return


def _match_seq(tmpls: list[Stmt], stmts: list[Stmt], binds: Binding):
    """Match a template sequence against exactly the whole statement list.
    cstmts pads take the shortest prefix first."""
    if not tmpls:
        if not stmts:
            yield binds
        return
    head, rest = tmpls[0], tmpls[1:]
    if isinstance(head, CstmtsSlot) and head.var.kind == "cstmts":
        name = head.var.name
        if name in binds:
            bound = binds[name]
            k = len(bound)
            if k <= len(stmts) and _equal_fragment(bound, stmts[:k]):
                yield from _match_seq(rest, stmts[k:], binds)
            return
        for take in range(len(stmts) + 1):
            piece = stmts[:take]
            if any(not isinstance(s, Stmt) for s in piece):
                return
            new = dict(binds)
            new[name] = list(piece)
            yield from _match_seq(rest, stmts[take:], new)
        return
    if not stmts or not isinstance(stmts[0], Stmt):
        return
    for b in _match_stmt(head, stmts[0], binds):
        yield from _match_seq(rest, stmts[1:], b)


def _match_prefix(tmpls: list[Stmt], stmts: list[Stmt], binds: Binding):
    """Match a template sequence against a prefix of stmts; yields
    (bindings, consumed)."""
    if not tmpls:
        yield binds, 0
        return
    head, rest = tmpls[0], tmpls[1:]
    if isinstance(head, CstmtsSlot) and head.var.kind == "cstmts":
        name = head.var.name
        if name in binds:
            bound = binds[name]
            k = len(bound)
            if k <= len(stmts) and _equal_fragment(bound, stmts[:k]):
                for b, used in _match_prefix(rest, stmts[k:], binds):
                    yield b, used + k
            return
        for take in range(len(stmts) + 1):
            piece = stmts[:take]
            if any(not isinstance(s, Stmt) for s in piece):
                return
            new = dict(binds)
            new[name] = list(piece)
            for b, used in _match_prefix(rest, stmts[take:], new):
                yield b, used + take
        return
    if not stmts or not isinstance(stmts[0], Stmt):
        return
    for b in _match_stmt(head, stmts[0], binds):
        for b2, used in _match_prefix(rest, stmts[1:], b):
            yield b2, used + 1


# ---------------------------------------------------------------------------
# Substitution and instantiation


def substitute(fragment, from_expr: Expr, to_expr: Expr):
    """Replace every structural occurrence of from_expr by to_expr; returns
    a fresh fragment of the same kind."""

    def sub_expr(e):
        if e == from_expr:
            return copy.deepcopy(to_expr)
        if isinstance(e, Binary):
            return Binary(e.op, sub_expr(e.left), sub_expr(e.right))
        if isinstance(e, Unary):
            return Unary(e.op, sub_expr(e.operand), e.prefix)
        if isinstance(e, Assign):
            return Assign(sub_expr(e.target), e.op, sub_expr(e.value))
        if isinstance(e, ArrayRef):
            return ArrayRef(e.base, sub_expr(e.index))
        if isinstance(e, Call):
            return Call(e.name, [sub_expr(a) for a in e.args])
        if isinstance(e, TupleExpr):
            return TupleExpr([sub_expr(i) for i in e.items])
        if isinstance(e, DeclInit):
            return DeclInit(e.ctype, e.name, sub_expr(e.value))
        return copy.deepcopy(e)

    def sub_stmt(s):
        if isinstance(s, ExprStmt):
            return ExprStmt(sub_expr(s.expr), pragmas=list(s.pragmas))
        if isinstance(s, Block):
            return Block(stmts=[sub_stmt(i) for i in s.stmts], pragmas=list(s.pragmas))
        if isinstance(s, For):
            return For(
                sub_expr(s.init) if s.init is not None else None,
                sub_expr(s.cond) if s.cond is not None else None,
                sub_expr(s.step) if s.step is not None else None,
                Block(stmts=[sub_stmt(i) for i in s.body.stmts]),
                pragmas=list(s.pragmas),
            )
        if isinstance(s, If):
            return If(
                sub_expr(s.cond),
                Block(stmts=[sub_stmt(i) for i in s.then.stmts]),
                Block(stmts=[sub_stmt(i) for i in s.els.stmts]) if s.els else None,
                pragmas=list(s.pragmas),
            )
        if isinstance(s, Return):
            return Return(sub_expr(s.value) if s.value else None, pragmas=list(s.pragmas))
        if isinstance(s, DeclStmt):
            return copy.deepcopy(s)
        raise NotApplicableError(f"cannot substitute inside {type(s).__name__}")

    if isinstance(fragment, list):
        return [sub_stmt(s) for s in fragment]
    if isinstance(fragment, Stmt):
        return sub_stmt(fragment)
    return sub_expr(fragment)


def fresh_name(program: Program, hint: str, store: Optional[AnnotationStore] = None) -> str:
    """First of hint, hint_1, hint_2, ... that occurs nowhere in the
    program, its pragmas, or the annotation store."""
    used = set(identifiers(program))
    for node in walk(program):
        for line in getattr(node, "pragmas", []) or []:
            used.update(re.findall(r"[A-Za-z_][A-Za-z_0-9]*", line))
    if store is not None:
        for entry in store.entries:
            for f, _, child in _entry_exprs(entry):
                used.update(identifiers(child))
    candidate = hint
    n = 0
    while candidate in used:
        n += 1
        candidate = f"{hint}_{n}"
    return candidate


def _entry_exprs(entry: Entry):
    from dataclasses import fields as dc_fields

    for f in dc_fields(entry.ann):
        val = getattr(entry.ann, f.name)
        if isinstance(val, Expr):
            yield f.name, None, val
        elif isinstance(val, list):
            for i, item in enumerate(val):
                if isinstance(item, Expr):
                    yield f.name, i, item


class _Instantiator:
    def __init__(self, binds: Binding, predicates: Predicates):
        self.binds = binds
        self.predicates = predicates

    def expr(self, tmpl: Expr) -> Expr:
        if isinstance(tmpl, Metavar):
            value = self.binds[tmpl.name]
            if isinstance(value, str):
                raise NotApplicableError(
                    f"operator metavariable {tmpl.name!r} used in expression position"
                )
            if isinstance(value, (Stmt, list)):
                raise NotApplicableError(
                    f"statement metavariable {tmpl.name!r} used in expression position"
                )
            return copy.deepcopy(value)
        if isinstance(tmpl, Binary):
            op = tmpl.op
            if isinstance(op, Metavar):
                op = self.binds[op.name]
                if isinstance(op, Ident):
                    op = op.name
                if not isinstance(op, str):
                    raise NotApplicableError("operator metavariable bound to a non-operator")
            return Binary(op, self.expr(tmpl.left), self.expr(tmpl.right))
        if isinstance(tmpl, Unary):
            return Unary(tmpl.op, self.expr(tmpl.operand), tmpl.prefix)
        if isinstance(tmpl, Assign):
            return Assign(self.expr(tmpl.target), tmpl.op, self.expr(tmpl.value))
        if isinstance(tmpl, ArrayRef):
            return ArrayRef(tmpl.base, self.expr(tmpl.index))
        if isinstance(tmpl, Call):
            if tmpl.name == "subs":
                target, frm, to = self._subs_args(tmpl)
                if isinstance(target, (Stmt, list)):
                    raise NotApplicableError("subs over statements cannot nest in an expression")
                return substitute(target, frm, to)
            return Call(tmpl.name, [self.expr(a) for a in tmpl.args])
        if isinstance(tmpl, TupleExpr):
            return TupleExpr([self.expr(i) for i in tmpl.items])
        if isinstance(tmpl, (IntLit, FloatLit, Ident)):
            return copy.deepcopy(tmpl)
        if isinstance(tmpl, DeclInit):
            return DeclInit(tmpl.ctype, tmpl.name, self.expr(tmpl.value))
        raise NotApplicableError(f"cannot instantiate {type(tmpl).__name__}")

    def _subs_args(self, tmpl: Call):
        if len(tmpl.args) != 3:
            raise RuleSyntaxError("subs takes (target, from, to)")
        t = tmpl.args[0]
        if isinstance(t, Metavar):
            target = self.binds[t.name]
            target = copy.deepcopy(target)
        else:
            target = self.expr(t)
        return target, self.expr(tmpl.args[1]), self.expr(tmpl.args[2])

    def stmts(self, tmpls: list[Stmt]) -> list[Stmt]:
        out: list[Stmt] = []
        for tmpl in tmpls:
            out.extend(self.stmt(tmpl))
        return out

    def stmt(self, tmpl: Stmt) -> list[Stmt]:
        if isinstance(tmpl, CstmtsSlot):
            value = self.binds[tmpl.var.name]
            if isinstance(value, Stmt):
                return [copy.deepcopy(value)]
            if isinstance(value, list):
                return [copy.deepcopy(s) for s in value]
            raise NotApplicableError(
                f"statement metavariable {tmpl.var.name!r} bound to a non-statement"
            )
        if isinstance(tmpl, ExprStmt):
            if isinstance(tmpl.expr, Call) and tmpl.expr.name == "subs":
                target, frm, to = self._subs_args(tmpl.expr)
                result = substitute(target, frm, to)
                if isinstance(result, list):
                    return result
                if isinstance(result, Stmt):
                    return [result]
                return [ExprStmt(result)]
            return [ExprStmt(self.expr(tmpl.expr), pragmas=list(tmpl.pragmas))]
        if isinstance(tmpl, Block):
            return [Block(stmts=self.stmts(tmpl.stmts), pragmas=list(tmpl.pragmas))]
        if isinstance(tmpl, For):
            return [
                For(
                    self.expr(tmpl.init) if tmpl.init is not None else None,
                    self.expr(tmpl.cond) if tmpl.cond is not None else None,
                    self.expr(tmpl.step) if tmpl.step is not None else None,
                    Block(stmts=self.stmts(tmpl.body.stmts)),
                    pragmas=list(tmpl.pragmas),
                )
            ]
        if isinstance(tmpl, If):
            return [
                If(
                    self.expr(tmpl.cond),
                    Block(stmts=self.stmts(tmpl.then.stmts)),
                    Block(stmts=self.stmts(tmpl.els.stmts)) if tmpl.els else None,
                    pragmas=list(tmpl.pragmas),
                )
            ]
        if isinstance(tmpl, Return):
            return [Return(self.expr(tmpl.value) if tmpl.value else None)]
        if isinstance(tmpl, GenIf):
            if self._gen_cond(tmpl.cond) is Tri.TRUE:
                return self.stmts(tmpl.body)
            return []
        if isinstance(tmpl, GenIfElse):
            if self._gen_cond(tmpl.cond) is Tri.TRUE:
                return self.stmts(tmpl.then)
            return self.stmts(tmpl.els)
        if isinstance(tmpl, DeclStmt):
            return [copy.deepcopy(tmpl)]
        raise NotApplicableError(f"cannot instantiate statement {type(tmpl).__name__}")

    def _gen_cond(self, cond: Expr) -> Tri:
        if isinstance(cond, Call):
            args = [_resolve_arg(a, self.binds, self.predicates) for a in cond.args]
            return self.predicates.eval(cond.name, args)
        raise RuleSyntaxError("generate conditions must be predicate calls")


# ---------------------------------------------------------------------------
# Condition evaluation


def _resolve_arg(arg, binds: Binding, predicates: Predicates):
    if isinstance(arg, Metavar):
        return binds[arg.name]
    if isinstance(arg, ListExpr):
        return [_resolve_arg(i, binds, predicates) for i in arg.items]
    if isinstance(arg, Call) and arg.name == "writes":
        inner = [_resolve_arg(a, binds, predicates) for a in arg.args]
        return predicates.eval("writes", inner)
    return _Instantiator(binds, predicates).expr(arg)


def _invariant_candidates(fragment) -> list[Expr]:
    """Distinct pure-candidate subexpressions, largest first. Bare literals
    are excluded: hoisting them saves nothing and floods the enumeration."""
    found: list[Expr] = []
    items = fragment if isinstance(fragment, list) else [fragment]
    for item in items:
        if not isinstance(item, (Expr, Stmt)):
            continue
        for node in walk(item):
            if not isinstance(node, (Binary, Unary, Call, ArrayRef, Ident)):
                continue
            if isinstance(node, Unary) and node.op in ("++", "--"):
                continue
            if any(n == node for n in found):
                continue
            found.append(node)
    found.sort(key=lambda e: -node_count(e))
    return found


def eval_conditions(
    rule: Rule, binds0: Binding, program: Program, store: AnnotationStore
) -> list[tuple[Binding, Tri]]:
    """All condition completions with their verdicts; False ones pruned.
    fresh_var binds a fresh identifier; occurs_in with an unbound first
    argument enumerates candidate subexpressions of its target."""
    predicates = Predicates(store, program)
    states: list[tuple[Binding, Tri]] = [(binds0, Tri.TRUE)]
    for term in rule.condition:
        new_states: list[tuple[Binding, Tri]] = []
        for binds, acc in states:
            if term.name == "fresh_var" and term.args[0].name not in binds:
                name = fresh_name(program, term.args[0].name, store)
                nb = dict(binds)
                nb[term.args[0].name] = Ident(name)
                new_states.append((nb, acc))
                continue
            if (
                term.name == "occurs_in"
                and isinstance(term.args[0], Metavar)
                and term.args[0].name not in binds
            ):
                target = _resolve_arg(term.args[1], binds, predicates)
                for cand in _invariant_candidates(target):
                    nb = dict(binds)
                    nb[term.args[0].name] = cand
                    new_states.append((nb, acc))
                continue
            args = [_resolve_arg(a, binds, predicates) for a in term.args]
            verdict = predicates.eval(term.name, args)
            combined = tri_and(acc, verdict)
            if combined is not Tri.FALSE:
                new_states.append((binds, combined))
        states = new_states
    return states


# ---------------------------------------------------------------------------
# Match enumeration


@dataclass
class Match:
    rule: Rule
    pos: int
    bindings: Binding
    verdict: Tri
    # statement-range site (None for expression sites)
    owner_pos: Optional[int] = None
    start: int = 0
    count: int = 0

    @property
    def is_expr_site(self) -> bool:
        return self.owner_pos is None


@dataclass
class AppCandidate:
    rule: str
    pos: int
    verdict: Tri


def _owner_and_index(program: Program, pos: int):
    parent, fld, idx = program.parent_of(pos)
    if parent is None:
        return None
    seq = stmt_list_of(parent)
    if seq is None or idx is None:
        return None
    if fld not in ("items", "stmts"):
        return None
    return parent, idx


def _matches_at(program: Program, store: AnnotationStore, rule: Rule, node, pos: int):
    """Deterministic match generator for one rule anchored at one node."""
    if rule.kind == "expr":
        if isinstance(node, Expr):
            for binds in _match_expr(rule.pattern, node, {}):
                yield from _complete(rule, binds, program, store, pos, None, 0, 0)
        return
    pattern = rule.pattern
    leading_pad = bool(pattern) and isinstance(pattern[0], CstmtsSlot) \
        and pattern[0].var.kind == "cstmts"
    if leading_pad:
        seq = stmt_list_of(node)
        if seq is None:
            return
        for binds in _match_seq(pattern, seq, {}):
            yield from _complete(rule, binds, program, store, pos, pos, 0, len(seq))
        return
    if not isinstance(node, Stmt):
        return
    home = _owner_and_index(program, pos)
    if home is None:
        return
    owner, start = home
    seq = stmt_list_of(owner)
    owner_pos = program.node_id(owner)
    for binds, used in _match_prefix(pattern, seq[start:], {}):
        yield from _complete(rule, binds, program, store, pos, owner_pos, start, used)


def _complete(rule, binds, program, store, pos, owner_pos, start, count):
    for final_binds, verdict in eval_conditions(rule, binds, program, store):
        yield Match(rule, pos, final_binds, verdict, owner_pos, start, count)


def app_rules(
    program: Program, store: AnnotationStore, rules: list[Rule]
) -> list[AppCandidate]:
    """Applicable (rule, position) candidates with three-valued verdicts.
    False verdicts are never reported; duplicates collapse, True wins."""
    table = program.node_table
    results: dict[tuple[str, int], Tri] = {}
    order: list[tuple[str, int]] = []
    for pos in sorted(table):
        node = table[pos]
        for rule in rules:
            for m in _matches_at(program, store, rule, node, pos):
                if m.verdict is Tri.FALSE:
                    continue
                key = (rule.name, pos)
                if key not in results:
                    results[key] = m.verdict
                    order.append(key)
                elif m.verdict is Tri.TRUE:
                    results[key] = Tri.TRUE
    return [AppCandidate(r, p, results[(r, p)]) for r, p in order]


# ---------------------------------------------------------------------------
# Application


@dataclass
class TransResult:
    program: Program
    store: AnnotationStore
    rule: str
    pos: int
    old_code: str
    new_code: str
    warnings: list[str] = field(default_factory=list)


def _stmt_text(s) -> str:
    pr = _Printer(include_pragmas=False)
    if isinstance(s, list):
        for item in s:
            pr.stmt(item, 0)
    else:
        pr.stmt(s, 0)
    return "\n".join(pr.lines)


def _path_of(program: Program, pos: int):
    path = []
    current = pos
    while True:
        parent, fld, idx = program.parent_of(current)
        if parent is None:
            return list(reversed(path))
        path.append((fld, idx))
        current = program.node_id(parent)


def _resolve_path(program: Program, path):
    node = program
    for fld, idx in path:
        val = getattr(node, fld, None)
        if val is None:
            return None
        node = val[idx] if idx is not None else val
    return node


def _collect_stmts(fragment) -> list[Stmt]:
    out = []
    items = fragment if isinstance(fragment, list) else [fragment]
    for item in items:
        if isinstance(item, Stmt):
            for n in walk(item):
                if isinstance(n, Stmt):
                    out.append(n)
    return out


def trans(
    program: Program,
    store: AnnotationStore,
    rule: Rule,
    pos: int,
    force_unknown: bool = False,
) -> TransResult:
    """Apply the first (deterministically ordered) match of rule at pos.

    Annotations anchored outside the rewritten region are re-anchored by
    position; annotations inside it survive only if their anchor statement
    reappears textually, otherwise they are dropped with a warning.
    """
    node = program.subtree_at(pos)
    chosen: Optional[Match] = None
    for m in _matches_at(program, store, rule, node, pos):
        if m.verdict is Tri.TRUE:
            chosen = m
            break
        if force_unknown and m.verdict is Tri.UNKNOWN and chosen is None:
            chosen = m
    if chosen is None:
        raise NotApplicableError(
            f"rule {rule.name} does not apply at position {pos}"
            + ("" if force_unknown else " with a definite verdict")
        )

    predicates = Predicates(store, program)
    inst = _Instantiator(chosen.bindings, predicates)

    warnings: list[str] = []
    generate = rule.generate
    if isinstance(generate, list) and len(generate) == 1 and isinstance(generate[0], GenList):
        alternatives = generate[0].alternatives
        new_fragment = None
        for alt in alternatives:
            try:
                new_fragment = inst.stmts(alt)
                break
            except NotApplicableError:
                continue
        if new_fragment is None:
            raise NotApplicableError(f"no instantiable consequent for rule {rule.name}")
    elif isinstance(generate, list):
        new_fragment = inst.stmts(generate)
    else:
        new_fragment = inst.expr(generate)

    # asserted properties attach to the first generated statement
    assert_lines = []
    if rule.asserts:
        from dataclasses import fields as dc_fields

        resolved_asserts = []
        for tmpl in rule.asserts:
            ann = copy.deepcopy(tmpl)
            for f in dc_fields(ann):
                val = getattr(ann, f.name)
                if isinstance(val, Expr):
                    setattr(ann, f.name, inst.expr(val))
                elif isinstance(val, list):
                    setattr(ann, f.name,
                            [inst.expr(v) if isinstance(v, Expr) else v for v in val])
            resolved_asserts.append(ann)
        assert_lines = [f"#pragma stml {prop_text(a)}" for a in resolved_asserts]
        anchor_stmt = None
        if isinstance(new_fragment, list) and new_fragment:
            anchor_stmt = new_fragment[0]
        if anchor_stmt is not None:
            anchor_stmt.pragmas = list(anchor_stmt.pragmas) + assert_lines
    else:
        resolved_asserts = []

    # -- splice ---------------------------------------------------------------
    if chosen.is_expr_site:
        old_code = expr_text(node)
        new_code = expr_text(new_fragment)
        region_node_ids = set()
        new_program = program.replace_at(pos, new_fragment)
        shift_owner = None
    else:
        owner = program.subtree_at(chosen.owner_pos)
        seq = stmt_list_of(owner)
        region = seq[chosen.start : chosen.start + chosen.count]
        region_node_ids = {program.node_id(n) for s in region for n in walk(s)}
        old_code = _stmt_text(region)
        new_code = _stmt_text(new_fragment)
        if not isinstance(new_fragment, list):
            new_fragment = [new_fragment]
        new_program = program.splice(
            chosen.owner_pos, chosen.start, chosen.count, new_fragment
        )
        shift_owner = (chosen.owner_pos, chosen.start, chosen.count, len(new_fragment))

    # -- re-anchor annotations --------------------------------------------------
    new_entries: list[Entry] = []
    claimed: set[int] = set()

    if chosen.is_expr_site:
        region_new_stmts = []
    else:
        new_owner = _resolve_path(new_program, _path_of(program, chosen.owner_pos))
        new_seq = stmt_list_of(new_owner)
        region_new_stmts = _collect_stmts(
            new_seq[chosen.start : chosen.start + len(new_fragment)]
        )

    def shifted_path(path):
        if shift_owner is None:
            return path
        owner_pos, start, count, new_len = shift_owner
        owner_path = _path_of(program, owner_pos)
        depth = len(owner_path)
        if len(path) <= depth or path[:depth] != owner_path:
            return path
        fld, idx = path[depth]
        if idx is None or idx < start:
            return path
        if idx >= start + count:
            return path[:depth] + [(fld, idx - count + new_len)] + path[depth + 1 :]

    for entry in store.entries:
        if entry.anchor not in region_node_ids:
            path = shifted_path(_path_of(program, entry.anchor))
            target = _resolve_path(new_program, path) if path is not None else None
            if target is not None and new_program.has_node(target):
                new_entries.append(
                    Entry(new_program.node_id(target), entry.ann, entry.provenance, entry.group)
                )
            else:
                warnings.append(
                    f"dropped annotation {_describe(entry)} (anchor no longer exists)"
                )
            continue
        # anchored inside the rewritten region: survive only textually
        anchor_node = program.subtree_at(entry.anchor)
        if not isinstance(anchor_node, (Stmt, FuncDef)):
            warnings.append(f"dropped annotation {_describe(entry)} (anchor rewritten)")
            continue
        anchor_text = _stmt_text(anchor_node)
        hit = None
        for cand in region_new_stmts:
            nid = new_program.node_id(cand)
            if nid in claimed:
                continue
            if _stmt_text(cand) == anchor_text:
                hit = nid
                break
        if hit is None:
            warnings.append(
                f"dropped annotation {_describe(entry)} (anchor statement rewritten)"
            )
        else:
            new_entries.append(Entry(hit, entry.ann, entry.provenance, entry.group))

    new_store = AnnotationStore(new_entries)
    if resolved_asserts:
        first_stmt = None
        if not chosen.is_expr_site and region_new_stmts:
            first_anchor = _resolve_path(
                new_program, _path_of(program, chosen.owner_pos)
            )
            seq = stmt_list_of(first_anchor)
            first_stmt = seq[chosen.start] if seq and len(seq) > chosen.start else None
        if first_stmt is not None:
            anchor_id = new_program.node_id(first_stmt)
            new_store = new_store.with_entries(
                [Entry(anchor_id, a, "rule-asserted") for a in resolved_asserts]
            )

    return TransResult(
        new_program, new_store, rule.name, pos, old_code, new_code, warnings
    )


def _describe(entry: Entry) -> str:
    try:
        return prop_text(entry.ann)
    except TypeError:
        from .annotations import polca_text

        return polca_text(entry.ann)
