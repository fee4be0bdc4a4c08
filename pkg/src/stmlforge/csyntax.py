"""AST for the supported C subset.

Nodes are plain dataclasses compared structurally; node ids are not stored
on the nodes themselves but assigned by :class:`Program` in a deterministic
pre-order walk, so the same tree always gets the same numbering and trees
can share subtrees across program versions.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, fields
from typing import Optional, Union

from .errors import CategoryMismatchError, UnknownPositionError

SCALAR_TYPES = ("int", "float", "double")


# ---------------------------------------------------------------------------
# Expressions


@dataclass
class Expr:
    pass


@dataclass
class IntLit(Expr):
    value: int


@dataclass
class FloatLit(Expr):
    value: float
    text: str = ""

    def __post_init__(self):
        if not self.text:
            self.text = repr(self.value)


@dataclass
class Ident(Expr):
    name: str


@dataclass
class ArrayRef(Expr):
    base: str
    index: Expr


@dataclass
class Unary(Expr):
    op: str  # '-', '!', '++', '--'
    operand: Expr
    prefix: bool = True


@dataclass
class Binary(Expr):
    op: Union[str, "Metavar"]  # Metavar only inside rule templates
    left: Expr
    right: Expr


@dataclass
class Assign(Expr):
    # C-style: assignment is an expression; statement use is ExprStmt(Assign).
    target: Expr
    op: str  # '=', '+=', '-=', '*='
    value: Expr


@dataclass
class Call(Expr):
    name: str
    args: list[Expr]


@dataclass
class TupleExpr(Expr):
    """Annotation-only parenthesized tuple, e.g. (v[i], c[i])."""

    items: list[Expr]


@dataclass
class ListExpr(Expr):
    """Rule-file collection literal, e.g. [s1, s2]."""

    items: list[Expr]


@dataclass
class Metavar(Expr):
    """Typed placeholder in rule templates; never appears in parsed programs."""

    name: str
    kind: str  # 'cexpr' | 'cstmt' | 'cstmts'


# ---------------------------------------------------------------------------
# Statements


@dataclass
class Stmt:
    pragmas: list[str] = field(default_factory=list, kw_only=True)
    line: int = field(default=0, kw_only=True, compare=False, repr=False)


@dataclass
class ExprStmt(Stmt):
    expr: Expr = None


@dataclass
class Declarator:
    name: str
    extent: Optional[Expr] = None  # None for scalars
    init: Optional[Expr] = None


@dataclass
class DeclStmt(Stmt):
    ctype: str = ""
    declarators: list[Declarator] = field(default_factory=list)


@dataclass
class Block(Stmt):
    stmts: list[Stmt] = field(default_factory=list)


@dataclass
class DeclInit(Expr):
    """`int i = 0` in a for-loop header; matches like the plain assignment."""

    ctype: str = ""
    name: str = ""
    value: Expr = None


@dataclass
class For(Stmt):
    init: Optional[Expr] = None  # Assign, DeclInit, or any expression
    cond: Optional[Expr] = None
    step: Optional[Expr] = None
    body: Block = field(default_factory=Block)


@dataclass
class If(Stmt):
    cond: Expr = None
    then: Block = field(default_factory=Block)
    els: Optional[Block] = None


@dataclass
class Return(Stmt):
    value: Optional[Expr] = None


@dataclass
class CstmtsSlot(Stmt):
    """Template-only: a cstmts metavariable in statement position."""

    var: Metavar = None


# ---------------------------------------------------------------------------
# Top level


@dataclass
class Param:
    ctype: str
    name: str
    is_array: bool = False


@dataclass
class FuncDef:
    rettype: str
    name: str
    params: list[Param]
    body: Block
    pragmas: list[str] = field(default_factory=list, kw_only=True)
    line: int = field(default=0, kw_only=True, compare=False, repr=False)


TopItem = Union[DeclStmt, FuncDef, Stmt]


def children(node) -> list[tuple[str, Optional[int], object]]:
    """Ordered (field, index, child) triples of AST children for a node."""
    out = []
    for f in fields(node):
        if f.name in ("pragmas", "line", "text"):
            continue
        val = getattr(node, f.name)
        if isinstance(val, (Expr, Stmt, FuncDef)):
            out.append((f.name, None, val))
        elif isinstance(val, list):
            for i, item in enumerate(val):
                if isinstance(item, (Expr, Stmt, FuncDef)):
                    out.append((f.name, i, item))
                elif isinstance(item, Declarator):
                    if item.extent is not None:
                        out.append((f.name, i, item.extent))
                    if item.init is not None:
                        out.append((f.name, i, item.init))
    return out


def walk(node):
    """Pre-order generator over a node and its descendants."""
    yield node
    for _, _, child in children(node):
        yield from walk(child)


@dataclass
class Program:
    items: list[TopItem] = field(default_factory=list)

    # Derived indexes; rebuilt on demand, never compared.
    _table: dict = field(default=None, compare=False, repr=False)
    _ids: dict = field(default=None, compare=False, repr=False)
    _parent: dict = field(default=None, compare=False, repr=False)

    @property
    def declarations(self) -> list[DeclStmt]:
        return [it for it in self.items if isinstance(it, DeclStmt)]

    @property
    def functions(self) -> list[FuncDef]:
        return [it for it in self.items if isinstance(it, FuncDef)]

    @property
    def stmts(self) -> list[Stmt]:
        return [it for it in self.items if isinstance(it, Stmt) and not isinstance(it, DeclStmt)]

    # -- node identity ------------------------------------------------------

    def _index(self):
        if self._table is not None:
            return
        table, ids, parent = {}, {}, {}
        counter = 0

        def visit(node, par, fld, idx):
            nonlocal counter
            nid = counter
            counter += 1
            table[nid] = node
            ids[id(node)] = nid
            parent[nid] = (par, fld, idx)
            for f, i, child in children(node):
                visit(child, node, f, i)

        visit(self, None, None, None)
        self._table, self._ids, self._parent = table, ids, parent

    def invalidate(self):
        self._table = self._ids = self._parent = None

    @property
    def node_table(self) -> dict[int, object]:
        self._index()
        return self._table

    def node_id(self, node) -> int:
        self._index()
        return self._ids[id(node)]

    def has_node(self, node) -> bool:
        self._index()
        return id(node) in self._ids

    def parent_of(self, pos: int):
        """(parent node, field name, index) of the node at pos."""
        self._index()
        if pos not in self._parent:
            raise UnknownPositionError(f"no node with id {pos}")
        return self._parent[pos]

    def subtree_at(self, pos: int):
        self._index()
        if pos not in self._table:
            raise UnknownPositionError(f"no node with id {pos}")
        return self._table[pos]

    # -- functional update ---------------------------------------------------

    def replace_at(self, pos: int, fragment) -> "Program":
        """New program with the node at pos replaced by fragment.

        A list of statements may replace a single statement, growing the
        enclosing statement list.
        """
        target = self.subtree_at(pos)
        if pos == 0:
            if not isinstance(fragment, Program):
                raise CategoryMismatchError("only a Program can replace the root")
            return copy.deepcopy(fragment)
        is_stmt_list = isinstance(fragment, list) and all(isinstance(s, Stmt) for s in fragment)
        if isinstance(fragment, Expr):
            if not isinstance(target, Expr):
                raise CategoryMismatchError("expression fragment at non-expression position")
        elif isinstance(fragment, Stmt) and not is_stmt_list:
            if not isinstance(target, Stmt):
                raise CategoryMismatchError("statement fragment at non-statement position")
        elif is_stmt_list:
            if not isinstance(target, Stmt):
                raise CategoryMismatchError("statement sequence cannot replace an expression")
        else:
            raise CategoryMismatchError(f"unsupported fragment {type(fragment).__name__}")

        new = Program(copy.deepcopy(self.items))
        old = new.subtree_at(pos)  # deepcopy preserves the pre-order numbering
        par, fld, idx = new.parent_of(pos)
        fragment = copy.deepcopy(fragment)
        if is_stmt_list:
            seq = getattr(par, fld)
            if idx is None or not all(isinstance(s, Stmt) for s in seq):
                raise CategoryMismatchError("sequence fragment needs a statement-list slot")
            seq[idx : idx + 1] = fragment
        elif isinstance(par, DeclStmt):
            for d in par.declarators:
                if d.extent is old:
                    d.extent = fragment
                elif d.init is old:
                    d.init = fragment
        elif idx is None:
            setattr(par, fld, fragment)
        else:
            getattr(par, fld)[idx] = fragment
        new.invalidate()
        return new

    def splice(self, owner_pos: int, start: int, count: int, new_stmts: list[Stmt]) -> "Program":
        """New program with stmts[start:start+count] of the list owner at
        owner_pos replaced by new_stmts. The owner is the Program itself
        (pos 0) or a Block."""
        new = Program(copy.deepcopy(self.items))
        owner = new.subtree_at(owner_pos)
        if isinstance(owner, Program):
            seq = owner.items
        elif isinstance(owner, Block):
            seq = owner.stmts
        else:
            raise CategoryMismatchError("splice target must own a statement list")
        seq[start : start + count] = copy.deepcopy(new_stmts)
        new.invalidate()
        return new


def stmt_list_of(node):
    """The statement list a node owns, or None."""
    if isinstance(node, Program):
        return node.items
    if isinstance(node, Block):
        return node.stmts
    return None


def identifiers(node) -> set[str]:
    """Every identifier-ish name occurring in a subtree."""
    names = set()
    for n in walk(node):
        if isinstance(n, Ident):
            names.add(n.name)
        elif isinstance(n, ArrayRef):
            names.add(n.base)
        elif isinstance(n, Call):
            names.add(n.name)
        elif isinstance(n, DeclInit):
            names.add(n.name)
        elif isinstance(n, DeclStmt):
            names.update(d.name for d in n.declarators)
        elif isinstance(n, FuncDef):
            names.add(n.name)
            names.update(p.name for p in n.params)
    return names


def node_count(node) -> int:
    return sum(1 for _ in walk(node))


def is_lvalue(e: Expr) -> bool:
    return isinstance(e, (Ident, ArrayRef))
