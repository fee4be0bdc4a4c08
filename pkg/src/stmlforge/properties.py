"""Syntactic effect analysis and the three-valued predicate vocabulary.

Write/read sets are sound over-approximations: a call to a function with no
purity or write-set annotation marks the set unknown, and unknown sets never
produce a definite "no". Array locations are compared under the subset's
alias-freedom guarantee (distinct array names never overlap).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Union

from .annotations import AnnotationStore
from .cprint import expr_text
from .csyntax import (
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
    Ident,
    If,
    IntLit,
    Metavar,
    Return,
    Stmt,
    Unary,
    children,
    walk,
)
from .errors import UnknownPredicateError


class Tri(enum.Enum):
    TRUE = "True"
    FALSE = "False"
    UNKNOWN = "Unknown"

    def __bool__(self):
        raise TypeError("three-valued verdicts do not coerce to bool")


def tri_and(*values: Tri) -> Tri:
    if any(v is Tri.FALSE for v in values):
        return Tri.FALSE
    if any(v is Tri.UNKNOWN for v in values):
        return Tri.UNKNOWN
    return Tri.TRUE


def tri_or(*values: Tri) -> Tri:
    if any(v is Tri.TRUE for v in values):
        return Tri.TRUE
    if any(v is Tri.UNKNOWN for v in values):
        return Tri.UNKNOWN
    return Tri.FALSE


def tri_not(v: Tri) -> Tri:
    if v is Tri.TRUE:
        return Tri.FALSE
    if v is Tri.FALSE:
        return Tri.TRUE
    return Tri.UNKNOWN


def tri_of(b: bool) -> Tri:
    return Tri.TRUE if b else Tri.FALSE


# ---------------------------------------------------------------------------
# Index arithmetic


def normalize_index(e: Expr) -> Expr:
    """Value of an index expression with ++/-- side effects stripped.

    Post-increment reads the old value; pre-increment reads base±1. The write
    effect of the operator is accounted for separately by the effect walk.
    """
    if isinstance(e, Unary) and e.op in ("++", "--"):
        base = normalize_index(e.operand)
        if not e.prefix:
            return base
        delta = IntLit(1)
        return Binary("+" if e.op == "++" else "-", base, delta)
    if isinstance(e, Binary):
        return Binary(e.op, normalize_index(e.left), normalize_index(e.right))
    if isinstance(e, Unary):
        return Unary(e.op, normalize_index(e.operand), e.prefix)
    return e


def affine_of(e: Expr) -> Optional[tuple[Optional[str], int]]:
    """(var, k) when e is var+k / var-k / a constant (var None); else None."""
    e = normalize_index(e)
    if isinstance(e, IntLit):
        return (None, e.value)
    if isinstance(e, Ident):
        return (e.name, 0)
    if isinstance(e, Unary) and e.op == "-":
        sub = affine_of(e.operand)
        if sub is not None and sub[0] is None:
            return (None, -sub[1])
        return None
    if isinstance(e, Binary) and e.op in ("+", "-"):
        left, right = affine_of(e.left), affine_of(e.right)
        if left is None or right is None:
            return None
        sign = 1 if e.op == "+" else -1
        if right[0] is None:
            return (left[0], left[1] + sign * right[1])
        if left[0] is None and e.op == "+":
            return (right[0], left[1] + right[1])
        return None
    return None


# ---------------------------------------------------------------------------
# Location sets


@dataclass
class LocationSet:
    scalars: set[str] = field(default_factory=set)
    elems: list[tuple[str, Expr]] = field(default_factory=list)
    unknown: bool = False

    def add_scalar(self, name: str):
        self.scalars.add(name)

    def add_elem(self, arr: str, index: Expr):
        index = normalize_index(index)
        if not any(a == arr and ix == index for a, ix in self.elems):
            self.elems.append((arr, index))

    def array_names(self) -> set[str]:
        return {a for a, _ in self.elems}

    def union(self, other: "LocationSet") -> "LocationSet":
        out = LocationSet(set(self.scalars), list(self.elems), self.unknown or other.unknown)
        out.scalars |= other.scalars
        for a, ix in other.elems:
            out.add_elem(a, ix)
        return out

    def is_empty_known(self) -> bool:
        return not self.unknown and not self.scalars and not self.elems

    def locations(self):
        for s in sorted(self.scalars):
            yield ("s", s)
        for a, ix in self.elems:
            yield ("e", a, ix)

    def text(self) -> str:
        parts = sorted(self.scalars) + [f"{a}[{expr_text(ix)}]" for a, ix in self.elems]
        if self.unknown:
            parts.append("?")
        return "{" + ", ".join(parts) + "}"


def loc_eq(a, b) -> Tri:
    """Can two locations be the same memory cell?"""
    if a[0] != b[0]:
        return Tri.FALSE  # scalars never alias array elements in the subset
    if a[0] == "s":
        return tri_of(a[1] == b[1])
    if a[1] != b[1]:
        return Tri.FALSE  # distinct arrays never alias
    ia, ib = a[2], b[2]
    if ia == ib:
        return Tri.TRUE
    fa, fb = affine_of(ia), affine_of(ib)
    if fa is not None and fb is not None and fa[0] == fb[0]:
        return tri_of(fa[1] == fb[1])
    return Tri.UNKNOWN


def disjoint(a: LocationSet, b: LocationSet) -> Tri:
    if a.is_empty_known() or b.is_empty_known():
        return Tri.TRUE
    verdict = Tri.TRUE
    for la in a.locations():
        for lb in b.locations():
            eq = loc_eq(la, lb)
            if eq is Tri.TRUE:
                return Tri.FALSE
            if eq is Tri.UNKNOWN:
                verdict = Tri.UNKNOWN
    if a.unknown or b.unknown:
        return Tri.UNKNOWN
    return verdict


def subset_of(a: LocationSet, b: LocationSet) -> Tri:
    if a.is_empty_known():
        return Tri.TRUE
    if a.unknown or b.unknown:
        return Tri.UNKNOWN
    verdict = Tri.TRUE
    for la in a.locations():
        hit = Tri.FALSE
        for lb in b.locations():
            hit = tri_or(hit, loc_eq(la, lb))
        if hit is Tri.FALSE:
            return Tri.FALSE
        verdict = tri_and(verdict, hit)
    return verdict


# ---------------------------------------------------------------------------
# Effect analysis

Fragment = Union[Expr, Stmt, list]


class Analyzer:
    """Read/write sets and loop offsets for fragments, informed by the
    annotation store for calls and operators."""

    def __init__(self, store: Optional[AnnotationStore] = None):
        self.store = store or AnnotationStore()

    # -- effect walk ----------------------------------------------------------

    def write_set(self, frag: Fragment) -> LocationSet:
        out = LocationSet()
        self._effects(frag, out, LocationSet())
        return out

    def read_set(self, frag: Fragment) -> LocationSet:
        out = LocationSet()
        self._effects(frag, LocationSet(), out)
        return out

    def effects(self, frag: Fragment) -> tuple[LocationSet, LocationSet]:
        w, r = LocationSet(), LocationSet()
        self._effects(frag, w, r)
        return w, r

    def _read_lvalue(self, e: Expr, reads: LocationSet):
        if isinstance(e, Ident):
            reads.add_scalar(e.name)
        elif isinstance(e, ArrayRef):
            reads.add_elem(e.base, e.index)

    def _write_lvalue(self, e: Expr, writes: LocationSet, reads: LocationSet):
        if isinstance(e, Ident):
            writes.add_scalar(e.name)
        elif isinstance(e, ArrayRef):
            writes.add_elem(e.base, e.index)
            self._effects(e.index, writes, reads)  # indexing reads the index
        else:
            writes.unknown = True

    def _effects(self, frag, writes: LocationSet, reads: LocationSet):
        if frag is None:
            return
        if isinstance(frag, list):
            for item in frag:
                self._effects(item, writes, reads)
            return
        if isinstance(frag, str):  # bound operator symbol: pure
            return
        if isinstance(frag, Metavar):
            # Unbound template piece: no concrete effects to report.
            return
        if isinstance(frag, Expr):
            self._expr_effects(frag, writes, reads)
            return
        if isinstance(frag, ExprStmt):
            self._effects(frag.expr, writes, reads)
        elif isinstance(frag, Block):
            self._effects(frag.stmts, writes, reads)
        elif isinstance(frag, DeclStmt):
            for d in frag.declarators:
                if d.extent is not None:
                    self._effects(d.extent, writes, reads)
                if d.init is not None:
                    writes.add_scalar(d.name)
                    self._effects(d.init, writes, reads)
        elif isinstance(frag, For):
            self._effects(frag.init, writes, reads)
            self._effects(frag.cond, writes, reads)
            self._effects(frag.step, writes, reads)
            self._effects(frag.body, writes, reads)
        elif isinstance(frag, If):
            self._effects(frag.cond, writes, reads)
            self._effects(frag.then, writes, reads)
            self._effects(frag.els, writes, reads)
        elif isinstance(frag, Return):
            self._effects(frag.value, writes, reads)
        else:
            writes.unknown = True
            reads.unknown = True

    def _expr_effects(self, e: Expr, writes: LocationSet, reads: LocationSet):
        if isinstance(e, Ident):
            reads.add_scalar(e.name)
            return
        if isinstance(e, (IntLit, FloatLit)):
            return
        if isinstance(e, ArrayRef):
            reads.add_elem(e.base, e.index)
            self._effects(e.index, writes, reads)
            return
        if isinstance(e, Unary):
            if e.op in ("++", "--"):
                self._write_lvalue(e.operand, writes, reads)
                self._read_lvalue(e.operand, reads)
                if isinstance(e.operand, ArrayRef):
                    self._effects(e.operand.index, writes, reads)
            else:
                self._effects(e.operand, writes, reads)
            return
        if isinstance(e, Binary):
            self._effects(e.left, writes, reads)
            self._effects(e.right, writes, reads)
            return
        if isinstance(e, Assign):
            self._write_lvalue(e.target, writes, reads)
            if e.op != "=":
                self._read_lvalue(e.target, reads)
            self._effects(e.value, writes, reads)
            return
        if isinstance(e, DeclInit):
            writes.add_scalar(e.name)
            self._effects(e.value, writes, reads)
            return
        if isinstance(e, Call):
            for a in e.args:
                self._effects(a, writes, reads)
            if self.store.pure_annotated(e.name):
                return
            annotated = self.store.writeset_annotated(e.name)
            if annotated is not None:
                for loc in annotated:
                    if isinstance(loc, Ident):
                        writes.add_scalar(loc.name)
                    elif isinstance(loc, ArrayRef):
                        writes.add_elem(loc.base, loc.index)
                reads.unknown = True
                return
            writes.unknown = True
            reads.unknown = True
            return
        # TupleExpr and other annotation-level forms: recurse into children.
        for _, _, child in children(e):
            self._effects(child, writes, reads)

    # -- loops ---------------------------------------------------------------

    def canonical_loop(self, loop: For) -> Optional[str]:
        """Index variable of a canonical loop (assigned init, comparison
        bound, unit step); None when the shape does not match."""
        if not isinstance(loop, For):
            return None
        init = loop.init
        if isinstance(init, DeclInit):
            var = init.name
        elif isinstance(init, Assign) and init.op == "=" and isinstance(init.target, Ident):
            var = init.target.name
        else:
            return None
        cond = loop.cond
        if not (
            isinstance(cond, Binary)
            and cond.op in ("<", "<=", ">", ">=")
            and isinstance(cond.left, Ident)
            and cond.left.name == var
        ):
            return None
        step = loop.step
        if isinstance(step, Unary) and step.op in ("++", "--"):
            if not (isinstance(step.operand, Ident) and step.operand.name == var):
                return None
        elif isinstance(step, Assign) and isinstance(step.target, Ident) and step.target.name == var:
            if step.op in ("+=", "-="):
                if step.value != IntLit(1):
                    return None
            elif step.op == "=":
                v = step.value
                if not (
                    isinstance(v, Binary)
                    and v.op in ("+", "-")
                    and v.left == Ident(var)
                    and v.right == IntLit(1)
                ):
                    return None
            else:
                return None
        else:
            return None
        return var

    def fragment_offsets(self, frag: Fragment, var: str, arr: str, mode: str) -> Optional[list[int]]:
        """Constant offsets k of arr[var+k] accesses in frag under mode
        ('read' | 'write'); None when some access of arr under that mode is
        not affine in var."""
        w, r = self.effects(frag)
        src = w if mode == "write" else r
        offs = set()
        for a, ix in src.elems:
            if a != arr:
                continue
            form = affine_of(ix)
            if form is None or form[0] != var:
                return None
            offs.add(form[1])
        if src.unknown:
            return None
        return sorted(offs) if offs else None

    def loop_offsets(self, loop: For, arr: str, mode: str) -> Optional[list[int]]:
        var = self.canonical_loop(loop)
        if var is None:
            return None
        return self.fragment_offsets(loop.body, var, arr, mode)


# ---------------------------------------------------------------------------
# Predicates

ARITH_OPS = ("+", "-", "*", "/", "%")
COMPARE_OPS = ("<", "<=", ">", ">=", "==", "!=", "&&", "||")
DISTRIBUTIVE_PAIRS = {("*", "+"), ("*", "-")}

PREDICATE_NAMES = (
    "no_write",
    "no_write_except_arrays",
    "no_write_prev_arrays",
    "no_read",
    "pure",
    "writes",
    "distributes_over",
    "occurs_in",
    "fresh_var",
    "is_identity",
    "is_assignment",
    "is_subseteq",
)


def _contains_var(e: Expr, var: str) -> bool:
    return any(isinstance(n, Ident) and n.name == var for n in walk(e))


class Predicates:
    """Evaluator for rule-condition predicates over bound fragments."""

    def __init__(self, store: Optional[AnnotationStore] = None, program=None):
        self.store = store or AnnotationStore()
        self.analyzer = Analyzer(self.store)
        self.program = program

    # args arrive resolved: fragments, operator strings, or lists of those.

    def eval(self, name: str, args: list) -> Tri:
        method = getattr(self, f"p_{name}", None)
        if method is None:
            raise UnknownPredicateError(f"unknown predicate {name!r}")
        return method(*args)

    def _reads_of(self, x) -> LocationSet:
        if isinstance(x, list):
            out = LocationSet()
            for item in x:
                out = out.union(self._reads_of(item))
            return out
        return self.analyzer.read_set(x)

    def _writes_of(self, x) -> LocationSet:
        if isinstance(x, list):
            out = LocationSet()
            for item in x:
                out = out.union(self._writes_of(item))
            return out
        if isinstance(x, LocationSet):
            return x
        return self.analyzer.write_set(x)

    def _denoted_locs(self, y) -> LocationSet:
        """Locations y stands for as a target: the lvalue's own cell, plus
        anything y writes as a side effect."""
        out = self._writes_of(y)
        items = y if isinstance(y, list) else [y]
        for item in items:
            if isinstance(item, Ident):
                out = out.union(LocationSet(scalars={item.name}))
            elif isinstance(item, ArrayRef):
                elem = LocationSet()
                elem.add_elem(item.base, item.index)
                out = out.union(elem)
        return out

    def p_no_write(self, x, y) -> Tri:
        return disjoint(self._writes_of(x), self._reads_of(y))

    def p_no_read(self, x, y) -> Tri:
        return disjoint(self._reads_of(x), self._denoted_locs(y))

    def p_no_write_except_arrays(self, x, y, idx) -> Tri:
        var = idx.name if isinstance(idx, Ident) else None
        w = self._writes_of(x)
        filtered = LocationSet(set(w.scalars), [], w.unknown)
        for arr, ix in w.elems:
            if var is not None and _contains_var(ix, var):
                continue
            filtered.add_elem(arr, ix)
        return disjoint(filtered, self._reads_of(y))

    def p_no_write_prev_arrays(self, x, y, idx) -> Tri:
        """Array writes in x indexed through idx never target positions
        earlier than array reads in y indexed through idx.

        Conservative reading: every write offset in x is >= every read
        offset in y, for each array both sides touch."""
        var = idx.name if isinstance(idx, Ident) else None
        if var is None:
            return Tri.UNKNOWN
        wset = self._writes_of(x)
        rset = self._reads_of(y)
        shared = wset.array_names() & rset.array_names()
        verdict = Tri.TRUE
        for arr in sorted(shared):
            woffs = self.analyzer.fragment_offsets(x, var, arr, "write")
            roffs = self.analyzer.fragment_offsets(y, var, arr, "read")
            if woffs is None or roffs is None:
                verdict = tri_and(verdict, Tri.UNKNOWN)
                continue
            ok = all(w >= r for w in woffs for r in roffs)
            verdict = tri_and(verdict, tri_of(ok))
        if wset.unknown or rset.unknown:
            verdict = tri_and(verdict, Tri.UNKNOWN)
        return verdict

    def p_pure(self, x) -> Tri:
        if isinstance(x, str):  # operator symbol
            if x in ARITH_OPS + COMPARE_OPS:
                return Tri.TRUE
            return tri_of(self.store.pure_annotated(x))
        if isinstance(x, Expr) and self.store.pure_annotated(x):
            return Tri.TRUE
        w = self._writes_of(x)
        if w.unknown:
            return Tri.UNKNOWN
        if w.scalars or w.elems:
            return Tri.FALSE
        return Tri.TRUE

    def p_writes(self, x) -> LocationSet:
        return self._writes_of(x)

    def p_distributes_over(self, g, f) -> Tri:
        gname = g if isinstance(g, str) else (g.name if isinstance(g, Ident) else None)
        fname = f if isinstance(f, str) else (f.name if isinstance(f, Ident) else None)
        if gname is None or fname is None:
            return Tri.UNKNOWN
        if (gname, fname) in DISTRIBUTIVE_PAIRS:
            return Tri.TRUE
        if self.store.distributes_annotated(gname, fname):
            return Tri.TRUE
        if gname in ARITH_OPS and fname in ARITH_OPS:
            return Tri.FALSE
        return Tri.UNKNOWN

    def p_occurs_in(self, e, frag) -> Tri:
        items = frag if isinstance(frag, list) else [frag]
        for item in items:
            if isinstance(item, str):
                continue
            for node in walk(item):
                if node == e:
                    return Tri.TRUE
        return Tri.FALSE

    def p_fresh_var(self, e) -> Tri:
        if not isinstance(e, Ident) or self.program is None:
            return Tri.UNKNOWN
        from .csyntax import identifiers

        used = identifiers(self.program)
        return tri_of(e.name not in used)

    def p_is_identity(self, e) -> Tri:
        if isinstance(e, Expr) and self.store.identity_annotated(e):
            return Tri.TRUE
        if isinstance(e, IntLit):
            return tri_of(e.value in (0, 1))
        return Tri.UNKNOWN

    def p_is_assignment(self, e) -> Tri:
        if isinstance(e, ExprStmt):
            e = e.expr
        return tri_of(isinstance(e, Assign))

    def p_is_subseteq(self, a, b) -> Tri:
        left = a if isinstance(a, LocationSet) else self._denoted_locs(a)
        right = b if isinstance(b, LocationSet) else self._denoted_locs(b)
        return subset_of(left, right)
