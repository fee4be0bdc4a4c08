"""POLCA skeleton pragmas and STML property pragmas.

Raw pragma lines are attached to AST nodes by the parser; this module turns
them into typed annotations anchored by node id, expands the high-level
skeletons into their STML property sets, merges externally supplied
properties under the user-preference policy, and re-emits pragma text.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

from .cparse import Parser, tokenize
from .cprint import expr_text
from .csyntax import ArrayRef, Call, Expr, For, FuncDef, Ident, IntLit, Program, Stmt, walk
from .errors import PragmaError

# ---------------------------------------------------------------------------
# Annotation value types


@dataclass
class PolcaMap:
    fn: str
    input: Expr
    output: Expr


@dataclass
class PolcaFold:
    fn: str
    init: Expr
    input: Expr
    acc: Expr


@dataclass
class PolcaItn:
    fn: str
    init: Expr
    count: Expr
    output: Expr


@dataclass
class PolcaZipWith:
    fn: str
    in1: Expr
    in2: Expr
    output: Expr


@dataclass
class PolcaScanl:
    fn: str
    init: Expr
    input: Expr
    output: Expr


@dataclass
class PolcaDef:
    name: str


@dataclass
class PolcaInput:
    expr: Expr


@dataclass
class PolcaOutput:
    expr: Expr


@dataclass
class PolcaPlatform:
    target: str


PolcaAnnotation = Union[
    PolcaMap, PolcaFold, PolcaItn, PolcaZipWith, PolcaScanl,
    PolcaDef, PolcaInput, PolcaOutput, PolcaPlatform,
]

SKELETONS = (PolcaMap, PolcaFold, PolcaItn, PolcaZipWith, PolcaScanl)


@dataclass
class Appears:
    expr: Expr


@dataclass
class Pure:
    expr: Expr


@dataclass
class IsIdentity:
    expr: Expr


@dataclass
class Commutative:
    op: str


@dataclass
class Associative:
    op: str


@dataclass
class DistributesOver:
    op: str
    over: str


@dataclass
class WriteSetEq:
    expr: Expr
    locations: list[Expr]  # Ident or ArrayRef


@dataclass
class Reads:
    expr: Expr
    offsets: Optional[list[int]] = None


@dataclass
class Writes:
    expr: Expr
    offsets: Optional[list[int]] = None


@dataclass
class Rw:
    expr: Expr
    offsets: Optional[list[int]] = None


@dataclass
class SameLength:
    a: Expr
    b: Expr


@dataclass
class OutputOf:
    expr: Expr


@dataclass
class IterationSpace:
    lo: Expr
    hi: Expr


@dataclass
class IterationIndependent:
    pass


StmlProperty = Union[
    Appears, Pure, IsIdentity, Commutative, Associative, DistributesOver,
    WriteSetEq, Reads, Writes, Rw, SameLength, OutputOf, IterationSpace,
    IterationIndependent,
]

MEM_ACCESS = {"writes": Writes, "reads": Reads, "rw": Rw}
EXP_PROPS = {"appears": Appears, "pure": Pure, "is_identity": IsIdentity}
OP_TOKENS = ("+", "-", "*", "/", "%", "&&", "||", "<", "<=", ">", ">=", "==", "!=")


# ---------------------------------------------------------------------------
# Store


@dataclass
class Entry:
    anchor: int
    ann: Union[PolcaAnnotation, StmlProperty]
    provenance: str = "user"  # user | expanded | external | rule-asserted
    group: Optional[int] = None  # reads-sugar grouping for emission


@dataclass
class AnnotationStore:
    entries: list[Entry] = field(default_factory=list)

    def by_node(self, anchor: int) -> list:
        return [e.ann for e in self.entries if e.anchor == anchor]

    def entries_at(self, anchor: int) -> list[Entry]:
        return [e for e in self.entries if e.anchor == anchor]

    def has(self, anchor: int, ann) -> bool:
        return any(e.anchor == anchor and e.ann == ann for e in self.entries)

    def with_entries(self, new: list[Entry]) -> "AnnotationStore":
        """New store with `new` appended; structurally duplicate
        (anchor, annotation) pairs are dropped, keeping the first."""
        out = list(self.entries)
        for e in new:
            if not any(o.anchor == e.anchor and o.ann == e.ann for o in out):
                out.append(e)
        return AnnotationStore(out)

    # -- name-keyed global facts (purity, operator algebra) ------------------

    def pure_annotated(self, expr_or_name) -> bool:
        if isinstance(expr_or_name, str):
            expr_or_name = Ident(expr_or_name)
        return any(isinstance(e.ann, Pure) and e.ann.expr == expr_or_name for e in self.entries)

    def writeset_annotated(self, name: str) -> Optional[list[Expr]]:
        for e in self.entries:
            a = e.ann
            if isinstance(a, WriteSetEq) and a.expr == Ident(name):
                return a.locations
        return None

    def distributes_annotated(self, op: str, over: str) -> bool:
        return any(
            isinstance(e.ann, DistributesOver) and e.ann.op == op and e.ann.over == over
            for e in self.entries
        )

    def identity_annotated(self, expr: Expr) -> bool:
        return any(isinstance(e.ann, IsIdentity) and e.ann.expr == expr for e in self.entries)

    def platform_target(self) -> Optional[str]:
        for e in self.entries:
            if isinstance(e.ann, PolcaPlatform):
                return e.ann.target
        return None


# ---------------------------------------------------------------------------
# Pragma line parsing


class _PragmaParser:
    def __init__(self, line: str):
        self.line = line
        body = line.strip()
        if not body.startswith("#pragma"):
            raise PragmaError(f"not a pragma line: {line!r}")
        self.toks = tokenize(body[len("#pragma") :])
        self.parser = Parser(self.toks, annotation_mode=True)

    def fail(self, why: str):
        raise PragmaError(f"{why} in pragma {self.line.strip()!r}")

    def next_id(self, what="identifier") -> str:
        t = self.parser.next()
        if t.kind != "id":
            self.fail(f"expected {what}, found {t.value!r}")
        return t.value

    def expr(self) -> Expr:
        try:
            return self.parser.parse_expr()
        except Exception as exc:
            self.fail(f"bad expression ({exc})")

    def op_token(self) -> str:
        t = self.parser.next()
        if t.kind == "punct" and t.value in OP_TOKENS:
            return t.value
        if t.kind == "id":
            return t.value
        self.fail(f"expected an operator, found {t.value!r}")

    def done(self):
        t = self.parser.peek()
        if t.kind != "eof":
            self.fail(f"trailing tokens starting at {t.value!r}")

    def offsets(self) -> list[int]:
        self.parser.expect("{")
        vals = []
        while True:
            sign = 1
            if self.parser.at("-"):
                self.parser.next()
                sign = -1
            elif self.parser.at("+"):
                self.parser.next()
            t = self.parser.next()
            if t.kind != "int":
                self.fail(f"expected an integer offset, found {t.value!r}")
            vals.append(sign * int(t.value))
            if self.parser.at(","):
                self.parser.next()
                continue
            break
        self.parser.expect("}")
        if not vals:
            self.fail("empty offset list")
        return sorted(set(vals))

    def location(self) -> Expr:
        e = self.expr()
        if not isinstance(e, (Ident, ArrayRef)):
            self.fail("memory locations must be variables or array elements")
        return e

    # -- dispatch -------------------------------------------------------------

    def parse(self) -> list[tuple[object, bool]]:
        """Returns [(annotation, grouped)]; grouped marks reads-sugar members."""
        ns = self.next_id("pragma namespace")
        if ns == "polca":
            return [(self.parse_polca(), False)]
        if ns == "stml":
            return self.parse_stml()
        self.fail(f"unknown pragma namespace {ns!r}")

    def parse_polca(self):
        kw = self.next_id("polca keyword")
        if kw == "map":
            ann = PolcaMap(self.next_id("body name"), self.expr(), self.expr())
        elif kw == "fold":
            ann = PolcaFold(self.next_id("body name"), self.expr(), self.expr(), self.expr())
        elif kw == "itn":
            ann = PolcaItn(self.next_id("body name"), self.expr(), self.expr(), self.expr())
        elif kw == "zipWith":
            ann = PolcaZipWith(self.next_id("body name"), self.expr(), self.expr(), self.expr())
        elif kw == "scanl":
            ann = PolcaScanl(self.next_id("body name"), self.expr(), self.expr(), self.expr())
        elif kw == "def":
            ann = PolcaDef(self.next_id("body name"))
        elif kw == "input":
            ann = PolcaInput(self.expr())
        elif kw == "output":
            ann = PolcaOutput(self.expr())
        else:
            # A single bare word names the destination platform (`polca mpi`).
            ann = PolcaPlatform(kw)
        self.done()
        return ann

    def parse_stml(self):
        p = self.parser
        t = p.peek()
        if t.kind == "id" and t.value in EXP_PROPS:
            p.next()
            ann = EXP_PROPS[t.value](self.expr())
            self.done()
            return [(ann, False)]
        if t.kind == "id" and t.value in ("commutative", "associative"):
            p.next()
            cls = Commutative if t.value == "commutative" else Associative
            ann = cls(self.op_token())
            self.done()
            return [(ann, False)]
        if t.kind == "id" and t.value in MEM_ACCESS:
            p.next()
            return self.parse_mem_access(MEM_ACCESS[t.value])
        if t.kind == "id" and t.value == "write":
            p.next()
            p.expect("(")
            expr = self.expr()
            p.expect(")")
            p.expect("=")
            p.expect("{")
            locs = [self.location()]
            while p.at(","):
                p.next()
                locs.append(self.location())
            p.expect("}")
            self.done()
            return [(WriteSetEq(expr, locs), False)]
        if t.kind == "id" and t.value == "same_length":
            p.next()
            ann = SameLength(self.expr(), self.expr())
            self.done()
            return [(ann, False)]
        if t.kind == "id" and t.value == "output":
            p.next()
            p.expect("(")
            ann = OutputOf(self.expr())
            p.expect(")")
            self.done()
            return [(ann, False)]
        if t.kind == "id" and t.value == "iteration_space":
            p.next()
            ann = IterationSpace(self.expr(), self.expr())
            self.done()
            return [(ann, False)]
        if t.kind == "id" and t.value == "iteration_independent":
            p.next()
            self.done()
            return [(IterationIndependent(), False)]
        # leading-operator form: <op> distributes_over <op>
        op = self.op_token()
        kw = self.next_id("operator property")
        if kw != "distributes_over":
            self.fail(f"unknown property {kw!r}")
        ann = DistributesOver(op, self.op_token())
        self.done()
        return [(ann, False)]

    def parse_mem_access(self, cls):
        p = self.parser
        # Parenthesized multi-target sugar: reads (v in {0}, c in {0})
        if p.at("("):
            save = p.pos
            p.next()
            try:
                first = self.expr()
            except PragmaError:
                first = None
            if first is not None and p.at_id("in"):
                anns = []
                expr = first
                while True:
                    p.next()  # 'in'
                    anns.append((cls(expr, self.offsets()), True))
                    if p.at(","):
                        p.next()
                        expr = self.expr()
                        if not p.at_id("in"):
                            self.fail("each sugar component needs 'in {offsets}'")
                        continue
                    break
                p.expect(")")
                self.done()
                return anns
            p.pos = save  # plain parenthesized expression after all
        expr = self.expr()
        offsets = None
        if p.at_id("in"):
            p.next()
            offsets = self.offsets()
        self.done()
        return [(cls(expr, offsets), False)]


def parse_pragma_line(line: str) -> list[tuple[object, bool]]:
    return _PragmaParser(line).parse()


# ---------------------------------------------------------------------------
# Store construction and expansion


def parse_pragmas(program: Program) -> AnnotationStore:
    entries = []
    group_counter = 0
    for node in walk(program):
        if not isinstance(node, (Stmt, FuncDef)) or not node.pragmas:
            continue
        anchor = program.node_id(node)
        for line in node.pragmas:
            parsed = parse_pragma_line(line)
            group = None
            if any(grouped for _, grouped in parsed):
                group_counter += 1
                group = group_counter
            for ann, grouped in parsed:
                entries.append(Entry(anchor, ann, "user", group if grouped else None))
    return AnnotationStore(entries)


def _length_of(expr: Expr) -> Expr:
    return Call("length", [expr])


def _reads_components(expr: Expr) -> list[Expr]:
    """`zip(a, b)` in a skeleton input position reads each component."""
    if isinstance(expr, Call) and expr.name == "zip":
        return list(expr.args)
    return [expr]


def skeleton_expansion(ann) -> list[tuple[object, bool]]:
    """Table of STML properties implied by one skeleton annotation.

    Returns (property, grouped) pairs; grouped marks reads that came from a
    zip input and are emitted with the parenthesized sugar.
    """
    if isinstance(ann, PolcaMap):
        comps = _reads_components(ann.input)
        grouped = len(comps) > 1
        out = [(Reads(c, [0]), grouped) for c in comps]
        out += [
            (Writes(ann.output, [0]), False),
            (SameLength(ann.input, ann.output), False),
            (Pure(Ident(ann.fn)), False),
            (IterationSpace(IntLit(0), _length_of(ann.input)), False),
            (IterationIndependent(), False),
        ]
        return out
    if isinstance(ann, PolcaFold):
        return [
            (Reads(ann.input, [0]), False),
            (Reads(Call("output", [ann.init])), False),
            (Writes(ann.acc), False),
            (Pure(Ident(ann.fn)), False),
            (IterationSpace(IntLit(0), _length_of(ann.input)), False),
        ]
    if isinstance(ann, PolcaItn):
        return [
            (Reads(Call("output", [ann.init])), False),
            (Reads(ann.count), False),
            (Writes(ann.output), False),
            (Pure(Ident(ann.fn)), False),
            (IterationSpace(IntLit(0), ann.count), False),
        ]
    if isinstance(ann, PolcaZipWith):
        return [
            (Reads(ann.in1, [0]), False),
            (Reads(ann.in2, [0]), False),
            (Writes(ann.output, [0]), False),
            (SameLength(ann.in1, ann.in2), False),
            (SameLength(ann.in1, ann.output), False),
            (Pure(Ident(ann.fn)), False),
            (IterationSpace(IntLit(0), _length_of(ann.in1)), False),
            (IterationIndependent(), False),
        ]
    if isinstance(ann, PolcaScanl):
        return [
            (Reads(Call("output", [ann.init])), False),
            (Reads(ann.input, [0]), False),
            (Reads(ann.output, [0]), False),
            (Writes(ann.output, [1]), False),
            (Pure(Ident(ann.fn)), False),
            (IterationSpace(IntLit(0), _length_of(ann.input)), False),
        ]
    raise TypeError(f"not a skeleton annotation: {ann}")


def expand_polca(program: Program, store: AnnotationStore) -> AnnotationStore:
    """Add the STML expansion of every skeleton annotation, provenance
    'expanded'. Idempotent: already-present properties are not duplicated."""
    out: list[Entry] = []
    seen = [(e.anchor, e.ann) for e in store.entries]
    group_counter = max((e.group or 0 for e in store.entries), default=0)
    for entry in store.entries:
        out.append(entry)
        if not isinstance(entry.ann, SKELETONS):
            continue
        anchor_node = program.subtree_at(entry.anchor)
        if not isinstance(anchor_node, For):
            raise PragmaError(
                f"skeleton annotation {type(entry.ann).__name__[5:].lower()} "
                f"must anchor on a for-loop"
            )
        expansion = skeleton_expansion(entry.ann)
        fresh = [
            (prop, grouped)
            for prop, grouped in expansion
            if (entry.anchor, prop) not in seen
        ]
        group = None
        if any(grouped for _, grouped in fresh):
            group_counter += 1
            group = group_counter
        for prop, grouped in fresh:
            out.append(Entry(entry.anchor, prop, "expanded", group if grouped else None))
            seen.append((entry.anchor, prop))
    return AnnotationStore(out)


# ---------------------------------------------------------------------------
# External ingestion


def _carried_pair(reads: list[int], writes: list[int]) -> bool:
    """A read at offset r of an element written at offset w > r sees a value
    produced by an earlier iteration: a loop-carried dependency."""
    return any(r < w for r in reads for w in writes)


def _contradicts_user(entry: Entry, users: list[Entry]) -> Optional[str]:
    ann = entry.ann
    at_anchor = [u.ann for u in users if u.anchor == entry.anchor]
    if isinstance(ann, WriteSetEq) and ann.locations:
        for u in users:
            if isinstance(u.ann, Pure) and u.ann.expr == ann.expr:
                return f"user says {expr_text(ann.expr)} is pure"
    if isinstance(ann, Pure):
        for u in users:
            if isinstance(u.ann, WriteSetEq) and u.ann.expr == ann.expr and u.ann.locations:
                return f"user gives a non-empty write set for {expr_text(ann.expr)}"
    if isinstance(ann, (Reads, Writes, Rw)) and ann.offsets is not None:
        independent = any(isinstance(a, IterationIndependent) for a in at_anchor)
        if independent:
            arr = ann.expr
            for other in at_anchor:
                if isinstance(ann, (Reads, Rw)) and isinstance(other, (Writes, Rw)) \
                        and other.expr == arr and other.offsets is not None \
                        and _carried_pair(ann.offsets, other.offsets):
                    return "offsets imply a loop-carried dependency on an iteration_independent loop"
                if isinstance(ann, (Writes, Rw)) and isinstance(other, (Reads, Rw)) \
                        and other.expr == arr and other.offsets is not None \
                        and _carried_pair(other.offsets, ann.offsets):
                    return "offsets imply a loop-carried dependency on an iteration_independent loop"
    if isinstance(ann, IterationIndependent):
        by_arr: dict[str, dict[str, list[int]]] = {}
        for other in at_anchor:
            if isinstance(other, (Reads, Writes, Rw)) and other.offsets is not None:
                key = expr_text(other.expr)
                slot = by_arr.setdefault(key, {"r": [], "w": []})
                if isinstance(other, (Reads, Rw)):
                    slot["r"] += other.offsets
                if isinstance(other, (Writes, Rw)):
                    slot["w"] += other.offsets
        for slot in by_arr.values():
            if _carried_pair(slot["r"], slot["w"]):
                return "user offsets at this loop imply a loop-carried dependency"
    return None


def ingest_external(
    store: AnnotationStore, extra: list[tuple[int, StmlProperty]]
) -> tuple[AnnotationStore, list[str]]:
    """Merge tool-inferred properties. User-provided entries — written
    directly or deduced from skeleton annotations — always win: a
    contradicted external entry is dropped with a warning, never theirs."""
    users = [e for e in store.entries if e.provenance in ("user", "expanded")]
    accepted, warnings = [], []
    for anchor, prop in extra:
        entry = Entry(anchor, prop, "external")
        why = _contradicts_user(entry, users)
        if why is None:
            accepted.append(entry)
        else:
            warnings.append(
                f"dropped external property {prop_text(prop)!r} at node {anchor}: {why}"
            )
    return store.with_entries(accepted), warnings


# ---------------------------------------------------------------------------
# Emission


def _offsets_text(offsets: list[int]) -> str:
    return "{" + ",".join(str(o) for o in offsets) + "}"


def _juxt_pair(a: Expr, b: Expr) -> str:
    """Render two juxtaposed parameters unambiguously: a second expression
    with a leading minus would bind as a binary operator, and a
    parenthesized second after an identifier-ending first would parse as a
    call, so those rare shapes get parenthesized. Plain parameters (the
    common case, e.g. `v w` or `0 length(v)`) print bare."""
    import re

    at, bt = expr_text(a), expr_text(b)
    if bt.startswith("-"):
        bt = f"({bt})"
    if bt.startswith("(") and re.search(r"[A-Za-z_][A-Za-z_0-9]*$", at):
        at = f"({at})"
    return f"{at} {bt}"


def prop_text(ann) -> str:
    if isinstance(ann, Appears):
        return f"appears {expr_text(ann.expr)}"
    if isinstance(ann, Pure):
        return f"pure {expr_text(ann.expr)}"
    if isinstance(ann, IsIdentity):
        return f"is_identity {expr_text(ann.expr)}"
    if isinstance(ann, Commutative):
        return f"commutative {ann.op}"
    if isinstance(ann, Associative):
        return f"associative {ann.op}"
    if isinstance(ann, DistributesOver):
        return f"{ann.op} distributes_over {ann.over}"
    if isinstance(ann, WriteSetEq):
        locs = ", ".join(expr_text(l) for l in ann.locations)
        return f"write({expr_text(ann.expr)}) = {{{locs}}}"
    if isinstance(ann, (Reads, Writes, Rw)):
        kw = {Reads: "reads", Writes: "writes", Rw: "rw"}[type(ann)]
        if ann.offsets is None:
            return f"{kw} {expr_text(ann.expr)}"
        return f"{kw} {expr_text(ann.expr)} in {_offsets_text(ann.offsets)}"
    if isinstance(ann, SameLength):
        return f"same_length {_juxt_pair(ann.a, ann.b)}"
    if isinstance(ann, OutputOf):
        return f"output({expr_text(ann.expr)})"
    if isinstance(ann, IterationSpace):
        return f"iteration_space {_juxt_pair(ann.lo, ann.hi)}"
    if isinstance(ann, IterationIndependent):
        return "iteration_independent"
    raise TypeError(f"not an STML property: {ann}")


def polca_text(ann) -> str:
    if isinstance(ann, PolcaMap):
        return f"map {ann.fn} {expr_text(ann.input)} {expr_text(ann.output)}"
    if isinstance(ann, PolcaFold):
        return f"fold {ann.fn} {expr_text(ann.init)} {expr_text(ann.input)} {expr_text(ann.acc)}"
    if isinstance(ann, PolcaItn):
        return f"itn {ann.fn} {expr_text(ann.init)} {expr_text(ann.count)} {expr_text(ann.output)}"
    if isinstance(ann, PolcaZipWith):
        return f"zipWith {ann.fn} {expr_text(ann.in1)} {expr_text(ann.in2)} {expr_text(ann.output)}"
    if isinstance(ann, PolcaScanl):
        return f"scanl {ann.fn} {expr_text(ann.init)} {expr_text(ann.input)} {expr_text(ann.output)}"
    if isinstance(ann, PolcaDef):
        return f"def {ann.name}"
    if isinstance(ann, PolcaInput):
        return f"input {expr_text(ann.expr)}"
    if isinstance(ann, PolcaOutput):
        return f"output {expr_text(ann.expr)}"
    if isinstance(ann, PolcaPlatform):
        return ann.target
    raise TypeError(f"not a polca annotation: {ann}")


def pragma_lines_for_entries(entries: list[Entry]) -> list[str]:
    lines = []
    i = 0
    while i < len(entries):
        e = entries[i]
        if e.group is not None and isinstance(e.ann, (Reads, Writes, Rw)):
            run = [e]
            while (
                i + 1 < len(entries)
                and entries[i + 1].group == e.group
                and type(entries[i + 1].ann) is type(e.ann)
            ):
                i += 1
                run.append(entries[i])
            kw = {Reads: "reads", Writes: "writes", Rw: "rw"}[type(e.ann)]
            inner = ", ".join(
                f"{expr_text(r.ann.expr)} in {_offsets_text(r.ann.offsets)}" for r in run
            )
            lines.append(f"#pragma stml {kw} ({inner})")
        elif isinstance(e.ann, (PolcaMap, PolcaFold, PolcaItn, PolcaZipWith,
                                PolcaScanl, PolcaDef, PolcaInput, PolcaOutput,
                                PolcaPlatform)):
            lines.append(f"#pragma polca {polca_text(e.ann)}")
        else:
            lines.append(f"#pragma stml {prop_text(e.ann)}")
        i += 1
    return lines


def emit_pragmas(program: Program, store: AnnotationStore) -> str:
    """Canonical program text with pragmas re-emitted from the store."""
    from .cprint import print_program

    by_anchor: dict[int, list[Entry]] = {}
    for e in store.entries:
        by_anchor.setdefault(e.anchor, []).append(e)
    table = program.node_table
    for anchor in by_anchor:
        node = table.get(anchor)
        if node is None or not isinstance(node, (Stmt, FuncDef)):
            raise PragmaError(f"annotation anchored at missing statement (node {anchor})")

    def override(node):
        return pragma_lines_for_entries(by_anchor.get(program.node_id(node), []))

    return print_program(program, pragma_override=override)
