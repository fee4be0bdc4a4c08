"""Destination-platform readiness checks and the OpenMP backend.

OpenMP is the one executable backend: it injects a `#pragma omp parallel
for` above every outermost loop annotated iteration_independent and strips
the polca/stml pragmas. The mpi target is readiness-check only, adding the
single-thread I/O flagging its translation would need.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .annotations import AnnotationStore, IterationIndependent
from .cprint import print_program
from .csyntax import Block, Call, For, FuncDef, Program, Stmt, walk
from .errors import ReadinessError, UnknownTargetError

TARGETS = ("openmp", "mpi")

DEFAULT_IO_NAMES = (
    "printf", "fprintf", "scanf", "fscanf", "puts", "gets",
    "fread", "fwrite", "fopen", "fclose", "getchar", "putchar",
)


@dataclass
class LoopFinding:
    pos: int
    header: str
    reason: str


@dataclass
class ReadinessReport:
    target: str
    ready: bool
    blocking: list[LoopFinding] = field(default_factory=list)
    io_statements: list[LoopFinding] = field(default_factory=list)


def outermost_loops(program: Program) -> list[For]:
    """Loops to parallelize: outermost for-loops (nested ones run inside
    the enclosing parallel region)."""
    out = []

    def scan_stmts(stmts):
        for s in stmts:
            if isinstance(s, For):
                out.append(s)
            elif isinstance(s, Block):
                scan_stmts(s.stmts)
            elif hasattr(s, "then"):
                scan_stmts(s.then.stmts)
                if s.els is not None:
                    scan_stmts(s.els.stmts)

    for item in program.items:
        if isinstance(item, FuncDef):
            scan_stmts(item.body.stmts)
        elif isinstance(item, Stmt):
            scan_stmts([item])
    return out


def _loop_header(loop: For) -> str:
    from .cprint import expr_text

    init = expr_text(loop.init) if loop.init is not None else ""
    cond = expr_text(loop.cond) if loop.cond is not None else ""
    step = expr_text(loop.step) if loop.step is not None else ""
    return f"for ({init}; {cond}; {step})"


def readiness(
    program: Program,
    store: AnnotationStore,
    target: str,
    io_names: tuple[str, ...] = DEFAULT_IO_NAMES,
) -> ReadinessReport:
    if target not in TARGETS:
        raise UnknownTargetError(
            f"unknown target {target!r}; supported: {', '.join(TARGETS)}"
        )
    report = ReadinessReport(target=target, ready=True)
    for loop in outermost_loops(program):
        pos = program.node_id(loop)
        anns = store.by_node(pos)
        if not any(isinstance(a, IterationIndependent) for a in anns):
            report.ready = False
            report.blocking.append(
                LoopFinding(
                    pos,
                    _loop_header(loop),
                    "loop carries no iteration_independent guarantee "
                    "(not implied by its annotations)",
                )
            )
    if target == "mpi":
        for node in walk(program):
            if isinstance(node, Call) and node.name in io_names:
                report.io_statements.append(
                    LoopFinding(
                        program.node_id(node),
                        f"{node.name}(...)",
                        "I/O call must run in a single thread under mpi",
                    )
                )
    return report


def emit_openmp(program: Program, store: AnnotationStore) -> str:
    """Platform code: the readiness-checked program with one omp pragma per
    independent outermost loop; polca/stml pragmas are stripped."""
    report = readiness(program, store, "openmp")
    if not report.ready:
        blockers = "; ".join(f"{b.header}: {b.reason}" for b in report.blocking)
        raise ReadinessError(f"not ready for openmp: {blockers}")
    parallel = {b for b in (program.node_id(l) for l in outermost_loops(program))}

    def override(node):
        if isinstance(node, For) and program.node_id(node) in parallel:
            return ["#pragma omp parallel for"]
        return []

    return print_program(program, pragma_override=override)
