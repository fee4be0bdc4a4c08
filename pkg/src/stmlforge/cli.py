"""Command-line entry points.

Exit codes: 0 success, 1 user error (bad input, inapplicable rule,
misbehaving oracle), 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import os
import pathlib
import sys

from .annotations import emit_pragmas, ingest_external, parse_pragma_line
from .cprint import print_program
from .csyntax import For, walk
from .driver import (
    ExternalOracle,
    GreedyOracle,
    MetricWeights,
    derive,
    state_from_source,
)
from .engine import app_rules, trans
from .errors import OracleProtocolError, StmlforgeError
from .properties import Analyzer
from .ruledsl import builtin_rules, parse_rules
from .translate import emit_openmp, readiness

RULES_ENV = "STMLFORGE_RULES"


def load_rules(args):
    rules = builtin_rules()
    rule_dir = getattr(args, "rules", None) or os.environ.get(RULES_ENV)
    if rule_dir:
        names = {r.name for r in rules}
        for path in sorted(pathlib.Path(rule_dir).glob("*.stml")):
            for rule in parse_rules(path.read_text()):
                if rule.name in names:
                    raise StmlforgeError(
                        f"rule {rule.name!r} from {path} clashes with an existing rule"
                    )
                rules.append(rule)
                names.add(rule.name)
    return rules


def load_state(args):
    source = pathlib.Path(args.file).read_text()
    state = state_from_source(source)
    if getattr(args, "external", None):
        entries = json.loads(pathlib.Path(args.external).read_text())
        extra = []
        for item in entries:
            anchor = resolve_line_anchor(state.program, int(item["line"]))
            for ann, _ in parse_pragma_line(f"#pragma stml {item['property']}"):
                extra.append((anchor, ann))
        store, warnings = ingest_external(state.store, extra)
        for w in warnings:
            print(f"warning: {w}", file=sys.stderr)
        from .driver import State

        state = State(state.program, store)
    return state


def resolve_line_anchor(program, line: int) -> int:
    best = None
    for node in walk(program):
        node_line = getattr(node, "line", 0)
        if node_line and node_line >= line:
            if best is None or node_line < best[0]:
                best = (node_line, program.node_id(node))
    if best is None:
        raise StmlforgeError(f"no statement at or after line {line}")
    return best[1]


def candidates_payload(state, rules) -> list[dict]:
    return [
        {"rule": c.rule, "pos": c.pos, "verdict": c.verdict.value}
        for c in app_rules(state.program, state.store, rules)
    ]


def cmd_parse(args) -> int:
    source = pathlib.Path(args.file).read_text()
    from .cparse import parse

    sys.stdout.write(print_program(parse(source)))
    return 0


def cmd_expand(args) -> int:
    state = load_state(args)
    sys.stdout.write(emit_pragmas(state.program, state.store))
    return 0


def cmd_analyze(args) -> int:
    state = load_state(args)
    analyzer = Analyzer(state.store)
    program = state.program
    lines = []
    loops = [n for n in walk(program) if isinstance(n, For)]
    lines.append(f"functions: {len(program.functions)}")
    lines.append(f"loops: {len(loops)}")
    from .translate import _loop_header

    for loop in loops:
        pos = program.node_id(loop)
        var = analyzer.canonical_loop(loop)
        lines.append(f"  loop @{pos} {_loop_header(loop)}"
                     f" index={var or '?'} canonical={'yes' if var else 'no'}")
        w, r = analyzer.effects(loop.body)
        lines.append(f"    writes: {w.text()}")
        lines.append(f"    reads:  {r.text()}")
        arrays = sorted(w.array_names() | r.array_names())
        for arr in arrays:
            for mode in ("read", "write"):
                offs = analyzer.loop_offsets(loop, arr, mode)
                if offs is not None:
                    lines.append(f"    {mode}s {arr} in {{{','.join(map(str, offs))}}}")
        anns = state.store.by_node(pos)
        if anns:
            from .annotations import pragma_lines_for_entries

            for text in pragma_lines_for_entries(state.store.entries_at(pos)):
                lines.append(f"    {text}")
    for stmt in program.stmts:
        w = analyzer.write_set(stmt)
        r = analyzer.read_set(stmt)
        pos = program.node_id(stmt)
        lines.append(f"  stmt @{pos}: writes {w.text()} reads {r.text()}")
    sys.stdout.write("\n".join(lines) + "\n")
    return 0


def cmd_candidates(args) -> int:
    state = load_state(args)
    rules = load_rules(args)
    sys.stdout.write(json.dumps(candidates_payload(state, rules), indent=2) + "\n")
    return 0


def cmd_apply(args) -> int:
    state = load_state(args)
    rules = load_rules(args)
    by_name = {r.name: r for r in rules}
    if args.rule not in by_name:
        raise StmlforgeError(f"unknown rule {args.rule!r}")
    result = trans(state.program, state.store, by_name[args.rule], args.pos,
                   force_unknown=args.force)
    for w in result.warnings:
        print(f"warning: {w}", file=sys.stderr)
    text = emit_pragmas(result.program, result.store)
    if args.output:
        pathlib.Path(args.output).write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_derive(args) -> int:
    state = load_state(args)
    rules = load_rules(args)
    weights = MetricWeights()
    if args.metric_weights:
        parts = [float(x) for x in args.metric_weights.split(",")]
        names = ("loop_overhead", "nest_factor", "op_cost", "stmt_cost")
        weights = MetricWeights(**dict(zip(names, parts)))
    if args.oracle == "greedy":
        oracle = GreedyOracle(lookahead=args.lookahead, weights=weights, rules=rules)
    elif args.oracle.startswith("exec:"):
        oracle = ExternalOracle(args.oracle[len("exec:"):], timeout=args.oracle_timeout)
    elif args.oracle.startswith("tcp:"):
        oracle = ExternalOracle(args.oracle, timeout=args.oracle_timeout)
    else:
        raise StmlforgeError(
            f"unknown oracle {args.oracle!r} (use greedy, exec:<cmd>, or tcp:<host>:<port>)"
        )
    try:
        derivation = derive(state, oracle, rules=rules, budget=args.budget,
                            target=args.target)
    finally:
        oracle.close()
    if args.log:
        pathlib.Path(args.log).write_text(derivation.to_jsonl())
    print(f"derivation: {len(derivation.steps)} step(s), stopped: {derivation.stopped}",
          file=sys.stderr)
    sys.stdout.write(derivation.final.text)
    return 0 if derivation.stopped == "final" else 1


def cmd_translate(args) -> int:
    state = load_state(args)
    if args.target == "openmp":
        out = emit_openmp(state.program, state.store)
    else:
        report = readiness(state.program, state.store, args.target)
        payload = {
            "target": report.target,
            "ready": report.ready,
            "blocking": [vars(b) for b in report.blocking],
            "io_statements": [vars(b) for b in report.io_statements],
        }
        sys.stdout.write(json.dumps(payload, indent=2) + "\n")
        return 0 if report.ready else 1
    out_path = pathlib.Path(args.output) if args.output else \
        pathlib.Path(args.file).with_suffix(".omp.c")
    out_path.write_text(out)
    sys.stdout.write(out)
    print(f"wrote {out_path}", file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    serve(
        port=args.port,
        state_dir=args.state_dir,
        ui_dir=args.ui_dir,
        rules=load_rules(args),
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="stmlforge",
        description="Annotation-guided source-to-source transformation for a C subset",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, external=True, rules=True):
        p.add_argument("file", help="C source file")
        if external:
            p.add_argument("--external", help="JSON file of {line, property} pairs to ingest")
        if rules:
            p.add_argument("--rules", help=f"directory of extra .stml rule files (or ${RULES_ENV})")

    p = sub.add_parser("parse", help="echo the canonical form")
    p.add_argument("file")
    p.set_defaults(fn=cmd_parse)

    p = sub.add_parser("expand", help="expand skeleton annotations into STML properties")
    common(p, rules=False)
    p.set_defaults(fn=cmd_expand)

    p = sub.add_parser("analyze", help="report read/write sets and loop properties")
    common(p, rules=False)
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("candidates", help="list applicable (rule, position) pairs")
    common(p)
    p.set_defaults(fn=cmd_candidates)

    p = sub.add_parser("apply", help="apply one rule at one position")
    common(p)
    p.add_argument("--rule", required=True)
    p.add_argument("--pos", required=True, type=int)
    p.add_argument("--force", action="store_true",
                   help="apply even if the verdict is only 'probably applicable'")
    p.add_argument("-o", "--output")
    p.set_defaults(fn=cmd_apply)

    p = sub.add_parser("derive", help="chain rule applications via an oracle")
    common(p)
    p.add_argument("--oracle", default="greedy",
                   help="greedy, exec:<command>, or tcp:<host>:<port>")
    p.add_argument("--lookahead", type=int, default=2)
    p.add_argument("--budget", type=int, default=64)
    p.add_argument("--target", help="destination platform for the readiness check")
    p.add_argument("--log", help="write the derivation log (JSON lines) to this file")
    p.add_argument("--oracle-timeout", type=float, default=30.0)
    p.add_argument("--metric-weights",
                   help="loop_overhead,nest_factor,op_cost,stmt_cost")
    p.set_defaults(fn=cmd_derive)

    p = sub.add_parser("translate", help="emit platform code for a final form")
    common(p, rules=False)
    p.add_argument("--target", required=True)
    p.add_argument("-o", "--output")
    p.set_defaults(fn=cmd_translate)

    p = sub.add_parser("serve", help="run the local HTTP service for the UI")
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--state-dir", help="persist session snapshots to this directory")
    p.add_argument("--ui-dir", help="directory with the built frontend")
    p.add_argument("--rules", help=f"directory of extra .stml rule files (or ${RULES_ENV})")
    p.set_defaults(fn=cmd_serve)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except OracleProtocolError as exc:
        print(f"stmlforge: oracle protocol violation: {exc}", file=sys.stderr)
        return 1
    except StmlforgeError as exc:
        print(f"stmlforge: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"stmlforge: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        print(f"stmlforge: internal error: {exc!r}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
