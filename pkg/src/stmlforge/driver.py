"""Derivation driving: interactive sessions, the built-in greedy oracle,
and the newline-delimited-JSON protocol for external oracles.

A derivation chains rule applications: the first step offers every rule,
afterwards the oracle's previously returned rule is the only candidate, and
the loop stops when the oracle judges the code final (or the step budget
runs out). Position choice is implicit: the oracle picks between successor
codes, one per applicable (rule, position) pair.
"""

from __future__ import annotations

import json
import queue
import shlex
import subprocess
import threading
import uuid
from dataclasses import dataclass, field
from typing import Optional

from .annotations import AnnotationStore, emit_pragmas, expand_polca, parse_pragmas
from .cparse import parse
from .csyntax import (
    Assign,
    Binary,
    Block,
    Call,
    DeclStmt,
    ExprStmt,
    For,
    FuncDef,
    If,
    Program,
    Return,
    Unary,
    walk,
)
from .engine import AppCandidate, app_rules, trans
from .errors import (
    IllegalSelectionError,
    MalformedMessageError,
    NoSuccessorError,
    NotApplicableError,
    OracleTimeoutError,
)
from .properties import Tri
from .ruledsl import Rule, builtin_rules


# ---------------------------------------------------------------------------
# Program state and cost metric


@dataclass
class State:
    program: Program
    store: AnnotationStore

    _text: Optional[str] = field(default=None, compare=False, repr=False)

    @property
    def text(self) -> str:
        if self._text is None:
            self._text = emit_pragmas(self.program, self.store)
        return self._text


def state_from_source(source: str) -> State:
    program = parse(source)
    store = expand_polca(program, parse_pragmas(program))
    return State(program, store)


@dataclass
class MetricWeights:
    """Nesting-weighted cost: statements and operator applications inside a
    loop body count nest_factor times more per nesting level, and each loop
    carries a fixed header overhead. Lower is better."""

    loop_overhead: float = 4.0
    nest_factor: float = 4.0
    op_cost: float = 1.0
    stmt_cost: float = 1.0


def _op_count(expr) -> int:
    if expr is None:
        return 0
    total = 0
    for node in walk(expr):
        if isinstance(node, (Binary, Unary)):
            total += 1
        elif isinstance(node, Call):
            total += 1
        elif isinstance(node, Assign) and node.op != "=":
            total += 1
        elif hasattr(node, "base"):  # ArrayRef
            total += 1
    return total


def cost_metric(program: Program, weights: MetricWeights = MetricWeights()) -> float:
    w = weights

    def stmt_cost(s, depth: int) -> float:
        scale = w.nest_factor**depth
        if isinstance(s, For):
            header = _op_count(s.init) + _op_count(s.cond) + _op_count(s.step)
            return (
                w.loop_overhead * scale
                + w.op_cost * header * scale
                + seq_cost(s.body.stmts, depth + 1)
            )
        if isinstance(s, If):
            return (
                scale * (w.stmt_cost + w.op_cost * _op_count(s.cond))
                + seq_cost(s.then.stmts, depth)
                + (seq_cost(s.els.stmts, depth) if s.els else 0.0)
            )
        if isinstance(s, Block):
            return seq_cost(s.stmts, depth)
        if isinstance(s, ExprStmt):
            return scale * (w.stmt_cost + w.op_cost * _op_count(s.expr))
        if isinstance(s, Return):
            return scale * (w.stmt_cost + w.op_cost * _op_count(s.value))
        if isinstance(s, DeclStmt):
            inits = sum(_op_count(d.init) for d in s.declarators if d.init is not None)
            return scale * (w.stmt_cost + w.op_cost * inits)
        return scale * w.stmt_cost

    def seq_cost(stmts, depth: int) -> float:
        return sum(stmt_cost(s, depth) for s in stmts)

    total = 0.0
    for item in program.items:
        if isinstance(item, FuncDef):
            total += seq_cost(item.body.stmts, 0)
        else:
            total += stmt_cost(item, 0)
    return total


# ---------------------------------------------------------------------------
# Derivations


@dataclass
class Step:
    index: int
    rule: str
    pos: int
    before_text: str
    after_text: str

    def to_record(self) -> dict:
        return {
            "step": self.index,
            "rule": self.rule,
            "pos": self.pos,
            "before_text": self.before_text,
            "after_text": self.after_text,
        }


@dataclass
class Derivation:
    steps: list[Step] = field(default_factory=list)
    final: Optional[State] = None
    stopped: str = "final"  # final | budget | no-successor

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(s.to_record()) for s in self.steps) + (
            "\n" if self.steps else ""
        )


@dataclass
class OracleCandidate:
    code_id: str
    state: State
    rules: list[str]
    via_rule: str = ""
    via_pos: int = -1


class Oracle:
    """Interface for rule selectors (the greedy searcher or an external
    peer). select_rule returns (chosen code_id, next rule name or None)."""

    def select_rule(self, candidates: list[OracleCandidate]) -> tuple[str, Optional[str]]:
        raise NotImplementedError

    def is_final(self, state: State, target: Optional[str]) -> bool:
        raise NotImplementedError

    def close(self):
        pass


def true_candidates(state: State, rules: list[Rule]) -> list[AppCandidate]:
    """Definitely-applicable candidates only; Unknown verdicts are surfaced
    interactively, never auto-applied."""
    return [
        c
        for c in app_rules(state.program, state.store, rules)
        if c.verdict is Tri.TRUE
    ]


def successor_states(
    state: State,
    rules: list[Rule],
    rule_names: Optional[set[str]] = None,
    seen_texts: Optional[set[str]] = None,
) -> list[tuple[AppCandidate, State]]:
    """Successor per applicable (rule, pos), deterministic order, text-deduped."""
    by_name = {r.name: r for r in rules}
    out = []
    texts = set()
    for cand in true_candidates(state, rules):
        if rule_names is not None and cand.rule not in rule_names:
            continue
        try:
            result = trans(state.program, state.store, by_name[cand.rule], cand.pos)
        except NotApplicableError:
            continue
        succ = State(result.program, result.store)
        if succ.text in texts:
            continue
        if seen_texts is not None and succ.text in seen_texts:
            continue
        texts.add(succ.text)
        out.append((cand, succ))
    return out


def new_code(
    state: State,
    rule_names: set[str],
    oracle: Oracle,
    rules: Optional[list[Rule]] = None,
    seen_texts: Optional[set[str]] = None,
) -> tuple[State, Optional[str], Step]:
    """One oracle-guided step: build every successor reachable with the
    offered rules, let the oracle choose the code (position choice is
    implicit) and the rule for the next step."""
    rules = rules if rules is not None else builtin_rules()
    succs = successor_states(state, rules, rule_names, seen_texts)
    if not succs:
        raise NoSuccessorError(
            f"no rule in {sorted(rule_names)} applies anywhere"
            if rule_names
            else "no applicable rule"
        )
    offers = []
    for i, (cand, succ) in enumerate(succs):
        applicable = sorted({c.rule for c in true_candidates(succ, rules)},
                            key=lambda n: [r.name for r in rules].index(n))
        offers.append(
            OracleCandidate(f"c{i}", succ, applicable, via_rule=cand.rule, via_pos=cand.pos)
        )
    code_id, next_rule = oracle.select_rule(offers)
    by_id = {o.code_id: o for o in offers}
    if code_id not in by_id:
        raise IllegalSelectionError(f"oracle selected unknown code id {code_id!r}")
    chosen = by_id[code_id]
    if next_rule is not None and next_rule not in chosen.rules:
        raise IllegalSelectionError(
            f"oracle selected rule {next_rule!r} not applicable to the chosen code"
        )
    if next_rule is None and chosen.rules:
        raise IllegalSelectionError("oracle must name a next rule while rules remain")
    step = Step(0, chosen.via_rule, chosen.via_pos, state.text, chosen.state.text)
    return chosen.state, next_rule, step


def derive(
    initial: State,
    oracle: Oracle,
    rules: Optional[list[Rule]] = None,
    budget: int = 64,
    target: Optional[str] = None,
) -> Derivation:
    """NewCode until IsFinal or the budget runs out. Revisited program
    texts are pruned (user rule sets may contain inverses)."""
    rules = rules if rules is not None else builtin_rules()
    target = target or initial.store.platform_target()
    derivation = Derivation(final=initial)
    if oracle.is_final(initial, target):
        return derivation
    state = initial
    rule_names = {r.name for r in rules}
    seen = {initial.text}
    for index in range(1, budget + 1):
        try:
            state, next_rule, step = new_code(state, rule_names, oracle, rules, seen)
        except NoSuccessorError:
            derivation.stopped = "no-successor"
            return derivation
        step.index = index
        derivation.steps.append(step)
        derivation.final = state
        seen.add(state.text)
        if oracle.is_final(state, target):
            derivation.stopped = "final"
            return derivation
        if next_rule is None:
            derivation.stopped = "no-successor"
            return derivation
        rule_names = {next_rule}
    derivation.stopped = "budget"
    return derivation


# ---------------------------------------------------------------------------
# Built-in greedy oracle with bounded lookahead


class GreedyOracle(Oracle):
    """Minimizes a cost metric over all derivation extensions of bounded
    depth; declares a state final when no extension strictly improves it
    (and, when a target platform is set, the readiness check passes).

    `metric` may be any callable taking a Program; the default is the
    nesting-weighted cost under `weights`."""

    def __init__(
        self,
        lookahead: int = 2,
        weights: MetricWeights = MetricWeights(),
        rules: Optional[list[Rule]] = None,
        metric=None,
    ):
        self.lookahead = lookahead
        self.weights = weights
        self.rules = rules if rules is not None else builtin_rules()
        self._metric_fn = metric

    def metric(self, state: State) -> float:
        if self._metric_fn is not None:
            return self._metric_fn(state.program)
        return cost_metric(state.program, self.weights)

    def _best_within(self, state: State, depth: int, memo: dict) -> float:
        """Minimum metric over this state and derivations of length <= depth."""
        key = (state.text, depth)
        if key in memo:
            return memo[key]
        best = self.metric(state)
        if depth > 0:
            for _, succ in successor_states(state, self.rules):
                best = min(best, self._best_within(succ, depth - 1, memo))
        memo[key] = best
        return best

    def select_rule(self, candidates: list[OracleCandidate]) -> tuple[str, Optional[str]]:
        memo: dict = {}
        scored = [
            (self._best_within(c.state, self.lookahead, memo), i)
            for i, c in enumerate(candidates)
        ]
        _, idx = min(scored)
        chosen = candidates[idx]
        next_rule = None
        best_rule_score = None
        rule_order = [r.name for r in self.rules]
        for rule_name in sorted(chosen.rules, key=rule_order.index):
            score = None
            for cand, succ in successor_states(chosen.state, self.rules, {rule_name}):
                s = self._best_within(succ, self.lookahead, memo)
                score = s if score is None else min(score, s)
            if score is None:
                continue
            if best_rule_score is None or score < best_rule_score:
                best_rule_score = score
                next_rule = rule_name
        return chosen.code_id, next_rule

    def is_final(self, state: State, target: Optional[str]) -> bool:
        current = self.metric(state)
        memo: dict = {}
        for _, succ in successor_states(state, self.rules):
            if self._best_within(succ, self.lookahead, memo) < current:
                return False
        if target is not None:
            from .translate import readiness

            if not readiness(state.program, state.store, target).ready:
                return False
        return True


# ---------------------------------------------------------------------------
# External oracle over the wire protocol


class ExternalOracle(Oracle):
    """Adapter for an external peer speaking newline-delimited JSON, either
    a child process over stdio or a socket peer (host:port)."""

    def __init__(self, command: str, timeout: float = 30.0):
        self.timeout = timeout
        self.proc = None
        self._sock = None
        self._writer = None
        if command.startswith("tcp:"):
            import socket

            rest = command[len("tcp:"):]
            host, _, port = rest.rpartition(":")
            try:
                self._sock = socket.create_connection((host or "127.0.0.1", int(port)),
                                                      timeout=timeout)
            except OSError as exc:
                raise MalformedMessageError(f"cannot reach oracle at {rest}: {exc}") from exc
            stream = self._sock.makefile("r", encoding="utf-8", newline="\n")
            self._writer = self._sock.makefile("w", encoding="utf-8", newline="\n")
        else:
            self.proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
            stream = self.proc.stdout
            self._writer = self.proc.stdin
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, args=(stream,), daemon=True)
        self._reader.start()
        self._final_counter = 0

    def _pump(self, stream):
        try:
            for line in stream:
                self._lines.put(line)
        except (OSError, ValueError):
            pass
        self._lines.put(None)

    def _send(self, obj: dict):
        try:
            self._writer.write(json.dumps(obj) + "\n")
            self._writer.flush()
        except (BrokenPipeError, OSError, ValueError) as exc:
            raise MalformedMessageError(f"oracle peer closed the connection: {exc}") from exc

    def _recv(self) -> dict:
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise OracleTimeoutError(f"oracle did not answer within {self.timeout}s")
        if line is None:
            raise MalformedMessageError("oracle process closed without answering")
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedMessageError(f"oracle sent invalid JSON: {line!r}") from exc
        if not isinstance(msg, dict):
            raise MalformedMessageError("oracle messages must be JSON objects")
        return msg

    def select_rule(self, candidates: list[OracleCandidate]) -> tuple[str, Optional[str]]:
        self._send(
            {
                "type": "select_rule",
                "candidates": [
                    {"code_id": c.code_id, "code": c.state.text, "rules": c.rules}
                    for c in candidates
                ],
            }
        )
        msg = self._recv()
        if msg.get("type") != "selected":
            raise MalformedMessageError(f"expected a 'selected' response, got {msg!r}")
        code_id = msg.get("code_id")
        rule = msg.get("rule")
        offered = {c.code_id: c for c in candidates}
        if code_id not in offered:
            raise IllegalSelectionError(f"oracle selected unknown code id {code_id!r}")
        if rule is None:
            if offered[code_id].rules:
                raise IllegalSelectionError("oracle must name a rule while rules remain")
            return code_id, None
        if rule not in offered[code_id].rules:
            raise IllegalSelectionError(
                f"oracle selected rule {rule!r} that was not offered for {code_id!r}"
            )
        return code_id, rule

    def is_final(self, state: State, target: Optional[str]) -> bool:
        self._final_counter += 1
        self._send(
            {
                "type": "is_final",
                "code_id": f"s{self._final_counter}",
                "code": state.text,
                "target": target or "",
            }
        )
        msg = self._recv()
        if msg.get("type") != "final" or not isinstance(msg.get("value"), bool):
            raise MalformedMessageError(f"expected a 'final' response, got {msg!r}")
        return msg["value"]

    def close(self):
        if self._sock is not None:
            import socket

            try:
                self._sock.shutdown(socket.SHUT_RDWR)  # wake the reader thread
            except OSError:
                pass
            try:
                self._sock.close()
            except OSError:
                pass
            return
        try:
            if self.proc.stdin:
                self.proc.stdin.close()
            self.proc.terminate()
            self.proc.wait(timeout=2)
        except Exception:
            self.proc.kill()


# ---------------------------------------------------------------------------
# Interactive sessions


@dataclass
class SessionStep:
    rule: str
    pos: int
    before_text: str
    after_text: str
    warnings: list[str]


class Session:
    """One interactive derivation; mutations are serialized by the caller
    (the HTTP service locks per session)."""

    def __init__(
        self,
        source: str,
        target: Optional[str] = None,
        rules: Optional[list[Rule]] = None,
        session_id: Optional[str] = None,
    ):
        self.id = session_id or uuid.uuid4().hex[:12]
        self.rules = rules if rules is not None else builtin_rules()
        self.initial = state_from_source(source)
        self.current = self.initial
        self.target = target or self.initial.store.platform_target()
        self.steps: list[SessionStep] = []
        self._undo_stack: list[State] = []

    def candidates(self) -> list[AppCandidate]:
        return [
            c
            for c in app_rules(self.current.program, self.current.store, self.rules)
            if c.verdict is not Tri.FALSE
        ]

    def preview(self, rule_name: str, pos: int, force: bool = False) -> str:
        rule = self._rule(rule_name)
        result = trans(self.current.program, self.current.store, rule, pos, force)
        return emit_pragmas(result.program, result.store)

    def _rule(self, name: str) -> Rule:
        for r in self.rules:
            if r.name == name:
                return r
        raise NotApplicableError(f"unknown rule {name!r}")

    def apply(self, rule_name: str, pos: int, force: bool = False) -> SessionStep:
        rule = self._rule(rule_name)
        result = trans(self.current.program, self.current.store, rule, pos, force)
        self._undo_stack.append(self.current)
        before = self.current.text
        self.current = State(result.program, result.store)
        step = SessionStep(rule_name, pos, before, self.current.text, result.warnings)
        self.steps.append(step)
        return step

    def undo(self) -> bool:
        if not self._undo_stack:
            return False
        self.current = self._undo_stack.pop()
        self.steps.pop()
        return True

    def replay_text(self) -> str:
        """Re-run the recorded steps from the initial snapshot; the result
        must match the current text byte for byte."""
        state = self.initial
        for step in self.steps:
            result = trans(state.program, state.store, self._rule(step.rule), step.pos)
            state = State(result.program, result.store)
        return state.text

    def export_jsonl(self) -> str:
        return "\n".join(
            json.dumps(
                {
                    "step": i + 1,
                    "rule": s.rule,
                    "pos": s.pos,
                    "before_text": s.before_text,
                    "after_text": s.after_text,
                }
            )
            for i, s in enumerate(self.steps)
        ) + ("\n" if self.steps else "")
