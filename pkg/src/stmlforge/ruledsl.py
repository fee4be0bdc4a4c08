"""Rewrite-rule files: C-like templates over typed metavariables.

A rule file holds entries of the form

    rule Name {
        pattern:   { ... }
        condition: { pred(...); ... }
        generate:  { ... }
        assert:    { #pragma stml ... }      (optional)
    }

Metavariables are tagged at first use: ``cexpr(x)`` matches one expression,
``cstmt(x)`` one statement, ``cstmts(x)`` a statement sequence. Later uses
may repeat the tag or use the bare name. ``bin_oper(op, l, r)`` matches or
builds a binary operation with an operator metavariable; ``subs(t, a, b)``
in generate replaces occurrences of a by b in t.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field
from typing import Optional, Union

from .annotations import _PragmaParser
from .cparse import Parser, Token, tokenize
from .cprint import _Printer, expr_text
from .csyntax import (
    ArrayRef,
    Assign,
    Binary,
    Block,
    Call,
    CstmtsSlot,
    DeclInit,
    Expr,
    ExprStmt,
    For,
    Ident,
    If,
    ListExpr,
    Metavar,
    Return,
    Stmt,
    TupleExpr,
    Unary,
    children,
    walk,
)
from .errors import (
    KindConflictError,
    RuleSyntaxError,
    UnboundMetavarError,
    UnknownPredicateError,
)
from .properties import PREDICATE_NAMES

METAVAR_TAGS = ("cexpr", "cstmt", "cstmts")
BINDER_PREDICATES = ("fresh_var", "occurs_in")
NESTED_FUNCTIONS = ("writes",)  # callable inside condition arguments


# -- generate-section constructs ---------------------------------------------


@dataclass
class GenIf(Stmt):
    cond: Expr = None
    body: list[Stmt] = field(default_factory=list)

    def print_into(self, printer: _Printer, depth: int):
        printer.emit(depth, f"if_then: {{ {expr_text(self.cond)};")
        for s in self.body:
            printer.stmt(s, depth + 1)
        printer.emit(depth, "}")


@dataclass
class GenIfElse(Stmt):
    cond: Expr = None
    then: list[Stmt] = field(default_factory=list)
    els: list[Stmt] = field(default_factory=list)

    def print_into(self, printer: _Printer, depth: int):
        printer.emit(depth, f"if_then_else: {{ {expr_text(self.cond)};")
        printer.emit(depth + 1, "{")
        for s in self.then:
            printer.stmt(s, depth + 2)
        printer.emit(depth + 1, "}")
        printer.emit(depth + 1, "{")
        for s in self.els:
            printer.stmt(s, depth + 2)
        printer.emit(depth + 1, "}")
        printer.emit(depth, "}")


@dataclass
class GenList(Stmt):
    alternatives: list[list[Stmt]] = field(default_factory=list)

    def print_into(self, printer: _Printer, depth: int):
        printer.emit(depth, "gen_list: {")
        for alt in self.alternatives:
            printer.emit(depth + 1, "{")
            for s in alt:
                printer.stmt(s, depth + 2)
            printer.emit(depth + 1, "}")
        printer.emit(depth, "}")


Template = Union[Expr, list]


@dataclass
class Rule:
    name: str
    kind: str  # 'expr' | 'stmts'
    pattern: Template
    condition: list[Expr]
    generate: Template
    asserts: list = field(default_factory=list)  # STML property templates
    metavars: dict[str, str] = field(default_factory=dict)


# -- parsing -------------------------------------------------------------------


class _TemplateParser(Parser):
    """C parser extended with rule-template forms."""

    def parse_assignment(self):
        left = self.parse_logical_or()
        t = self.peek()
        if t.kind == "punct" and t.value in ("=", "+=", "-=", "*="):
            self.next()
            if not isinstance(left, (Ident, ArrayRef, Call)):
                self.error("assignment target must be a variable or array element", t)
            return Assign(left, t.value, self.parse_assignment())
        return left

    def parse_primary(self):
        t = self.peek()
        if t.kind == "punct" and t.value == "[":
            self.next()
            items = []
            if not self.at("]"):
                while True:
                    items.append(self.parse_expr())
                    if self.at(","):
                        self.next()
                        continue
                    break
            self.expect("]")
            return ListExpr(items)
        return super().parse_primary()


class RuleFileParser:
    def __init__(self, source: str):
        try:
            self.toks = tokenize(source)
        except Exception as exc:
            raise RuleSyntaxError(str(exc)) from exc
        self.pos = 0

    def peek(self) -> Token:
        return self.toks[min(self.pos, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.toks[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def expect_punct(self, value: str) -> Token:
        t = self.next()
        if t.kind != "punct" or t.value != value:
            raise RuleSyntaxError(f"{t.line}:{t.col}: expected {value!r}, found {t.value!r}")
        return t

    def expect_id(self, value: Optional[str] = None) -> Token:
        t = self.next()
        if t.kind != "id" or (value is not None and t.value != value):
            raise RuleSyntaxError(
                f"{t.line}:{t.col}: expected {value or 'identifier'!r}, found {t.value!r}"
            )
        return t

    def section_tokens(self) -> list[Token]:
        """Tokens of one brace-balanced section body."""
        self.expect_punct("{")
        depth = 1
        out = []
        while True:
            t = self.next()
            if t.kind == "eof":
                raise RuleSyntaxError("unterminated rule section")
            if t.kind == "punct" and t.value == "{":
                depth += 1
            elif t.kind == "punct" and t.value == "}":
                depth -= 1
                if depth == 0:
                    return out
            out.append(t)
        # unreachable

    def parse_rules(self) -> list[Rule]:
        rules = []
        while self.peek().kind != "eof":
            self.expect_id("rule")
            name = self.expect_id().value
            self.expect_punct("{")
            sections: dict[str, list[Token]] = {}
            while not (self.peek().kind == "punct" and self.peek().value == "}"):
                kw = self.expect_id()
                if kw.value not in ("pattern", "condition", "generate", "assert"):
                    raise RuleSyntaxError(
                        f"{kw.line}:{kw.col}: unknown rule section {kw.value!r}"
                    )
                self.expect_punct(":")
                if kw.value in sections:
                    raise RuleSyntaxError(f"duplicate section {kw.value!r} in rule {name}")
                sections[kw.value] = self.section_tokens()
            self.expect_punct("}")
            for required in ("pattern", "condition", "generate"):
                if required not in sections:
                    raise RuleSyntaxError(f"rule {name} is missing the {required} section")
            rules.append(_build_rule(name, sections))
        return rules


def _tokens_parser(tokens: list[Token]) -> _TemplateParser:
    eof = Token("eof", "", tokens[-1].line if tokens else 0, 0)
    return _TemplateParser(tokens + [eof], annotation_mode=False)


def _parse_template(tokens: list[Token], name: str) -> Template:
    """Expression template if the whole section is one expression,
    otherwise a statement sequence."""
    if tokens and not any(t.kind == "punct" and t.value == ";" for t in tokens):
        p = _tokens_parser(tokens)
        try:
            expr = p.parse_expr()
            if p.peek().kind == "eof":
                return expr
        except Exception:
            pass
    p = _tokens_parser(tokens)
    stmts = []
    try:
        while p.peek().kind != "eof":
            stmts.append(_parse_template_stmt(p))
    except RuleSyntaxError:
        raise
    except Exception as exc:
        raise RuleSyntaxError(f"in rule {name}: {exc}") from exc
    return stmts


def _parse_template_stmt(p: _TemplateParser) -> Stmt:
    t = p.peek()
    if t.kind == "id" and t.value in ("if_then", "if_then_else", "gen_list"):
        after = p.peek(1)
        if after.kind == "punct" and after.value == ":":
            return _parse_construct(p)
    return p.parse_stmt()


def _parse_construct(p: _TemplateParser) -> Stmt:
    kw = p.next().value
    p.expect(":")
    p.expect("{")
    if kw == "gen_list":
        alts = []
        while not p.at("}"):
            p.expect("{")
            alt = []
            while not p.at("}"):
                alt.append(_parse_template_stmt(p))
            p.expect("}")
            alts.append(alt)
        p.expect("}")
        return GenList(alternatives=alts)
    cond = p.parse_expr()
    p.expect(";")
    if kw == "if_then":
        body = []
        while not p.at("}"):
            body.append(_parse_template_stmt(p))
        p.expect("}")
        return GenIf(cond=cond, body=body)
    groups = []
    for _ in range(2):
        p.expect("{")
        grp = []
        while not p.at("}"):
            grp.append(_parse_template_stmt(p))
        p.expect("}")
        groups.append(grp)
    p.expect("}")
    return GenIfElse(cond=cond, then=groups[0], els=groups[1])


class _Resolver:
    """Second pass: turn tagged calls and bare references into Metavar
    nodes, collecting kinds and rejecting conflicts."""

    def __init__(self, rule_name: str):
        self.rule_name = rule_name
        self.kinds: dict[str, str] = {}

    def declare(self, name: str, kind: str):
        if self.kinds.get(name, kind) != kind:
            raise KindConflictError(
                f"rule {self.rule_name}: metavariable {name!r} reused as "
                f"{kind} after {self.kinds[name]}"
            )
        self.kinds[name] = kind

    def collect(self, template):
        """First sweep: record every tagged declaration."""
        for node in self._walk(template):
            if isinstance(node, Call) and node.name in METAVAR_TAGS:
                if len(node.args) != 1 or not isinstance(node.args[0], Ident):
                    raise RuleSyntaxError(
                        f"rule {self.rule_name}: {node.name}(...) takes one identifier"
                    )
                self.declare(node.args[0].name, node.name)

    def _walk(self, template):
        items = template if isinstance(template, list) else [template]
        for item in items:
            if isinstance(item, (Expr, Stmt)):
                yield from walk(item)
            elif isinstance(item, list):
                yield from self._walk(item)

    # -- rewriting ------------------------------------------------------------

    def resolve_expr(self, e: Expr) -> Expr:
        if isinstance(e, Call):
            if e.name in METAVAR_TAGS:
                return Metavar(e.args[0].name, e.name)
            if e.name == "bin_oper":
                if len(e.args) != 3:
                    raise RuleSyntaxError(f"rule {self.rule_name}: bin_oper takes 3 arguments")
                op = self.resolve_expr(e.args[0])
                if not isinstance(op, Metavar):
                    raise RuleSyntaxError(
                        f"rule {self.rule_name}: bin_oper operator must be a metavariable "
                        f"(write literal operators infix)"
                    )
                return Binary(op, self.resolve_expr(e.args[1]), self.resolve_expr(e.args[2]))
            return Call(e.name, [self.resolve_expr(a) for a in e.args])
        if isinstance(e, Ident) and e.name in self.kinds:
            return Metavar(e.name, self.kinds[e.name])
        if isinstance(e, Ident):
            return e
        if isinstance(e, Binary):
            return Binary(e.op, self.resolve_expr(e.left), self.resolve_expr(e.right))
        if isinstance(e, Unary):
            return Unary(e.op, self.resolve_expr(e.operand), e.prefix)
        if isinstance(e, Assign):
            return Assign(self.resolve_expr(e.target), e.op, self.resolve_expr(e.value))
        if isinstance(e, ArrayRef):
            return ArrayRef(e.base, self.resolve_expr(e.index))
        if isinstance(e, TupleExpr):
            return TupleExpr([self.resolve_expr(i) for i in e.items])
        if isinstance(e, ListExpr):
            return ListExpr([self.resolve_expr(i) for i in e.items])
        if isinstance(e, DeclInit):
            return DeclInit(e.ctype, e.name, self.resolve_expr(e.value))
        return e

    def resolve_stmt(self, s: Stmt) -> Stmt:
        if isinstance(s, ExprStmt):
            expr = self.resolve_expr(s.expr)
            if isinstance(expr, Metavar) and expr.kind in ("cstmt", "cstmts"):
                return CstmtsSlot(var=expr)
            return ExprStmt(expr, pragmas=list(s.pragmas))
        if isinstance(s, Block):
            return Block(stmts=[self.resolve_stmt(i) for i in s.stmts], pragmas=list(s.pragmas))
        if isinstance(s, For):
            return For(
                self.resolve_expr(s.init) if s.init is not None else None,
                self.resolve_expr(s.cond) if s.cond is not None else None,
                self.resolve_expr(s.step) if s.step is not None else None,
                Block(stmts=[self.resolve_stmt(i) for i in s.body.stmts]),
                pragmas=list(s.pragmas),
            )
        if isinstance(s, If):
            return If(
                self.resolve_expr(s.cond),
                Block(stmts=[self.resolve_stmt(i) for i in s.then.stmts]),
                Block(stmts=[self.resolve_stmt(i) for i in s.els.stmts]) if s.els else None,
                pragmas=list(s.pragmas),
            )
        if isinstance(s, Return):
            return Return(self.resolve_expr(s.value) if s.value else None)
        if isinstance(s, GenIf):
            return GenIf(cond=self.resolve_expr(s.cond), body=[self.resolve_stmt(i) for i in s.body])
        if isinstance(s, GenIfElse):
            return GenIfElse(
                cond=self.resolve_expr(s.cond),
                then=[self.resolve_stmt(i) for i in s.then],
                els=[self.resolve_stmt(i) for i in s.els],
            )
        if isinstance(s, GenList):
            return GenList(alternatives=[[self.resolve_stmt(i) for i in alt] for alt in s.alternatives])
        raise RuleSyntaxError(f"rule {self.rule_name}: {type(s).__name__} not allowed in templates")

    def resolve(self, template):
        if isinstance(template, list):
            return [self.resolve_stmt(s) for s in template]
        return self.resolve_expr(template)


def metavars_in(template) -> list[Metavar]:
    out = []
    items = template if isinstance(template, list) else [template]
    for item in items:
        if isinstance(item, Metavar):
            out.append(item)
            continue
        if isinstance(item, (Expr, Stmt)):
            for node in walk(item):
                if isinstance(node, Metavar):
                    out.append(node)
                if isinstance(node, Binary) and isinstance(node.op, Metavar):
                    out.append(node.op)
                if isinstance(node, (GenIf, GenIfElse, GenList)):
                    out.extend(_construct_metavars(node))
    return out


def _construct_metavars(node) -> list[Metavar]:
    out = []
    if isinstance(node, GenIf):
        out += metavars_in(node.cond)
        out += metavars_in(node.body)
    elif isinstance(node, GenIfElse):
        out += metavars_in(node.cond)
        out += metavars_in(node.then)
        out += metavars_in(node.els)
    elif isinstance(node, GenList):
        for alt in node.alternatives:
            out += metavars_in(alt)
    return out


def _build_rule(name: str, sections: dict[str, list[Token]]) -> Rule:
    resolver = _Resolver(name)

    raw_pattern = _parse_template(sections["pattern"], name)
    raw_generate = _parse_template(sections["generate"], name)
    cond_parser = _tokens_parser(sections["condition"])
    raw_conditions = []
    while cond_parser.peek().kind != "eof":
        term = cond_parser.parse_expr()
        cond_parser.expect(";")
        raw_conditions.append(term)

    asserts_raw = []
    for tok in sections.get("assert", []):
        if tok.kind != "pragma":
            raise RuleSyntaxError(f"rule {name}: assert section holds only pragma lines")
        for ann, _grouped in _PragmaParser(tok.value).parse():
            asserts_raw.append(ann)

    for template in (raw_pattern, raw_conditions, raw_generate):
        resolver.collect(template)
    for ann in asserts_raw:
        for f, _, child in _ann_children(ann):
            resolver.collect(child)

    pattern = resolver.resolve(raw_pattern)
    conditions = [resolver.resolve_expr(t) for t in raw_conditions]
    generate = resolver.resolve(raw_generate)
    asserts = [_resolve_ann(ann, resolver) for ann in asserts_raw]

    if isinstance(pattern, list) != isinstance(generate, list):
        raise RuleSyntaxError(
            f"rule {name}: pattern and generate must both be statement "
            f"sequences or both be expressions"
        )

    _validate(name, pattern, conditions, generate, asserts, resolver.kinds)
    kind = "stmts" if isinstance(pattern, list) else "expr"
    return Rule(name, kind, pattern, conditions, generate, asserts, dict(resolver.kinds))


def _ann_children(ann):
    from dataclasses import fields as dc_fields

    for f in dc_fields(ann):
        val = getattr(ann, f.name)
        if isinstance(val, Expr):
            yield f.name, None, val
        elif isinstance(val, list):
            for i, item in enumerate(val):
                if isinstance(item, Expr):
                    yield f.name, i, item


def _resolve_ann(ann, resolver: _Resolver):
    import copy
    from dataclasses import fields as dc_fields

    out = copy.deepcopy(ann)
    for f in dc_fields(out):
        val = getattr(out, f.name)
        if isinstance(val, Expr):
            setattr(out, f.name, resolver.resolve_expr(val))
        elif isinstance(val, list):
            setattr(
                out,
                f.name,
                [resolver.resolve_expr(v) if isinstance(v, Expr) else v for v in val],
            )
    return out


def _validate(name, pattern, conditions, generate, asserts, kinds):
    bound = {m.name for m in metavars_in(pattern)}

    for term in conditions:
        if not isinstance(term, Call):
            raise RuleSyntaxError(f"rule {name}: condition terms must be predicate calls")
        if term.name not in PREDICATE_NAMES:
            raise UnknownPredicateError(
                f"rule {name}: unknown condition predicate {term.name!r}"
            )
        for nested in walk(term):
            if isinstance(nested, Call) and nested is not term \
                    and nested.name not in NESTED_FUNCTIONS:
                raise RuleSyntaxError(
                    f"rule {name}: {nested.name!r} cannot be called inside a condition"
                )
        used = {m.name for m in metavars_in(list(term.args))}
        binds = None
        if term.name == "fresh_var":
            if len(term.args) != 1 or not isinstance(term.args[0], Metavar) \
                    or term.args[0].kind != "cexpr":
                raise RuleSyntaxError(
                    f"rule {name}: fresh_var takes one cexpr metavariable"
                )
            binds = term.args[0].name
        elif term.name == "occurs_in" and term.args and isinstance(term.args[0], Metavar) \
                and term.args[0].name not in bound:
            binds = term.args[0].name
            rest = {m.name for m in metavars_in(list(term.args[1:]))}
            missing = rest - bound
            if missing:
                raise UnboundMetavarError(
                    f"rule {name}: occurs_in target uses unbound {sorted(missing)}"
                )
        if binds is not None:
            bound.add(binds)
            used.discard(binds)
        missing = used - bound
        if missing:
            raise UnboundMetavarError(
                f"rule {name}: condition uses unbound metavariables {sorted(missing)}"
            )

    for template, where in ((generate, "generate"), (asserts, "assert")):
        used = set()
        if where == "assert":
            for ann in template:
                for _, _, child in _ann_children(ann):
                    used |= {m.name for m in metavars_in(child)}
        else:
            used = {m.name for m in metavars_in(template)}
        missing = used - bound
        if missing:
            raise UnboundMetavarError(
                f"rule {name}: {where} uses unbound metavariables {sorted(missing)}"
            )


def parse_rules(source: str) -> list[Rule]:
    return RuleFileParser(source).parse_rules()


# -- printing -------------------------------------------------------------------


def print_rule(rule: Rule) -> str:
    lines = [f"rule {rule.name} {{"]

    def emit_template(label, template):
        lines.append(f"    {label}: {{")
        if isinstance(template, list):
            pr = _Printer()
            for s in template:
                pr.stmt(s, 2)
            lines.extend(pr.lines)
        else:
            lines.append("        " + expr_text(template))
        lines.append("    }")

    emit_template("pattern", rule.pattern)
    lines.append("    condition: {")
    for term in rule.condition:
        lines.append("        " + expr_text(term) + ";")
    lines.append("    }")
    emit_template("generate", rule.generate)
    if rule.asserts:
        from .annotations import prop_text

        lines.append("    assert: {")
        for ann in rule.asserts:
            lines.append(f"        #pragma stml {prop_text(ann)}")
        lines.append("    }")
    lines.append("}")
    return "\n".join(lines) + "\n"


def print_rules(rules: list[Rule]) -> str:
    return "\n".join(print_rule(r) for r in rules)


# -- shipped library --------------------------------------------------------------


def builtin_rules_text() -> str:
    return (
        importlib.resources.files("stmlforge").joinpath("rules/builtin.stml").read_text()
    )


_builtin_cache: Optional[list[Rule]] = None


def builtin_rules() -> list[Rule]:
    global _builtin_cache
    if _builtin_cache is None:
        _builtin_cache = parse_rules(builtin_rules_text())
    return list(_builtin_cache)
