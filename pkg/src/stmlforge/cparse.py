"""Tokenizer and recursive-descent parser for the supported C subset.

Pragma lines (`#pragma polca ...`, `#pragma stml ...`) are captured verbatim
and attached to the next non-pragma statement; interpreting them is the
annotation layer's job.
"""

from __future__ import annotations

from dataclasses import dataclass

from .csyntax import (
    ArrayRef,
    Assign,
    Binary,
    Block,
    Call,
    DeclInit,
    DeclStmt,
    Declarator,
    ExprStmt,
    FloatLit,
    For,
    FuncDef,
    Ident,
    If,
    IntLit,
    Param,
    Program,
    Return,
    SCALAR_TYPES,
    Stmt,
    TupleExpr,
    Unary,
)
from .errors import ParseError, UnsupportedConstructError

REJECTED_KEYWORDS = {
    "struct", "union", "enum", "goto", "switch", "case", "while", "do",
    "break", "continue", "typedef", "sizeof", "static", "extern", "const",
    "unsigned", "signed", "long", "short", "char",
}

PUNCT = [
    "++", "--", "+=", "-=", "*=", "/=", "==", "!=", "<=", ">=", "&&", "||",
    "+", "-", "*", "/", "%", "<", ">", "=", "!", "(", ")", "[", "]",
    "{", "}", ",", ";", "&", "|", ":",
]


@dataclass
class Token:
    kind: str  # 'int', 'float', 'id', 'pragma', 'punct', 'eof'
    value: str
    line: int
    col: int


def tokenize(source: str) -> list[Token]:
    toks = []
    i, line, col = 0, 1, 1
    n = len(source)

    def error(msg):
        raise ParseError(msg, line, col)

    while i < n:
        ch = source[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if source.startswith("//", i):
            while i < n and source[i] != "\n":
                i += 1
            continue
        if source.startswith("/*", i):
            end = source.find("*/", i + 2)
            if end < 0:
                error("unterminated comment")
            for c in source[i : end + 2]:
                if c == "\n":
                    line += 1
                    col = 1
                else:
                    col += 1
            i = end + 2
            continue
        if ch == "#":
            start = i
            while i < n and source[i] != "\n":
                i += 1
            text = source[start:i].strip()
            if not text.startswith("#pragma"):
                error("unsupported preprocessor directive (only #pragma is recognized)")
            toks.append(Token("pragma", text, line, col))
            col += i - start
            continue
        if ch.isdigit() or (ch == "." and i + 1 < n and source[i + 1].isdigit()):
            start = i
            isfloat = False
            while i < n and source[i].isdigit():
                i += 1
            if i < n and source[i] == ".":
                isfloat = True
                i += 1
                while i < n and source[i].isdigit():
                    i += 1
            if i < n and source[i] in "eE":
                isfloat = True
                i += 1
                if i < n and source[i] in "+-":
                    i += 1
                while i < n and source[i].isdigit():
                    i += 1
            if i < n and source[i] in "fF":
                isfloat = True
                i += 1
            text = source[start:i]
            toks.append(Token("float" if isfloat else "int", text, line, col))
            col += i - start
            continue
        if ch.isalpha() or ch == "_":
            start = i
            while i < n and (source[i].isalnum() or source[i] == "_"):
                i += 1
            toks.append(Token("id", source[start:i], line, col))
            col += i - start
            continue
        if ch in "\"'":
            error("string and character literals are not in the supported subset")
        for p in PUNCT:
            if source.startswith(p, i):
                toks.append(Token("punct", p, line, col))
                i += len(p)
                col += len(p)
                break
        else:
            error(f"unexpected character {ch!r}")
    toks.append(Token("eof", "", line, col))
    return toks


class Parser:
    def __init__(self, tokens: list[Token], annotation_mode: bool = False):
        self.toks = tokens
        self.pos = 0
        # Annotation mode relaxes the expression grammar for pragma payloads:
        # parenthesized tuples are allowed there and nowhere else.
        self.annotation_mode = annotation_mode

    # -- token plumbing ------------------------------------------------------

    def peek(self, ahead=0) -> Token:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.toks[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def at(self, value: str) -> bool:
        t = self.peek()
        return t.kind == "punct" and t.value == value

    def at_id(self, value: str) -> bool:
        t = self.peek()
        return t.kind == "id" and t.value == value

    def expect(self, value: str) -> Token:
        if not self.at(value):
            t = self.peek()
            raise ParseError(f"expected {value!r}, found {t.value!r}", t.line, t.col)
        return self.next()

    def error(self, msg, tok=None):
        t = tok or self.peek()
        raise ParseError(msg, t.line, t.col)

    def unsupported(self, what, tok=None):
        t = tok or self.peek()
        raise UnsupportedConstructError(f"unsupported construct: {what}", t.line, t.col)

    # -- program -------------------------------------------------------------

    def parse_program(self) -> Program:
        items = []
        while self.peek().kind != "eof":
            items.append(self.parse_top_item())
        return Program(items)

    def collect_pragmas(self) -> list[str]:
        lines = []
        while self.peek().kind == "pragma":
            lines.append(self.next().value)
        return lines

    def parse_top_item(self):
        pragmas = self.collect_pragmas()
        t = self.peek()
        if t.kind == "eof":
            if pragmas:
                self.error("pragma is not followed by any statement", t)
        if t.kind == "id" and t.value in REJECTED_KEYWORDS:
            self.unsupported(f"'{t.value}'")
        if t.kind == "id" and (t.value in SCALAR_TYPES or t.value == "void"):
            if self.peek(2).kind == "punct" and self.peek(2).value == "(":
                item = self.parse_funcdef()
            else:
                item = self.parse_decl()
        else:
            item = self.parse_stmt()
        item.pragmas = pragmas + item.pragmas
        return item

    def parse_type(self) -> str:
        t = self.next()
        if t.kind != "id" or t.value not in SCALAR_TYPES + ("void",):
            self.error(f"expected a type name, found {t.value!r}", t)
        return t.value

    def parse_decl(self) -> DeclStmt:
        first = self.peek()
        ctype = self.parse_type()
        if ctype == "void":
            self.unsupported("void variable declaration", first)
        if self.at("*"):
            self.unsupported("pointer declaration")
        decls = []
        while True:
            name = self.next()
            if name.kind != "id":
                self.error("expected a declarator name", name)
            extent = None
            init = None
            if self.at("["):
                self.next()
                extent = self.parse_expr()
                self.expect("]")
                if self.at("["):
                    self.unsupported("multi-dimensional array")
            if self.at("="):
                self.next()
                init = self.parse_expr()
            decls.append(Declarator(name.value, extent, init))
            if self.at(","):
                self.next()
                continue
            break
        self.expect(";")
        return DeclStmt(ctype=ctype, declarators=decls, line=first.line)

    def parse_funcdef(self) -> FuncDef:
        first = self.peek()
        rettype = self.parse_type()
        name = self.next()
        self.expect("(")
        params = []
        if not self.at(")"):
            while True:
                ptype = self.parse_type()
                if self.at("*"):
                    self.unsupported("pointer parameter")
                pname = self.next()
                if pname.kind != "id":
                    self.error("expected a parameter name", pname)
                is_array = False
                if self.at("["):
                    self.next()
                    if not self.at("]"):
                        self.parse_expr()  # extent on params is ignored
                    self.expect("]")
                    is_array = True
                params.append(Param(ptype, pname.value, is_array))
                if self.at(","):
                    self.next()
                    continue
                break
        self.expect(")")
        body = self.parse_block()
        return FuncDef(rettype, name.value, params, body, line=first.line)

    # -- statements ----------------------------------------------------------

    def parse_stmt(self) -> Stmt:
        pragmas = self.collect_pragmas()
        t = self.peek()
        if t.kind == "eof" or (t.kind == "punct" and t.value == "}"):
            if pragmas:
                self.error("pragma is not followed by any statement", t)
        if t.kind == "id" and t.value in REJECTED_KEYWORDS:
            self.unsupported(f"'{t.value}'")
        if self.at("{"):
            stmt = self.parse_block()
        elif self.at_id("for"):
            stmt = self.parse_for()
        elif self.at_id("if"):
            stmt = self.parse_if()
        elif self.at_id("return"):
            self.next()
            value = None if self.at(";") else self.parse_expr()
            self.expect(";")
            stmt = Return(value, line=t.line)
        elif t.kind == "id" and t.value in SCALAR_TYPES:
            stmt = self.parse_decl()
        else:
            expr = self.parse_expr()
            self.expect(";")
            stmt = ExprStmt(expr, line=t.line)
        stmt.pragmas = pragmas + stmt.pragmas
        return stmt

    def parse_block(self) -> Block:
        first = self.expect("{")
        stmts = []
        while not self.at("}"):
            if self.peek().kind == "eof":
                self.error("unterminated block", first)
            stmts.append(self.parse_stmt())
        self.expect("}")
        return Block(stmts=stmts, line=first.line)

    def as_block(self, stmt: Stmt) -> Block:
        if isinstance(stmt, Block):
            return stmt
        return Block(stmts=[stmt], line=stmt.line)

    def parse_for(self) -> For:
        first = self.next()  # 'for'
        self.expect("(")
        init = None
        if not self.at(";"):
            t = self.peek()
            if t.kind == "id" and t.value in SCALAR_TYPES:
                ctype = self.parse_type()
                name = self.next()
                if name.kind != "id":
                    self.error("expected a name in for-loop declaration", name)
                self.expect("=")
                value = self.parse_expr()
                init = DeclInit(ctype, name.value, value)
            else:
                init = self.parse_expr()
        self.expect(";")
        cond = None if self.at(";") else self.parse_expr()
        self.expect(";")
        step = None if self.at(")") else self.parse_expr()
        self.expect(")")
        # Pragmas between the loop header and its body anchor on the first
        # body statement (matches annotated-source layout).
        body = self.as_block(self.parse_stmt())
        return For(init, cond, step, body, line=first.line)

    def parse_if(self) -> If:
        first = self.next()  # 'if'
        self.expect("(")
        cond = self.parse_expr()
        self.expect(")")
        then = self.as_block(self.parse_stmt())
        els = None
        if self.at_id("else"):
            self.next()
            els = self.as_block(self.parse_stmt())
        return If(cond, then, els, line=first.line)

    # -- expressions ----------------------------------------------------------

    def parse_expr(self):
        return self.parse_assignment()

    def parse_assignment(self):
        left = self.parse_logical_or()
        t = self.peek()
        if t.kind == "punct" and t.value in ("=", "+=", "-=", "*="):
            self.next()
            if not isinstance(left, (Ident, ArrayRef)):
                self.error("assignment target must be a variable or array element", t)
            value = self.parse_assignment()
            return Assign(left, t.value, value)
        if t.kind == "punct" and t.value == "/=":
            self.unsupported("'/=' compound assignment", t)
        return left

    def _binop_level(self, ops, sub):
        left = sub()
        while True:
            t = self.peek()
            if t.kind == "punct" and t.value in ops:
                self.next()
                left = Binary(t.value, left, sub())
            else:
                return left

    def parse_logical_or(self):
        return self._binop_level(("||",), self.parse_logical_and)

    def parse_logical_and(self):
        return self._binop_level(("&&",), self.parse_equality)

    def parse_equality(self):
        return self._binop_level(("==", "!="), self.parse_relational)

    def parse_relational(self):
        return self._binop_level(("<", "<=", ">", ">="), self.parse_additive)

    def parse_additive(self):
        return self._binop_level(("+", "-"), self.parse_multiplicative)

    def parse_multiplicative(self):
        return self._binop_level(("*", "/", "%"), self.parse_unary)

    def parse_unary(self):
        t = self.peek()
        if t.kind == "punct":
            if t.value in ("-", "!"):
                self.next()
                return Unary(t.value, self.parse_unary(), prefix=True)
            if t.value in ("++", "--"):
                self.next()
                operand = self.parse_unary()
                if not isinstance(operand, (Ident, ArrayRef)):
                    self.error("++/-- needs a variable or array element", t)
                return Unary(t.value, operand, prefix=True)
            if t.value == "*":
                self.unsupported("pointer dereference", t)
            if t.value == "&":
                self.unsupported("address-of operator", t)
        return self.parse_postfix()

    def parse_postfix(self):
        expr = self.parse_primary()
        while True:
            t = self.peek()
            if t.kind != "punct":
                return expr
            if t.value == "[":
                if not isinstance(expr, Ident):
                    if isinstance(expr, ArrayRef):
                        self.unsupported("multi-dimensional array access", t)
                    self.error("array access base must be an identifier", t)
                self.next()
                index = self.parse_expr()
                self.expect("]")
                expr = ArrayRef(expr.name, index)
            elif t.value in ("++", "--"):
                if not isinstance(expr, (Ident, ArrayRef)):
                    self.error("++/-- needs a variable or array element", t)
                self.next()
                expr = Unary(t.value, expr, prefix=False)
            else:
                return expr

    def parse_primary(self):
        t = self.next()
        if t.kind == "int":
            return IntLit(int(t.value, 10))
        if t.kind == "float":
            return FloatLit(float(t.value.rstrip("fF")), t.value)
        if t.kind == "id":
            if t.value in REJECTED_KEYWORDS:
                self.unsupported(f"'{t.value}'", t)
            if self.at("("):
                self.next()
                args = []
                if not self.at(")"):
                    while True:
                        args.append(self.parse_expr())
                        if self.at(","):
                            self.next()
                            continue
                        break
                self.expect(")")
                return Call(t.value, args)
            return Ident(t.value)
        if t.kind == "punct" and t.value == "(":
            if self.peek().kind == "id" and self.peek().value in SCALAR_TYPES and \
                    self.peek(1).kind == "punct" and self.peek(1).value == ")":
                self.unsupported("type cast", t)
            expr = self.parse_expr()
            if self.at(","):
                if not self.annotation_mode:
                    self.unsupported("comma expression", t)
                items = [expr]
                while self.at(","):
                    self.next()
                    items.append(self.parse_expr())
                self.expect(")")
                return TupleExpr(items)
            self.expect(")")
            return expr
        self.error(f"unexpected token {t.value!r}", t)


def parse(source: str) -> Program:
    """Parse a translation unit of the supported subset."""
    return Parser(tokenize(source)).parse_program()


def parse_expr_text(text: str, annotation_mode: bool = False):
    """Parse a single expression (used by pragma payloads and tests)."""
    p = Parser(tokenize(text), annotation_mode=annotation_mode)
    expr = p.parse_expr()
    t = p.peek()
    if t.kind != "eof":
        raise ParseError(f"trailing input after expression: {t.value!r}", t.line, t.col)
    return expr
