"""Randomized roundtrip properties for the pragma grammar and printer."""

from hypothesis import given, settings
from hypothesis import strategies as st

from stmlforge.annotations import (
    Appears,
    Associative,
    Commutative,
    DistributesOver,
    IsIdentity,
    IterationIndependent,
    IterationSpace,
    Pure,
    Reads,
    Rw,
    SameLength,
    WriteSetEq,
    Writes,
    parse_pragma_line,
    prop_text,
)
from stmlforge.cparse import parse, parse_expr_text
from stmlforge.cprint import expr_text, print_program
from stmlforge.csyntax import ArrayRef, Binary, Call, Ident, IntLit, Unary

names = st.sampled_from(["v", "w", "acc", "len_2", "B1", "x"])
ops = st.sampled_from(["+", "-", "*", "/", "%"])
cmp_ops = st.sampled_from(["<", "<=", ">", ">=", "==", "!="])


@st.composite
def exprs(draw, depth=2):
    if depth == 0:
        kind = draw(st.integers(0, 2))
        if kind == 0:
            return IntLit(draw(st.integers(0, 99)))
        if kind == 1:
            return Ident(draw(names))
        return ArrayRef(draw(names), Ident(draw(names)))
    kind = draw(st.integers(0, 4))
    if kind == 0:
        return Binary(draw(ops), draw(exprs(depth - 1)), draw(exprs(depth - 1)))
    if kind == 1:
        return Binary(draw(cmp_ops), draw(exprs(depth - 1)), draw(exprs(depth - 1)))
    if kind == 2:
        return Unary("-", draw(exprs(depth - 1)))
    if kind == 3:
        return Call(draw(names), draw(st.lists(exprs(depth - 1), min_size=0, max_size=2)))
    return draw(exprs(0))


locations = st.one_of(
    names.map(Ident),
    st.tuples(names, names).map(lambda t: ArrayRef(t[0], Ident(t[1]))),
)
offsets = st.lists(st.integers(-5, 5), min_size=1, max_size=4).map(
    lambda xs: sorted(set(xs))
)

properties = st.one_of(
    exprs().map(Pure),
    exprs().map(Appears),
    exprs().map(IsIdentity),
    ops.map(Commutative),
    ops.map(Associative),
    st.tuples(ops, ops).map(lambda t: DistributesOver(*t)),
    st.tuples(exprs(), st.lists(locations, min_size=1, max_size=3)).map(
        lambda t: WriteSetEq(*t)
    ),
    st.tuples(names.map(Ident), st.none() | offsets).map(lambda t: Reads(*t)),
    st.tuples(names.map(Ident), st.none() | offsets).map(lambda t: Writes(*t)),
    st.tuples(names.map(Ident), st.none() | offsets).map(lambda t: Rw(*t)),
    st.tuples(exprs(), exprs()).map(lambda t: SameLength(*t)),
    st.tuples(exprs(1), exprs(1)).map(lambda t: IterationSpace(*t)),
    st.just(IterationIndependent()),
)


@settings(max_examples=150, deadline=None)
@given(properties)
def test_property_print_parse_roundtrip(prop):
    line = f"#pragma stml {prop_text(prop)}"
    parsed = parse_pragma_line(line)
    assert len(parsed) == 1
    assert parsed[0][0] == prop


@settings(max_examples=150, deadline=None)
@given(exprs(depth=3))
def test_expression_print_parse_roundtrip(e):
    text = expr_text(e)
    assert parse_expr_text(text) == e


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(names, exprs(2)), min_size=1, max_size=4))
def test_statement_roundtrip(assignments):
    src = "".join(f"{n} = {expr_text(e)};\n" for n, e in assignments)
    p = parse(src)
    assert parse(print_program(p)) == p
