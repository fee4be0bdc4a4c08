"""Pragma parsing, skeleton expansion, external merging, emission."""

import pytest

from stmlforge.annotations import (
    AnnotationStore,
    Appears,
    Associative,
    Commutative,
    DistributesOver,
    Entry,
    IsIdentity,
    IterationIndependent,
    IterationSpace,
    OutputOf,
    PolcaDef,
    PolcaMap,
    PolcaPlatform,
    Pure,
    Reads,
    Rw,
    SameLength,
    WriteSetEq,
    Writes,
    emit_pragmas,
    expand_polca,
    ingest_external,
    parse_pragma_line,
    parse_pragmas,
    prop_text,
    skeleton_expansion,
)
from stmlforge.cparse import parse, parse_expr_text
from stmlforge.csyntax import Call, For, Ident, IntLit, walk
from stmlforge.errors import PragmaError


def ann_of(line):
    parsed = parse_pragma_line(line)
    assert len(parsed) == 1
    return parsed[0][0]


def ex(text):
    return parse_expr_text(text, annotation_mode=True)


class TestPragmaGrammar:
    def test_reads_with_offsets(self):
        assert ann_of("#pragma stml reads c in {-1,0,+1}") == Reads(Ident("c"), [-1, 0, 1])

    def test_map(self):
        assert ann_of("#pragma polca map BODY1 v c") == PolcaMap("BODY1", Ident("v"), Ident("c"))

    def test_iteration_space(self):
        got = ann_of("#pragma stml iteration_space 0 N-1")
        assert got == IterationSpace(IntLit(0), ex("N - 1"))

    def test_map_over_zip(self):
        got = ann_of("#pragma polca map BODY2 zip(v,c) c")
        assert got == PolcaMap("BODY2", Call("zip", [Ident("v"), Ident("c")]), Ident("c"))

    def test_write_set(self):
        got = ann_of("#pragma stml write(c[i++] = a + 3) = {c[i], i}")
        assert isinstance(got, WriteSetEq)
        assert [prop_text(Reads(l)) for l in got.locations] == ["reads c[i]", "reads i"]

    def test_reads_sugar_is_several_properties(self):
        parsed = parse_pragma_line("#pragma stml reads (v in {0}, c in {0})")
        assert [a for a, _ in parsed] == [Reads(Ident("v"), [0]), Reads(Ident("c"), [0])]
        assert all(grouped for _, grouped in parsed)

    def test_platform(self):
        assert ann_of("#pragma polca mpi") == PolcaPlatform("mpi")

    def test_offsets_normalized(self):
        assert ann_of("#pragma stml writes c in {1,-1,1}") == Writes(Ident("c"), [-1, 1])

    def test_garbage_rejected(self):
        with pytest.raises(PragmaError):
            parse_pragma_line("#pragma stml readz c in {0}")
        with pytest.raises(PragmaError):
            parse_pragma_line("#pragma stml reads c in {}")

    @pytest.mark.parametrize(
        "line,expect",
        [
            ("#pragma stml pure F", Pure(Ident("F"))),
            ("#pragma stml appears a+b", Appears(ex("a + b"))),
            ("#pragma stml is_identity 0", IsIdentity(IntLit(0))),
            ("#pragma stml commutative +", Commutative("+")),
            ("#pragma stml associative myop", Associative("myop")),
            ("#pragma stml * distributes_over +", DistributesOver("*", "+")),
            ("#pragma stml same_length zip(v, c) c", SameLength(ex("zip(v, c)"), Ident("c"))),
            ("#pragma stml output(INI)", OutputOf(Ident("INI"))),
            ("#pragma stml iteration_independent", IterationIndependent()),
            ("#pragma stml rw buf in {0,1}", Rw(Ident("buf"), [0, 1])),
            ("#pragma polca def BODY1", PolcaDef("BODY1")),
        ],
    )
    def test_single_variants(self, line, expect):
        assert ann_of(line) == expect

    @pytest.mark.parametrize(
        "prop",
        [
            Pure(Ident("F")),
            Appears(ex("a + b * c")),
            Reads(Ident("c"), [-1, 0, 1]),
            Writes(ex("w"), [1]),
            Rw(Ident("z"), None),
            WriteSetEq(ex("c = a + 3"), [Ident("c")]),
            SameLength(ex("zip(v, c)"), Ident("c")),
            DistributesOver("*", "+"),
            Commutative("+"),
            Associative("*"),
            IsIdentity(IntLit(1)),
            IterationSpace(IntLit(0), ex("length(v)")),
            IterationIndependent(),
            OutputOf(IntLit(0)),
            Reads(Call("output", [IntLit(0)])),
        ],
    )
    def test_property_roundtrip(self, prop):
        line = f"#pragma stml {prop_text(prop)}"
        assert ann_of(line) == prop


class TestAttachment:
    def test_anchored_at_statement(self, corpus_sources):
        p = parse(corpus_sources["two_loop_scale.c"])
        store = parse_pragmas(p)
        loops = [n for n in walk(p) if isinstance(n, For)]
        first = store.by_node(p.node_id(loops[0]))
        assert PolcaMap("BODY1", Ident("v"), Ident("c")) in first
        body_anns = store.by_node(p.node_id(loops[0].body.stmts[0]))
        assert PolcaDef("BODY1") in body_anns
        assert len(body_anns) == 3


EXPECTED_MAP = [
    "reads v in {0}",
    "writes w in {0}",
    "same_length v w",
    "pure F",
    "iteration_space 0 length(v)",
    "iteration_independent",
]
EXPECTED_FOLD = [
    "reads v in {0}",
    "reads output(INI)",
    "writes a",
    "pure F",
    "iteration_space 0 length(v)",
]
EXPECTED_ITN = [
    "reads output(INI)",
    "reads n",
    "writes w",
    "pure F",
    "iteration_space 0 n",
]
EXPECTED_ZIPWITH = [
    "reads v in {0}",
    "reads w in {0}",
    "writes z in {0}",
    "same_length v w",
    "same_length v z",
    "pure F",
    "iteration_space 0 length(v)",
    "iteration_independent",
]
EXPECTED_SCANL = [
    "reads output(INI)",
    "reads v in {0}",
    "reads w in {0}",
    "writes w in {1}",
    "pure F",
    "iteration_space 0 length(v)",
]


class TestExpansion:
    @pytest.mark.parametrize(
        "pragma,expected",
        [
            ("#pragma polca map F v w", EXPECTED_MAP),
            ("#pragma polca fold F INI v a", EXPECTED_FOLD),
            ("#pragma polca itn F INI n w", EXPECTED_ITN),
            ("#pragma polca zipWith F v w z", EXPECTED_ZIPWITH),
            ("#pragma polca scanl F INI v w", EXPECTED_SCANL),
        ],
    )
    def test_table_rows(self, pragma, expected):
        ann = ann_of(pragma)
        got = [prop_text(p) for p, _ in skeleton_expansion(ann)]
        assert got == expected

    def test_fold_has_no_iteration_independent(self):
        props = [p for p, _ in skeleton_expansion(ann_of("#pragma polca fold F INI v a"))]
        assert IterationIndependent() not in props

    def test_zip_input_distributes_reads(self):
        props = [p for p, _ in skeleton_expansion(ann_of("#pragma polca map B zip(v,c) c"))]
        assert Reads(Ident("v"), [0]) in props
        assert Reads(Ident("c"), [0]) in props

    def test_expand_is_total_and_idempotent(self, corpus_sources):
        p = parse(corpus_sources["two_loop_scale.c"])
        store = expand_polca(p, parse_pragmas(p))
        again = expand_polca(p, store)
        assert again == store

    def test_anchor_shape_error(self):
        p = parse("#pragma polca map F v w\nint a;\na = 1;\n")
        # pragma anchors on the declaration, not a loop
        with pytest.raises(PragmaError):
            expand_polca(p, parse_pragmas(p))


class TestIngest:
    def make_store(self):
        return AnnotationStore([Entry(3, Pure(Ident("F")), "user")])

    def test_user_wins_over_external(self):
        store = self.make_store()
        merged, warnings = ingest_external(store, [(3, WriteSetEq(Ident("F"), [Ident("g")]))])
        assert len(warnings) == 1
        assert merged.entries == store.entries

    def test_empty_extra_is_identity(self):
        store = self.make_store()
        merged, warnings = ingest_external(store, [])
        assert merged == store and warnings == []

    def test_disjoint_merge(self):
        store = self.make_store()
        merged, warnings = ingest_external(store, [(7, Reads(Ident("v"), [0]))])
        assert warnings == []
        assert merged.by_node(7) == [Reads(Ident("v"), [0])]
        assert merged.entries[-1].provenance == "external"

    def test_carried_dependency_contradiction(self):
        store = AnnotationStore(
            [
                Entry(3, IterationIndependent(), "user"),
                Entry(3, Writes(Ident("c"), [0]), "user"),
            ]
        )
        merged, warnings = ingest_external(store, [(3, Reads(Ident("c"), [-1]))])
        assert len(warnings) == 1
        assert Reads(Ident("c"), [-1]) not in merged.by_node(3)

    def test_monotone_on_user_entries(self):
        store = self.make_store()
        merged, _ = ingest_external(
            store, [(3, Pure(Ident("g"))), (3, WriteSetEq(Ident("F"), [Ident("x")]))]
        )
        for e in store.entries:
            assert e in merged.entries

    def test_skeleton_derived_entries_also_win(self, corpus_sources):
        # a map expansion asserts iteration independence; an external
        # property implying a loop-carried dependency on that loop is
        # rejected like any user contradiction
        from stmlforge.cparse import parse as cparse
        from stmlforge.csyntax import For, walk

        p = cparse(corpus_sources["two_loop_scale.c"])
        store = expand_polca(p, parse_pragmas(p))
        loop = next(n for n in walk(p) if isinstance(n, For))
        anchor = p.node_id(loop)
        merged, warnings = ingest_external(store, [(anchor, Reads(Ident("c"), [-1]))])
        assert len(warnings) == 1
        assert Reads(Ident("c"), [-1]) not in merged.by_node(anchor)


class TestEmission:
    def test_emit_then_reparse_reproduces_store(self, corpus_sources):
        p = parse(corpus_sources["two_loop_scale.c"])
        store = expand_polca(p, parse_pragmas(p))
        text = emit_pragmas(p, store)
        p2 = parse(text)
        store2 = parse_pragmas(p2)
        assert [(e.anchor, e.ann) for e in store2.entries] == [
            (e.anchor, e.ann) for e in store.entries
        ]

    def test_reads_sugar_regrouped(self, corpus_sources):
        p = parse(corpus_sources["two_loop_scale.c"])
        store = expand_polca(p, parse_pragmas(p))
        text = emit_pragmas(p, store)
        assert "#pragma stml reads (v in {0}, c in {0})" in text

    def test_dangling_anchor(self):
        p = parse("int a;\na = 1;\n")
        store = AnnotationStore([Entry(999, Pure(Ident("F")), "user")])
        with pytest.raises(PragmaError):
            emit_pragmas(p, store)
