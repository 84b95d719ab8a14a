"""Tokenizer and parser for the supported Java subset."""

import pytest

from killmat.javasrc import (
    JavaParseError,
    UnsupportedConstructError,
    classify_expression_statement,
    decision_points,
    find_call_sites,
    parse_lone_method,
    parse_source,
    tokenize,
)


def toks(text):
    return tokenize(text)


class TestTokenizer:
    def test_operators_maximal_munch(self):
        assert [t.text for t in toks("a>>>=b>>c>=d")] == ["a", ">>>=", "b", ">>", "c", ">=", "d"]

    def test_string_and_char_literals(self):
        out = toks('x = "a,b\\"c" + \'\\n\';')
        assert out[2].kind == "str"
        assert out[4].kind == "char"

    def test_comments_skipped_lines_tracked(self):
        out = toks("a // c1\n/* c2\nc3 */ b")
        assert [t.text for t in out] == ["a", "b"]
        assert out[1].line == 3

    def test_numbers(self):
        out = toks("x = 0x1F + 3.5e-2 + 10L;")
        nums = [t.text for t in out if t.kind == "num"]
        assert nums == ["0x1F", "3.5e-2", "10L"]

    def test_unterminated_string(self):
        with pytest.raises(JavaParseError):
            toks('"abc')


FIXTURE = """
package org.fix;

public class Box {
    final static byte LF = (byte) '\\n';
    protected int[] buffer = new int[16];
    private final java.util.HashMap<String, Integer> cache = new java.util.HashMap<>();

    static {
        int seed = 3;
        seed = seed + 1;
    }

    {
        setLimit(4);
    }

    public Box(int n) throws java.io.IOException {
        this.init(n);
    }

    private void init(int n) {
        int total = 0;
        for (int i = 0; i < n; i++) {
            if (total <= i && ok(i)) {
                total += i;
            } else {
                total--;
            }
        }
        while (total > 10) {
            total = half(total);
            if (total == 11) {
                break;
            }
        }
        do {
            total++;
        } while (total < 3);
        switch (total) {
            case 1:
                log("one");
                break;
            case 2:
            case 3:
                log("few");
                break;
            default:
                log("many");
        }
        try {
            risky();
        } catch (RuntimeException e) {
            throw e;
        } finally {
            log("done");
        }
        synchronized (this) {
            total = 0;
        }
        assert total >= 0 : "neg";
    }

    private boolean ok(int i) { return i > 100 ? false : true; }
    private int half(int v) { return v / 2; }
    private void log(String s) {}
    private void risky() {}
    private void setLimit(int n) { this.buffer = new int[n]; }

    public enum Kind { INT, LONG }

    private interface Rule {
        void apply(int value);
    }
}
"""


@pytest.fixture(scope="module")
def unit():
    return parse_source(FIXTURE)


class TestParser:
    def test_structure(self, unit):
        box = unit.types[0]
        assert unit.package == "org.fix"
        assert [f.type_name for f in box.fields] == ["byte", "int", "HashMap"]
        assert [b.static for b in box.init_blocks] == [True, False]
        assert [t.name for t in box.nested] == ["Kind", "Rule"]
        assert box.nested[0].enum_constants[0].name == "INT"

    def test_constructor_and_throws(self, unit):
        box = unit.types[0]
        ctor = [m for m in box.methods if m.is_constructor][0]
        assert ctor.name == "Box" and ctor.arity == 1 and ctor.throws

    def test_statement_kinds(self, unit):
        box = unit.types[0]
        init = [m for m in box.methods if m.name == "init"][0]
        kinds = [s.kind for s in init.body.statements]
        assert kinds == [
            "localvar", "for", "while", "do", "switch", "try", "sync", "assert",
        ]

    def test_switch_case_count(self, unit):
        box = unit.types[0]
        init = [m for m in box.methods if m.name == "init"][0]
        switch = init.body.statements[4]
        assert switch.case_count == 3  # default not counted

    def test_try_catch_count(self, unit):
        box = unit.types[0]
        init = [m for m in box.methods if m.name == "init"][0]
        assert init.body.statements[5].catch_count == 1

    def test_else_branch_becomes_second_block(self, unit):
        box = unit.types[0]
        init = [m for m in box.methods if m.name == "init"][0]
        for_stmt = init.body.statements[1]
        if_stmt = for_stmt.blocks[0].statements[0]
        assert if_stmt.kind == "if" and len(if_stmt.blocks) == 2

    def test_field_with_generics_and_new(self, unit):
        box = unit.types[0]
        cache = box.fields[2]
        assert cache.type_name == "HashMap"
        assert "final" in cache.modifiers
        assert any(t.text == "new" for t in cache.declarators[0].init_tokens)

    def test_lone_method_helper(self):
        m = parse_lone_method("public void t() throws Exception {\n  fail();\n}")
        assert m.name == "t" and m.throws and m.end_line - m.start_line + 1 == 3


class TestUnsupportedConstructs:
    def test_lambda_rejected_with_name(self):
        src = "class A { void m() { run(() -> 1); } }"
        with pytest.raises(UnsupportedConstructError, match="lambda"):
            parse_source(src)

    def test_method_reference_rejected(self):
        src = "class A { void m() { run(A::go); } }"
        with pytest.raises(UnsupportedConstructError, match="method reference"):
            parse_source(src)

    def test_labeled_statement_rejected(self):
        src = "class A { void m() { outer: while (true) {} } }"
        with pytest.raises(UnsupportedConstructError, match="labeled"):
            parse_source(src)

    def test_local_class_rejected(self):
        src = "class A { void m() { class B {} } }"
        with pytest.raises(UnsupportedConstructError, match="local type"):
            parse_source(src)

    def test_error_carries_line(self):
        src = "class A {\n void m() {\n  run(() -> 1);\n }\n}"
        with pytest.raises(UnsupportedConstructError) as err:
            parse_source(src)
        assert err.value.line == 3


class TestExpressionClassification:
    @pytest.mark.parametrize(
        "text,expected",
        [
            ("this.init(x)", "methodCall-this"),
            ("super.init(x)", "methodCall-super"),
            ("super(x)", "methodCall-super"),
            ("this(x)", "methodCall-this"),
            ("getValue()", "methodCall-get"),
            ("obj.setValue(1)", "methodCall-set"),
            ("helper.run(1, 2)", "methodCall"),
            ("x = y + 1", "ASSIGN"),
            ("x += 2", "ADD_ASSIGN"),
            ("x >>>= 2", "URSHIFT_ASSIGN"),
            ("x++", "INC"),
            ("--x", "DEC"),
            ("x + y", "expression"),
        ],
    )
    def test_classify(self, text, expected):
        assert classify_expression_statement(toks(text)) == expected


class TestTokenAnalyses:
    def test_call_sites_names_and_arity(self):
        sites = find_call_sites(toks("foo(a, bar(b, c), 3) + baz()"))
        assert sites == [("foo", 3), ("bar", 2), ("baz", 0)]

    def test_constructor_calls_skipped(self):
        assert find_call_sites(toks("new Foo(a, b)")) == []

    def test_generic_args_do_not_inflate_arity(self):
        sites = find_call_sites(toks("foo(new java.util.HashMap<String, Integer>())"))
        assert ("foo", 1) in sites

    def test_comparisons_not_masked_as_generics(self):
        sites = find_call_sites(toks("foo(a < b, c > d)"))
        assert sites == [("foo", 2)]

    def test_decision_points(self):
        assert decision_points(toks("a && b || c ? d : e")) == 3

    def test_generics_wildcard_not_a_ternary(self):
        assert decision_points(toks("(java.util.List<?>) x")) == 0
