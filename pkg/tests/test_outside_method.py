"""Outside-method constructs: field declarations, initializer blocks, inner types.

The snippets mirror the shapes such mutants take in real projects (parser
state tables, base64 variant setup, toString-style builders, inner enums).
"""

from killmat.features import (
    ProjectIndex,
    statement_type_of,
    structural_features,
    write_features_csv,
    extract_pairs,
)
from killmat.corpus import build_pairs
from killmat.records import CoverageMap, MutantRecord, Outcome, TestCaseRecord
from killmat.synth import SynthSpec, generate_synthetic_corpus

PARSER_LIKE = """
package org.jp;

public class ByteSourceParser {
    final static byte BYTE_LF = (byte) '\\n';
    private final static int[] _icUTF8 = CharTypes.getInputCodeUtf8();
    protected final static int[] _icLatin1 = CharTypes.getInputCodeLatin1();
    protected ObjectCodec _objectCodec;
    final protected ByteQuadsCanonicalizer _symbols;
    protected int[] _quadBuffer = new int[16];
    protected boolean _tokenIncomplete;
    private int _quad1;

    static {
        StringBuilder sb = new StringBuilder(STD_BASE64_ALPHABET);
        sb.setCharAt(sb.indexOf("+"), '-');
        sb.setCharAt(sb.indexOf("/"), '_');
        MODIFIED_FOR_URL = new Base64Variant("MODIFIED-FOR-URL", sb.toString(), false, PADDING_CHAR_NONE, 2147483647);
    }

    {
        setDefaultFullDetail(true);
        setArrayContentDetail(true);
        setUseClassName(true);
        setContentStart("(");
        setContentEnd(")");
        setFieldSeparator(", ");
    }

    public enum NumberType {
        INT, LONG, BIG_INTEGER, FLOAT, DOUBLE, BIG_DECIMAL
    }

    private interface NumberRule extends Rule {
        void appendTo(StringBuffer buffer, int value);
    }

    protected int parse(int code) {
        if (_tokenIncomplete) {
            return _quad1;
        }
        return code;
    }
}
"""


def line_of(needle: str) -> int:
    for idx, line in enumerate(PARSER_LIKE.splitlines(), start=1):
        if needle in line:
            return idx
    raise AssertionError(needle)


class TestRealisticOutsideMethodShapes:
    def setup_method(self):
        self.index = ProjectIndex({"ByteSourceParser.java": PARSER_LIKE})

    def site(self, needle, hint=None):
        return self.index.resolve_site("org.jp.ByteSourceParser", line_of(needle), hint)

    def test_field_with_cast_initializer(self):
        site = self.site("BYTE_LF")
        assert site.kind == "field"
        assert statement_type_of(site) == "MemberDeclaration"
        feats = structural_features(site, self.index)
        assert feats.declared_variable_type == "NUMERIC"
        assert feats.variable_is_final_new is True  # via the final modifier

    def test_plain_field_is_neither_final_nor_new(self):
        feats = structural_features(self.site("_quad1"), self.index)
        assert feats.variable_is_final_new is False

    def test_array_field_from_static_call(self):
        feats = structural_features(self.site("_icUTF8"), self.index)
        assert feats.declared_variable_type == "NUMERIC_ARRAY"
        assert feats.parent_context_type == "Block"
        assert (feats.lines_in_method, feats.source_complexity) == (0, 0)

    def test_object_field(self):
        feats = structural_features(self.site("_objectCodec"), self.index)
        assert feats.declared_variable_type == "OBJECT"

    def test_new_array_field(self):
        feats = structural_features(self.site("_quadBuffer"), self.index)
        assert feats.variable_is_final_new is True

    def test_static_block_set_call(self):
        site = self.site('sb.setCharAt(sb.indexOf("+"), \'-\')')
        assert site.kind == "statement"
        assert statement_type_of(site) == "methodCall-set"
        assert structural_features(site, self.index).parent_context_type == "Block"

    def test_static_block_assignment_with_new(self):
        site = self.site("MODIFIED_FOR_URL =", hint="MODIFIED_FOR_URL")
        assert statement_type_of(site) == "ASSIGN"

    def test_instance_block_call(self):
        site = self.site('setContentStart("(")')
        assert statement_type_of(site) == "methodCall-set"
        feats = structural_features(site, self.index)
        assert feats.parent_context_type == "Block"
        assert feats.call == 0 and feats.callby == 0

    def test_enum_constant_site(self):
        site = self.site("INT, LONG")
        assert site.kind == "enum_constant"
        assert statement_type_of(site) == "EnumConstant"

    def test_inside_method_still_works_alongside(self):
        site = self.site("if (_tokenIncomplete)", hint="_tokenIncomplete")
        feats = structural_features(site, self.index)
        assert feats.parent_context_type == "MethodDeclaration"
        assert feats.source_complexity == 2
        assert feats.has_return_or_throw is True


class TestExtractionDeterminism:
    def test_identical_bytes_across_runs(self, tmp_path):
        corpus = generate_synthetic_corpus(
            SynthSpec(n_mutants=150, n_tests=25), noise_rate=0.1, seed=3
        )
        pairs = build_pairs(corpus.mutants, corpus.tests, corpus.coverage, corpus.kills)
        outputs = []
        for run in range(2):
            index = ProjectIndex(dict(corpus.sources))
            rows = extract_pairs(corpus.mutants, corpus.tests, pairs, index)
            path = tmp_path / f"features_{run}.csv"
            write_features_csv(path, rows)
            outputs.append(path.read_bytes())
        assert outputs[0] == outputs[1]
