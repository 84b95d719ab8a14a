"""Feature extraction for mutant-test pairs.

Produces the 21-feature vector per pair: thirteen source-code features, three
source-code-change features, and five test-case features. List-valued
features are serialized as JSON strings inside CSV cells.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, fields as dataclass_fields
from pathlib import Path

import numpy as np

from . import javasrc
from .javasrc import (
    Block,
    CompilationUnit,
    EnumConstantDecl,
    FieldDecl,
    InitBlock,
    JavaParseError,
    MethodDecl,
    Stmt,
    Token,
    TypeDecl,
)
from .records import MutantKey, MutantRecord, Outcome, TestCaseRecord


class ExtractionError(Exception):
    """Raised when a mutant or test cannot be mapped onto parsed source."""


CONDITIONAL_KINDS = frozenset(["if", "while", "do", "for", "switch"])

STATEMENT_KIND_TYPES = {
    "if": "IF",
    "while": "WHILE",
    "do": "WHILE",
    "for": "FOR",
    "switch": "SWITCH",
    "try": "TRY",
    "sync": "SYNCHRONIZED",
    "return": "RETURN",
    "throw": "THROW",
    "break": "BREAK",
    "continue": "CONTINUE",
    "assert": "ASSERT",
    "yield": "YIELD",
    "localvar": "LocalVariableDeclaration",
}

ASSERTION_NAMES = frozenset(
    [
        "assertEquals",
        "assertTrue",
        "assertFalse",
        "assertNull",
        "assertNotNull",
        "assertSame",
        "assertNotSame",
        "assertThrows",
        "assertArrayEquals",
        "fail",
    ]
)

NUMERIC_WRAPPERS = frozenset(
    ["byte", "short", "int", "long", "float", "double",
     "Byte", "Short", "Integer", "Long", "Float", "Double"]
)
COLLECTION_TYPES = frozenset(
    ["Collection", "List", "ArrayList", "LinkedList", "Set", "HashSet",
     "TreeSet", "LinkedHashSet", "SortedSet", "NavigableSet", "Queue",
     "Deque", "ArrayDeque", "PriorityQueue", "Vector", "Stack", "EnumSet",
     "CopyOnWriteArrayList", "AbstractList", "AbstractCollection"]
)
MAP_TYPES = frozenset(
    ["Map", "HashMap", "TreeMap", "LinkedHashMap", "Hashtable", "SortedMap",
     "NavigableMap", "ConcurrentHashMap", "ConcurrentMap", "EnumMap",
     "WeakHashMap", "IdentityHashMap", "Properties", "AbstractMap"]
)

RELATIONAL_OPS = ("==", "!=", ">=", "<=", ">", "<")


@dataclass
class FeatureVector:
    """The 21 features for one mutant-test pair."""

    statement_type: str
    parent_context_type: str
    lines_in_method: int
    source_complexity: int
    call: int
    callby: int
    conditional_block_loc: int
    conditional_block_count: int
    nesting_level: int
    occurring_count: int
    has_return_or_throw: bool
    declared_variable_type: str
    variable_is_final_new: bool
    mutation_operator: str
    statement_diff: list
    skeleton_modification: list
    hits_number: int
    assertion_number: int
    has_throw: str
    lines_in_test_case: int
    test_complexity: int


FEATURE_NAMES = [f.name for f in dataclass_fields(FeatureVector)]

NUMERIC_FEATURES = [
    "lines_in_method",
    "source_complexity",
    "call",
    "callby",
    "conditional_block_loc",
    "conditional_block_count",
    "nesting_level",
    "occurring_count",
    "has_return_or_throw",
    "variable_is_final_new",
    "hits_number",
    "assertion_number",
    "lines_in_test_case",
    "test_complexity",
]
CATEGORICAL_FEATURES = [
    "statement_type",
    "parent_context_type",
    "declared_variable_type",
    "mutation_operator",
    "statement_diff",
    "skeleton_modification",
    "has_throw",
]

assert len(NUMERIC_FEATURES) + len(CATEGORICAL_FEATURES) == 21


# --------------------------------------------------------------------------
# Statement diff (token LCS)
# --------------------------------------------------------------------------


def _fragment_tokens(fragment: str) -> list[str]:
    try:
        return [t.text for t in javasrc.tokenize(fragment)]
    except JavaParseError:
        return fragment.split()


def _smallest_lcs(a: list[str], b: list[str]) -> list[str]:
    """Lexicographically smallest longest common subsequence of a and b.

    The canonical choice makes the diff invariant under swapping the inputs,
    which keeps removed/added roles exactly mirrored.
    """
    na, nb = len(a), len(b)
    lengths = [[0] * (nb + 1) for _ in range(na + 1)]
    for i in range(na - 1, -1, -1):
        row, nxt = lengths[i], lengths[i + 1]
        for j in range(nb - 1, -1, -1):
            if a[i] == b[j]:
                row[j] = 1 + nxt[j + 1]
            else:
                row[j] = nxt[j] if nxt[j] >= row[j + 1] else row[j + 1]
    memo: dict[tuple[int, int], tuple[str, ...]] = {}

    def rec(i: int, j: int) -> tuple[str, ...]:
        if lengths[i][j] == 0:
            return ()
        key = (i, j)
        cached = memo.get(key)
        if cached is not None:
            return cached
        best: tuple[str, ...] | None = None
        if a[i] == b[j] and lengths[i][j] == 1 + lengths[i + 1][j + 1]:
            best = (a[i],) + rec(i + 1, j + 1)
        if lengths[i + 1][j] == lengths[i][j]:
            cand = rec(i + 1, j)
            if best is None or cand < best:
                best = cand
        if lengths[i][j + 1] == lengths[i][j]:
            cand = rec(i, j + 1)
            if best is None or cand < best:
                best = cand
        memo[key] = best
        return best

    return list(rec(0, 0))


def _drop_leftmost(seq: list[str], sub: list[str]) -> list[str]:
    out = []
    k = 0
    for tok in seq:
        if k < len(sub) and tok == sub[k]:
            k += 1
        else:
            out.append(tok)
    return out


def _diff_side(tokens: list[str]):
    if not tokens:
        return "EMPTY"
    if len(tokens) == 1:
        return tokens[0]
    return tokens


def statement_diff(before_fragment: str, after_fragment: str) -> list:
    """Tokens removed and added between the fragments, LCS-aligned.

    Returns ``[]`` for identical fragments, otherwise a two-element list
    ``[removed, added]`` where each side is a single token, a token list, or
    the marker string ``"EMPTY"``.
    """
    a = _fragment_tokens(before_fragment)
    b = _fragment_tokens(after_fragment)
    lcs = _smallest_lcs(a, b)
    removed = _drop_leftmost(a, lcs)
    added = _drop_leftmost(b, lcs)
    if not removed and not added:
        return []
    return [_diff_side(removed), _diff_side(added)]


# --------------------------------------------------------------------------
# Skeleton modification (condition abstraction)
# --------------------------------------------------------------------------


def _split_subconditions(tokens: list[str]) -> tuple[list[list[str]], list[str]]:
    """Split on top-level && and ||, returning sub-conditions and connectives."""
    subs: list[list[str]] = []
    ops: list[str] = []
    current: list[str] = []
    depth = 0
    for tok in tokens:
        if tok in ("(", "[", "{"):
            depth += 1
        elif tok in (")", "]", "}"):
            depth -= 1
        if depth == 0 and tok in ("&&", "||"):
            subs.append(current)
            ops.append(tok)
            current = []
        else:
            current.append(tok)
    subs.append(current)
    return subs, ops


def _strip_outer_parens(tokens: list[str]) -> list[str]:
    while len(tokens) >= 2 and tokens[0] == "(" and tokens[-1] == ")":
        depth = 0
        for idx, tok in enumerate(tokens):
            if tok == "(":
                depth += 1
            elif tok == ")":
                depth -= 1
                if depth == 0 and idx != len(tokens) - 1:
                    return tokens
        tokens = tokens[1:-1]
    return tokens


def _top_level_relational(tokens: list[str]) -> str | None:
    depth = 0
    for tok in tokens:
        if tok in ("(", "[", "{"):
            depth += 1
        elif tok in (")", "]", "}"):
            depth -= 1
        elif depth == 0 and tok in RELATIONAL_OPS:
            return tok
    return None


def _render_counted(ops: list[str], n_subs: int) -> str:
    parts = []
    for idx in range(n_subs):
        parts.append(f"expr{idx + 1}")
        if idx < len(ops):
            parts.append(ops[idx])
    return " ".join(parts)


def _render_relational(subs: list[list[str]], ops: list[str]) -> str:
    parts = []
    counter = 1
    for idx, sub in enumerate(subs):
        rel = _top_level_relational(_strip_outer_parens(sub))
        if rel is not None:
            piece = f"expr{counter} {rel} expr{counter + 1}"
            counter += 2
            if len(subs) > 1:
                piece = f"({piece})"
        elif len(subs) == 1:
            piece = "expr"
        else:
            piece = f"expr{counter}"
            counter += 1
        parts.append(piece)
        if idx < len(ops):
            parts.append(ops[idx])
    return " ".join(parts)


def skeleton_modification(before_cond: str, after_cond: str) -> list[str]:
    """Abstract the structural change between two condition expressions.

    Sub-conditions are separated on top-level && and ||. When the counts
    differ, each sub-condition abstracts to a bare ``exprN``; when they match,
    relational operators are preserved inside the abstracted sub-conditions.
    """
    before = _fragment_tokens(before_cond)
    after = _fragment_tokens(after_cond)
    b_subs, b_ops = _split_subconditions(before)
    a_subs, a_ops = _split_subconditions(after)
    if len(b_subs) != len(a_subs):
        return [_render_counted(b_ops, len(b_subs)), _render_counted(a_ops, len(a_subs))]
    return [_render_relational(b_subs, b_ops), _render_relational(a_subs, a_ops)]


# --------------------------------------------------------------------------
# Project index: parsed sources, resolution, call graph
# --------------------------------------------------------------------------


def _walk_statements(block: Block):
    for stmt in block.statements:
        yield stmt
        for child in stmt.blocks:
            yield from _walk_statements(child)


def _stmt_token_streams(stmt: Stmt):
    if stmt.cond_tokens:
        yield stmt.cond_tokens
    if stmt.expr_tokens:
        yield stmt.expr_tokens
    for decl in stmt.declarators:
        if decl.init_tokens:
            yield decl.init_tokens


def _block_token_streams(block: Block):
    for stmt in _walk_statements(block):
        yield from _stmt_token_streams(stmt)


def method_complexity(body: Block | None) -> int:
    """McCabe complexity: decision points in the body plus one."""
    if body is None:
        return 1
    points = 0
    for stmt in _walk_statements(body):
        if stmt.kind in ("if", "while", "do", "for"):
            points += 1
        elif stmt.kind == "switch":
            points += stmt.case_count
        elif stmt.kind == "try":
            points += stmt.catch_count
        for stream in _stmt_token_streams(stmt):
            points += javasrc.decision_points(stream)
    return 1 + points


@dataclass
class Site:
    """A mutant location resolved against parsed source."""

    class_fqn: str
    class_decl: TypeDecl
    kind: str  # statement | field | enum_constant
    statement: Stmt | None = None
    field: FieldDecl | None = None
    enum_constant: EnumConstantDecl | None = None
    method: MethodDecl | None = None
    init_block: InitBlock | None = None
    ancestors: tuple[Stmt, ...] = ()

    @property
    def inside_method(self) -> bool:
        return self.method is not None


class ProjectIndex:
    """Parsed project sources plus the name-and-arity call graph."""

    def __init__(self, sources: dict[str, str]):
        self.units: dict[str, CompilationUnit] = {}
        self.classes: dict[str, TypeDecl] = {}
        self._canonical_fqn: dict[str, str] = {}
        self._fqn_of_decl: dict[int, str] = {}
        self._returned_idents: dict[str, set[str]] = {}
        self._methods: list[tuple[str, MethodDecl]] = []
        for name in sorted(sources):
            try:
                unit = javasrc.parse_source(sources[name])
            except JavaParseError as exc:
                raise ExtractionError(f"{name}: {exc}") from exc
            self.units[name] = unit
            for type_decl in unit.types:
                self._register(unit.package, type_decl, [])
        self.call_counts, self.callby_counts = self._build_call_graph()

    def _register(self, package: str, decl: TypeDecl, outer: list[str]) -> None:
        path = outer + [decl.name]
        fqn = (package + "." if package else "") + ".".join(path)
        self.classes[fqn] = decl
        self._canonical_fqn[fqn] = fqn
        self._fqn_of_decl[id(decl)] = fqn
        # Major reports nested classes with '$' separators; the dotted name
        # stays canonical for all per-class lookups.
        if len(path) > 1:
            dollar = (package + "." if package else "") + "$".join(path)
            self.classes[dollar] = decl
            self._canonical_fqn[dollar] = fqn
        returned: set[str] = set()
        for method in decl.methods:
            self._methods.append((fqn, method))
            if method.body is None:
                continue
            for stmt in _walk_statements(method.body):
                if stmt.kind == "return" and len(stmt.expr_tokens) == 1:
                    tok = stmt.expr_tokens[0]
                    if tok.kind == "word" and tok.text not in javasrc.KEYWORDS:
                        returned.add(tok.text)
        self._returned_idents[fqn] = returned
        for nested in decl.nested:
            self._register(package, nested, path)

    def _build_call_graph(self):
        targets: dict[tuple[str, int], set[tuple[str, str, int]]] = {}
        for fqn, method in self._methods:
            if method.is_constructor:
                continue
            targets.setdefault((method.name, method.arity), set()).add(
                (fqn, method.name, method.arity)
            )
        call_counts: dict[tuple[str, str, int], int] = {}
        callby: dict[tuple[str, str, int], set[tuple[str, str, int]]] = {}
        for fqn, method in self._methods:
            caller = (fqn, method.name, method.arity)
            callees: set[tuple[str, str, int]] = set()
            if method.body is not None:
                for stream in _block_token_streams(method.body):
                    for name, arity in javasrc.find_call_sites(stream):
                        matches = targets.get((name, arity), ())
                        # An unqualified call prefers a same-class target;
                        # otherwise keep the project-wide over-approximation.
                        same_class = (fqn, name, arity)
                        if same_class in matches:
                            callees.add(same_class)
                        else:
                            callees.update(matches)
            call_counts[caller] = len(callees)
            if not method.is_constructor:
                for callee in callees:
                    callby.setdefault(callee, set()).add(caller)
        callby_counts = {key: len(callers) for key, callers in callby.items()}
        return call_counts, callby_counts

    def returned_idents(self, class_fqn: str) -> set[str]:
        return self._returned_idents.get(class_fqn, set())

    def call_graph(self) -> tuple[dict, dict]:
        """Distinct callee and caller counts keyed by (class, name, arity)."""
        full_callby = {key: self.callby_counts.get(key, 0) for key in self.call_counts}
        return dict(self.call_counts), full_callby

    # -- site resolution ---------------------------------------------------

    def resolve_site(
        self, class_name: str, line: int, fragment_hint: str | None = None
    ) -> Site:
        decl = self.classes.get(class_name)
        if decl is None:
            raise ExtractionError(f"unknown class {class_name!r}")
        canonical = self._canonical_fqn[class_name]
        site = self._resolve_in_class(canonical, decl, line, fragment_hint)
        if site is None:
            raise ExtractionError(
                f"line {line} does not resolve to a statement in {class_name}"
            )
        return site

    def _resolve_in_class(
        self, fqn: str, decl: TypeDecl, line: int, hint: str | None
    ) -> Site | None:
        for constant in decl.enum_constants:
            if constant.line == line:
                return Site(
                    class_fqn=fqn, class_decl=decl, kind="enum_constant",
                    enum_constant=constant,
                )
        for nested in decl.nested:
            if nested.start_line <= line <= nested.end_line:
                nested_fqn = self._fqn_of_decl[id(nested)]
                found = self._resolve_in_class(nested_fqn, nested, line, hint)
                if found is not None:
                    return found
        for method in decl.methods:
            if method.start_line <= line <= method.end_line and method.body:
                chain = _covering_chain(method.body, line)
                if chain:
                    stmt, ancestors = _pick_statement(chain, hint)
                    return Site(
                        class_fqn=fqn, class_decl=decl, kind="statement",
                        statement=stmt, method=method, ancestors=ancestors,
                    )
        for block in decl.init_blocks:
            if block.start_line <= line <= block.end_line:
                chain = _covering_chain(block.body, line)
                if chain:
                    stmt, ancestors = _pick_statement(chain, hint)
                    return Site(
                        class_fqn=fqn, class_decl=decl, kind="statement",
                        statement=stmt, init_block=block, ancestors=ancestors,
                    )
        for field_decl in decl.fields:
            if field_decl.start_line <= line <= field_decl.end_line:
                return Site(
                    class_fqn=fqn, class_decl=decl, kind="field", field=field_decl
                )
        return None


def _covering_chain(block: Block, line: int) -> list[Stmt]:
    """Nested statements covering the line, outermost first."""
    for stmt in block.statements:
        if stmt.start_line <= line <= stmt.end_line:
            for child in stmt.blocks:
                if child.start_line <= line <= child.end_line:
                    deeper = _covering_chain(child, line)
                    if deeper:
                        return [stmt] + deeper
            return [stmt]
    return []


def _pick_statement(
    chain: list[Stmt], hint: str | None
) -> tuple[Stmt, tuple[Stmt, ...]]:
    """Choose the mutated statement from a nesting chain.

    Prefers the deepest statement whose own tokens contain the before-fragment
    hint; this separates a mutation in a one-line conditional's condition from
    one in its body. Falls back to the deepest statement.
    """
    if hint:
        hint_tokens = _fragment_tokens(hint)
        if hint_tokens:
            for idx in range(len(chain) - 1, -1, -1):
                if _stmt_contains(chain[idx], hint_tokens):
                    return chain[idx], tuple(chain[:idx])
    return chain[-1], tuple(chain[:-1])


def _stmt_contains(stmt: Stmt, needle: list[str]) -> bool:
    for stream in _stmt_token_streams(stmt):
        texts = [t.text for t in stream]
        for start in range(len(texts) - len(needle) + 1):
            if texts[start : start + len(needle)] == needle:
                return True
    return False


# --------------------------------------------------------------------------
# Per-site feature computation
# --------------------------------------------------------------------------


def statement_type_of(site: Site) -> str:
    if site.kind == "field":
        return "MemberDeclaration"
    if site.kind == "enum_constant":
        return "EnumConstant"
    stmt = site.statement
    assert stmt is not None
    if stmt.kind == "expr":
        return javasrc.classify_expression_statement(stmt.expr_tokens)
    return STATEMENT_KIND_TYPES.get(stmt.kind, "expression")


def parent_context_type(site: Site) -> str:
    if site.method is not None:
        return "ConstructorDeclaration" if site.method.is_constructor else "MethodDeclaration"
    return "Block"


def _abstract_type(base: str, is_array: bool) -> str:
    if base in NUMERIC_WRAPPERS:
        abstracted = "NUMERIC"
    elif base in ("char", "Character"):
        abstracted = "CHAR"
    elif base in ("boolean", "Boolean"):
        abstracted = "BOOLEAN"
    elif base == "String":
        abstracted = "STRING"
    elif base in COLLECTION_TYPES:
        abstracted = "COLLECTION"
    elif base in MAP_TYPES:
        abstracted = "MAP"
    else:
        abstracted = "OBJECT"
    return abstracted + "_ARRAY" if is_array else abstracted


def _governed_block(stmt: Stmt) -> Block | None:
    """The block a conditional statement's condition governs.

    For ``if`` this is the then-branch; loops and switch use their body.
    """
    if stmt.kind in CONDITIONAL_KINDS and stmt.blocks:
        return stmt.blocks[0]
    return None


def _block_loc(block: Block) -> int:
    if not block.statements:
        return 0
    first = block.statements[0].start_line
    last = block.statements[-1].end_line
    return last - first + 1


def _assigned_names(block: Block) -> set[str]:
    names: set[str] = set()
    for stmt in _walk_statements(block):
        if stmt.kind == "localvar":
            for decl in stmt.declarators:
                if decl.init_tokens:
                    names.add(decl.name)
        elif stmt.kind == "expr":
            lhs = _assignment_lhs(stmt.expr_tokens)
            names.update(lhs)
    return names


def _assignment_lhs(tokens: list[Token]) -> set[str]:
    depth = 0
    for idx, tok in enumerate(tokens):
        if tok.text in ("(", "[", "{"):
            depth += 1
        elif tok.text in (")", "]", "}"):
            depth -= 1
        elif depth == 0 and tok.text in javasrc.ASSIGN_OPS:
            return {
                t.text
                for t in tokens[:idx]
                if t.kind == "word" and t.text not in javasrc.KEYWORDS
            }
    return set()


def _has_return_or_throw(block: Block, site: Site, index: ProjectIndex) -> bool:
    for stmt in _walk_statements(block):
        if stmt.kind in ("return", "throw"):
            return True
    returned = index.returned_idents(site.class_fqn)
    if not returned:
        return False
    return bool(_assigned_names(block) & returned)


def _occurring_count(stmt: Stmt, block: Block) -> int:
    cond_vars = set(javasrc.identifiers(stmt.cond_tokens))
    if not cond_vars:
        return 0
    count = 0
    for child in _walk_statements(block):
        for stream in _stmt_token_streams(child):
            for name in javasrc.identifiers(stream):
                if name in cond_vars:
                    count += 1
    return count


def _declared_variable(site: Site) -> tuple[str, bool]:
    """(abstracted type or '', final-or-new flag) for declaration sites."""
    if site.kind == "field":
        field_decl = site.field
        assert field_decl is not None
        is_array = field_decl.dims > 0 or any(
            d.extra_dims > 0 for d in field_decl.declarators
        )
        final_new = "final" in field_decl.modifiers or any(
            _has_top_level_new(d.init_tokens) for d in field_decl.declarators
        )
        return _abstract_type(field_decl.type_name, is_array), final_new
    stmt = site.statement
    if stmt is not None and stmt.kind == "localvar":
        is_array = stmt.dims > 0 or any(d.extra_dims > 0 for d in stmt.declarators)
        final_new = stmt.is_final or any(
            _has_top_level_new(d.init_tokens) for d in stmt.declarators
        )
        return _abstract_type(stmt.type_name, is_array), final_new
    return "", False


def _has_top_level_new(tokens: list[Token]) -> bool:
    depth = 0
    for tok in tokens:
        if tok.text in ("(", "[", "{"):
            depth += 1
        elif tok.text in (")", "]", "}"):
            depth -= 1
        elif depth == 0 and tok.text == "new":
            return True
    return False


@dataclass
class SourceFeatures:
    statement_type: str
    parent_context_type: str
    lines_in_method: int
    source_complexity: int
    call: int
    callby: int
    conditional_block_loc: int
    conditional_block_count: int
    nesting_level: int
    occurring_count: int
    has_return_or_throw: bool
    declared_variable_type: str
    variable_is_final_new: bool
    is_conditional: bool


def structural_features(site: Site, index: ProjectIndex) -> SourceFeatures:
    stmt = site.statement
    lines_in_method = 0
    source_complexity = 0
    call = 0
    callby = 0
    if site.method is not None:
        method = site.method
        lines_in_method = method.end_line - method.start_line + 1
        source_complexity = method_complexity(method.body)
        key = (site.class_fqn, method.name, method.arity)
        call = index.call_counts.get(key, 0)
        callby = index.callby_counts.get(key, 0)

    is_conditional = stmt is not None and stmt.kind in CONDITIONAL_KINDS
    cond_loc = 0
    cond_count = 0
    has_ret = False
    occurring = 0
    if is_conditional:
        block = _governed_block(stmt)
        if block is not None:
            cond_loc = _block_loc(block)
            cond_count = sum(
                1 for s in _walk_statements(block) if s.kind in CONDITIONAL_KINDS
            )
            has_ret = _has_return_or_throw(block, site, index)
            occurring = _occurring_count(stmt, block)

    nesting = sum(1 for s in site.ancestors if s.kind in CONDITIONAL_KINDS)
    declared_type, final_new = _declared_variable(site)
    return SourceFeatures(
        statement_type=statement_type_of(site),
        parent_context_type=parent_context_type(site),
        lines_in_method=lines_in_method,
        source_complexity=source_complexity,
        call=call,
        callby=callby,
        conditional_block_loc=cond_loc,
        conditional_block_count=cond_count,
        nesting_level=nesting,
        occurring_count=occurring,
        has_return_or_throw=has_ret,
        declared_variable_type=declared_type,
        variable_is_final_new=final_new,
        is_conditional=is_conditional,
    )


# --------------------------------------------------------------------------
# Test-case features
# --------------------------------------------------------------------------


@dataclass
class TestFeatures:
    assertion_number: int
    has_throw: str
    lines_in_test_case: int
    test_complexity: int


def test_features(test: TestCaseRecord) -> TestFeatures:
    source = test.source_text
    try:
        method = javasrc.parse_lone_method(source)
    except JavaParseError:
        try:
            unit = javasrc.parse_source(source)
            methods = [m for t in unit.types for m in t.methods]
            if len(methods) != 1:
                raise ExtractionError(
                    f"test {test.qualified_name}: expected one method, "
                    f"found {len(methods)}"
                )
            method = methods[0]
        except JavaParseError as exc:
            raise ExtractionError(f"test {test.qualified_name}: {exc}") from exc
    assertions = 0
    if method.body is not None:
        for stream in _block_token_streams(method.body):
            for name, _arity in javasrc.find_call_sites(stream):
                if name in ASSERTION_NAMES:
                    assertions += 1
    return TestFeatures(
        assertion_number=assertions,
        has_throw="throws" if method.throws else "",
        lines_in_test_case=method.end_line - method.start_line + 1,
        test_complexity=method_complexity(method.body),
    )


# --------------------------------------------------------------------------
# Assembly
# --------------------------------------------------------------------------


def _mutant_features(mutant: MutantRecord, index: ProjectIndex):
    site = index.resolve_site(
        mutant.class_name, mutant.line, fragment_hint=mutant.before_fragment
    )
    source = structural_features(site, index)
    diff = statement_diff(mutant.before_fragment, mutant.after_fragment)
    skeleton = (
        skeleton_modification(mutant.before_fragment, mutant.after_fragment)
        if source.is_conditional
        else []
    )
    return source, diff, skeleton


def assemble_vector(
    mutant: MutantRecord,
    test: TestCaseRecord,
    hits: int,
    index: ProjectIndex,
    _source_cache: dict | None = None,
    _test_cache: dict | None = None,
) -> FeatureVector:
    """Populate the full 21-field vector for one covered pair."""
    if _source_cache is not None and mutant.mutant_id in _source_cache:
        source, diff, skeleton = _source_cache[mutant.mutant_id]
    else:
        source, diff, skeleton = _mutant_features(mutant, index)
        if _source_cache is not None:
            _source_cache[mutant.mutant_id] = (source, diff, skeleton)

    if _test_cache is not None and test.test_id in _test_cache:
        test_feats = _test_cache[test.test_id]
    else:
        test_feats = test_features(test)
        if _test_cache is not None:
            _test_cache[test.test_id] = test_feats
    return FeatureVector(
        statement_type=source.statement_type,
        parent_context_type=source.parent_context_type,
        lines_in_method=source.lines_in_method,
        source_complexity=source.source_complexity,
        call=source.call,
        callby=source.callby,
        conditional_block_loc=source.conditional_block_loc,
        conditional_block_count=source.conditional_block_count,
        nesting_level=source.nesting_level,
        occurring_count=source.occurring_count,
        has_return_or_throw=source.has_return_or_throw,
        declared_variable_type=source.declared_variable_type,
        variable_is_final_new=source.variable_is_final_new,
        mutation_operator=mutant.operator,
        statement_diff=diff,
        skeleton_modification=skeleton,
        hits_number=hits,
        assertion_number=test_feats.assertion_number,
        has_throw=test_feats.has_throw,
        lines_in_test_case=test_feats.lines_in_test_case,
        test_complexity=test_feats.test_complexity,
    )


def extract_pairs(
    mutants: list[MutantRecord],
    tests: list[TestCaseRecord],
    pairs: list[tuple[int, int, int, Outcome]],
    index: ProjectIndex,
) -> list[tuple[int, int, FeatureVector, Outcome]]:
    """Assemble vectors for all covered pairs, caching per-mutant and per-test work."""
    mutant_by_id = {m.mutant_id: m for m in mutants}
    test_by_id = {t.test_id: t for t in tests}
    source_cache: dict = {}
    test_cache: dict = {}
    rows = []
    for mutant_id, test_id, hits, outcome in pairs:
        vector = assemble_vector(
            mutant_by_id[mutant_id],
            test_by_id[test_id],
            hits,
            index,
            _source_cache=source_cache,
            _test_cache=test_cache,
        )
        rows.append((mutant_id, test_id, vector, outcome))
    return rows


# --------------------------------------------------------------------------
# Standardization
# --------------------------------------------------------------------------


@dataclass
class ScalerStats:
    """Per-numeric-feature mean and population standard deviation."""

    mean: np.ndarray
    std: np.ndarray

    def to_json_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ScalerStats":
        return cls(
            mean=np.asarray(doc["mean"], dtype=np.float64),
            std=np.asarray(doc["std"], dtype=np.float64),
        )


def fit_scaler(numeric: np.ndarray) -> ScalerStats:
    """Fit z-score statistics on training rows only (population sigma).

    A constant feature stores sigma 1 so scaling maps it to exactly zero.
    """
    if numeric.ndim != 2 or numeric.shape[0] == 0:
        raise ValueError("need a non-empty 2-D numeric matrix to fit the scaler")
    mean = numeric.mean(axis=0)
    std = numeric.std(axis=0, ddof=0)
    std = np.where(std == 0.0, 1.0, std)
    return ScalerStats(mean=mean, std=std)


def apply_scaler(stats: ScalerStats, numeric: np.ndarray) -> np.ndarray:
    return (numeric - stats.mean) / stats.std


# --------------------------------------------------------------------------
# features.csv interchange
# --------------------------------------------------------------------------

FEATURES_HEADER = ["mutant_id", "test_id"] + FEATURE_NAMES + ["outcome", "reason"]


def _encode_cell(name: str, value) -> str:
    if name in ("statement_diff", "skeleton_modification"):
        return json.dumps(value)
    if isinstance(value, bool):
        return "1" if value else "0"
    return str(value)


def write_features_csv(path: str | Path, rows) -> None:
    """Write (mutant_id, test_id, FeatureVector, Outcome) rows."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(FEATURES_HEADER)
        for mutant_id, test_id, vector, outcome in rows:
            record = [mutant_id, test_id]
            for name in FEATURE_NAMES:
                record.append(_encode_cell(name, getattr(vector, name)))
            record.append("KILLED" if outcome.killed else "SURVIVED")
            record.append(outcome.value if outcome.killed else "")
            writer.writerow(record)


@dataclass
class FeatureTable:
    """Columnar pair features ready for model training and prediction."""

    mutant_keys: list[MutantKey]
    test_ids: np.ndarray
    numeric: np.ndarray  # (n, 14) raw, unscaled
    categorical: list[list[str]]  # one list per CATEGORICAL_FEATURES column
    labels: np.ndarray  # True = killed
    reasons: list[str]

    def __len__(self) -> int:
        return len(self.mutant_keys)

    def subset(self, mask: np.ndarray) -> "FeatureTable":
        idx = np.flatnonzero(mask)
        return FeatureTable(
            mutant_keys=[self.mutant_keys[i] for i in idx],
            test_ids=self.test_ids[idx],
            numeric=self.numeric[idx],
            categorical=[[col[i] for i in idx] for col in self.categorical],
            labels=self.labels[idx],
            reasons=[self.reasons[i] for i in idx],
        )

    def restrict_to_mutants(self, keys: set[MutantKey]) -> "FeatureTable":
        mask = np.array([k in keys for k in self.mutant_keys], dtype=bool)
        return self.subset(mask)

    @classmethod
    def concat(cls, tables: list["FeatureTable"]) -> "FeatureTable":
        if not tables:
            raise ValueError("cannot concatenate zero tables")
        return cls(
            mutant_keys=[k for t in tables for k in t.mutant_keys],
            test_ids=np.concatenate([t.test_ids for t in tables]),
            numeric=np.vstack([t.numeric for t in tables]),
            categorical=[
                [v for t in tables for v in t.categorical[c]]
                for c in range(len(CATEGORICAL_FEATURES))
            ],
            labels=np.concatenate([t.labels for t in tables]),
            reasons=[r for t in tables for r in t.reasons],
        )


def read_features_csv(path: str | Path, corpus: str = "default") -> FeatureTable:
    numeric_idx = {name: FEATURES_HEADER.index(name) for name in NUMERIC_FEATURES}
    cat_idx = {name: FEATURES_HEADER.index(name) for name in CATEGORICAL_FEATURES}
    mutant_keys: list[MutantKey] = []
    test_ids: list[int] = []
    numeric_rows: list[list[float]] = []
    categorical: list[list[str]] = [[] for _ in CATEGORICAL_FEATURES]
    labels: list[bool] = []
    reasons: list[str] = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != FEATURES_HEADER:
            raise ExtractionError(f"{path}: unexpected features.csv header")
        for row in reader:
            if not row:
                continue
            mutant_keys.append((corpus, int(row[0])))
            test_ids.append(int(row[1]))
            numeric_rows.append([float(row[numeric_idx[n]]) for n in NUMERIC_FEATURES])
            for c, name in enumerate(CATEGORICAL_FEATURES):
                categorical[c].append(row[cat_idx[name]])
            labels.append(row[-2] == "KILLED")
            reasons.append(row[-1])
    return FeatureTable(
        mutant_keys=mutant_keys,
        test_ids=np.asarray(test_ids, dtype=np.int64),
        numeric=np.asarray(numeric_rows, dtype=np.float64).reshape(
            len(mutant_keys), len(NUMERIC_FEATURES)
        ),
        categorical=categorical,
        labels=np.asarray(labels, dtype=bool),
        reasons=reasons,
    )


def table_from_vectors(
    rows, corpus: str = "default"
) -> FeatureTable:
    """Build a FeatureTable from (mutant_id, test_id, FeatureVector, Outcome)."""
    mutant_keys: list[MutantKey] = []
    test_ids: list[int] = []
    numeric_rows: list[list[float]] = []
    categorical: list[list[str]] = [[] for _ in CATEGORICAL_FEATURES]
    labels: list[bool] = []
    reasons: list[str] = []
    for mutant_id, test_id, vector, outcome in rows:
        mutant_keys.append((corpus, mutant_id))
        test_ids.append(test_id)
        numeric_rows.append(
            [float(getattr(vector, name)) for name in NUMERIC_FEATURES]
        )
        for c, name in enumerate(CATEGORICAL_FEATURES):
            categorical[c].append(_encode_cell(name, getattr(vector, name)))
        labels.append(outcome.killed)
        reasons.append(outcome.value if outcome.killed else "")
    return FeatureTable(
        mutant_keys=mutant_keys,
        test_ids=np.asarray(test_ids, dtype=np.int64),
        numeric=np.asarray(numeric_rows, dtype=np.float64).reshape(
            len(mutant_keys), len(NUMERIC_FEATURES)
        ),
        categorical=categorical,
        labels=np.asarray(labels, dtype=bool),
        reasons=reasons,
    )
