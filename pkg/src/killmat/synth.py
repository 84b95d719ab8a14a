"""Synthetic corpus generation for end-to-end testing.

Generates small Java classes from templates, places mutants on real
statements inside them, and labels each covered pair with a deterministic
rule over (mutation operator, statement diff, hits), optionally flipping
labels with a given noise probability. Everything is reproducible from the
seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import (
    write_coverage_csv,
    write_killmap_csv,
    write_mutants_csv,
    write_tests_csv,
)
from .features import statement_diff
from .records import CorpusError, CoverageMap, MutantRecord, Outcome, TestCaseRecord


# --------------------------------------------------------------------------
# Label rules
# --------------------------------------------------------------------------


class LabelRule:
    """Deterministic labeling rule described by a JSON-serializable dict.

    Supported kinds: operator_in, diff_token_in (side removed/added),
    hits_at_least, all_of, any_of, not.
    """

    def __init__(self, doc: dict):
        self.doc = doc
        self._validate(doc)

    @staticmethod
    def _validate(doc: dict) -> None:
        kind = doc.get("kind")
        if kind == "operator_in":
            if not isinstance(doc.get("operators"), list):
                raise CorpusError("operator_in rule needs an 'operators' list")
        elif kind == "diff_token_in":
            if doc.get("side") not in ("removed", "added"):
                raise CorpusError("diff_token_in rule needs side removed|added")
            if not isinstance(doc.get("tokens"), list):
                raise CorpusError("diff_token_in rule needs a 'tokens' list")
        elif kind == "hits_at_least":
            if not isinstance(doc.get("value"), int):
                raise CorpusError("hits_at_least rule needs an integer 'value'")
        elif kind in ("all_of", "any_of"):
            for sub in doc.get("rules", []):
                LabelRule._validate(sub)
        elif kind == "not":
            LabelRule._validate(doc.get("rule", {}))
        else:
            raise CorpusError(f"unknown label rule kind: {kind!r}")

    def evaluate(
        self, operator: str, removed: list[str], added: list[str], hits: int
    ) -> bool:
        return self._eval(self.doc, operator, removed, added, hits)

    @classmethod
    def _eval(cls, doc, operator, removed, added, hits) -> bool:
        kind = doc["kind"]
        if kind == "operator_in":
            return operator in doc["operators"]
        if kind == "diff_token_in":
            side = removed if doc["side"] == "removed" else added
            return any(tok in doc["tokens"] for tok in side)
        if kind == "hits_at_least":
            return hits >= doc["value"]
        if kind == "all_of":
            return all(cls._eval(r, operator, removed, added, hits) for r in doc["rules"])
        if kind == "any_of":
            return any(cls._eval(r, operator, removed, added, hits) for r in doc["rules"])
        if kind == "not":
            return not cls._eval(doc["rule"], operator, removed, added, hits)
        raise CorpusError(f"unknown label rule kind: {kind!r}")


def diff_sides(before: str, after: str) -> tuple[list[str], list[str]]:
    """Removed and added token lists as flat lists (EMPTY marker dropped)."""

    def side(value) -> list[str]:
        if value == "EMPTY":
            return []
        if isinstance(value, str):
            return [value]
        return list(value)

    diff = statement_diff(before, after)
    if not diff:
        return [], []
    return side(diff[0]), side(diff[1])


# A rule whose signal lives almost entirely in the statement diff, with the
# operator gating which edits count. Used by the acceptance experiments.
DEFAULT_RULE_DOC = {
    "kind": "all_of",
    "rules": [
        {"kind": "hits_at_least", "value": 1},
        {"kind": "operator_in", "operators": ["ROR", "COR", "AOR", "LOR", "SOR"]},
        {
            "kind": "diff_token_in",
            "side": "removed",
            "tokens": ["<=", "<", "==", "+", "&&"],
        },
    ],
}


# --------------------------------------------------------------------------
# Source templates
# --------------------------------------------------------------------------


@dataclass
class SynthSite:
    class_name: str
    method_signature: str | None
    line: int
    before: str
    rewrites: list[tuple[str, str]]  # (operator, after fragment)
    kind: str = "other"


# Mutants land on condition sites more often than elsewhere, mirroring how
# operator applicability skews real mutant populations toward expressions.
SITE_KIND_WEIGHTS = {"condition": 3.0, "assign": 1.5}


CONDITION_POOL = [
    (
        "a <= b && c > 0",
        [
            ("ROR", "a >= b && c > 0"),
            ("ROR", "a < b && c > 0"),
            ("ROR", "a == b && c > 0"),
            ("ROR", "false && c > 0"),
            ("ROR", "a <= b && c >= 0"),
            ("COR", "a <= b || c > 0"),
        ],
    ),
    (
        "count < limit",
        [
            ("ROR", "count <= limit"),
            ("ROR", "count > limit"),
            ("ROR", "count != limit"),
            ("ROR", "false"),
            ("ROR", "true"),
        ],
    ),
    (
        "total == target",
        [
            ("ROR", "total != target"),
            ("ROR", "total >= target"),
            ("ROR", "false"),
        ],
    ),
    (
        "flag && ready",
        [
            ("COR", "flag || ready"),
            ("COR", "flag"),
            ("COR", "ready"),
            ("COR", "true && ready"),
        ],
    ),
]

ASSIGN_POOL = [
    (
        "total + step",
        [
            ("AOR", "total - step"),
            ("AOR", "total * step"),
            ("AOR", "total / step"),
            ("AOR", "total % step"),
        ],
    ),
    (
        "bits & mask",
        [("LOR", "bits | mask"), ("LOR", "bits ^ mask")],
    ),
    (
        "bits << step",
        [("SOR", "bits >> step"), ("SOR", "bits >>> step")],
    ),
    (
        "-step",
        [("ORU", "~step"), ("ORU", "step")],
    ),
]

DECL_POOL = [
    ("16", [("LVR", "17"), ("LVR", "0"), ("LVR", "1")]),
    ("0", [("LVR", "1"), ("LVR", "-1")]),
    ("2", [("LVR", "3"), ("LVR", "1"), ("LVR", "0")]),
]

RETURN_POOL = [
    ("total", [("EVR", "0"), ("EVR", "-1")]),
    ("state", [("EVR", "0"), ("EVR", "1")]),
]

CALL_POOL = [
    ("update(total)", [("STD", "")]),
    ("log(state)", [("STD", "")]),
]


class _ClassBuilder:
    def __init__(self, class_name: str, package: str):
        self.class_name = class_name
        self.package = package
        self.lines: list[str] = [f"package {package};", ""]
        self.sites: list[SynthSite] = []

    @property
    def next_line(self) -> int:
        return len(self.lines) + 1

    def emit(self, text: str) -> int:
        self.lines.append(text)
        return len(self.lines)

    def site(
        self,
        line: int,
        before: str,
        rewrites: list[tuple[str, str]],
        method: str | None,
        kind: str = "other",
    ) -> None:
        self.sites.append(
            SynthSite(
                class_name=f"{self.package}.{self.class_name}",
                method_signature=method,
                line=line,
                before=before,
                rewrites=rewrites,
                kind=kind,
            )
        )

    def render(self) -> str:
        return "\n".join(self.lines) + "\n"


def _pool_pick(rng: np.random.Generator, pool: list, weights: list[float] | None = None):
    if weights is None:
        return pool[int(rng.integers(len(pool)))]
    p = np.asarray(weights, dtype=np.float64)
    return pool[int(rng.choice(len(pool), p=p / p.sum()))]


# Arithmetic rewrites are the common case among assignment mutants.
_ASSIGN_WEIGHTS = [0.55, 0.15, 0.15, 0.15]


def _build_class(idx: int, rng: np.random.Generator, methods_per_class: int) -> _ClassBuilder:
    b = _ClassBuilder(class_name=f"Widget{idx}", package="org.synth")
    b.emit(f"public class Widget{idx} {{")

    decl_lit, decl_rw = _pool_pick(rng, DECL_POOL)
    line = b.emit(f"    private static final int BASE = {decl_lit};")
    b.site(line, decl_lit, decl_rw, method=None, kind="decl")
    b.emit("    private int state = 0;")
    b.emit("")
    b.emit("    static {")
    assign_expr, assign_rw = _pool_pick(rng, ASSIGN_POOL, _ASSIGN_WEIGHTS)
    b.emit("        int total = BASE;")
    b.emit("        int step = 2;")
    b.emit("        int bits = 8;")
    b.emit("        int mask = 3;")
    line = b.emit(f"        total = {assign_expr};")
    b.site(line, assign_expr, assign_rw, method=None, kind="assign")
    b.emit("    }")
    b.emit("")

    for m_idx in range(methods_per_class):
        name = f"run{m_idx}"
        signature = f"{name}(int,int)"
        b.emit(f"    public int {name}(int a, int b) {{")
        decl_lit, decl_rw = _pool_pick(rng, DECL_POOL)
        line = b.emit(f"        int limit = {decl_lit};")
        b.site(line, decl_lit, decl_rw, method=signature, kind="decl")
        b.emit("        int total = 0;")
        b.emit("        int step = 1;")
        b.emit("        int bits = a;")
        b.emit("        int mask = b;")
        b.emit("        int count = 0;")
        b.emit("        int target = b;")
        b.emit("        boolean flag = a > b;")
        b.emit("        boolean ready = b != 0;")
        b.emit("        int c = a + b;")

        cond, cond_rw = _pool_pick(rng, CONDITION_POOL)
        line = b.emit(f"        if ({cond}) {{")
        b.site(line, cond, cond_rw, method=signature, kind="condition")
        assign_expr, assign_rw = _pool_pick(rng, ASSIGN_POOL, _ASSIGN_WEIGHTS)
        line = b.emit(f"            total = {assign_expr};")
        b.site(line, assign_expr, assign_rw, method=signature, kind="assign")
        call_expr, call_rw = _pool_pick(rng, CALL_POOL)
        line = b.emit(f"            {call_expr};")
        b.site(line, call_expr, call_rw, method=signature, kind="call")
        b.emit("        }")

        cond, cond_rw = _pool_pick(rng, CONDITION_POOL)
        line = b.emit(f"        while ({cond}) {{")
        b.site(line, cond, cond_rw, method=signature, kind="condition")
        b.emit("            count = count + 1;")
        b.emit("            if (count > limit) {")
        b.emit("                break;")
        b.emit("            }")
        b.emit("        }")

        ret_expr, ret_rw = _pool_pick(rng, RETURN_POOL)
        line = b.emit(f"        return {ret_expr};")
        b.site(line, ret_expr, ret_rw, method=signature, kind="return")
        b.emit("    }")
        b.emit("")

    b.emit("    private void update(int v) {")
    b.emit("        this.state = this.state + v;")
    b.emit("    }")
    b.emit("")
    b.emit("    private void log(int v) {")
    b.emit("        update(v);")
    b.emit("    }")
    b.emit("}")
    return b


def _build_test(test_id: int, rng: np.random.Generator) -> TestCaseRecord:
    n_asserts = int(rng.integers(0, 5))
    throws = bool(rng.random() < 0.3)
    fillers = int(rng.integers(0, 4))
    lines = []
    throws_clause = " throws Exception" if throws else ""
    lines.append(f"public void test{test_id}(){throws_clause} {{")
    lines.append(f"    int v = {int(rng.integers(0, 100))};")
    for i in range(fillers):
        lines.append(f"    v = v + {i + 1};")
    if rng.random() < 0.3:
        lines.append("    if (v > 50) {")
        lines.append("        v = v - 1;")
        lines.append("    }")
    for i in range(n_asserts):
        if i == 0 and rng.random() < 0.2:
            lines.append('    fail("unreachable");')
        else:
            lines.append(f"    assertEquals({i}, v % {i + 2});")
    lines.append("}")
    return TestCaseRecord(
        test_id=test_id,
        qualified_name=f"org.synth.WidgetTest#test{test_id}",
        source_text="\n".join(lines),
    )


# --------------------------------------------------------------------------
# Corpus assembly
# --------------------------------------------------------------------------


@dataclass
class SynthSpec:
    """Size parameters for a generated corpus."""

    n_mutants: int = 2000
    n_tests: int = 100
    methods_per_class: int = 3
    sites_per_mutant: float = 0.125  # classes are added until sites suffice
    max_covering_tests: int = 3
    max_hits: int = 5


@dataclass
class SynthCorpus:
    sources: dict[str, str]
    mutants: list[MutantRecord]
    tests: list[TestCaseRecord]
    coverage: CoverageMap
    kills: dict[tuple[int, int], Outcome]
    rule_doc: dict = field(default_factory=dict)
    seed: int = 0

    def write(self, root: str | Path) -> None:
        root = Path(root)
        src_dir = root / "sources"
        src_dir.mkdir(parents=True, exist_ok=True)
        for name, text in self.sources.items():
            (src_dir / name).write_text(text, encoding="utf-8")
        write_mutants_csv(root / "mutants.csv", self.mutants)
        write_tests_csv(root / "tests.csv", self.tests)
        write_coverage_csv(root / "coverage.csv", self.coverage)
        write_killmap_csv(root / "killmap.csv", self.kills)
        (root / "generation.json").write_text(
            json.dumps({"rule": self.rule_doc, "seed": self.seed}, indent=2) + "\n",
            encoding="utf-8",
        )


def generate_synthetic_corpus(
    spec: SynthSpec,
    rule: LabelRule | dict | None = None,
    noise_rate: float = 0.0,
    seed: int = 0,
) -> SynthCorpus:
    """Generate sources, mutants, tests, coverage, and labeled kill outcomes."""
    if not 0.0 <= noise_rate < 0.5:
        raise CorpusError(f"noise_rate must lie in [0, 0.5), got {noise_rate}")
    if rule is None:
        rule = LabelRule(DEFAULT_RULE_DOC)
    elif isinstance(rule, dict):
        rule = LabelRule(rule)

    rng = np.random.default_rng(seed)

    n_sites_needed = max(8, int(spec.n_mutants * spec.sites_per_mutant))
    sources: dict[str, str] = {}
    sites: list[SynthSite] = []
    class_idx = 0
    while len(sites) < n_sites_needed:
        builder = _build_class(class_idx, rng, spec.methods_per_class)
        sources[f"{builder.class_name}.java"] = builder.render()
        sites.extend(builder.sites)
        class_idx += 1

    tests = [_build_test(i + 1, rng) for i in range(spec.n_tests)]

    mutants: list[MutantRecord] = []
    coverage = CoverageMap()
    kills: dict[tuple[int, int], Outcome] = {}
    reasons = np.array([Outcome.FAIL, Outcome.EXC, Outcome.TIME], dtype=object)
    reason_p = np.array([0.8, 0.15, 0.05])

    site_weights = np.array(
        [SITE_KIND_WEIGHTS.get(s.kind, 1.0) for s in sites], dtype=np.float64
    )
    site_weights /= site_weights.sum()

    for mutant_id in range(1, spec.n_mutants + 1):
        site = sites[int(rng.choice(len(sites), p=site_weights))]
        operator, after = site.rewrites[int(rng.integers(len(site.rewrites)))]
        mutant = MutantRecord(
            mutant_id=mutant_id,
            operator=operator,
            class_name=site.class_name,
            method_signature=site.method_signature,
            line=site.line,
            before_fragment=site.before,
            after_fragment=after,
        )
        mutants.append(mutant)

        removed, added = diff_sides(site.before, after)
        n_cov = int(rng.integers(1, spec.max_covering_tests + 1))
        covering = rng.choice(spec.n_tests, size=n_cov, replace=False)
        for t in covering:
            test_id = int(t) + 1
            hits = int(rng.integers(1, spec.max_hits + 1))
            coverage.add(mutant_id, test_id, hits)
            killed = rule.evaluate(operator, removed, added, hits)
            if noise_rate > 0.0 and rng.random() < noise_rate:
                killed = not killed
            if killed:
                kills[(mutant_id, test_id)] = reasons[
                    int(rng.choice(3, p=reason_p))
                ]

    return SynthCorpus(
        sources=sources,
        mutants=mutants,
        tests=tests,
        coverage=coverage,
        kills=kills,
        rule_doc=rule.doc,
        seed=seed,
    )
