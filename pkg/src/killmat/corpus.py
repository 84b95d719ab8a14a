"""Ingestion of mutation-tool outputs, pair building, and dataset splitting.

Canonical interchange files are UTF-8 CSV with a header row:

* ``mutants.csv``: mutant_id,operator,class_name,method_signature,line,before_fragment,after_fragment
* ``coverage.csv``: mutant_id,test_id,hits
* ``killmap.csv``: mutant_id,test_id,outcome
* ``tests.csv``: test_id,qualified_name,source_text

A best-effort adapter for Major-style mutant logs is included; its grammar is
compatibility-oriented, not bit-certified against any particular tool release.
"""

from __future__ import annotations

import csv
import enum
from pathlib import Path

import numpy as np

from .records import (
    CorpusError,
    CoverageMap,
    DatasetSplit,
    MutantKey,
    MutantRecord,
    Outcome,
    Scenario,
    TestCaseRecord,
)

MUTANTS_HEADER = [
    "mutant_id",
    "operator",
    "class_name",
    "method_signature",
    "line",
    "before_fragment",
    "after_fragment",
]
COVERAGE_HEADER = ["mutant_id", "test_id", "hits"]
KILLMAP_HEADER = ["mutant_id", "test_id", "outcome"]
TESTS_HEADER = ["test_id", "qualified_name", "source_text"]


class MutantLogFormat(enum.Enum):
    CANONICAL = "canonical"
    MAJOR_LOG = "major"


def _check_header(row: list[str], expected: list[str], path: Path) -> None:
    if [c.strip() for c in row] != expected:
        raise CorpusError(
            f"{path}: expected header {','.join(expected)}, got {','.join(row)}"
        )


def _int_field(value: str, name: str, path: Path, lineno: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise CorpusError(
            f"{path}:{lineno}: field {name} is not an integer: {value!r}"
        ) from None


def ingest_mutant_log(
    path: str | Path, format: MutantLogFormat = MutantLogFormat.CANONICAL
) -> list[MutantRecord]:
    """Parse a mutant listing into records, one per line."""
    path = Path(path)
    if format is MutantLogFormat.CANONICAL:
        return _ingest_mutants_canonical(path)
    return _ingest_mutants_major(path)


def _ingest_mutants_canonical(path: Path) -> list[MutantRecord]:
    records = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CorpusError(f"{path}: empty file") from None
        _check_header(header, MUTANTS_HEADER, path)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(MUTANTS_HEADER):
                raise CorpusError(
                    f"{path}:{lineno}: expected {len(MUTANTS_HEADER)} fields, "
                    f"got {len(row)}: {','.join(row)!r}"
                )
            mid, op, cls, sig, line, before, after = row
            try:
                records.append(
                    MutantRecord(
                        mutant_id=_int_field(mid, "mutant_id", path, lineno),
                        operator=op.strip(),
                        class_name=cls.strip(),
                        method_signature=sig.strip() or None,
                        line=_int_field(line, "line", path, lineno),
                        before_fragment=before,
                        after_fragment=after,
                    )
                )
            except CorpusError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None
    _check_unique_ids([r.mutant_id for r in records], "mutant_id", path)
    return records


def _ingest_mutants_major(path: Path) -> list[MutantRecord]:
    """Parse lines of shape ``id:operator:from:to:location:line:before |==> after``.

    The location field is ``class@method`` for inside-method mutants and a
    bare class name otherwise.
    """
    records = []
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split(":", 6)
            if len(parts) != 7:
                raise CorpusError(
                    f"{path}:{lineno}: malformed Major log line: {line!r}"
                )
            mid, op, _from, _to, location, src_line, change = parts
            if "|==>" not in change:
                raise CorpusError(
                    f"{path}:{lineno}: missing '|==>' separator: {line!r}"
                )
            before, after = change.split("|==>", 1)
            if "@" in location:
                cls, sig = location.split("@", 1)
            else:
                cls, sig = location, None
            try:
                records.append(
                    MutantRecord(
                        mutant_id=_int_field(mid, "id", path, lineno),
                        operator=op.strip(),
                        class_name=cls.strip(),
                        method_signature=(sig or "").strip() or None,
                        line=_int_field(src_line, "line", path, lineno),
                        before_fragment=before.strip(),
                        after_fragment=after.strip(),
                    )
                )
            except CorpusError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None
    _check_unique_ids([r.mutant_id for r in records], "mutant_id", path)
    return records


def _check_unique_ids(ids: list[int], name: str, path: Path) -> None:
    seen: set[int] = set()
    for i in ids:
        if i in seen:
            raise CorpusError(f"{path}: duplicate {name} {i}")
        seen.add(i)


def ingest_tests(path: str | Path) -> list[TestCaseRecord]:
    path = Path(path)
    records = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise CorpusError(f"{path}: empty file")
        _check_header(header, TESTS_HEADER, path)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise CorpusError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            records.append(
                TestCaseRecord(
                    test_id=_int_field(row[0], "test_id", path, lineno),
                    qualified_name=row[1],
                    source_text=row[2],
                )
            )
    _check_unique_ids([r.test_id for r in records], "test_id", path)
    return records


def ingest_coverage(path: str | Path) -> CoverageMap:
    path = Path(path)
    coverage = CoverageMap()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise CorpusError(f"{path}: empty file")
        _check_header(header, COVERAGE_HEADER, path)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise CorpusError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            try:
                coverage.add(
                    _int_field(row[0], "mutant_id", path, lineno),
                    _int_field(row[1], "test_id", path, lineno),
                    _int_field(row[2], "hits", path, lineno),
                )
            except CorpusError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None
    return coverage


def ingest_kill_map(path: str | Path) -> dict[tuple[int, int], Outcome]:
    path = Path(path)
    kills: dict[tuple[int, int], Outcome] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise CorpusError(f"{path}: empty file")
        _check_header(header, KILLMAP_HEADER, path)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise CorpusError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            key = (
                _int_field(row[0], "mutant_id", path, lineno),
                _int_field(row[1], "test_id", path, lineno),
            )
            if key in kills:
                raise CorpusError(f"{path}:{lineno}: duplicate kill entry for {key}")
            try:
                kills[key] = Outcome.parse(row[2].strip())
            except CorpusError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None
    return kills


def build_pairs(
    mutants: list[MutantRecord],
    tests: list[TestCaseRecord],
    coverage: CoverageMap,
    kills: dict[tuple[int, int], Outcome],
) -> list[tuple[int, int, int, Outcome]]:
    """Join the four inputs into covered (mutant, test, hits, outcome) tuples.

    Uncovered mutants are dropped entirely (they are guaranteed to survive and
    are never predicted). Covered pairs without a kill entry default to LIVE.
    """
    mutant_ids = {m.mutant_id for m in mutants}
    test_ids = {t.test_id for t in tests}
    for (m, t) in coverage.entries:
        if m not in mutant_ids:
            raise CorpusError(f"coverage references unknown mutant {m}")
        if t not in test_ids:
            raise CorpusError(f"coverage references unknown test {t}")
    for key in kills:
        if key not in coverage:
            raise CorpusError(
                f"kill map entry for uncovered pair {key}: a test cannot kill "
                "a mutant whose statement it never executes"
            )
    pairs = []
    for (m, t) in sorted(coverage.entries):
        hits = coverage.entries[(m, t)]
        outcome = kills.get((m, t), Outcome.LIVE)
        pairs.append((m, t, hits, outcome))
    return pairs


def _shuffled(keys: list[MutantKey], seed: int) -> list[MutantKey]:
    order = sorted(keys)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(order))
    return [order[i] for i in perm]


def _tag(corpus: str, ids: set[int] | list[int]) -> list[MutantKey]:
    return [(corpus, int(m)) for m in ids]


def split_same_version(
    mutant_ids: set[int] | list[int], seed: int, corpus: str = "default"
) -> DatasetSplit:
    """80-10-10 split of one corpus's mutants, shuffled by a seeded RNG."""
    keys = _tag(corpus, set(mutant_ids))
    n = len(keys)
    if n < 10:
        raise CorpusError(f"need at least 10 mutants for an 80-10-10 split, got {n}")
    shuffled = _shuffled(keys, seed)
    n_train = int(0.8 * n)
    n_val = int(0.1 * n)
    return DatasetSplit(
        train_mutants=set(shuffled[:n_train]),
        val_mutants=set(shuffled[n_train : n_train + n_val]),
        test_mutants=set(shuffled[n_train + n_val :]),
        scenario=Scenario.SAME_VERSION,
        seed=seed,
    )


def split_cross_version(
    old_mutant_ids: set[int] | list[int],
    new_mutant_ids: set[int] | list[int],
    seed: int,
    old_corpus: str = "old",
    new_corpus: str = "new",
) -> DatasetSplit:
    """90/10 train/val over the earlier version; test = the later version."""
    old_keys = _tag(old_corpus, set(old_mutant_ids))
    new_keys = _tag(new_corpus, set(new_mutant_ids))
    if not old_keys:
        raise CorpusError("old-version mutant set is empty")
    if not new_keys:
        raise CorpusError("new-version mutant set is empty")
    if old_corpus == new_corpus:
        raise CorpusError("old and new corpora must have distinct tags")
    shuffled = _shuffled(old_keys, seed)
    n_train = int(0.9 * len(shuffled))
    return DatasetSplit(
        train_mutants=set(shuffled[:n_train]),
        val_mutants=set(shuffled[n_train:]),
        test_mutants=set(new_keys),
        scenario=Scenario.CROSS_VERSION,
        seed=seed,
    )


def split_cross_project(
    source_corpora: dict[str, set[int] | list[int]],
    target_corpus: str,
    target_mutant_ids: set[int] | list[int],
    seed: int,
) -> DatasetSplit:
    """Union of source mutants split 90/10; test = all target mutants."""
    if not source_corpora:
        raise CorpusError("need at least one source corpus")
    if target_corpus in source_corpora:
        raise CorpusError(f"target corpus {target_corpus!r} is among the sources")
    pooled: list[MutantKey] = []
    for name, ids in source_corpora.items():
        pooled.extend(_tag(name, set(ids)))
    if not pooled:
        raise CorpusError("source corpora contain no mutants")
    shuffled = _shuffled(pooled, seed)
    n_train = int(0.9 * len(shuffled))
    scenario = (
        Scenario.CROSS_PROJECT_ONE_TO_ONE
        if len(source_corpora) == 1
        else Scenario.CROSS_PROJECT_MANY_TO_ONE
    )
    return DatasetSplit(
        train_mutants=set(shuffled[:n_train]),
        val_mutants=set(shuffled[n_train:]),
        test_mutants=set(_tag(target_corpus, set(target_mutant_ids))),
        scenario=scenario,
        seed=seed,
    )


def write_mutants_csv(path: str | Path, mutants: list[MutantRecord]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MUTANTS_HEADER)
        for m in mutants:
            writer.writerow(
                [
                    m.mutant_id,
                    m.operator,
                    m.class_name,
                    m.method_signature or "",
                    m.line,
                    m.before_fragment,
                    m.after_fragment,
                ]
            )


def write_tests_csv(path: str | Path, tests: list[TestCaseRecord]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TESTS_HEADER)
        for t in tests:
            writer.writerow([t.test_id, t.qualified_name, t.source_text])


def write_coverage_csv(path: str | Path, coverage: CoverageMap) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(COVERAGE_HEADER)
        for (m, t) in sorted(coverage.entries):
            writer.writerow([m, t, coverage.entries[(m, t)]])


def write_killmap_csv(
    path: str | Path, kills: dict[tuple[int, int], Outcome]
) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(KILLMAP_HEADER)
        for (m, t) in sorted(kills):
            writer.writerow([m, t, kills[(m, t)].value])
