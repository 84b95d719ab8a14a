"""Core domain records shared across the toolkit."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

OPERATORS = ("AOR", "LOR", "COR", "ROR", "SOR", "ORU", "EVR", "LVR", "STD")


class CorpusError(Exception):
    """Raised for malformed or inconsistent corpus inputs."""


class Outcome(enum.Enum):
    """Result of running one test case against one mutant."""

    FAIL = "FAIL"
    TIME = "TIME"
    EXC = "EXC"
    LIVE = "LIVE"

    @property
    def killed(self) -> bool:
        return self is not Outcome.LIVE

    @classmethod
    def parse(cls, token: str) -> "Outcome":
        try:
            return cls[token]
        except KeyError:
            raise CorpusError(f"unknown outcome token: {token!r}") from None


KILL_REASONS = (Outcome.FAIL, Outcome.TIME, Outcome.EXC)


@dataclass(frozen=True)
class MutantRecord:
    """One mutant as reported by the mutation tool."""

    mutant_id: int
    operator: str
    class_name: str
    method_signature: str | None
    line: int
    before_fragment: str
    after_fragment: str

    def __post_init__(self) -> None:
        if self.mutant_id <= 0:
            raise CorpusError(f"mutant_id must be positive, got {self.mutant_id}")
        if self.operator not in OPERATORS:
            raise CorpusError(f"unknown mutation operator: {self.operator!r}")
        if self.line <= 0:
            raise CorpusError(f"line must be positive, got {self.line}")
        if self.method_signature == "":
            # Normalise: empty string means "outside any method".
            object.__setattr__(self, "method_signature", None)

    @property
    def inside_method(self) -> bool:
        return self.method_signature is not None


@dataclass(frozen=True)
class TestCaseRecord:
    """One test method, carrying its source text for feature extraction."""

    test_id: int
    qualified_name: str
    source_text: str

    def __post_init__(self) -> None:
        if self.test_id <= 0:
            raise CorpusError(f"test_id must be positive, got {self.test_id}")


@dataclass
class CoverageMap:
    """Hit counts for covered (mutant, test) pairs.

    Presence of an entry means the test executes the mutated statement at
    least once; zero-hit entries are rejected at construction.
    """

    entries: dict[tuple[int, int], int] = field(default_factory=dict)

    def add(self, mutant_id: int, test_id: int, hits: int) -> None:
        key = (mutant_id, test_id)
        if key in self.entries:
            raise CorpusError(f"duplicate coverage entry for pair {key}")
        if hits <= 0:
            raise CorpusError(f"coverage hits must be >= 1 for pair {key}, got {hits}")
        self.entries[key] = hits

    def covered_mutants(self) -> set[int]:
        return {m for m, _ in self.entries}

    def covering_tests(self, mutant_id: int) -> list[int]:
        return sorted(t for m, t in self.entries if m == mutant_id)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key: tuple[int, int]) -> bool:
        return key in self.entries


class Scenario(enum.Enum):
    """Evaluation scenario a dataset split was built for."""

    SAME_VERSION = "same_version"
    CROSS_VERSION = "cross_version"
    CROSS_PROJECT_ONE_TO_ONE = "cross_project_one_to_one"
    CROSS_PROJECT_MANY_TO_ONE = "cross_project_many_to_one"


# A mutant key is (corpus tag, mutant id): mutant ids are only unique within
# one corpus, so cross-corpus splits must carry the tag.
MutantKey = tuple[str, int]


@dataclass
class DatasetSplit:
    """Leakage-free train/validation/test partition at mutant granularity."""

    train_mutants: set[MutantKey]
    val_mutants: set[MutantKey]
    test_mutants: set[MutantKey]
    scenario: Scenario
    seed: int

    def __post_init__(self) -> None:
        if self.train_mutants & self.val_mutants:
            raise CorpusError("train and validation mutant sets intersect")
        if self.train_mutants & self.test_mutants:
            raise CorpusError("train and test mutant sets intersect")
        if self.val_mutants & self.test_mutants:
            raise CorpusError("validation and test mutant sets intersect")

    def to_json_dict(self) -> dict:
        def enc(keys: set[MutantKey]) -> list[list]:
            return [[c, m] for c, m in sorted(keys)]

        return {
            "scenario": self.scenario.value,
            "seed": self.seed,
            "train_mutants": enc(self.train_mutants),
            "val_mutants": enc(self.val_mutants),
            "test_mutants": enc(self.test_mutants),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "DatasetSplit":
        def dec(rows: list) -> set[MutantKey]:
            return {(str(c), int(m)) for c, m in rows}

        return cls(
            train_mutants=dec(doc["train_mutants"]),
            val_mutants=dec(doc["val_mutants"]),
            test_mutants=dec(doc["test_mutants"]),
            scenario=Scenario(doc["scenario"]),
            seed=int(doc["seed"]),
        )
