"""Scoring of predicted kill matrices at pair, mutant, and suite level."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from .records import CoverageMap, Outcome
from .thresholds import Confusion, f1 as _f1, precision as _precision, recall as _recall


class EvaluationError(Exception):
    pass


@dataclass
class KillMatrix:
    """Boolean kill outcomes over a covered (mutant, test) pair universe."""

    entries: dict[tuple[int, int], bool] = field(default_factory=dict)

    @property
    def universe(self) -> set[tuple[int, int]]:
        return set(self.entries)

    @classmethod
    def from_outcomes(cls, outcomes: dict[tuple[int, int], Outcome]) -> "KillMatrix":
        return cls(entries={k: v.killed for k, v in outcomes.items()})

    @classmethod
    def from_predictions(cls, pairs, predicted) -> "KillMatrix":
        return cls(entries={tuple(k): bool(p) for k, p in zip(pairs, predicted)})

    def mutants(self) -> set[int]:
        return {m for m, _ in self.entries}

    def write_csv(self, path: str | Path, scores=None) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            if scores is None:
                writer.writerow(["mutant_id", "test_id", "killed"])
                for (m, t) in sorted(self.entries):
                    writer.writerow([m, t, int(self.entries[(m, t)])])
            else:
                writer.writerow(["mutant_id", "test_id", "score", "killed"])
                score_map = dict(zip(self.entries, scores))
                for (m, t) in sorted(self.entries):
                    writer.writerow(
                        [m, t, repr(float(score_map[(m, t)])), int(self.entries[(m, t)])]
                    )

    @classmethod
    def read_csv(cls, path: str | Path) -> "KillMatrix":
        entries = {}
        with Path(path).open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or "killed" not in header:
                raise EvaluationError(f"{path}: not a kill-matrix CSV")
            killed_col = header.index("killed")
            for row in reader:
                if not row:
                    continue
                entries[(int(row[0]), int(row[1]))] = row[killed_col] == "1"
        return cls(entries=entries)


def _require_same_universe(predicted: KillMatrix, actual: KillMatrix) -> None:
    if predicted.universe != actual.universe:
        only_pred = len(predicted.universe - actual.universe)
        only_act = len(actual.universe - predicted.universe)
        raise EvaluationError(
            "kill matrices cover different pair universes "
            f"({only_pred} extra predicted, {only_act} extra actual)"
        )


def _prf(tp: int, fp: int, fn: int, tn: int) -> dict[str, float]:
    c = Confusion(tp=tp, fp=fp, fn=fn, tn=tn)
    return {"precision": _precision(c), "recall": _recall(c), "f1": _f1(c)}


def eval_pairs(predicted: KillMatrix, actual: KillMatrix) -> dict[str, float]:
    """Pair-level precision/recall/F1 with killed as the positive class."""
    _require_same_universe(predicted, actual)
    tp = fp = fn = tn = 0
    for key, act in actual.entries.items():
        pred = predicted.entries[key]
        if pred and act:
            tp += 1
        elif pred and not act:
            fp += 1
        elif not pred and act:
            fn += 1
        else:
            tn += 1
    return _prf(tp, fp, fn, tn)


def aggregate_mutants(matrix: KillMatrix) -> dict[int, bool]:
    """A mutant is killed iff at least one covering test kills it."""
    killed: dict[int, bool] = {}
    for (m, _t), k in matrix.entries.items():
        killed[m] = killed.get(m, False) or k
    return killed


def eval_mutants(predicted: KillMatrix, actual: KillMatrix) -> dict[str, float]:
    """Mutant-level precision/recall/F1 with survived as the positive class."""
    _require_same_universe(predicted, actual)
    pred = aggregate_mutants(predicted)
    act = aggregate_mutants(actual)
    tp = fp = fn = tn = 0
    for m, act_killed in act.items():
        pred_survived = not pred[m]
        act_survived = not act_killed
        if pred_survived and act_survived:
            tp += 1
        elif pred_survived and not act_survived:
            fp += 1
        elif not pred_survived and act_survived:
            fn += 1
        else:
            tn += 1
    return _prf(tp, fp, fn, tn)


def mutation_score(matrix: KillMatrix) -> float:
    """Percentage of covered mutants killed by the suite."""
    killed = aggregate_mutants(matrix)
    if not killed:
        raise EvaluationError("mutation score is undefined with zero covered mutants")
    return 100.0 * sum(killed.values()) / len(killed)


def ape(pms: float, ams: float) -> float:
    """Absolute prediction error between the two mutation scores."""
    return abs(pms - ams)


def eval_by_reason(
    predicted: KillMatrix, actual_outcomes: dict[tuple[int, int], Outcome]
) -> dict[str, float]:
    """Recall of predicted kills per killing reason (FAIL / TIME / EXC).

    Restricted to actually-killed pairs there are no actual negatives, so
    precision is identically 1 and recall is the informative metric. Reasons
    with no pairs are absent from the result rather than reported as 0.
    """
    counts: dict[str, list[int]] = {}
    for key, outcome in actual_outcomes.items():
        if not outcome.killed:
            continue
        if key not in predicted.entries:
            raise EvaluationError(f"no prediction for actually-killed pair {key}")
        hit, total = counts.setdefault(outcome.value, [0, 0])
        counts[outcome.value][1] = total + 1
        if predicted.entries[key]:
            counts[outcome.value][0] = hit + 1
    return {reason: hit / total for reason, (hit, total) in counts.items()}


def fewer_covered_f1(
    predicted: KillMatrix,
    actual: KillMatrix,
    coverage: CoverageMap,
    ratio: float = 0.02,
) -> float | None:
    """Mutant-level F1 over mutants covered by at most ratio of covering tests.

    The denominator is the number of distinct tests that cover at least one
    mutant in the corpus. Returns None when no mutant qualifies.
    """
    if not coverage.entries:
        raise EvaluationError("coverage map is empty")
    _require_same_universe(predicted, actual)
    covering_tests = {t for _m, t in coverage.entries}
    limit = ratio * len(covering_tests)
    per_mutant: dict[int, int] = {}
    for (m, _t) in coverage.entries:
        per_mutant[m] = per_mutant.get(m, 0) + 1
    selected = {m for m, count in per_mutant.items() if count <= limit}
    selected &= predicted.mutants()
    if not selected:
        return None
    pred = aggregate_mutants(predicted)
    act = aggregate_mutants(actual)
    tp = fp = fn = tn = 0
    for m in selected:
        pred_survived = not pred[m]
        act_survived = not act[m]
        if pred_survived and act_survived:
            tp += 1
        elif pred_survived and not act_survived:
            fp += 1
        elif not pred_survived and act_survived:
            fn += 1
        else:
            tn += 1
    return _prf(tp, fp, fn, tn)["f1"]


@dataclass
class EvalReport:
    """Full per-experiment evaluation of a predicted kill matrix."""

    pair_metrics: dict[str, float]
    mutant_metrics: dict[str, float]
    predicted_mutation_score: float
    actual_mutation_score: float
    ape: float
    reason_recall: dict[str, float]
    fewer_covered_f1: float | None

    def to_json_dict(self) -> dict:
        return {
            "pair_level": self.pair_metrics,
            "mutant_level_survived_positive": self.mutant_metrics,
            "predicted_mutation_score": self.predicted_mutation_score,
            "actual_mutation_score": self.actual_mutation_score,
            "ape": self.ape,
            "reason_recall": self.reason_recall,
            "fewer_covered_f1": self.fewer_covered_f1,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), indent=2) + "\n", encoding="utf-8"
        )

    CSV_HEADER = [
        "pair_precision",
        "pair_recall",
        "pair_f1",
        "mutant_precision",
        "mutant_recall",
        "mutant_f1",
        "pms",
        "ams",
        "ape",
        "recall_fail",
        "recall_time",
        "recall_exc",
        "fewer_covered_f1",
    ]

    def csv_row(self) -> list[str]:
        def fmt(v) -> str:
            return "" if v is None else repr(float(v))

        return [
            fmt(self.pair_metrics["precision"]),
            fmt(self.pair_metrics["recall"]),
            fmt(self.pair_metrics["f1"]),
            fmt(self.mutant_metrics["precision"]),
            fmt(self.mutant_metrics["recall"]),
            fmt(self.mutant_metrics["f1"]),
            fmt(self.predicted_mutation_score),
            fmt(self.actual_mutation_score),
            fmt(self.ape),
            fmt(self.reason_recall.get("FAIL")),
            fmt(self.reason_recall.get("TIME")),
            fmt(self.reason_recall.get("EXC")),
            fmt(self.fewer_covered_f1),
        ]

    def save_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.CSV_HEADER)
            writer.writerow(self.csv_row())


def evaluate(
    predicted: KillMatrix,
    actual_outcomes: dict[tuple[int, int], Outcome],
    coverage: CoverageMap | None = None,
) -> EvalReport:
    """Run the full evaluation battery against ground-truth outcomes."""
    actual = KillMatrix.from_outcomes(actual_outcomes)
    pair_metrics = eval_pairs(predicted, actual)
    mutant_metrics = eval_mutants(predicted, actual)
    pms = mutation_score(predicted)
    ams = mutation_score(actual)
    if coverage is not None:
        restricted = CoverageMap(
            entries={
                k: h for k, h in coverage.entries.items() if k in predicted.entries
            }
        )
        fewer = fewer_covered_f1(predicted, actual, restricted)
    else:
        fewer = None
    return EvalReport(
        pair_metrics=pair_metrics,
        mutant_metrics=mutant_metrics,
        predicted_mutation_score=pms,
        actual_mutation_score=ams,
        ape=ape(pms, ams),
        reason_recall=eval_by_reason(predicted, actual_outcomes),
        fewer_covered_f1=fewer,
    )
