"""Mutation-based test case prioritization and APFD scoring.

The Total strategy orders tests by their kill counts; the Additional
strategy greedily picks the test adding the most not-yet-killed mutants,
resetting the kill state once no remaining test adds anything. Ties are
broken by drawing uniformly from the tied set with the run's seeded RNG.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .evaluation import KillMatrix


class PrioritizationError(Exception):
    pass


class Strategy(enum.Enum):
    TOTAL = "total"
    ADDITIONAL = "additional"


@dataclass
class PrioritizedSuite:
    order: list[int]
    strategy: Strategy
    seed: int

    def to_json_dict(self) -> dict:
        return {
            "strategy": self.strategy.value,
            "seed": self.seed,
            "order": self.order,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), indent=2) + "\n", encoding="utf-8"
        )


def _kill_sets(matrix: KillMatrix) -> dict[int, frozenset[int]]:
    tests: dict[int, set[int]] = {}
    for (m, t), killed in matrix.entries.items():
        tests.setdefault(t, set())
        if killed:
            tests[t].add(m)
    return {t: frozenset(ms) for t, ms in tests.items()}


def _pick(candidates: list[int], rng: np.random.Generator) -> int:
    if len(candidates) == 1:
        return candidates[0]
    return candidates[int(rng.integers(len(candidates)))]


def prioritize_total(matrix: KillMatrix, seed: int) -> PrioritizedSuite:
    """Sort tests by number of killed mutants, descending; ties random."""
    kills = _kill_sets(matrix)
    if not kills:
        raise PrioritizationError("kill matrix contains no tests")
    rng = np.random.default_rng(seed)
    remaining = sorted(kills)
    order = []
    while remaining:
        best = max(len(kills[t]) for t in remaining)
        tied = [t for t in remaining if len(kills[t]) == best]
        choice = _pick(tied, rng)
        order.append(choice)
        remaining.remove(choice)
    return PrioritizedSuite(order=order, strategy=Strategy.TOTAL, seed=seed)


def prioritize_additional(matrix: KillMatrix, seed: int) -> PrioritizedSuite:
    """Greedy selection by marginal new kills, with reset on exhaustion.

    When every remaining test adds zero new kills the kill state resets to
    empty and the greedy pass reapplies to the remaining tests only;
    already-selected tests never re-enter. Runs in O(T^2 M).
    """
    kills = _kill_sets(matrix)
    if not kills:
        raise PrioritizationError("kill matrix contains no tests")
    rng = np.random.default_rng(seed)
    remaining = sorted(kills)
    order: list[int] = []
    killed: set[int] = set()
    while remaining:
        gains = {t: len(kills[t] - killed) for t in remaining}
        best = max(gains.values())
        if best == 0 and killed:
            killed = set()
            continue
        tied = [t for t in remaining if gains[t] == best]
        choice = _pick(tied, rng)
        order.append(choice)
        remaining.remove(choice)
        killed |= kills[choice]
    return PrioritizedSuite(order=order, strategy=Strategy.ADDITIONAL, seed=seed)


def prioritize(matrix: KillMatrix, strategy: Strategy, seed: int) -> PrioritizedSuite:
    if strategy is Strategy.TOTAL:
        return prioritize_total(matrix, seed)
    return prioritize_additional(matrix, seed)


@dataclass
class ApfdResult:
    apfd: float
    fault_positions: list[int]


def apfd(order: list[int], fault_detecting: dict[int, set[int]]) -> ApfdResult:
    """Average Percentage of Faults Detected for one test ordering.

    APFD = 1 - (TF_1 + ... + TF_r) / (n * r) + 1 / (2n), with TF_i the
    1-based rank of the earliest test detecting fault i.
    """
    if not order:
        raise PrioritizationError("empty test order")
    if not fault_detecting:
        raise PrioritizationError("no faults given")
    rank = {t: i + 1 for i, t in enumerate(order)}
    positions = []
    for fault, detectors in sorted(fault_detecting.items()):
        ranks = [rank[t] for t in detectors if t in rank]
        if not ranks:
            raise PrioritizationError(
                f"fault {fault} is not detected by any test in the suite"
            )
        positions.append(min(ranks))
    n = len(order)
    r = len(positions)
    # Grouped as 1 - (sum TF - r/2) / (n r): algebraically identical to the
    # three-term form and exact on round inputs.
    value = 1.0 - (sum(positions) - r / 2.0) / (n * r)
    return ApfdResult(apfd=value, fault_positions=positions)


@dataclass
class ApfdDifference:
    strategy: Strategy
    repeats: list[dict]
    mean_abs_diff: float


def apfd_difference(
    predicted: KillMatrix,
    actual: KillMatrix,
    fault_detecting: dict[int, set[int]],
    strategy: Strategy = Strategy.TOTAL,
    repeats: int = 10,
    seed: int = 0,
) -> ApfdDifference:
    """Mean |APFD_predicted - APFD_actual| over repeated prioritizations.

    Each repeat derives its seed as seed + r; within one repeat the predicted
    and actual prioritizations share that seed, so a perfect prediction gives
    a difference of exactly zero.
    """
    pred_tests = {t for _m, t in predicted.entries}
    act_tests = {t for _m, t in actual.entries}
    if pred_tests != act_tests:
        raise PrioritizationError("matrices cover different test universes")
    rows = []
    total = 0.0
    for r in range(repeats):
        run_seed = seed + r
        order_pred = prioritize(predicted, strategy, run_seed).order
        order_act = prioritize(actual, strategy, run_seed).order
        apfd_pred = apfd(order_pred, fault_detecting).apfd
        apfd_act = apfd(order_act, fault_detecting).apfd
        diff = abs(apfd_pred - apfd_act)
        total += diff
        rows.append(
            {
                "repeat": r,
                "seed": run_seed,
                "apfd_predicted": apfd_pred,
                "apfd_actual": apfd_act,
                "abs_diff": diff,
            }
        )
    return ApfdDifference(
        strategy=strategy, repeats=rows, mean_abs_diff=total / repeats
    )


PRIORITIZATION_CSV_HEADER = [
    "repeat",
    "strategy",
    "apfd_predicted",
    "apfd_actual",
    "abs_diff",
]


def write_prioritization_csv(path: str | Path, results: list[ApfdDifference]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(PRIORITIZATION_CSV_HEADER)
        for result in results:
            for row in result.repeats:
                writer.writerow(
                    [
                        row["repeat"],
                        result.strategy.value,
                        repr(row["apfd_predicted"]),
                        repr(row["apfd_actual"]),
                        repr(row["abs_diff"]),
                    ]
                )
