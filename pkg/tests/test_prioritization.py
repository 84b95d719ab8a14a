"""Total/Additional prioritization and APFD scoring."""

import itertools

import numpy as np
import pytest

from killmat.evaluation import KillMatrix
from killmat.prioritization import (
    PrioritizationError,
    Strategy,
    apfd,
    apfd_difference,
    prioritize_additional,
    prioritize_total,
)


def matrix_from_kills(kills: dict[int, set[int]], tests: set[int]) -> KillMatrix:
    entries = {}
    for t in tests:
        for m, killers in kills.items():
            entries[(m, t)] = t in killers
    return KillMatrix(entries=entries)


def kill_sets(matrix: KillMatrix) -> dict[int, set[int]]:
    per_test: dict[int, set[int]] = {}
    for (m, t), killed in matrix.entries.items():
        per_test.setdefault(t, set())
        if killed:
            per_test[t].add(m)
    return per_test


class TestTotal:
    def test_sorted_by_kill_count(self):
        kills = {1: {1}, 2: {1}, 3: {1, 3}, 4: {1, 3}}  # mutant -> detecting tests
        m = matrix_from_kills(kills, tests={1, 2, 3})
        suite = prioritize_total(m, seed=0)
        # t1 kills 4 mutants, t3 kills 2, t2 kills 0
        assert suite.order == [1, 3, 2]

    def test_all_tied_is_seeded_permutation(self):
        m = matrix_from_kills({1: {1, 2, 3}}, tests={1, 2, 3})
        a = prioritize_total(m, seed=5)
        b = prioritize_total(m, seed=5)
        assert a.order == b.order
        assert sorted(a.order) == [1, 2, 3]

    def test_single_test(self):
        m = matrix_from_kills({1: {7}}, tests={7})
        assert prioritize_total(m, seed=0).order == [7]


class TestAdditional:
    def test_hand_traced_greedy(self):
        # t1 kills {m1..m4}, t2 kills {m4, m5}, t3 kills {m1, m2}
        entries = {}
        per_test = {1: {1, 2, 3, 4}, 2: {4, 5}, 3: {1, 2}}
        for t, killed in per_test.items():
            for m in range(1, 6):
                entries[(m, t)] = m in killed
        suite = prioritize_additional(KillMatrix(entries=entries), seed=0)
        assert suite.order == [1, 2, 3]

    def test_reset_reranks_remaining_tests(self):
        # t1 kills everything; afterwards no test adds new kills, so the kill
        # state resets and t3 (3 kills) must precede t2 (1 kill).
        per_test = {1: {1, 2, 3, 4}, 2: {4}, 3: {1, 2, 3}}
        entries = {}
        for t, killed in per_test.items():
            for m in range(1, 5):
                entries[(m, t)] = m in killed
        suite = prioritize_additional(KillMatrix(entries=entries), seed=0)
        assert suite.order == [1, 3, 2]

    def test_all_zero_matrix_is_seeded_shuffle(self):
        entries = {(m, t): False for m in range(1, 4) for t in range(1, 5)}
        a = prioritize_additional(KillMatrix(entries=dict(entries)), seed=9)
        b = prioritize_additional(KillMatrix(entries=dict(entries)), seed=9)
        assert a.order == b.order
        assert sorted(a.order) == [1, 2, 3, 4]

    def test_permutation_property(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            n_t = int(rng.integers(1, 9))
            n_m = int(rng.integers(1, 9))
            entries = {
                (m, t): bool(rng.random() < 0.4)
                for m in range(1, n_m + 1)
                for t in range(1, n_t + 1)
            }
            km = KillMatrix(entries=entries)
            for strategy in (prioritize_total, prioritize_additional):
                order = strategy(km, seed=int(rng.integers(1000))).order
                assert sorted(order) == list(range(1, n_t + 1))

    def test_greedy_step_maximality_before_reset(self):
        rng = np.random.default_rng(17)
        for _ in range(40):
            n_t = int(rng.integers(2, 9))
            n_m = int(rng.integers(2, 9))
            entries = {
                (m, t): bool(rng.random() < 0.35)
                for m in range(1, n_m + 1)
                for t in range(1, n_t + 1)
            }
            km = KillMatrix(entries=entries)
            order = prioritize_additional(km, seed=int(rng.integers(1000))).order
            sets = kill_sets(km)
            killed: set[int] = set()
            for idx, chosen in enumerate(order):
                gains = {t: len(sets[t] - killed) for t in order[idx:]}
                if max(gains.values()) == 0:
                    break  # reset region: maximality claim no longer applies
                assert gains[chosen] == max(gains.values())
                killed |= sets[chosen]


class TestApfd:
    def test_first_test_detects_single_fault(self):
        result = apfd([1, 2, 3, 4], {10: {1}})
        assert result.apfd == 0.875
        assert result.fault_positions == [1]

    def test_two_faults_ranks_one_and_three(self):
        result = apfd(list(range(1, 11)), {1: {1}, 2: {3, 7}})
        assert result.apfd == 0.85
        assert result.fault_positions == [1, 3]

    def test_undetected_fault_rejected(self):
        with pytest.raises(PrioritizationError, match="not detected"):
            apfd([1, 2], {5: {99}})

    @staticmethod
    def trapezoid_apfd(order, fault_detecting):
        """Area oracle: trapezoidal integral of the detected-fraction curve."""
        rank = {t: i + 1 for i, t in enumerate(order)}
        firsts = [min(rank[t] for t in dets) for dets in fault_detecting.values()]
        r = len(firsts)
        n = len(order)
        detected = [sum(1 for f in firsts if f <= k) / r for k in range(n + 1)]
        area = sum((detected[k] + detected[k + 1]) / 2.0 for k in range(n)) / n
        return area

    def test_matches_area_oracle_exhaustively_small(self):
        rng = np.random.default_rng(2)
        for n in range(1, 6):
            tests = list(range(1, n + 1))
            faults = {
                f: set(rng.choice(tests, size=int(rng.integers(1, n + 1)), replace=False).tolist())
                for f in range(1, 4)
            }
            for perm in itertools.permutations(tests):
                got = apfd(list(perm), faults).apfd
                oracle = self.trapezoid_apfd(list(perm), faults)
                assert abs(got - oracle) < 1e-12

    def test_strictly_inside_unit_interval(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            n = int(rng.integers(1, 12))
            order = list(range(1, n + 1))
            faults = {1: {int(rng.integers(1, n + 1))}}
            value = apfd(order, faults).apfd
            assert 0.0 < value < 1.0


class TestApfdDifference:
    def test_identical_matrices_give_zero(self):
        rng = np.random.default_rng(4)
        entries = {
            (m, t): bool(rng.random() < 0.5)
            for m in range(1, 7)
            for t in range(1, 7)
        }
        km = KillMatrix(entries=entries)
        faults = {1: {1, 3}, 2: {5}}
        for strategy in (Strategy.TOTAL, Strategy.ADDITIONAL):
            result = apfd_difference(km, km, faults, strategy=strategy, seed=123)
            assert result.mean_abs_diff == 0.0

    def test_no_ties_constant_across_repeats(self):
        # Distinct kill counts everywhere: the orders are deterministic, so
        # the difference is identical in every repeat.
        per_test_pred = {1: {1, 2, 3}, 2: {1, 2}, 3: {1}}
        per_test_act = {1: {1}, 2: {1, 2}, 3: {1, 2, 3}}
        def build(per_test):
            return KillMatrix(
                entries={
                    (m, t): m in per_test[t]
                    for m in range(1, 4)
                    for t in range(1, 4)
                }
            )
        faults = {1: {2}, 2: {1, 3}}
        result = apfd_difference(
            build(per_test_pred), build(per_test_act), faults,
            strategy=Strategy.TOTAL, repeats=10, seed=0,
        )
        diffs = {round(r["abs_diff"], 15) for r in result.repeats}
        assert len(diffs) == 1

    def test_matches_brute_force_recomputation(self):
        from killmat.prioritization import prioritize

        rng = np.random.default_rng(21)
        pred_entries = {
            (m, t): bool(rng.random() < 0.5)
            for m in range(1, 7)
            for t in range(1, 7)
        }
        act_entries = {
            key: bool(rng.random() < 0.5) for key in pred_entries
        }
        predicted = KillMatrix(entries=pred_entries)
        actual = KillMatrix(entries=act_entries)
        faults = {1: {2, 4}, 2: {1}, 3: {3, 6}}
        result = apfd_difference(
            predicted, actual, faults, strategy=Strategy.ADDITIONAL,
            repeats=6, seed=77,
        )
        total = 0.0
        for r in range(6):
            seed = 77 + r
            a = apfd(prioritize(predicted, Strategy.ADDITIONAL, seed).order, faults).apfd
            b = apfd(prioritize(actual, Strategy.ADDITIONAL, seed).order, faults).apfd
            total += abs(a - b)
        assert result.mean_abs_diff == pytest.approx(total / 6, abs=1e-15)

    def test_mismatched_test_universe_rejected(self):
        a = KillMatrix(entries={(1, 1): True})
        b = KillMatrix(entries={(1, 2): True})
        with pytest.raises(PrioritizationError, match="universes"):
            apfd_difference(a, b, {1: {1}})
