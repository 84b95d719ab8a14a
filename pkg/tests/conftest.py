import numpy as np
import pytest

from killmat.features import CATEGORICAL_FEATURES, NUMERIC_FEATURES, FeatureTable
from killmat.records import TestCaseRecord

# Domain class, not a test class.
TestCaseRecord.__test__ = False


def make_table(
    n: int,
    seed: int = 0,
    label_rule=None,
    n_diff_categories: int = 12,
) -> FeatureTable:
    """Random feature table for model-level tests.

    The default label couples a categorical (statement_diff) and one numeric
    column so both split kinds get exercised.
    """
    rng = np.random.default_rng(seed)
    numeric = rng.normal(size=(n, len(NUMERIC_FEATURES)))
    diffs = rng.choice(
        [f'["tok{i}", "rep{i}"]' for i in range(n_diff_categories)], size=n
    )
    ops = rng.choice(["AOR", "ROR", "COR", "LVR", "STD"], size=n)
    categorical = []
    for name in CATEGORICAL_FEATURES:
        if name == "statement_diff":
            categorical.append(list(diffs))
        elif name == "mutation_operator":
            categorical.append(list(ops))
        else:
            categorical.append(list(rng.choice(["u", "v", "w"], size=n)))
    if label_rule is None:
        labels = (np.char.find(diffs.astype(str), "tok1") >= 0) | (
            (ops == "ROR") & (numeric[:, 0] > 0.5)
        )
    else:
        labels = label_rule(numeric, diffs, ops)
    return FeatureTable(
        mutant_keys=[("t", i + 1) for i in range(n)],
        test_ids=np.arange(1, n + 1, dtype=np.int64),
        numeric=numeric,
        categorical=categorical,
        labels=np.asarray(labels, dtype=bool),
        reasons=["FAIL" if l else "" for l in labels],
    )


@pytest.fixture(scope="session")
def small_table() -> FeatureTable:
    return make_table(1200, seed=3)
