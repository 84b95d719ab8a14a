"""Forest + booster training, prediction identities, and serialization."""

import json

import numpy as np
import pytest

from killmat.features import CATEGORICAL_FEATURES, NUMERIC_FEATURES, FeatureTable
from killmat.models import (
    ModelConfig,
    ModelError,
    TreeEnsemblePair,
    aggregate_importances,
    combine,
    feature_importance,
    load_model,
    save_model,
    train,
)

from conftest import make_table


def tiny_config(**overrides) -> ModelConfig:
    base = dict(
        forest_trees=20,
        forest_max_depth=8,
        forest_min_leaf=2,
        booster_rounds=25,
        booster_min_leaf=2,
        seed=9,
    )
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture(scope="module")
def trained(small_table):
    return train(small_table, tiny_config())


def four_row_table():
    numeric = np.zeros((4, len(NUMERIC_FEATURES)))
    numeric[:, 0] = [0.0, 1.0, 10.0, 11.0]
    categorical = [["c"] * 4 for _ in CATEGORICAL_FEATURES]
    return FeatureTable(
        mutant_keys=[("t", i + 1) for i in range(4)],
        test_ids=np.arange(1, 5, dtype=np.int64),
        numeric=numeric,
        categorical=categorical,
        labels=np.array([False, False, True, True]),
        reasons=["", "", "FAIL", "FAIL"],
    )


def trace_forest_probability(pair: TreeEnsemblePair, table: FeatureTable) -> np.ndarray:
    """Independent per-tree traversal oracle over the serialized tree arrays."""
    x_num, x_cat = pair.encode(table)
    d_num = len(pair.numeric_features)
    out = np.zeros(len(table))
    for row in range(len(table)):
        total = 0.0
        for tree in pair.forest:
            node = 0
            while tree.feature[node] >= 0:
                f = int(tree.feature[node])
                if f < d_num:
                    node = int(
                        tree.left[node]
                        if x_num[row, f] <= tree.threshold[node]
                        else tree.right[node]
                    )
                else:
                    code = int(x_cat[row, f - d_num])
                    k = len(pair.categories[pair.categorical_features[f - d_num]])
                    if code >= k:
                        go_left = tree.majority_left[node] == 1
                    else:
                        go_left = code in tree.cat_left[node]
                    node = int(tree.left[node] if go_left else tree.right[node])
            total += tree.value[node]
        out[row] = total / len(pair.forest)
    return out


class TestForest:
    def test_single_stump_on_separable_rows(self):
        table = four_row_table()
        config = ModelConfig(
            forest_trees=1, forest_max_depth=1, forest_min_leaf=1,
            forest_features_per_split=21, booster_rounds=0, seed=1,
        )
        pair = train(table, config)
        tree = pair.forest[0]
        assert tree.n_nodes() == 3  # one split, two leaves
        assert NUMERIC_FEATURES[int(tree.feature[0])] == NUMERIC_FEATURES[0]
        probs = pair.predict_forest(table)
        assert ((probs >= 0.5) == table.labels).all()

    def test_same_seed_identical_forests(self, small_table):
        a = train(small_table, tiny_config())
        b = train(small_table, tiny_config())
        for ta, tb in zip(a.forest, b.forest):
            assert np.array_equal(ta.feature, tb.feature)
            assert np.array_equal(ta.threshold, tb.threshold)
            assert ta.cat_left == tb.cat_left

    def test_single_class_rejected(self):
        table = four_row_table()
        table.labels[:] = True
        with pytest.raises(ModelError, match="single class"):
            train(table, tiny_config())

    def test_probability_equals_leaf_frequency_mean(self, trained, small_table):
        probe = make_table(200, seed=55)
        fast = trained.predict_forest(probe)
        slow = trace_forest_probability(trained, probe)
        assert np.allclose(fast, slow, atol=1e-12, rtol=0.0)

    def test_majority_vote_consistency_on_hard_trees(self, small_table):
        # With min_leaf=1 and unlimited depth, leaves are pure (0/1), so
        # thresholding the mean at 0.5 is the majority vote.
        config = tiny_config(forest_trees=9, forest_min_leaf=1, forest_max_depth=24)
        pair = train(small_table, config)
        probs = pair.predict_forest(small_table)
        x_num, x_cat = pair.encode(small_table)
        votes = np.zeros(len(small_table))
        per_tree = trace_forest_probability(pair, small_table)  # mean of leaf values
        # per-tree leaf values recomputed individually
        d_num = len(pair.numeric_features)
        for row in range(50):
            leaf_values = []
            for tree in pair.forest:
                node = 0
                while tree.feature[node] >= 0:
                    f = int(tree.feature[node])
                    if f < d_num:
                        node = int(
                            tree.left[node]
                            if x_num[row, f] <= tree.threshold[node]
                            else tree.right[node]
                        )
                    else:
                        code = int(x_cat[row, f - d_num])
                        k = len(pair.categories[pair.categorical_features[f - d_num]])
                        if code >= k:
                            go_left = tree.majority_left[node] == 1
                        else:
                            go_left = code in tree.cat_left[node]
                        node = int(tree.left[node] if go_left else tree.right[node])
                leaf_values.append(tree.value[node])
            if all(v in (0.0, 1.0) for v in leaf_values):
                majority = sum(leaf_values) > len(leaf_values) / 2
                assert (probs[row] >= 0.5) == majority or probs[row] == 0.5

    def test_unseen_category_routes_without_error(self, trained):
        probe = make_table(10, seed=77)
        diff_col = CATEGORICAL_FEATURES.index("statement_diff")
        probe.categorical[diff_col] = ['["never", "seen"]'] * 10
        probs = trained.predict_forest(probe)
        assert np.all((probs >= 0.0) & (probs <= 1.0))


class TestBooster:
    def test_zero_rounds_gives_base_rate(self, small_table):
        pair = train(small_table, tiny_config(booster_rounds=0))
        probs = pair.predict_booster(small_table)
        prevalence = small_table.labels.mean()
        assert np.allclose(probs, prevalence, atol=1e-12)

    def test_zero_learning_rate_equals_zero_rounds(self, small_table):
        paused = train(small_table, tiny_config(booster_learning_rate=0.0))
        empty = train(small_table, tiny_config(booster_rounds=0))
        probe = make_table(100, seed=4)
        assert np.allclose(
            paused.predict_booster(probe), empty.predict_booster(probe), atol=1e-15
        )

    def test_separable_fixture_reaches_full_accuracy(self):
        rng = np.random.default_rng(12)
        numeric = np.zeros((20, len(NUMERIC_FEATURES)))
        numeric[:, 2] = np.concatenate([rng.uniform(0, 1, 10), rng.uniform(5, 6, 10)])
        table = FeatureTable(
            mutant_keys=[("t", i + 1) for i in range(20)],
            test_ids=np.arange(1, 21, dtype=np.int64),
            numeric=numeric,
            categorical=[["k"] * 20 for _ in CATEGORICAL_FEATURES],
            labels=np.array([False] * 10 + [True] * 10),
            reasons=[""] * 10 + ["FAIL"] * 10,
        )
        pair = train(
            table,
            ModelConfig(
                forest_trees=1, booster_rounds=50, booster_learning_rate=0.1,
                booster_min_leaf=1, forest_min_leaf=1, seed=0,
            ),
        )
        probs = pair.predict_booster(table)
        assert (((probs >= 0.5) == table.labels)).mean() == 1.0

    def test_telescoping_update(self, trained):
        probe = make_table(60, seed=21)
        margins = [
            trained.booster_margin(probe, n_trees=k)
            for k in range(len(trained.booster) + 1)
        ]
        x_num, x_cat = trained.encode(probe)
        for k in range(1, len(margins)):
            step = margins[k] - margins[k - 1]
            # The increment is exactly rate * h_k(x).
            tree = trained.booster[k - 1]
            d_num = len(trained.numeric_features)
            for row in range(len(probe)):
                node = 0
                while tree.feature[node] >= 0:
                    f = int(tree.feature[node])
                    if f < d_num:
                        node = int(
                            tree.left[node]
                            if x_num[row, f] <= tree.threshold[node]
                            else tree.right[node]
                        )
                    else:
                        code = int(x_cat[row, f - d_num])
                        kk = len(
                            trained.categories[trained.categorical_features[f - d_num]]
                        )
                        if code >= kk:
                            go_left = tree.majority_left[node] == 1
                        else:
                            go_left = code in tree.cat_left[node]
                        node = int(tree.left[node] if go_left else tree.right[node])
                expected = trained.learning_rate * tree.value[node]
                assert abs(step[row] - expected) < 1e-12

    def test_sigmoid_arithmetic_large_margin(self, trained):
        # base 0, one tree contributing 10 at rate 1: sigmoid(10) ~= 0.9999546.
        pair = TreeEnsemblePair(
            config=trained.config,
            scaler=trained.scaler,
            categories=trained.categories,
            forest=trained.forest,
            booster=[_constant_tree(10.0)],
            base_score=0.0,
            forest_gain=trained.forest_gain,
            booster_gain=trained.booster_gain,
        )
        pair.learning_rate = 1.0
        probe = make_table(3, seed=1)
        probs = pair.predict_booster(probe)
        assert np.allclose(probs, 1.0 / (1.0 + np.exp(-10.0)), atol=1e-12)
        assert np.all(probs > 0.9999)

    def test_monotone_in_all_positive_tree(self, trained):
        probe = make_table(40, seed=31)
        base = trained.predict_booster(probe)
        # Adding a tree with all-positive leaves never decreases predictions.
        boosted = TreeEnsemblePair(
            config=trained.config,
            scaler=trained.scaler,
            categories=trained.categories,
            forest=trained.forest,
            booster=trained.booster + [_constant_tree(0.5)],
            base_score=trained.base_score,
            forest_gain=trained.forest_gain,
            booster_gain=trained.booster_gain,
        )
        assert np.all(boosted.predict_booster(probe) >= base)


def _constant_tree(value: float):
    from killmat.models import Tree

    return Tree(
        feature=np.array([-1], dtype=np.int32),
        threshold=np.zeros(1),
        left=np.zeros(1, dtype=np.int32),
        right=np.zeros(1, dtype=np.int32),
        value=np.array([value]),
        majority_left=np.zeros(1, dtype=np.uint8),
        cat_left=[None],
    )


class TestModelConfigValidation:
    @pytest.mark.parametrize(
        "overrides",
        [
            {"forest_trees": 0},
            {"forest_max_depth": 0},
            {"forest_min_leaf": 0},
            {"booster_rounds": -1},
            {"booster_learning_rate": -0.1},
            {"booster_max_leaves": 1},
            {"booster_l2": -1.0},
            {"max_bins": 1},
            {"max_bins": 256},
        ],
    )
    def test_degenerate_values_rejected(self, overrides):
        with pytest.raises(ModelError, match="invalid model config"):
            ModelConfig(**overrides)


class TestKernelOverflowPaths:
    def _inputs(self, n=400, n_cats=64, seed=0):
        rng = np.random.default_rng(seed)
        xb = np.zeros((n, 1), dtype=np.uint8)
        xc = np.ascontiguousarray(
            rng.integers(0, n_cats, size=(n, 1)).astype(np.int32)
        )
        # Labels keyed to category parity: splits must enumerate categories.
        y = (xc[:, 0] % 2).astype(np.uint8)
        nbins = np.array([1], dtype=np.int32)
        cat_counts = np.array([n_cats], dtype=np.int32)
        return xb, xc, y, nbins, cat_counts

    def test_gini_category_buffer_overflow_then_clean_retry(self):
        from killmat import _kernels
        from killmat.models import _zero_node_arrays

        xb, xc, y, nbins, cat_counts = self._inputs()
        rows = np.arange(len(y), dtype=np.int32)

        def grow(cat_cap):
            arrays = _zero_node_arrays(64)
            cat_buf = np.zeros(cat_cap, dtype=np.int32)
            gain = np.zeros(2, dtype=np.float64)
            result = _kernels.grow_tree_gini(
                xb, xc, y, rows, nbins, cat_counts,
                np.int64(6), np.int64(1), np.int64(2), np.uint64(5),
                *arrays, cat_buf, gain,
            )
            return result, gain

        (status, _), partial_gain = grow(cat_cap=4)
        assert status == -2
        assert partial_gain.sum() >= 0.0  # contaminated buffer is discarded
        (n_nodes, used), clean_gain = grow(cat_cap=4096)
        assert n_nodes > 1 and 0 < used <= 4096
        assert clean_gain[1] > 0.0  # all gain on the categorical feature

    def test_newton_category_buffer_overflow_then_clean_retry(self):
        from killmat import _kernels
        from killmat.models import _zero_node_arrays

        xb, xc, y, nbins, cat_counts = self._inputs(seed=3)
        grad = (y.astype(np.float64) - 0.5)
        hess = np.full(len(y), 0.25)

        def grow(cat_cap):
            arrays = _zero_node_arrays(64)
            cat_buf = np.zeros(cat_cap, dtype=np.int32)
            gain = np.zeros(2, dtype=np.float64)
            out_pred = np.zeros(len(y), dtype=np.float64)
            result = _kernels.grow_tree_newton(
                xb, xc, grad, hess, nbins, cat_counts,
                np.int64(8), np.int64(1), np.float64(1.0),
                *arrays, cat_buf, gain, out_pred,
            )
            return result, out_pred

        (status, _), _ = grow(cat_cap=2)
        assert status == -2
        (n_nodes, used), out_pred = grow(cat_cap=4096)
        assert n_nodes > 1 and used > 0
        assert np.any(out_pred != 0.0)

    def test_retry_does_not_double_count_importance(self, small_table):
        # Train twice with identical config; the recorded gains must match
        # exactly even though internal buffer sizing may differ per attempt.
        a = train(small_table, tiny_config())
        b = train(small_table, tiny_config())
        assert np.array_equal(a.forest_gain, b.forest_gain)
        assert np.array_equal(a.booster_gain, b.booster_gain)


class TestCombine:
    def test_examples(self):
        assert combine(0.4, 0.6) == 0.5
        assert combine(0.0, 1.0) == 0.5
        assert combine(0.3, 0.3) == 0.3

    def test_mean_identity_random(self):
        rng = np.random.default_rng(0)
        a = rng.uniform(size=2000)
        b = rng.uniform(size=2000)
        assert np.all(np.abs(combine(a, b) - (a + b) / 2.0) <= 1e-15)

    def test_out_of_range_rejected(self):
        with pytest.raises(ModelError):
            combine(1.2, 0.5)
        with pytest.raises(ModelError):
            combine(0.5, -0.1)


class TestImportance:
    def test_min_max_example(self, trained):
        report = feature_importance(trained)
        from killmat.models import _min_max

        assert _min_max({"a": 2.0, "b": 4.0, "c": 10.0}) == {
            "a": 0.0,
            "b": 0.25,
            "c": 1.0,
        }

    def test_normalized_extremes(self, trained):
        report = feature_importance(trained)
        for model in ("forest", "booster"):
            values = list(report.normalized[model].values())
            assert max(values) == 1.0
            assert min(values) == 0.0

    def test_single_informative_feature_maps_to_one(self):
        from killmat.models import _min_max

        assert _min_max({"only": 3.2}) == {"only": 1.0}

    def test_diff_driven_labels_rank_diff_first(self, small_table):
        report = feature_importance(train(small_table, tiny_config()))
        for model in ("forest", "booster"):
            top = max(report.normalized[model], key=report.normalized[model].get)
            assert top == "statement_diff"

    def test_aggregate_mean(self):
        from killmat.models import ImportanceReport

        r1 = ImportanceReport(raw={}, normalized={"forest": {"a": 1.0, "b": 0.0}})
        r2 = ImportanceReport(raw={}, normalized={"forest": {"a": 0.0, "b": 1.0}})
        assert aggregate_importances([r1, r2]) == {"forest": {"a": 0.5, "b": 0.5}}
        assert aggregate_importances([r1]) == {"forest": {"a": 1.0, "b": 0.0}}

    def test_aggregate_schema_mismatch(self):
        from killmat.models import ImportanceReport

        r1 = ImportanceReport(raw={}, normalized={"forest": {"a": 1.0}})
        r2 = ImportanceReport(raw={}, normalized={"forest": {"b": 1.0}})
        with pytest.raises(ModelError, match="mismatch"):
            aggregate_importances([r1, r2])


class TestSerialization:
    def test_round_trip_identical_predictions(self, trained, tmp_path):
        path = tmp_path / "model.json"
        save_model(trained, path)
        loaded = load_model(path)
        probe = make_table(1000, seed=99)
        assert np.array_equal(
            loaded.predict_combined(probe), trained.predict_combined(probe)
        )

    def test_truncated_file_fails_checksum(self, trained, tmp_path):
        path = tmp_path / "model.json"
        save_model(trained, path)
        raw = path.read_text()
        path.write_text(raw[: len(raw) // 2])
        with pytest.raises(ModelError):
            load_model(path)

    def test_edited_file_fails_checksum(self, trained, tmp_path):
        path = tmp_path / "model.json"
        save_model(trained, path)
        doc = json.loads(path.read_text())
        doc["booster"]["base_score"] += 0.5
        path.write_text(json.dumps(doc))
        with pytest.raises(ModelError, match="checksum"):
            load_model(path)

    def test_schema_drift_rejected(self, trained, tmp_path):
        path = tmp_path / "model.json"
        save_model(trained, path)
        doc = json.loads(path.read_text())
        doc.pop("checksum")
        doc["schema"]["numeric"] = doc["schema"]["numeric"][:-1]
        from killmat.models import _payload_checksum

        doc_with = dict(doc)
        doc_with["checksum"] = _payload_checksum(doc)
        path.write_text(json.dumps(doc_with))
        with pytest.raises(ModelError, match="schema"):
            load_model(path)

    def test_version_drift_rejected(self, trained, tmp_path):
        path = tmp_path / "model.json"
        save_model(trained, path)
        doc = json.loads(path.read_text())
        doc.pop("checksum")
        doc["format_version"] = 99
        from killmat.models import _payload_checksum

        doc["checksum"] = _payload_checksum(
            {k: v for k, v in doc.items() if k != "checksum"}
        )
        path.write_text(json.dumps(doc))
        with pytest.raises(ModelError, match="version"):
            load_model(path)
