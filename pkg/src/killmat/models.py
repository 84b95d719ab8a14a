"""Random forest and boosted-tree ensembles with native categorical splits.

Both learners share the same binned representation. The forest grows
depth-capped gini trees on bootstrap samples with per-node feature
subsampling and predicts the mean leaf class-1 frequency. The booster grows
leaf-wise Newton trees on logistic-loss gradients; categorical splits order
node-local categories by gradient statistics and scan contiguous partitions.
Unseen categories at prediction time route to the training-majority child.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .features import (
    CATEGORICAL_FEATURES,
    FEATURE_NAMES,
    NUMERIC_FEATURES,
    FeatureTable,
    ScalerStats,
    apply_scaler,
    fit_scaler,
)

MODEL_FORMAT_VERSION = 1


class ModelError(Exception):
    """Raised for invalid training data, corrupt model files, or schema drift."""


@dataclass
class ModelConfig:
    forest_trees: int = 300
    forest_max_depth: int = 16
    forest_min_leaf: int = 5
    forest_features_per_split: int | None = None  # default ceil(sqrt(d))
    booster_rounds: int = 200
    booster_learning_rate: float = 0.1
    booster_max_leaves: int = 31
    booster_min_leaf: int = 20
    booster_l2: float = 1.0
    max_bins: int = 255
    seed: int = 0

    def __post_init__(self) -> None:
        checks = [
            (self.forest_trees >= 1, "forest_trees must be >= 1"),
            (self.forest_max_depth >= 1, "forest_max_depth must be >= 1"),
            (self.forest_min_leaf >= 1, "forest_min_leaf must be >= 1"),
            (
                self.forest_features_per_split is None
                or self.forest_features_per_split >= 1,
                "forest_features_per_split must be >= 1",
            ),
            (self.booster_rounds >= 0, "booster_rounds must be >= 0"),
            (self.booster_learning_rate >= 0.0, "booster_learning_rate must be >= 0"),
            (self.booster_max_leaves >= 2, "booster_max_leaves must be >= 2"),
            (self.booster_min_leaf >= 1, "booster_min_leaf must be >= 1"),
            (self.booster_l2 >= 0.0, "booster_l2 must be >= 0"),
            (2 <= self.max_bins <= 255, "max_bins must lie in [2, 255]"),
        ]
        for ok, message in checks:
            if not ok:
                raise ModelError(f"invalid model config: {message}")

    def to_json_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ModelConfig":
        known = {f: doc[f] for f in doc if f in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class Tree:
    feature: np.ndarray  # int32, -1 marks a leaf
    threshold: np.ndarray  # float64, real-valued for numeric splits
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    majority_left: np.ndarray
    cat_left: list  # per node: None or list of left-going category codes

    def n_nodes(self) -> int:
        return len(self.feature)

    def to_json_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": [float(v) for v in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": [float(v) for v in self.value],
            "majority_left": self.majority_left.tolist(),
            "cat_left": self.cat_left,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Tree":
        return cls(
            feature=np.asarray(doc["feature"], dtype=np.int32),
            threshold=np.asarray(doc["threshold"], dtype=np.float64),
            left=np.asarray(doc["left"], dtype=np.int32),
            right=np.asarray(doc["right"], dtype=np.int32),
            value=np.asarray(doc["value"], dtype=np.float64),
            majority_left=np.asarray(doc["majority_left"], dtype=np.uint8),
            cat_left=[None if c is None else list(c) for c in doc["cat_left"]],
        )


@dataclass
class _FlatModel:
    """Trees flattened into concatenated arrays for the prediction kernel."""

    tree_off: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    majority_left: np.ndarray
    cat_off: np.ndarray
    cat_len: np.ndarray
    mask: np.ndarray


def _flatten(trees: list[Tree], cat_feature_sizes: list[int], d_num: int) -> _FlatModel:
    total = sum(t.n_nodes() for t in trees)
    tree_off = np.zeros(len(trees) + 1, dtype=np.int64)
    feature = np.empty(total, dtype=np.int32)
    threshold = np.zeros(total, dtype=np.float64)
    left = np.zeros(total, dtype=np.int32)
    right = np.zeros(total, dtype=np.int32)
    value = np.zeros(total, dtype=np.float64)
    majority = np.zeros(total, dtype=np.uint8)
    cat_off = np.zeros(total, dtype=np.int64)
    cat_len = np.zeros(total, dtype=np.int32)
    mask_parts: list[np.ndarray] = []
    mask_size = 0
    pos = 0
    for t_idx, tree in enumerate(trees):
        n = tree.n_nodes()
        tree_off[t_idx] = pos
        feature[pos : pos + n] = tree.feature
        threshold[pos : pos + n] = tree.threshold
        left[pos : pos + n] = np.where(tree.feature >= 0, tree.left + pos, 0)
        right[pos : pos + n] = np.where(tree.feature >= 0, tree.right + pos, 0)
        value[pos : pos + n] = tree.value
        majority[pos : pos + n] = tree.majority_left
        for local, codes in enumerate(tree.cat_left):
            if codes is None:
                continue
            f = int(tree.feature[local])
            k = cat_feature_sizes[f - d_num]
            seg = np.zeros(k, dtype=np.uint8)
            seg[np.asarray(codes, dtype=np.int64)] = 1
            cat_off[pos + local] = mask_size
            cat_len[pos + local] = k
            mask_parts.append(seg)
            mask_size += k
        pos += n
    tree_off[len(trees)] = pos
    mask = (
        np.concatenate(mask_parts) if mask_parts else np.zeros(1, dtype=np.uint8)
    )
    return _FlatModel(
        tree_off=tree_off,
        feature=feature,
        threshold=threshold,
        left=left,
        right=right,
        value=value,
        majority_left=majority,
        cat_off=cat_off,
        cat_len=cat_len,
        mask=mask,
    )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class TreeEnsemblePair:
    """Trained forest + booster sharing one scaler and categorical dictionaries."""

    def __init__(
        self,
        config: ModelConfig,
        scaler: ScalerStats,
        categories: dict[str, list[str]],
        forest: list[Tree],
        booster: list[Tree],
        base_score: float,
        forest_gain: np.ndarray,
        booster_gain: np.ndarray,
    ):
        self.config = config
        self.scaler = scaler
        self.categories = categories
        self.forest = forest
        self.booster = booster
        self.base_score = base_score
        self.learning_rate = config.booster_learning_rate
        self.forest_gain = forest_gain
        self.booster_gain = booster_gain
        self.numeric_features = list(NUMERIC_FEATURES)
        self.categorical_features = list(CATEGORICAL_FEATURES)
        self._flat_forest: _FlatModel | None = None
        self._flat_booster: _FlatModel | None = None

    # -- encoding ----------------------------------------------------------

    def encode(self, table: FeatureTable) -> tuple[np.ndarray, np.ndarray]:
        if table.numeric.shape[1] != len(self.numeric_features):
            raise ModelError(
                "feature schema mismatch: expected "
                f"{len(self.numeric_features)} numeric columns, "
                f"got {table.numeric.shape[1]}"
            )
        x_num = np.ascontiguousarray(
            apply_scaler(self.scaler, table.numeric), dtype=np.float64
        )
        n = len(table)
        x_cat = np.empty((n, len(self.categorical_features)), dtype=np.int32)
        for c, name in enumerate(self.categorical_features):
            mapping = self._code_maps[c]
            unseen = len(mapping)
            col = table.categorical[c]
            x_cat[:, c] = [mapping.get(v, unseen) for v in col]
        return x_num, x_cat

    @property
    def _code_maps(self) -> list[dict[str, int]]:
        maps = getattr(self, "_cached_code_maps", None)
        if maps is None:
            maps = [
                {v: i for i, v in enumerate(self.categories[name])}
                for name in self.categorical_features
            ]
            self._cached_code_maps = maps
        return maps

    @property
    def _cat_sizes(self) -> list[int]:
        return [len(self.categories[name]) for name in self.categorical_features]

    # -- prediction ----------------------------------------------------------

    def _leaf_sums(self, flat: _FlatModel, x_num, x_cat) -> np.ndarray:
        out = np.zeros(x_num.shape[0], dtype=np.float64)
        _kernels.accumulate_leaf_values(
            x_num,
            x_cat,
            flat.tree_off,
            flat.feature,
            flat.threshold,
            flat.left,
            flat.right,
            flat.value,
            flat.majority_left,
            flat.cat_off,
            flat.cat_len,
            flat.mask,
            np.int64(len(self.numeric_features)),
            out,
        )
        return out

    def predict_forest(self, table: FeatureTable) -> np.ndarray:
        """Mean leaf class-1 frequency over all forest trees."""
        if self._flat_forest is None:
            self._flat_forest = _flatten(
                self.forest, self._cat_sizes, len(self.numeric_features)
            )
        x_num, x_cat = self.encode(table)
        return self._leaf_sums(self._flat_forest, x_num, x_cat) / len(self.forest)

    def booster_margin(self, table: FeatureTable, n_trees: int | None = None) -> np.ndarray:
        """Raw log-odds after the first ``n_trees`` boosting rounds."""
        trees = self.booster if n_trees is None else self.booster[:n_trees]
        if n_trees is None and self._flat_booster is not None:
            flat = self._flat_booster
        else:
            flat = _flatten(trees, self._cat_sizes, len(self.numeric_features))
            if n_trees is None:
                self._flat_booster = flat
        x_num, x_cat = self.encode(table)
        if not trees:
            return np.full(len(table), self.base_score)
        return self.base_score + self.learning_rate * self._leaf_sums(
            flat, x_num, x_cat
        )

    def predict_booster(self, table: FeatureTable) -> np.ndarray:
        """sigmoid(base + sum of rate-scaled tree contributions)."""
        return _sigmoid(self.booster_margin(table))

    def predict_combined(self, table: FeatureTable) -> np.ndarray:
        return combine(self.predict_forest(table), self.predict_booster(table))


def combine(p_rf, p_gbdt):
    """Arithmetic mean of the two model probabilities, exactly."""
    a = np.asarray(p_rf, dtype=np.float64)
    b = np.asarray(p_gbdt, dtype=np.float64)
    if np.any(a < 0.0) or np.any(a > 1.0) or np.any(b < 0.0) or np.any(b > 1.0):
        raise ModelError("probabilities must lie in [0, 1]")
    out = (a + b) / 2.0
    if out.ndim == 0:
        return float(out)
    return out


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------


def _bin_edges(col: np.ndarray, max_bins: int) -> np.ndarray:
    distinct = np.unique(col)
    if len(distinct) <= 1:
        return np.empty(0, dtype=np.float64)
    if len(distinct) <= max_bins + 1:
        return distinct[:-1].astype(np.float64)
    qs = np.quantile(col, np.linspace(0.0, 1.0, max_bins + 1)[1:-1])
    edges = np.unique(qs)
    return edges[edges < distinct[-1]].astype(np.float64)


def _binned(x_num: np.ndarray, edges: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    n, d = x_num.shape
    xb = np.empty((n, d), dtype=np.uint8)
    nbins = np.empty(d, dtype=np.int32)
    for f in range(d):
        xb[:, f] = np.searchsorted(edges[f], x_num[:, f], side="left").astype(np.uint8)
        nbins[f] = len(edges[f]) + 1
    return np.ascontiguousarray(xb), nbins


def _zero_node_arrays(max_nodes: int):
    return (
        np.full(max_nodes, -1, dtype=np.int32),  # feature
        np.zeros(max_nodes, dtype=np.int32),  # thr_bin
        np.zeros(max_nodes, dtype=np.int32),  # left
        np.zeros(max_nodes, dtype=np.int32),  # right
        np.zeros(max_nodes, dtype=np.float64),  # value
        np.zeros(max_nodes, dtype=np.uint8),  # majority
        np.zeros(max_nodes, dtype=np.int64),  # cat_off
        np.zeros(max_nodes, dtype=np.int32),  # cat_len
    )


def _to_tree(
    n_nodes: int,
    arrays,
    cat_buf: np.ndarray,
    edges: list[np.ndarray],
    d_num: int,
) -> Tree:
    feature, thr_bin, left, right, value, majority, cat_off, cat_len = arrays
    feature = feature[:n_nodes].copy()
    threshold = np.zeros(n_nodes, dtype=np.float64)
    cat_left: list = [None] * n_nodes
    for node in range(n_nodes):
        f = feature[node]
        if f < 0:
            continue
        if f < d_num:
            threshold[node] = edges[f][thr_bin[node]]
        else:
            off = cat_off[node]
            cat_left[node] = sorted(int(c) for c in cat_buf[off : off + cat_len[node]])
    return Tree(
        feature=feature,
        threshold=threshold,
        left=left[:n_nodes].copy(),
        right=right[:n_nodes].copy(),
        value=value[:n_nodes].copy(),
        majority_left=majority[:n_nodes].copy(),
        cat_left=cat_left,
    )


def train(table: FeatureTable, config: ModelConfig | None = None) -> TreeEnsemblePair:
    """Train the forest and the booster on identical rows."""
    config = config or ModelConfig()
    n = len(table)
    if n == 0:
        raise ModelError("training table is empty")
    y = table.labels.astype(np.uint8)
    positives = int(y.sum())
    if positives == 0 or positives == n:
        raise ModelError(
            "training data contains a single class; cannot calibrate probabilities"
        )

    scaler = fit_scaler(table.numeric)
    x_num = apply_scaler(scaler, table.numeric)
    d_num = x_num.shape[1]
    edges = [_bin_edges(x_num[:, f], config.max_bins) for f in range(d_num)]
    xb, nbins = _binned(x_num, edges)

    categories = {
        name: sorted(set(table.categorical[c]))
        for c, name in enumerate(CATEGORICAL_FEATURES)
    }
    cat_counts = np.array(
        [len(categories[name]) for name in CATEGORICAL_FEATURES], dtype=np.int32
    )
    code_maps = [
        {v: i for i, v in enumerate(categories[name])} for name in CATEGORICAL_FEATURES
    ]
    xc = np.empty((n, len(CATEGORICAL_FEATURES)), dtype=np.int32)
    for c in range(len(CATEGORICAL_FEATURES)):
        mapping = code_maps[c]
        xc[:, c] = [mapping[v] for v in table.categorical[c]]
    xc = np.ascontiguousarray(xc)

    d = d_num + len(CATEGORICAL_FEATURES)
    k_features = config.forest_features_per_split or math.ceil(math.sqrt(d))

    rng = np.random.default_rng(config.seed)
    tree_seeds = rng.integers(0, 2**63 - 1, size=config.forest_trees, dtype=np.int64)

    forest: list[Tree] = []
    forest_gain = np.zeros(d, dtype=np.float64)
    max_nodes = int(min(2 * (n // max(config.forest_min_leaf, 1)) + 3,
                        2 ** (config.forest_max_depth + 1) + 1))
    max_nodes = max(max_nodes, 3)
    for b in range(config.forest_trees):
        boot_rng = np.random.default_rng(int(tree_seeds[b]))
        rows = boot_rng.integers(0, n, size=n).astype(np.int32)
        nodes_cap = max_nodes
        cat_cap = max(1024, nodes_cap * 4)
        while True:
            arrays = _zero_node_arrays(nodes_cap)
            cat_buf = np.zeros(cat_cap, dtype=np.int32)
            # Fresh per-attempt gain buffer: a buffer-overflow retry must not
            # leave the failed attempt's split gains behind.
            tree_gain = np.zeros(d, dtype=np.float64)
            n_nodes, _cat_used = _kernels.grow_tree_gini(
                xb, xc, y, rows, nbins, cat_counts,
                np.int64(config.forest_max_depth),
                np.int64(config.forest_min_leaf),
                np.int64(k_features),
                np.uint64(tree_seeds[b]),
                *arrays, cat_buf, tree_gain,
            )
            if n_nodes == -1:
                nodes_cap *= 2
                continue
            if n_nodes == -2:
                cat_cap *= 2
                continue
            break
        forest_gain += tree_gain
        forest.append(_to_tree(n_nodes, arrays, cat_buf, edges, d_num))

    p_bar = min(max(positives / n, 1e-6), 1.0 - 1e-6)
    base_score = math.log(p_bar / (1.0 - p_bar))
    booster: list[Tree] = []
    booster_gain = np.zeros(d, dtype=np.float64)
    margins = np.full(n, base_score, dtype=np.float64)
    y_float = y.astype(np.float64)
    booster_nodes = 2 * config.booster_max_leaves
    for _round in range(config.booster_rounds):
        p = _sigmoid(margins)
        grad = p - y_float
        hess = p * (1.0 - p)
        cat_cap = max(1024, booster_nodes * 4)
        while True:
            arrays = _zero_node_arrays(booster_nodes)
            cat_buf = np.zeros(cat_cap, dtype=np.int32)
            out_pred = np.zeros(n, dtype=np.float64)
            tree_gain = np.zeros(d, dtype=np.float64)
            n_nodes, _cat_used = _kernels.grow_tree_newton(
                xb, xc, grad, hess, nbins, cat_counts,
                np.int64(config.booster_max_leaves),
                np.int64(config.booster_min_leaf),
                np.float64(config.booster_l2),
                *arrays, cat_buf, tree_gain, out_pred,
            )
            if n_nodes == -2:
                cat_cap *= 2
                continue
            break
        booster_gain += tree_gain
        margins += config.booster_learning_rate * out_pred
        booster.append(_to_tree(n_nodes, arrays, cat_buf, edges, d_num))

    return TreeEnsemblePair(
        config=config,
        scaler=scaler,
        categories=categories,
        forest=forest,
        booster=booster,
        base_score=base_score,
        forest_gain=forest_gain,
        booster_gain=booster_gain,
    )


# --------------------------------------------------------------------------
# Feature importance
# --------------------------------------------------------------------------

_MODEL_FEATURE_ORDER = NUMERIC_FEATURES + CATEGORICAL_FEATURES


@dataclass
class ImportanceReport:
    """Raw and min-max-normalized split gains per feature, per model."""

    raw: dict[str, dict[str, float]]
    normalized: dict[str, dict[str, float]]

    def to_json_dict(self) -> dict:
        return {"raw": self.raw, "normalized": self.normalized}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ImportanceReport":
        return cls(raw=doc["raw"], normalized=doc["normalized"])


def _min_max(values: dict[str, float]) -> dict[str, float]:
    lo = min(values.values())
    hi = max(values.values())
    if hi > lo:
        return {k: (v - lo) / (hi - lo) for k, v in values.items()}
    # All-equal raw importances: a lone informative feature maps to 1.
    return {k: (1.0 if hi > 0 else 0.0) for k in values}


def feature_importance(pair: TreeEnsemblePair) -> ImportanceReport:
    raw = {}
    for model, gains in (("forest", pair.forest_gain), ("booster", pair.booster_gain)):
        raw[model] = {
            name: float(gains[i]) for i, name in enumerate(_MODEL_FEATURE_ORDER)
        }
        raw[model] = {name: raw[model][name] for name in FEATURE_NAMES}
    normalized = {model: _min_max(raw[model]) for model in raw}
    return ImportanceReport(raw=raw, normalized=normalized)


def aggregate_importances(reports: list[ImportanceReport]) -> dict[str, dict[str, float]]:
    """Mean normalized importance per feature, per model."""
    if not reports:
        raise ModelError("need at least one importance report")
    first = reports[0].normalized
    out: dict[str, dict[str, float]] = {}
    for model in first:
        feature_sets = [set(r.normalized[model]) for r in reports]
        if any(fs != set(first[model]) for fs in feature_sets):
            raise ModelError("importance reports have mismatched feature sets")
        out[model] = {
            name: sum(r.normalized[model][name] for r in reports) / len(reports)
            for name in first[model]
        }
    return out


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------


def _payload_checksum(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def save_model(pair: TreeEnsemblePair, path: str | Path) -> None:
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": "kill-prediction-ensemble",
        "config": pair.config.to_json_dict(),
        "seed": pair.config.seed,
        "schema": {
            "numeric": pair.numeric_features,
            "categorical": pair.categorical_features,
        },
        "scaler": pair.scaler.to_json_dict(),
        "categories": pair.categories,
        "forest": {
            "trees": [t.to_json_dict() for t in pair.forest],
            "importance_gain": [float(v) for v in pair.forest_gain],
        },
        "booster": {
            "trees": [t.to_json_dict() for t in pair.booster],
            "base_score": pair.base_score,
            "learning_rate": pair.learning_rate,
            "importance_gain": [float(v) for v in pair.booster_gain],
        },
    }
    doc = dict(payload)
    doc["checksum"] = _payload_checksum(payload)
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_model(path: str | Path) -> TreeEnsemblePair:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelError(f"{path}: not a valid model file: {exc}") from exc
    checksum = doc.pop("checksum", None)
    if checksum is None or checksum != _payload_checksum(doc):
        raise ModelError(f"{path}: checksum mismatch (file truncated or edited)")
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelError(
            f"{path}: unsupported model format version {doc.get('format_version')}"
        )
    schema = doc["schema"]
    if schema["numeric"] != NUMERIC_FEATURES or schema["categorical"] != CATEGORICAL_FEATURES:
        raise ModelError(f"{path}: feature schema does not match this build")
    config = ModelConfig.from_json_dict(doc["config"])
    pair = TreeEnsemblePair(
        config=config,
        scaler=ScalerStats.from_json_dict(doc["scaler"]),
        categories={k: list(v) for k, v in doc["categories"].items()},
        forest=[Tree.from_json_dict(t) for t in doc["forest"]["trees"]],
        booster=[Tree.from_json_dict(t) for t in doc["booster"]["trees"]],
        base_score=float(doc["booster"]["base_score"]),
        forest_gain=np.asarray(doc["forest"]["importance_gain"], dtype=np.float64),
        booster_gain=np.asarray(doc["booster"]["importance_gain"], dtype=np.float64),
    )
    pair.learning_rate = float(doc["booster"]["learning_rate"])
    return pair
