"""Confusion-matrix metrics and decision-threshold selection.

The optimizer sweeps the ten candidate thresholds 0.05..0.50, standardizes
the F1 series (PR-curve view) and the Youden J series (ROC-curve view) across
the candidates, and picks the threshold maximizing their sum, breaking ties
toward the smallest candidate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CANDIDATE_THRESHOLDS = tuple(round(0.05 * i, 2) for i in range(1, 11))
FIXED_DEFAULT_THRESHOLD = 0.35


class ThresholdError(Exception):
    pass


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    fn: int
    tn: int


def confusion(scores, labels, threshold: float) -> Confusion:
    """Count outcomes with predicted-killed defined as score >= threshold."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape:
        raise ThresholdError(
            f"scores and labels lengths differ: {scores.shape} vs {labels.shape}"
        )
    if not 0.0 <= threshold <= 1.0:
        raise ThresholdError(f"threshold must lie in [0, 1], got {threshold}")
    predicted = scores >= threshold
    return Confusion(
        tp=int(np.sum(predicted & labels)),
        fp=int(np.sum(predicted & ~labels)),
        fn=int(np.sum(~predicted & labels)),
        tn=int(np.sum(~predicted & ~labels)),
    )


def _ratio(num: int, den: int) -> float:
    # 0/0 convention: all rate metrics return 0 on an empty denominator.
    return num / den if den > 0 else 0.0


def precision(c: Confusion) -> float:
    return _ratio(c.tp, c.tp + c.fp)


def recall(c: Confusion) -> float:
    return _ratio(c.tp, c.tp + c.fn)


def fpr(c: Confusion) -> float:
    return _ratio(c.fp, c.fp + c.tn)


def f1(c: Confusion) -> float:
    p = precision(c)
    r = recall(c)
    return 2.0 * p * r / (p + r) if p + r > 0 else 0.0


def j_statistic(c: Confusion) -> float:
    """Youden's index: TPR - FPR."""
    return recall(c) - fpr(c)


def classify(scores, threshold: float) -> np.ndarray:
    """Elementwise predicted-killed decisions (score >= threshold)."""
    if not 0.0 <= threshold <= 1.0:
        raise ThresholdError(f"threshold must lie in [0, 1], got {threshold}")
    return np.asarray(scores, dtype=np.float64) >= threshold


def _standardize(values: list[float]) -> list[float]:
    arr = np.asarray(values, dtype=np.float64)
    mu = arr.mean()
    sigma = arr.std(ddof=0)
    if sigma == 0.0:
        # A constant series carries no preference; standardize to zeros
        # rather than NaNs so the combined score stays finite.
        return [0.0] * len(values)
    return list((arr - mu) / sigma)


@dataclass
class ThresholdReport:
    candidates: list[float]
    f1_values: list[float]
    j_values: list[float]
    f1_standardized: list[float]
    j_standardized: list[float]
    combined: list[float]
    selected: float

    def to_json_dict(self) -> dict:
        return {
            "candidates": self.candidates,
            "f1": self.f1_values,
            "j": self.j_values,
            "f1_standardized": self.f1_standardized,
            "j_standardized": self.j_standardized,
            "combined_score": self.combined,
            "selected_threshold": self.selected,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ThresholdReport":
        return cls(
            candidates=list(doc["candidates"]),
            f1_values=list(doc["f1"]),
            j_values=list(doc["j"]),
            f1_standardized=list(doc["f1_standardized"]),
            j_standardized=list(doc["j_standardized"]),
            combined=list(doc["combined_score"]),
            selected=float(doc["selected_threshold"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), indent=2) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "ThresholdReport":
        return cls.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def optimize_threshold(val_scores, val_labels) -> ThresholdReport:
    """Select the validation threshold maximizing standardized F1 + J."""
    labels = np.asarray(val_labels, dtype=bool)
    if labels.size == 0 or labels.all() or not labels.any():
        raise ThresholdError(
            "threshold optimization needs both killed and survived validation pairs"
        )
    f1_values = []
    j_values = []
    for theta in CANDIDATE_THRESHOLDS:
        c = confusion(val_scores, labels, theta)
        f1_values.append(f1(c))
        j_values.append(j_statistic(c))
    f1_std = _standardize(f1_values)
    j_std = _standardize(j_values)
    combined = [a + b for a, b in zip(f1_std, j_std)]
    best_idx = 0
    for idx in range(1, len(combined)):
        if combined[idx] > combined[best_idx]:
            best_idx = idx
    return ThresholdReport(
        candidates=list(CANDIDATE_THRESHOLDS),
        f1_values=f1_values,
        j_values=j_values,
        f1_standardized=f1_std,
        j_standardized=j_std,
        combined=combined,
        selected=CANDIDATE_THRESHOLDS[best_idx],
    )
