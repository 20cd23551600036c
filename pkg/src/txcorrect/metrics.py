"""Evaluation metrics for detection (multi-label) and correction (top-k) models.

Conventions for empty denominators are explicit: precision and recall are 1.0
when there is nothing to get wrong (tp = 0 with an empty denominator), and a
sample whose true and predicted label sets are both empty scores Jaccard 1.0.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import TxcError


class MetricsError(TxcError):
    module = "metrics"


class LengthMismatch(MetricsError):
    pass


class EmptyInput(MetricsError):
    pass


class KOutOfRange(MetricsError):
    pass


def precision(tp: int, fp: int) -> float:
    if tp < 0 or fp < 0:
        raise ValueError("counts must be non-negative")
    if tp + fp == 0:
        return 1.0
    return tp / (tp + fp)


def recall(tp: int, fn: int) -> float:
    if tp < 0 or fn < 0:
        raise ValueError("counts must be non-negative")
    if tp + fn == 0:
        return 1.0
    return tp / (tp + fn)


def _as_bit_matrix(rows, name: str) -> np.ndarray:
    matrix = np.asarray(rows)
    if matrix.ndim == 1:
        matrix = matrix.reshape(len(matrix), -1) if len(matrix) else matrix.reshape(0, 0)
    if matrix.size and not np.isin(matrix, (0, 1)).all():
        raise ValueError(f"{name} must be binary label vectors")
    return matrix.astype(np.uint8)


def _paired(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    p = _as_bit_matrix(pred, "pred")
    t = _as_bit_matrix(truth, "truth")
    if p.shape[0] != t.shape[0]:
        raise LengthMismatch(f"{p.shape[0]} predictions vs {t.shape[0]} truths")
    if p.shape[0] == 0:
        raise EmptyInput("mean over zero samples is undefined")
    if p.shape[1] != t.shape[1]:
        raise LengthMismatch(f"label width {p.shape[1]} vs {t.shape[1]}")
    return p, t


def subset_accuracy(pred, truth) -> float:
    """Fraction of samples whose predicted label vector matches truth exactly."""
    p, t = _paired(pred, truth)
    return float(np.all(p == t, axis=1).mean())


def jaccard_score(pred, truth) -> float:
    """Mean per-sample |intersection| / |union|; both-empty counts as 1.0.

    Aggregated in exact rational arithmetic so the result is the correctly
    rounded float of the mathematical value, independent of summation order.
    """
    p, t = _paired(pred, truth)
    intersection = np.sum((p == 1) & (t == 1), axis=1)
    union = np.sum((p == 1) | (t == 1), axis=1)
    total = Fraction(0)
    for inter, uni in zip(intersection.tolist(), union.tolist()):
        total += Fraction(inter, uni) if uni else Fraction(1)
    return float(total / p.shape[0])


def accuracy_at_k(rankings, truth, k: int) -> float:
    """Fraction of samples whose true value appears in the first k ranked values."""
    if len(rankings) != len(truth):
        raise LengthMismatch(f"{len(rankings)} rankings vs {len(truth)} truths")
    if len(rankings) == 0:
        raise EmptyInput("mean over zero samples is undefined")
    widths = {len(r) for r in rankings}
    if len(widths) != 1:
        raise LengthMismatch("rankings have differing lengths")
    width = widths.pop()
    if not 1 <= k <= width:
        raise KOutOfRange(f"k must be in 1..{width}, got {k}")
    hits = sum(1 for ranked, true in zip(rankings, truth) if true in list(ranked)[:k])
    return hits / len(rankings)


@dataclass(frozen=True)
class LabelReport:
    name: str
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def precision(self) -> float:
        return precision(self.tp, self.fp)

    @property
    def recall(self) -> float:
        return recall(self.tp, self.fn)

    def to_dict(self) -> dict:
        return {
            "name": self.name, "tp": self.tp, "fp": self.fp, "fn": self.fn,
            "tn": self.tn, "precision": self.precision, "recall": self.recall,
        }


@dataclass(frozen=True)
class EvaluationReport:
    sample_count: int
    per_label: tuple[LabelReport, ...]
    subset_accuracy: float
    jaccard: float
    accuracy_at_k: tuple[float, ...] | None  # index i -> accuracy@(i+1)

    def to_dict(self) -> dict:
        return {
            "sample_count": self.sample_count,
            "per_label": [l.to_dict() for l in self.per_label],
            "subset_accuracy": self.subset_accuracy,
            "jaccard": self.jaccard,
            "accuracy_at_k": (None if self.accuracy_at_k is None
                              else {str(i + 1): v for i, v in enumerate(self.accuracy_at_k)}),
        }

    def to_text(self) -> str:
        lines = [f"samples: {self.sample_count}"]
        for label in self.per_label:
            lines.append(
                f"label {label.name}: precision={label.precision:.4f} "
                f"recall={label.recall:.4f} tp={label.tp} fp={label.fp} "
                f"fn={label.fn} tn={label.tn}")
        lines.append(f"subset_accuracy: {self.subset_accuracy:.4f}")
        lines.append(f"jaccard: {self.jaccard:.4f}")
        if self.accuracy_at_k is not None:
            for i, value in enumerate(self.accuracy_at_k):
                lines.append(f"accuracy@{i + 1}: {value:.4f}")
        return "\n".join(lines)


def evaluate_detection(pred, truth, label_names: tuple[str, ...]) -> EvaluationReport:
    """Report for predicted vs true label vectors (already thresholded)."""
    p, t = _paired(pred, truth)
    if p.shape[1] != len(label_names):
        raise LengthMismatch("label_names width does not match label vectors")
    per_label = []
    for i, name in enumerate(label_names):
        tp = int(np.sum((p[:, i] == 1) & (t[:, i] == 1)))
        fp = int(np.sum((p[:, i] == 1) & (t[:, i] == 0)))
        fn = int(np.sum((p[:, i] == 0) & (t[:, i] == 1)))
        tn = int(np.sum((p[:, i] == 0) & (t[:, i] == 0)))
        per_label.append(LabelReport(name, tp, fp, fn, tn))
    return EvaluationReport(
        sample_count=p.shape[0],
        per_label=tuple(per_label),
        subset_accuracy=subset_accuracy(p, t),
        jaccard=jaccard_score(p, t),
        accuracy_at_k=None,
    )


def evaluate_correction(rankings, truth, class_values: tuple[str, ...],
                        max_k: int = 5) -> EvaluationReport:
    """Report for ranked value predictions: per-value counts and accuracy@k.

    Per-value precision/recall comes from the top-1 prediction; accuracy@k is
    reported for k = 1..min(max_k, K).
    """
    rankings = [list(r) for r in rankings]
    truth = list(truth)
    if len(rankings) != len(truth):
        raise LengthMismatch(f"{len(rankings)} rankings vs {len(truth)} truths")
    if not rankings:
        raise EmptyInput("mean over zero samples is undefined")
    K = len(class_values)
    top1 = [r[0] for r in rankings]
    per_label = []
    for value_index, name in enumerate(class_values):
        tp = sum(1 for p, t in zip(top1, truth) if p == value_index and t == value_index)
        fp = sum(1 for p, t in zip(top1, truth) if p == value_index and t != value_index)
        fn = sum(1 for p, t in zip(top1, truth) if p != value_index and t == value_index)
        tn = len(truth) - tp - fp - fn
        per_label.append(LabelReport(name, tp, fp, fn, tn))
    exact = sum(1 for p, t in zip(top1, truth) if p == t) / len(truth)
    at_k = tuple(accuracy_at_k(rankings, truth, k) for k in range(1, min(max_k, K) + 1))
    return EvaluationReport(
        sample_count=len(truth),
        per_label=tuple(per_label),
        subset_accuracy=exact,
        jaccard=exact,  # single-label case: Jaccard coincides with exact accuracy
        accuracy_at_k=at_k,
    )
