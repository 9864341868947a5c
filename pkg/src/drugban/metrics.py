"""Exact ranking and thresholded classification metrics."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.stats import rankdata

from .errors import MetricError


def _validate(scores, labels, need_both=True):
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise MetricError(f"{s.size} scores but {y.size} labels")
    if not np.isin(y, (0, 1)).all():
        raise MetricError("labels must be 0 or 1")
    if not np.isfinite(s).all():
        raise MetricError("scores must be finite")
    y = y.astype(np.int64)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise MetricError("no positive labels")
    if need_both and n_pos == y.size:
        raise MetricError("no negative labels")
    return s, y


def auroc(scores, labels) -> float:
    """P(score+ > score-) + 0.5 P(tie), via average ranks (Mann-Whitney U)."""
    s, y = _validate(scores, labels)
    n_pos = y.sum()
    n_neg = y.size - n_pos
    ranks = rankdata(s)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auroc_exact(scores, labels) -> Fraction:
    """Same quantity in rational arithmetic (for testing)."""
    s, y = _validate(scores, labels)
    order = np.argsort(s, kind="mergesort")
    s, y = s[order], y[order]
    neg_below = 0
    twice_u = 0
    i = 0
    while i < s.size:
        j = i
        while j < s.size and s[j] == s[i]:
            j += 1
        pos = int(y[i:j].sum())
        neg = (j - i) - pos
        twice_u += pos * (2 * neg_below + neg)
        neg_below += neg
        i = j
    n_pos = int(y.sum())
    return Fraction(twice_u, 2 * n_pos * (y.size - n_pos))


def _descending_counts(s, y):
    """Cumulative TP/FP at each distinct threshold, highest first."""
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    return s[last], tp, fp


def auprc(scores, labels) -> float:
    """Step-wise average precision: sum_k (R_k - R_{k-1}) P_k over distinct thresholds."""
    s, y = _validate(scores, labels, need_both=False)
    _, tp, fp = _descending_counts(s, y)
    precision = tp / (tp + fp)
    recall = tp / y.sum()
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


@dataclass
class ThresholdMetrics:
    threshold: float
    accuracy: float
    sensitivity: float
    specificity: float
    f1: float


def best_f1_threshold_metrics(scores, labels) -> ThresholdMetrics:
    """Scan every distinct score as a threshold (positive iff score >= t); keep the best F1.

    Ties in F1 go to the larger threshold.
    """
    s, y = _validate(scores, labels)
    thr, tp, fp = _descending_counts(s, y)
    n_pos = y.sum()
    n_neg = y.size - n_pos
    fn = n_pos - tp
    tn = n_neg - fp
    f1 = 2 * tp / (2 * tp + fp + fn)
    # thresholds descend, so argmax's first hit is the largest threshold among ties
    k = int(np.argmax(f1))
    return ThresholdMetrics(
        threshold=float(thr[k]),
        accuracy=float((tp[k] + tn[k]) / y.size),
        sensitivity=float(tp[k] / n_pos),
        specificity=float(tn[k] / n_neg),
        f1=float(f1[k]),
    )


def metrics_record(scores, labels, seed=None, threshold_map=None) -> dict:
    """Flat JSON-ready record of every reported metric.

    Every metric depends on the scores only through their order, so any
    strictly increasing transform of the scores gives the same record;
    ``threshold_map`` converts the chosen threshold back to the reporting
    scale (e.g. logits in, probability threshold out).
    """
    s, y = _validate(scores, labels)
    best = best_f1_threshold_metrics(s, y)
    if threshold_map is not None:
        best.threshold = float(threshold_map(best.threshold))
    return {
        "auroc": auroc(s, y),
        "auprc": auprc(s, y),
        "accuracy": best.accuracy,
        "sensitivity": best.sensitivity,
        "specificity": best.specificity,
        "f1": best.f1,
        "threshold": best.threshold,
        "n_pos": int(y.sum()),
        "n_neg": int(y.size - y.sum()),
        "seed": seed,
    }


METRICS_SCHEMA = {
    "type": "object",
    "required": ["auroc", "auprc", "accuracy", "sensitivity", "specificity", "f1", "threshold", "n_pos", "n_neg", "seed"],
    "properties": {
        "auroc": {"type": "number", "minimum": 0, "maximum": 1},
        "auprc": {"type": "number", "minimum": 0, "maximum": 1},
        "accuracy": {"type": "number", "minimum": 0, "maximum": 1},
        "sensitivity": {"type": "number", "minimum": 0, "maximum": 1},
        "specificity": {"type": "number", "minimum": 0, "maximum": 1},
        "f1": {"type": "number", "minimum": 0, "maximum": 1},
        "threshold": {"type": "number"},
        "n_pos": {"type": "integer", "minimum": 1},
        "n_neg": {"type": "integer", "minimum": 1},
        "seed": {"type": ["integer", "null"]},
    },
    "additionalProperties": False,
}
