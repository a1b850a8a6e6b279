"""Frame-level ranking and threshold metrics.

Average precision is the area under the step-wise precision-recall curve,
with one step per unique score value and "positive" meaning score >= t.
Counting is integer-exact and the final accumulation runs in descending
threshold order with plain Python floats, so a brute-force re-computation
over the same thresholds reproduces the value bit for bit.
"""

from __future__ import annotations

import numpy as np

from .errors import EvaluationError


def _validated(scores, truth) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(truth).reshape(-1)
    if s.shape != y.shape or s.size == 0:
        raise EvaluationError(f"metrics: scores {s.shape} and truth {y.shape} do not align")
    if not np.isfinite(s).all():
        raise EvaluationError("metrics: non-finite scores")
    if not np.isin(y, (0, 1)).all():
        raise EvaluationError("metrics: truth must be binary")
    if int(y.sum()) == 0:
        raise EvaluationError("metrics: no positive frames, average precision undefined")
    return s, y.astype(np.int64)


def average_precision(scores, truth) -> float:
    s, y = _validated(scores, truth)
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    tp_cum = np.cumsum(y_sorted)
    n_pos = int(tp_cum[-1])
    # last index of each run of equal scores = the ">= threshold" prefix
    last = np.nonzero(np.diff(s_sorted))[0]
    group_ends = np.concatenate([last, [s_sorted.size - 1]])
    ap = 0.0
    recall_prev = 0.0
    for end in group_ends:
        tp = int(tp_cum[end])
        predicted = int(end) + 1
        precision = tp / predicted
        recall = tp / n_pos
        ap += (recall - recall_prev) * precision
        recall_prev = recall
    return ap


def threshold_metrics(scores, truth, threshold: float = 0.5) -> dict[str, float]:
    """Accuracy, precision and recall with "positive" meaning score >= threshold."""
    s, y = _validated(scores, truth)
    pred = (s >= threshold).astype(np.int64)
    tp = int(np.sum((pred == 1) & (y == 1)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    tn = int(np.sum((pred == 0) & (y == 0)))
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn)
    accuracy = (tp + tn) / s.size
    return {"accuracy": accuracy, "precision": precision, "recall": recall}
