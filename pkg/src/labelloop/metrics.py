"""Classification metrics and pseudo-label bookkeeping."""

from __future__ import annotations

import numpy as np

from .propagation import PseudoBatch


def compute_metrics(
    predicted: np.ndarray, truth: np.ndarray, n_classes: int
) -> dict[str, float]:
    """ACC, macro precision/recall/F1, and error rate.

    Per-class precision and recall define 0/0 as 0; a class F1 is 0 when
    precision + recall is 0. Macro values are unweighted class means.
    """
    pred = np.asarray(predicted, dtype=np.int64)
    true = np.asarray(truth, dtype=np.int64)
    if pred.shape != true.shape or pred.ndim != 1:
        raise ValueError("predicted and true labels must be equal-length vectors")
    if pred.size == 0:
        raise ValueError("empty input rejected")
    if np.any((pred < 0) | (pred >= n_classes) | (true < 0) | (true >= n_classes)):
        raise ValueError("class index out of range")

    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(conf, (true, pred), 1)
    tp = np.diag(conf).astype(np.float64)
    pred_count = conf.sum(axis=0).astype(np.float64)
    true_count = conf.sum(axis=1).astype(np.float64)

    precision = np.divide(tp, pred_count, out=np.zeros(n_classes), where=pred_count > 0)
    recall = np.divide(tp, true_count, out=np.zeros(n_classes), where=true_count > 0)
    pr = precision + recall
    f1 = np.divide(2 * precision * recall, pr, out=np.zeros(n_classes), where=pr > 0)

    acc = float(tp.sum() / pred.size)
    return {
        "ACC": acc,
        "MP": float(np.mean(precision)),
        "MRC": float(np.mean(recall)),
        "MF1": float(np.mean(f1)),
        "ER": 1.0 - acc,
    }


def count_correct_pseudo(
    pseudo: PseudoBatch, truth: dict[int, int] | np.ndarray
) -> tuple[int, float]:
    """How many pseudo-labels match ground truth, and the ratio over |U^s|."""
    if pseudo.size == 0:
        return 0, 0.0
    assigned = np.argmax(pseudo.labels, axis=1)
    if isinstance(truth, dict):
        true = np.array([truth[int(i)] for i in pseudo.ids], dtype=np.int64)
    else:
        true = np.asarray(truth, dtype=np.int64)[pseudo.ids]
    count = int(np.sum(assigned == true))
    return count, count / pseudo.size
