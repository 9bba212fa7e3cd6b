"""Classification metrics: confusion matrix, accuracy, F1, mean average precision."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class MetricsReport:
    confusion: np.ndarray | None  # rows: true class, cols: predicted
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_f1: float
    mAP: float | None
    n_evaluated: int
    n_skipped: int = 0
    map_excluded: list[int] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "mAP": self.mAP,
            "precision": [float(x) for x in self.precision],
            "recall": [float(x) for x in self.recall],
            "f1": [float(x) for x in self.f1],
            "confusion": None if self.confusion is None else self.confusion.astype(int).tolist(),
            "n_evaluated": self.n_evaluated,
            "n_skipped": self.n_skipped,
            "map_excluded_classes": list(self.map_excluded),
        }


def confusion_matrix(y_true, y_pred, num_classes: int) -> np.ndarray:
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=np.intp), np.asarray(y_pred, dtype=np.intp)), 1)
    return cm


def _safe_ratio(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def prf_from_confusion(cm: np.ndarray):
    tp = np.diag(cm).astype(np.float64)
    precision = _safe_ratio(tp, cm.sum(axis=0))
    recall = _safe_ratio(tp, cm.sum(axis=1))
    f1 = _safe_ratio(2 * tp, cm.sum(axis=0) + cm.sum(axis=1))
    return precision, recall, f1


def average_precision(scores, relevant) -> float | None:
    """AP of one ranked list; ``None`` when nothing is relevant.

    Ranking is by descending score with ties kept in original order.
    """
    scores = np.asarray(scores, dtype=np.float64)
    rel = np.asarray(relevant, dtype=bool)
    n_rel = int(rel.sum())
    if n_rel == 0:
        return None
    order = np.argsort(-scores, kind="stable")
    hits = rel[order]
    ranks = np.arange(1, hits.size + 1)
    prec_at_k = np.cumsum(hits) / ranks
    return float(np.sum(prec_at_k[hits]) / n_rel)


def mean_average_precision(scores, relevance) -> tuple[float | None, list[int]]:
    """Unweighted mean of per-class AP over classes with a relevant instance.

    Returns ``(mAP, excluded_classes)``; mAP is ``None`` when every class is
    excluded.
    """
    scores = np.asarray(scores, dtype=np.float64)
    relevance = np.asarray(relevance, dtype=bool)
    if scores.ndim == 1:
        scores, relevance = scores[:, None], relevance[:, None]
    aps, excluded = [], []
    for c in range(scores.shape[1]):
        ap = average_precision(scores[:, c], relevance[:, c])
        if ap is None:
            excluded.append(c)
        else:
            aps.append(ap)
    return (float(np.mean(aps)) if aps else None), excluded


def report_from_confusion(cm: np.ndarray, mAP: float | None = None, n_skipped: int = 0,
                          map_excluded=()) -> MetricsReport:
    cm = np.asarray(cm, dtype=np.int64)
    total = int(cm.sum())
    precision, recall, f1 = prf_from_confusion(cm)
    acc = float(np.trace(cm) / total) if total else 0.0
    return MetricsReport(cm, acc, precision, recall, f1, float(np.mean(f1)), mAP, total,
                         n_skipped, list(map_excluded))


def multiclass_report(y_true, probs, n_skipped: int = 0) -> MetricsReport:
    probs = np.asarray(probs, dtype=np.float64)
    y_true = np.asarray(y_true, dtype=np.intp)
    C = probs.shape[1]
    cm = confusion_matrix(y_true, np.argmax(probs, axis=1), C)
    rel = np.zeros_like(probs, dtype=bool)
    rel[np.arange(y_true.size), y_true] = True
    mAP, excluded = mean_average_precision(probs, rel) if y_true.size else (None, list(range(C)))
    return report_from_confusion(cm, mAP, n_skipped, excluded)


def multilabel_report(y_true, probs, threshold: float = 0.5, n_skipped: int = 0) -> MetricsReport:
    """Exact-match accuracy and per-class binary F1; no C x C confusion exists."""
    y = np.asarray(y_true, dtype=bool)
    pred = np.asarray(probs) >= threshold
    tp = (y & pred).sum(axis=0)
    precision = _safe_ratio(tp, pred.sum(axis=0))
    recall = _safe_ratio(tp, y.sum(axis=0))
    f1 = _safe_ratio(2 * tp, pred.sum(axis=0) + y.sum(axis=0))
    acc = float(np.mean(np.all(y == pred, axis=1))) if y.shape[0] else 0.0
    mAP, excluded = mean_average_precision(probs, y)
    return MetricsReport(None, acc, precision, recall, f1, float(np.mean(f1)), mAP, int(y.shape[0]),
                         n_skipped, excluded)
