"""Classification metrics with macro averaging.

Conventions: precision/recall/F1 with a zero denominator are 0 and still
count toward the macro mean; AUC is one-vs-rest Mann-Whitney with ties
worth 1/2, averaged over classes that have both positives and negatives;
MAE/RMSE compare probability rows against one-hot targets entrywise.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import ShapeError, UndefinedMetricError


@dataclass
class ClassStats:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class EvalReport:
    accuracy: float
    precision_macro: float
    recall_macro: float
    f1_macro: float
    auc_macro: float
    mae: float
    rmse: float
    n_samples: int
    per_class: List[ClassStats]
    confusion: List[List[int]]
    class_names: List[str] = None

    TABLE_COLUMNS = ("accuracy", "f1_macro", "auc_macro", "precision_macro", "recall_macro", "mae", "rmse")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def table(self) -> str:
        """Two-line tab-separated summary in the usual column order."""
        header = "\t".join(("Accuracy", "F1", "AUC", "Precision", "Recall", "MAE", "RMSE"))
        vals = "\t".join(f"{getattr(self, c):.4f}" for c in self.TABLE_COLUMNS)
        return header + "\n" + vals


def _labels(y, C=None) -> np.ndarray:
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ShapeError(f"labels must be 1-D, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        raise ShapeError("labels must be integers")
    if C is not None and arr.size and (arr.min() < 0 or arr.max() >= C):
        raise ShapeError(f"labels must lie in [0, {C})")
    return arr.astype(np.int64)


def confusion_matrix(y_true, y_pred, C: int) -> np.ndarray:
    t = _labels(y_true, C)
    p = _labels(y_pred, C)
    if t.size != p.size:
        raise ShapeError(f"y_true has {t.size} labels, y_pred has {p.size}")
    if t.size == 0:
        raise ShapeError("confusion matrix of zero samples")
    cm = np.zeros((C, C), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    return cm


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    return np.divide(num, den, out=np.zeros_like(num, dtype=np.float64), where=den != 0)


def precision_recall_f1(confusion) -> Dict[str, object]:
    """Per-class arrays plus macro means, keyed precision/recall/f1(/_macro) and support."""
    cm = np.asarray(confusion, dtype=np.float64)
    tp = np.diag(cm)
    precision = _safe_div(tp, cm.sum(axis=0))
    recall = _safe_div(tp, cm.sum(axis=1))
    f1 = _safe_div(2.0 * precision * recall, precision + recall)
    return {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "support": cm.sum(axis=1).astype(np.int64),
        "precision_macro": float(precision.mean()),
        "recall_macro": float(recall.mean()),
        "f1_macro": float(f1.mean()),
    }


def binary_auc(positive: np.ndarray, scores: np.ndarray) -> float:
    """Mann-Whitney U / (n_pos * n_neg) computed from average ranks."""
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative")
    ranks = rankdata(scores)
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_auc_trapezoid(positive, scores) -> float:
    """Area under the empirical ROC curve by trapezoids over distinct thresholds."""
    positive = np.asarray(positive, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs at least one positive and one negative")
    order = np.argsort(-scores, kind="mergesort")
    s, pos = scores[order], positive[order]
    # cut only where the score changes so tied blocks become diagonal segments
    last = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tps = np.r_[0, np.cumsum(pos)[last]]
    fps = np.r_[0, np.cumsum(~pos)[last]]
    return float(np.trapezoid(tps / n_pos, fps / n_neg))


def auc_macro_ovr(y_true, y_scores) -> float:
    scores = np.asarray(y_scores, dtype=np.float64)
    if scores.ndim != 2:
        raise ShapeError(f"scores must be n x C, got shape {scores.shape}")
    t = _labels(y_true, scores.shape[1])
    if t.size != scores.shape[0]:
        raise ShapeError(f"{t.size} labels but {scores.shape[0]} score rows")
    aucs = []
    for c in range(scores.shape[1]):
        pos = t == c
        if pos.any() and not pos.all():
            aucs.append(binary_auc(pos, scores[:, c]))
    if not aucs:
        raise UndefinedMetricError("no class has both positive and negative examples")
    return float(np.mean(aucs))


def mae_rmse(y_true, y_scores):
    scores = np.asarray(y_scores, dtype=np.float64)
    t = _labels(y_true, scores.shape[1])
    if t.size != scores.shape[0]:
        raise ShapeError(f"{t.size} labels but {scores.shape[0]} score rows")
    err = scores - np.eye(scores.shape[1])[t]
    return float(np.abs(err).mean()), float(math.sqrt((err * err).mean()))


def report_from_scores(y_true, y_scores, class_names: Sequence[str] = None) -> EvalReport:
    """Assemble every metric from labels and probability rows.

    Predictions are the row argmax, ties going to the lowest class index.
    An undefined AUC (single-class input) is reported as NaN.
    """
    scores = np.asarray(y_scores, dtype=np.float64)
    C = scores.shape[1]
    t = _labels(y_true, C)
    pred = np.argmax(scores, axis=1)
    cm = confusion_matrix(t, pred, C)
    prf = precision_recall_f1(cm)
    try:
        auc = auc_macro_ovr(t, scores)
    except UndefinedMetricError:
        auc = float("nan")
    mae, rmse = mae_rmse(t, scores)
    per_class = [ClassStats(float(prf["precision"][c]), float(prf["recall"][c]), float(prf["f1"][c]),
                            int(prf["support"][c])) for c in range(C)]
    return EvalReport(
        accuracy=float(np.trace(cm)) / t.size,
        precision_macro=prf["precision_macro"],
        recall_macro=prf["recall_macro"],
        f1_macro=prf["f1_macro"],
        auc_macro=auc,
        mae=mae,
        rmse=rmse,
        n_samples=int(t.size),
        per_class=per_class,
        confusion=cm.tolist(),
        class_names=list(class_names) if class_names is not None else None,
    )


def evaluate(params, embs, labels, config, class_names=None) -> EvalReport:
    """Eval-mode forward over every sample, then ``report_from_scores``."""
    from .model import predict_proba

    if len(labels) == 0:
        raise ShapeError("cannot evaluate an empty dataset")
    return report_from_scores(labels, predict_proba(embs, params, config), class_names)
