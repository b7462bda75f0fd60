"""OOD evaluation metrics. ID is the positive class; higher scores mean more ID."""

import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from sklearn import metrics

from .errors import InvalidInput


class EvalReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    auroc: float = Field(ge=0, le=1)
    aupr: float = Field(ge=0, le=1)
    fpr95: float = Field(ge=0, le=1)
    n_id: int = Field(ge=1)
    n_ood: int = Field(ge=1)
    threshold_at_tpr95: float
    aupr_positive: str = "in"


def _scores(values, name):
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise InvalidInput(f"{name} scores are empty")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} scores contain NaN or Inf")
    return arr


def _labelled(id_scores, ood_scores):
    """Concatenated scores with ID labelled 1 and OOD labelled 0."""
    pos = _scores(id_scores, "ID")
    neg = _scores(ood_scores, "OOD")
    y_true = np.r_[np.ones(pos.size, dtype=np.int64), np.zeros(neg.size, dtype=np.int64)]
    return y_true, np.r_[pos, neg]


def auroc(id_scores, ood_scores):
    """P(ID score > OOD score), ties counted one half."""
    y_true, y_score = _labelled(id_scores, ood_scores)
    return float(metrics.roc_auc_score(y_true, y_score))


def roc_curve(id_scores, ood_scores):
    """(fpr, tpr, thresholds) at every distinct threshold, starting from (0, 0)."""
    y_true, y_score = _labelled(id_scores, ood_scores)
    return metrics.roc_curve(y_true, y_score, drop_intermediate=False)


def aupr(id_scores, ood_scores):
    """Step-wise average precision with ID positive; tied scores form one step."""
    y_true, y_score = _labelled(id_scores, ood_scores)
    return min(float(metrics.average_precision_score(y_true, y_score)), 1.0)


def fpr_at_tpr(id_scores, ood_scores, tpr=0.95):
    """FPR at the order-statistic threshold admitting at least ``tpr`` of the ID scores."""
    if not 0 < tpr <= 1:
        raise InvalidInput(f"tpr must be in (0, 1], got {tpr}")
    pos = _scores(id_scores, "ID")
    neg = _scores(ood_scores, "OOD")
    rank = max(1, math.ceil(tpr * pos.size - 1e-9))
    threshold = float(np.sort(pos)[::-1][rank - 1])
    return float(np.count_nonzero(neg >= threshold) / neg.size), threshold


def evaluate(id_scores, ood_scores, tpr=0.95):
    fpr, threshold = fpr_at_tpr(id_scores, ood_scores, tpr)
    return EvalReport(
        auroc=auroc(id_scores, ood_scores),
        aupr=aupr(id_scores, ood_scores),
        fpr95=fpr,
        n_id=np.asarray(id_scores).size,
        n_ood=np.asarray(ood_scores).size,
        threshold_at_tpr95=threshold,
    )
