"""Post-hoc baselines: tied-covariance Mahalanobis, MSP, energy and KL matching.

All scores follow the convention higher = more in-distribution.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, rel_entr, softmax

from . import constants
from .errors import InvalidInput
from .stats import (
    ClusterStats,
    FeatureMatrix,
    as_array,
    cholesky_factor,
    mahalanobis_sq_batch,
    psd_repair,
    scaled_ridge,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TiedMahalanobisModel:
    """Per-class means with one shared covariance."""

    class_labels: np.ndarray
    class_means: np.ndarray
    class_counts: np.ndarray
    covariance: np.ndarray
    chol: np.ndarray

    @property
    def dim(self):
        return self.class_means.shape[1]

    def class_stats(self):
        return [
            ClusterStats(mean=mean, covariance=self.covariance, chol=self.chol, count=int(count))
            for mean, count in zip(self.class_means, self.class_counts)
        ]


def fit_tied_mahalanobis(features, reg=constants.DEFAULT_REG_COVAR):
    """Class means and the pooled within-class covariance (divided by N), plus a ridge."""
    if not isinstance(features, FeatureMatrix) or features.labels is None:
        raise InvalidInput("tied Mahalanobis needs a labelled feature matrix")
    data, labels = features.data, features.labels
    class_labels, index, counts = np.unique(labels, return_inverse=True, return_counts=True)

    means = np.stack([data[index == c].mean(axis=0) for c in range(len(class_labels))])
    centered = data - means[index]
    ridge = scaled_ridge(data, reg)
    covariance = centered.T @ centered / data.shape[0]
    covariance += ridge * np.eye(data.shape[1])
    covariance = psd_repair(covariance, floor=ridge)
    chol, covariance = cholesky_factor(covariance, ridge)
    logger.info(f"Fitted tied Mahalanobis on {data.shape[0]} rows, {len(class_labels)} classes")
    return TiedMahalanobisModel(
        class_labels=class_labels,
        class_means=means,
        class_counts=counts,
        covariance=covariance,
        chol=chol,
    )


def score_tied_mahalanobis_batch(model, x):
    data = as_array(x, dim=model.dim)
    distances = np.column_stack([mahalanobis_sq_batch(data, s) for s in model.class_stats()])
    return -distances.min(axis=1)


def score_tied_mahalanobis(model, x):
    x = np.asarray(x, dtype=np.float64)
    return float(score_tied_mahalanobis_batch(model, x.reshape(1, -1))[0])


def _logits(logits):
    return as_array(logits)


def score_msp_batch(logits):
    """Maximum softmax probability per row."""
    z = _logits(logits)
    return np.exp(z.max(axis=1) - logsumexp(z, axis=1))


def score_msp(logits):
    return float(score_msp_batch(np.asarray(logits, dtype=np.float64).reshape(1, -1))[0])


def score_energy_batch(logits, temperature=1.0):
    """Negative free energy T·logsumexp(z/T) per row."""
    if not temperature > 0:
        raise InvalidInput(f"temperature must be positive, got {temperature}")
    z = _logits(logits)
    return temperature * logsumexp(z / temperature, axis=1)


def score_energy(logits, temperature=1.0):
    row = np.asarray(logits, dtype=np.float64).reshape(1, -1)
    return float(score_energy_batch(row, temperature)[0])


@dataclass(frozen=True)
class KLReferences:
    """One mean softmax distribution per predicted class."""

    refs: np.ndarray  # C × C
    empty_classes: tuple[int, ...] = ()

    @property
    def dim(self):
        return self.refs.shape[1]


def fit_kl_matching(val_logits):
    """Mean softmax over validation rows grouped by predicted class; uniform if none."""
    z = _logits(val_logits)
    if z.size == 0:
        raise InvalidInput("KL matching needs at least one validation row")
    probs = softmax(z, axis=1)
    predicted = np.argmax(z, axis=1)
    n_classes = z.shape[1]
    refs = np.full((n_classes, n_classes), 1.0 / n_classes)
    empty = []
    for c in range(n_classes):
        rows = probs[predicted == c]
        if rows.shape[0]:
            refs[c] = rows.mean(axis=0)
        else:
            empty.append(c)
    if empty:
        logger.warning(f"KL matching: no validation rows predict classes {empty}, using uniform")
    return KLReferences(refs=refs, empty_classes=tuple(empty))


def kl_divergences(refs, logits):
    """N×C matrix of KL(softmax(z) ‖ d_c)."""
    z = as_array(logits, dim=refs.dim)
    p = softmax(z, axis=1)
    d = np.maximum(refs.refs, constants.KL_FLOOR)
    kl = rel_entr(p[:, None, :], d[None, :, :]).sum(axis=2)
    return np.maximum(kl, 0.0)


def score_kl_matching_batch(refs, logits):
    return -kl_divergences(refs, logits).min(axis=1)


def score_kl_matching(refs, logits):
    row = np.asarray(logits, dtype=np.float64).reshape(1, -1)
    return float(score_kl_matching_batch(refs, row)[0])
