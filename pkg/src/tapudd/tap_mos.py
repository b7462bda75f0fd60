"""TAP-MOS baseline: group-softmax cluster classifier scored by minimum "others" probability.

Each of the K groups holds two categories, index 0 for its own cluster and index 1
for "others". The head is linear on standardised features.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .config import FitConfig, TrainConfig
from .errors import NumericalFailure
from .stats import as_array
from .tap_mahalanobis import cluster_labels

logger = logging.getLogger(__name__)

CLUSTER = 0
OTHERS = 1


@dataclass(frozen=True)
class TapMosModel:
    k: int
    weights: np.ndarray  # K × 2 × (D+1), last column is the bias
    input_mean: np.ndarray
    input_scale: np.ndarray
    trained_epochs: int
    final_loss: float
    loss_history: tuple[float, ...] = ()

    @property
    def dim(self):
        return self.input_mean.shape[0]


def design_matrix(data, input_mean, input_scale):
    """Standardised features with a trailing bias column."""
    z = (data - input_mean) / input_scale
    return np.hstack([z, np.ones((z.shape[0], 1))])


def group_log_softmax(weights, design):
    """N×K×2 log-probabilities of the per-group softmax."""
    logits = np.einsum("kcd,nd->nkc", weights, design)
    return logits - logsumexp(logits, axis=2, keepdims=True)


def group_targets(labels, k):
    """N×K re-assigned labels: CLUSTER in the row's own group, OTHERS elsewhere."""
    targets = np.full((labels.shape[0], k), OTHERS, dtype=np.int64)
    targets[np.arange(labels.shape[0]), labels] = CLUSTER
    return targets


def mos_loss(weights, design, targets):
    """Summed per-group cross-entropy, averaged over rows."""
    log_p = group_log_softmax(weights, design)
    picked = np.take_along_axis(log_p, targets[:, :, None], axis=2)
    return float(-picked.sum() / design.shape[0])


def mos_loss_grad(weights, design, targets):
    """Analytic gradient of :func:`mos_loss` with respect to ``weights``."""
    p = np.exp(group_log_softmax(weights, design))
    p[np.arange(design.shape[0])[:, None], np.arange(weights.shape[0])[None, :], targets] -= 1.0
    return np.einsum("nkc,nd->kcd", p, design) / design.shape[0]


def fit_tapmos(features, k, fit=None, train=None):
    """Cluster the features, then train the group-softmax head by mini-batch SGD."""
    fit = fit or FitConfig()
    train = train or TrainConfig()
    data = as_array(features)
    labels = cluster_labels(data, k, fit)
    targets = group_targets(labels, k)

    input_mean = data.mean(axis=0)
    input_scale = data.std(axis=0)
    input_scale[input_scale == 0] = 1.0
    design = design_matrix(data, input_mean, input_scale)

    rng = np.random.default_rng(train.seed)
    weights = rng.normal(scale=0.01, size=(k, 2, data.shape[1] + 1))
    history = [mos_loss(weights, design, targets)]
    n = data.shape[0]
    for epoch in range(train.epochs):
        lr = 0.5 * train.learning_rate * (1 + math.cos(math.pi * epoch / train.epochs))
        order = rng.permutation(n)
        for start in range(0, n, train.batch_size):
            batch = order[start : start + train.batch_size]
            weights -= lr * mos_loss_grad(weights, design[batch], targets[batch])
        loss = mos_loss(weights, design, targets)
        if not np.isfinite(loss):
            raise NumericalFailure(f"TAP-MOS training diverged at epoch {epoch + 1}")
        history.append(loss)
        logger.debug(f"TAP-MOS k={k} epoch={epoch + 1} loss={loss:.6f} lr={lr:.4g}")

    logger.info(f"Trained TAP-MOS k={k}: loss {history[0]:.4f} -> {history[-1]:.4f}")
    return TapMosModel(
        k=k,
        weights=weights,
        input_mean=input_mean,
        input_scale=input_scale,
        trained_epochs=train.epochs,
        final_loss=history[-1],
        loss_history=tuple(history),
    )


def others_probabilities(model, x):
    """N×K probability of the "others" category in every group."""
    data = as_array(x, dim=model.dim)
    design = design_matrix(data, model.input_mean, model.input_scale)
    return np.exp(group_log_softmax(model.weights, design)[:, :, OTHERS])


def score_tapmos_batch(model, x):
    """Negated minimum "others" probability per row, in [-1, 0]."""
    return -others_probabilities(model, x).min(axis=1)


def score_tapmos(model, x):
    x = np.asarray(x, dtype=np.float64)
    return float(score_tapmos_batch(model, x.reshape(1, -1))[0])
