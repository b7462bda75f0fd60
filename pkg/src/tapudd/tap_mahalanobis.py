"""TAP-Mahalanobis: cluster the ID features, score by the closest cluster's distance."""

import logging
from dataclasses import dataclass, field

import numpy as np

from .config import FitConfig
from .errors import EmptyCluster
from .gmm import assign, fit_gmm, fit_kmeans
from .stats import ClusterStats, as_array, empirical_stats, mahalanobis_sq_batch, scaled_ridge

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TapMahalanobisModel:
    """Empirical stats of the K clusters found for one cluster count."""

    k: int
    clusters: tuple[ClusterStats, ...]
    dim: int
    fit_meta: dict = field(default_factory=dict)


def cluster_labels(features, k, config):
    """Hard cluster id per row from the configured clustering backend."""
    if config.clustering == "kmeans":
        return fit_kmeans(features, k, config).labels
    model = fit_gmm(features, k, config)
    return assign(model, features)


def fit_tapmb(features, k, config=None):
    """GMM (or K-means) clustering, hard assignment, then per-cluster empirical stats."""
    config = config or FitConfig()
    data = as_array(features)
    labels = cluster_labels(data, k, config)
    counts = np.bincount(labels, minlength=k)
    if np.any(counts == 0):
        raise EmptyCluster(f"k={k}: clusters {np.flatnonzero(counts == 0).tolist()} are empty")

    ridge = scaled_ridge(data, config.reg_covar)
    clusters = tuple(empirical_stats(data, labels, c, ridge) for c in range(k))
    logger.info(f"Fitted TAP-Mahalanobis k={k} on {data.shape[0]} rows, counts={counts.tolist()}")
    return TapMahalanobisModel(
        k=k,
        clusters=clusters,
        dim=data.shape[1],
        fit_meta={"fit": config.model_dump(), "counts": counts.tolist(), "ridge": ridge},
    )


def cluster_distances(model, x):
    """N×K squared Mahalanobis distances of every row to every cluster."""
    data = as_array(x, dim=model.dim)
    return np.column_stack([mahalanobis_sq_batch(data, c) for c in model.clusters])


def score_tapmb_batch(model, x):
    """Negated minimum squared Mahalanobis distance per row; higher is more ID."""
    return -cluster_distances(model, x).min(axis=1)


def score_tapmb(model, x):
    x = np.asarray(x, dtype=np.float64)
    return float(score_tapmb_batch(model, x.reshape(1, -1))[0])
