"""Dense statistical linear algebra: moments, PSD repair, Cholesky, Mahalanobis."""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cholesky, eigh, solve_triangular

from . import constants
from .errors import EmptyCluster, InvalidInput, NumericalFailure

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FeatureMatrix:
    """N×D matrix of extracted features, with optional per-row integer labels.

    ``kind`` tags what the rows hold (features, logits, scores, OOD probes...)
    and travels with the matrix through the file formats. A 1-D ``data`` is
    read as a single column: N rows of one value each, as in a score file.
    """

    data: np.ndarray
    labels: np.ndarray | None = None
    kind: str = constants.KIND_FEATURES

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, order="C")
        if data.ndim == 1:
            data = data.reshape(-1, 1)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise InvalidInput(f"feature matrix must be N×D with N, D >= 1, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InvalidInput("feature matrix contains NaN or Inf")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.ndim != 1 or labels.shape[0] != data.shape[0]:
                raise InvalidInput(
                    f"labels length {labels.shape} does not match {data.shape[0]} rows"
                )
            if labels.size and not np.all(labels == np.round(labels)):
                raise InvalidInput("labels must be integers")
            labels = labels.astype(np.int64)
            if np.any(labels < 0):
                raise InvalidInput("labels must be non-negative")
            labels.flags.writeable = False
            object.__setattr__(self, "labels", labels)

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def dim(self):
        return self.data.shape[1]

    def subset(self, rows):
        """Rows selected by an index array or boolean mask."""
        labels = None if self.labels is None else self.labels[rows]
        return FeatureMatrix(self.data[rows], labels, self.kind)


def as_array(features, dim=None):
    """2-D float64 view of ``features`` (FeatureMatrix or array-like), validated.

    A 1-D array-like is one row (a single D-vector to score), unlike the
    single column a 1-D ``FeatureMatrix`` builds.
    """
    if isinstance(features, FeatureMatrix):
        data = features.data
    else:
        data = np.asarray(features, dtype=np.float64)
        if data.ndim == 1:
            data = data.reshape(1, -1)
        if data.ndim != 2:
            raise InvalidInput(f"expected a 2-D array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InvalidInput("input contains NaN or Inf")
    if dim is not None and data.shape[1] != dim:
        raise InvalidInput(f"dimension mismatch: model has D={dim}, input has D={data.shape[1]}")
    return data


@dataclass(frozen=True)
class ClusterStats:
    """Mean, covariance and Cholesky factor of one cluster.

    ``chol`` is the lower Cholesky factor L of the covariance (Σ = L Lᵀ); it is
    what applies Σ⁻¹ in every distance computation. ``count`` is N_c.
    """

    mean: np.ndarray
    covariance: np.ndarray
    chol: np.ndarray
    count: int

    @classmethod
    def from_moments(cls, mean, covariance, count, reg=constants.DEFAULT_REG_COVAR):
        covariance = np.array(covariance, dtype=np.float64)
        chol, covariance = cholesky_factor(covariance, reg)
        mean = np.array(mean, dtype=np.float64)
        for arr in (mean, covariance, chol):
            arr.flags.writeable = False
        return cls(mean=mean, covariance=covariance, chol=chol, count=int(count))

    @property
    def dim(self):
        return self.mean.shape[0]


def psd_repair(matrix, floor=constants.PSD_FLOOR):
    """Symmetrise ``matrix`` and clip its eigenvalues from below at ``floor``.

    A symmetric input whose eigenvalues are all >= floor is returned unchanged.
    """
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInput(f"psd_repair expects a square matrix, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput("psd_repair input contains NaN or Inf")
    sym = (a + a.T) / 2
    eigvals, eigvecs = eigh(sym)
    if eigvals.min() >= floor:
        return sym
    clipped = np.maximum(eigvals, floor)
    repaired = (eigvecs * clipped) @ eigvecs.T
    return (repaired + repaired.T) / 2


def cholesky_factor(covariance, reg=constants.DEFAULT_REG_COVAR):
    """Lower Cholesky factor of ``covariance``.

    On failure the ridge ``reg`` is escalated ×10 up to three times. Returns the
    factor and the covariance it factors (with any added ridge).
    """
    dim = covariance.shape[0]
    try:
        return cholesky(covariance, lower=True), covariance
    except LinAlgError:
        pass
    ridge = reg
    for attempt in range(1, constants.CHOLESKY_RETRIES + 1):
        ridge *= 10
        repaired = covariance + ridge * np.eye(dim)
        try:
            chol = cholesky(repaired, lower=True)
        except LinAlgError:
            continue
        logger.warning(f"Cholesky needed extra ridge {ridge:.3g} (attempt {attempt})")
        return chol, repaired
    raise NumericalFailure(
        f"covariance not positive definite after {constants.CHOLESKY_RETRIES} ridge escalations"
    )


def scaled_ridge(data, reg):
    """Ridge of ``reg`` times the average feature variance (``reg`` if that is zero)."""
    scale = float(np.trace(np.atleast_2d(np.cov(data, rowvar=False, bias=True)))) / data.shape[1]
    return reg * scale if scale > 0 else reg


def empirical_stats(features, assignment, cluster, reg):
    """Biased empirical mean/covariance of the rows assigned to ``cluster``, plus ``reg``·I."""
    if not reg > 0:
        raise InvalidInput(f"reg must be positive, got {reg}")
    data = as_array(features)
    assignment = np.asarray(assignment)
    if assignment.shape != (data.shape[0],):
        raise InvalidInput(
            f"assignment length {assignment.shape} does not match {data.shape[0]} rows"
        )
    rows = data[assignment == cluster]
    if rows.shape[0] == 0:
        raise EmptyCluster(f"no rows assigned to cluster {cluster}")

    mean = rows.mean(axis=0)
    centered = rows - mean
    covariance = centered.T @ centered / rows.shape[0]
    covariance += reg * np.eye(data.shape[1])
    covariance = psd_repair(covariance, floor=reg)
    return ClusterStats.from_moments(mean, covariance, rows.shape[0], reg)


def mahalanobis_sq_batch(x, stats):
    """Squared Mahalanobis distance of every row of ``x`` to ``stats``."""
    data = as_array(x, dim=stats.dim)
    z = solve_triangular(stats.chol, (data - stats.mean).T, lower=True, check_finite=False)
    return np.einsum("ij,ij->j", z, z)


def mahalanobis_sq(x, stats):
    """Squared Mahalanobis distance Δᵀ Σ⁻¹ Δ of one D-vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidInput(f"expected a D-vector, got shape {x.shape}")
    return float(mahalanobis_sq_batch(x.reshape(1, -1), stats)[0])
