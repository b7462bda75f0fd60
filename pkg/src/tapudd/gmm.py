"""Full-covariance Gaussian mixture fitting by EM, and a K-means backend."""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .config import FitConfig
from .errors import InvalidInput, NumericalFailure
from .stats import ClusterStats, as_array, cholesky_factor

logger = logging.getLogger(__name__)

_LOG_2PI = math.log(2 * math.pi)


@dataclass(frozen=True)
class GmmModel:
    """Fitted mixture. ``components`` hold the GMM's own means/covariances."""

    k: int
    weights: np.ndarray
    components: tuple[ClusterStats, ...]
    converged: bool
    final_avg_loglik: float
    n_iter: int
    loglik_history: tuple[float, ...] = ()
    reseed_iterations: tuple[int, ...] = ()

    @property
    def dim(self):
        return self.components[0].dim


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int
    converged: bool
    inertia_history: tuple[float, ...] = ()


def _check_k(data, k):
    if k < 1:
        raise InvalidInput(f"k must be >= 1, got {k}")
    if k > data.shape[0]:
        raise InvalidInput(f"k={k} exceeds the number of rows N={data.shape[0]}")


def _restart_rngs(config):
    children = np.random.SeedSequence(config.seed).spawn(config.n_init)
    return [np.random.default_rng(child) for child in children]


def kmeans_plusplus(data, k, rng):
    """K-means++ seeding: each next center drawn with probability ∝ D(x)²."""
    n = data.shape[0]
    centers = np.empty((k, data.shape[1]))
    centers[0] = data[rng.integers(n)]
    closest = cdist(data, centers[:1], "sqeuclidean")[:, 0]
    for i in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:
            idx = rng.integers(n)
        centers[i] = data[idx]
        closest = np.minimum(closest, cdist(data, centers[i : i + 1], "sqeuclidean")[:, 0])
    return centers


# --- EM -------------------------------------------------------------------------------------


def _weighted_log_prob(data, means, chols, weights):
    """N×K matrix of log π_k + log N(x | μ_k, Σ_k)."""
    n, dim = data.shape
    out = np.empty((n, len(means)))
    for j, (mean, chol) in enumerate(zip(means, chols)):
        z = solve_triangular(chol, (data - mean).T, lower=True, check_finite=False)
        log_det = np.sum(np.log(np.diag(chol)))
        out[:, j] = -0.5 * (dim * _LOG_2PI + np.einsum("ij,ij->j", z, z)) - log_det
    with np.errstate(divide="ignore"):
        out += np.log(weights)
    return out


def _e_step(data, means, chols, weights):
    weighted = _weighted_log_prob(data, means, chols, weights)
    norm = logsumexp(weighted, axis=1)
    resp = np.exp(weighted - norm[:, None])
    return resp, weighted, norm


def _m_step(data, resp, reg):
    n, dim = data.shape
    nk = resp.sum(axis=0) + 10 * np.finfo(np.float64).eps
    means = (resp.T @ data) / nk[:, None]
    covs, chols = [], []
    for j in range(resp.shape[1]):
        diff = data - means[j]
        cov = (resp[:, j] * diff.T) @ diff / nk[j]
        cov = (cov + cov.T) / 2 + reg * np.eye(dim)
        chol, cov = cholesky_factor(cov, reg)
        covs.append(cov)
        chols.append(chol)
    return list(means), covs, chols, nk / n


def _reseed_empty(data, means, covs, chols, weights, weighted, norm, reg):
    """Move components that own no row (by argmax) onto the worst-explained rows."""
    k = len(means)
    hard = np.argmax(weighted, axis=1)
    counts = np.bincount(hard, minlength=k)
    empty = np.flatnonzero(counts == 0)
    if empty.size == 0:
        return False
    spread = np.diag(np.var(data, axis=0)) * 1e-2 + reg * np.eye(data.shape[1])
    worst = np.argsort(norm, kind="stable")
    for slot, j in enumerate(empty):
        means[j] = data[worst[slot]].copy()
        chols[j], covs[j] = cholesky_factor(spread.copy(), reg)
        weights[j] = 1.0 / data.shape[0]
    weights /= weights.sum()
    logger.warning(f"Re-seeded {empty.size} empty GMM component(s): {empty.tolist()}")
    return True


def _fit_once(data, k, config, rng):
    centers = kmeans_plusplus(data, k, rng)
    nearest = np.argmin(cdist(data, centers, "sqeuclidean"), axis=1)
    resp = np.zeros((data.shape[0], k))
    resp[np.arange(data.shape[0]), nearest] = 1.0
    means, covs, chols, weights = _m_step(data, resp, config.reg_covar)

    resp, weighted, norm = _e_step(data, means, chols, weights)
    prev = float(norm.mean())
    history = [prev]
    reseeds = []
    converged = False
    n_iter = 0
    for n_iter in range(1, config.max_iter + 1):
        means, covs, chols, weights = _m_step(data, resp, config.reg_covar)
        resp, weighted, norm = _e_step(data, means, chols, weights)
        for _ in range(k):
            params = (means, covs, chols, weights)
            if not _reseed_empty(data, *params, weighted, norm, config.reg_covar):
                break
            reseeds.append(n_iter)
            resp, weighted, norm = _e_step(data, means, chols, weights)
        current = float(norm.mean())
        if not np.isfinite(current):
            raise NumericalFailure(f"log-likelihood became non-finite at iteration {n_iter}")
        history.append(current)
        logger.debug(f"EM k={k} iter={n_iter} avg_loglik={current:.6f}")
        if abs(current - prev) < config.tol * abs(prev) and n_iter not in reseeds:
            converged = True
            break
        prev = current

    counts = np.bincount(np.argmax(weighted, axis=1), minlength=k)
    components = tuple(
        ClusterStats.from_moments(means[j], covs[j], counts[j], config.reg_covar)
        for j in range(k)
    )
    return GmmModel(
        k=k,
        weights=np.asarray(weights),
        components=components,
        converged=converged,
        final_avg_loglik=history[-1],
        n_iter=n_iter,
        loglik_history=tuple(history),
        reseed_iterations=tuple(sorted(set(reseeds))),
    )


def fit_gmm(features, k, config=None):
    """Fit a K-component full-covariance GMM; best of ``n_init`` seeded restarts."""
    config = config or FitConfig()
    data = as_array(features)
    _check_k(data, k)

    best = None
    for restart, rng in enumerate(_restart_rngs(config)):
        try:
            model = _fit_once(data, k, config, rng)
        except NumericalFailure as e:
            logger.warning(f"GMM restart {restart} (k={k}) failed: {e}")
            continue
        if not model.converged:
            logger.info(f"GMM restart {restart} (k={k}) hit max_iter={config.max_iter}")
        if best is None or model.final_avg_loglik > best.final_avg_loglik:
            best = model
    if best is None:
        raise NumericalFailure(f"all {config.n_init} GMM restarts failed for k={k}")
    logger.info(
        f"Fitted GMM k={k}: avg_loglik={best.final_avg_loglik:.6f} "
        f"n_iter={best.n_iter} converged={best.converged}"
    )
    return best


def _model_weighted_log_prob(model, features):
    data = as_array(features, dim=model.dim)
    means = [c.mean for c in model.components]
    chols = [c.chol for c in model.components]
    return _weighted_log_prob(data, means, chols, model.weights)


def log_likelihood(model, features):
    """Per-row log density under the mixture."""
    return logsumexp(_model_weighted_log_prob(model, features), axis=1)


def responsibilities(model, features):
    """N×K posterior component probabilities; rows sum to 1."""
    weighted = _model_weighted_log_prob(model, features)
    return np.exp(weighted - logsumexp(weighted, axis=1)[:, None])


def assign(model, features):
    """Hard assignment to the argmax-responsibility component (lowest index on ties)."""
    return np.argmax(_model_weighted_log_prob(model, features), axis=1)


# --- K-means --------------------------------------------------------------------------------


def _lloyd(data, k, config, rng):
    centroids = kmeans_plusplus(data, k, rng)
    dist = cdist(data, centroids, "sqeuclidean")
    labels = np.argmin(dist, axis=1)
    history = [float(dist[np.arange(data.shape[0]), labels].sum())]
    converged = False
    n_iter = 0
    for n_iter in range(1, config.max_iter + 1):
        for j in range(k):
            members = labels == j
            if members.any():
                centroids[j] = data[members].mean(axis=0)
            else:
                own = dist[np.arange(data.shape[0]), labels]
                centroids[j] = data[np.argmax(own)]
                logger.warning(f"K-means cluster {j} empty, moved to the farthest row")
        dist = cdist(data, centroids, "sqeuclidean")
        new_labels = np.argmin(dist, axis=1)
        history.append(float(dist[np.arange(data.shape[0]), new_labels].sum()))
        if np.array_equal(new_labels, labels):
            converged = True
            break
        labels = new_labels
    return KMeansResult(
        labels=labels,
        centroids=centroids,
        inertia=history[-1],
        n_iter=n_iter,
        converged=converged,
        inertia_history=tuple(history),
    )


def fit_kmeans(features, k, config=None):
    """Lloyd's algorithm with K-means++ seeding; best of ``n_init`` restarts by inertia."""
    config = config or FitConfig()
    data = as_array(features)
    _check_k(data, k)
    best = None
    for rng in _restart_rngs(config):
        result = _lloyd(data, k, config, rng)
        if best is None or result.inertia < best.inertia:
            best = result
    logger.info(f"Fitted K-means k={k}: inertia={best.inertia:.6f} n_iter={best.n_iter}")
    return best
