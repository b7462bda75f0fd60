"""Seeded 2-D Gaussian-mixture datasets and the OOD probe sets used with them."""

import logging
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.linalg import cholesky
from scipy.stats import multivariate_normal

from . import constants
from .errors import InvalidInput, NumericalFailure
from .stats import FeatureMatrix, psd_repair

logger = logging.getLogger(__name__)


class SyntheticCluster(BaseModel):
    """One generating Gaussian; ``covariance`` is kept exactly as tabulated."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    mean: tuple[float, float]
    covariance: tuple[tuple[float, float], tuple[float, float]]
    count: int = Field(ge=1)


BINARY_CLUSTERS = [
    ((5.0, 8.0), ((1.0, -0.8), (-0.8, 1.0))),
    ((14.0, 8.0), ((1.0, 0.8), (0.8, 1.0))),
]

MULTICLASS_CLUSTERS = [
    ((1.5, -1.0), ((0.2, -0.3), (-0.2, 0.2))),
    ((1.5, 3.0), ((0.1, 0.0), (0.0, 0.1))),
    ((5.0, 5.0), ((0.4, 0.0), (0.0, 0.4))),
    ((-2.5, -1.0), ((0.1, 0.2), (0.2, 0.1))),
    ((4.0, 1.0), ((0.4, 0.0), (0.0, 0.01))),
    ((-1.0, 4.3), ((0.02, 0.0), (0.0, 0.7))),
    ((5.0, -3.0), ((0.5, 0.4), (0.3, 0.1))),
    ((-1.0, -4.0), ((0.1, 0.0), (0.0, 0.1))),
]

SAMPLES_PER_CLUSTER = {"binary": 3000, "multiclass": 500}


class SyntheticSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    task: Literal["binary", "multiclass"]
    clusters: list[SyntheticCluster]
    seed: int = Field(ge=0)

    @field_validator("clusters")
    @classmethod
    def _non_empty(cls, clusters):
        if not clusters:
            raise ValueError("a synthetic spec needs at least one cluster")
        return clusters

    @classmethod
    def for_task(cls, task, seed, count=None):
        """The tabulated binary (2×3000) or multi-class (8×500) dataset."""
        table = {"binary": BINARY_CLUSTERS, "multiclass": MULTICLASS_CLUSTERS}.get(task)
        if table is None:
            raise InvalidInput(f"unknown task {task!r}; expected 'binary' or 'multiclass'")
        count = SAMPLES_PER_CLUSTER[task] if count is None else count
        clusters = [SyntheticCluster(mean=m, covariance=c, count=count) for m, c in table]
        return cls(task=task, clusters=clusters, seed=seed)

    def repaired_covariances(self):
        return [psd_repair(np.array(c.covariance), constants.PSD_FLOOR) for c in self.clusters]


def provenance(spec):
    """Seed, RNG and the covariance repairs applied when sampling ``spec``."""
    repairs = []
    for index, (cluster, repaired) in enumerate(zip(spec.clusters, spec.repaired_covariances())):
        if not np.array_equal(repaired, np.array(cluster.covariance)):
            repairs.append(
                {"cluster": index, "raw": cluster.covariance, "repaired": repaired.tolist()}
            )
    return {
        "task": spec.task,
        "seed": spec.seed,
        "rng": constants.RNG_ALGORITHM,
        "psd_floor": constants.PSD_FLOOR,
        "psd_repairs": repairs,
    }


def generate_synthetic(spec):
    """Draw every cluster's samples in order; labels are cluster indices."""
    rng = np.random.default_rng(spec.seed)
    blocks, labels = [], []
    for index, (cluster, cov) in enumerate(zip(spec.clusters, spec.repaired_covariances())):
        chol = cholesky(cov, lower=True)
        z = rng.standard_normal((cluster.count, 2))
        blocks.append(np.asarray(cluster.mean) + z @ chol.T)
        labels.append(np.full(cluster.count, index))
    repairs = [r["cluster"] for r in provenance(spec)["psd_repairs"]]
    if repairs:
        logger.info(f"Sampled {spec.task} data with repaired covariances for clusters {repairs}")
    return FeatureMatrix(np.vstack(blocks), np.concatenate(labels))


def mixture_density(spec, points):
    """True generating density at ``points`` (count-weighted, repaired covariances)."""
    total = sum(c.count for c in spec.clusters)
    density = np.zeros(points.shape[0])
    for cluster, cov in zip(spec.clusters, spec.repaired_covariances()):
        density += cluster.count / total * multivariate_normal(cluster.mean, cov).pdf(points)
    return density


def _bounding_box(spec):
    covs = spec.repaired_covariances()
    means = np.array([c.mean for c in spec.clusters])
    spread = 3 * np.sqrt(np.array([np.diag(c) for c in covs]))
    return (means - spread).min(axis=0), (means + spread).max(axis=0)


def far_ood_probes(spec, n=1000, max_rounds=1000):
    """Uniform draws over the ×2-inflated bounding box whose true density is below 1e-8."""
    lo, hi = _bounding_box(spec)
    center, width = (lo + hi) / 2, hi - lo
    lo, hi = center - width, center + width
    rng = np.random.default_rng([spec.seed, constants.KIND_CODES[constants.KIND_FAR_OOD]])
    kept = []
    found = 0
    for _ in range(max_rounds):
        candidates = rng.uniform(lo, hi, size=(n, 2))
        accepted = candidates[mixture_density(spec, candidates) < constants.FAR_OOD_DENSITY]
        kept.append(accepted)
        found += accepted.shape[0]
        if found >= n:
            return FeatureMatrix(np.vstack(kept)[:n], kind=constants.KIND_FAR_OOD)
    raise NumericalFailure(f"found only {found} far-OOD probes after {max_rounds} rounds")


def near_ood_probes(spec, n=constants.NEAR_OOD_POINTS):
    """``n`` evenly spaced points strictly between the first two cluster means."""
    if len(spec.clusters) < 2:
        raise InvalidInput("near-OOD probes need at least two clusters")
    a = np.asarray(spec.clusters[0].mean)
    b = np.asarray(spec.clusters[1].mean)
    t = np.arange(1, n + 1) / (n + 1)
    return FeatureMatrix(a + t[:, None] * (b - a), kind=constants.KIND_NEAR_OOD)


def ray_ood_probes(spec, factor=constants.RAY_FACTOR):
    """One probe per cluster at ``factor`` × its distance from the global mean, same ray."""
    means = np.array([c.mean for c in spec.clusters])
    counts = np.array([c.count for c in spec.clusters], dtype=np.float64)
    center = counts @ means / counts.sum()
    return FeatureMatrix(center + factor * (means - center), kind=constants.KIND_RAY_OOD)


OOD_PROBES = {
    "far": far_ood_probes,
    "near": near_ood_probes,
    "ray": ray_ood_probes,
}
