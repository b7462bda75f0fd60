import numpy as np
import pytest

from tapudd.stats import FeatureMatrix
from tapudd.synthetic import SyntheticSpec, generate_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def binary_spec():
    return SyntheticSpec.for_task("binary", seed=7)


@pytest.fixture(scope="session")
def binary_data(binary_spec):
    return generate_synthetic(binary_spec)


@pytest.fixture(scope="session")
def small_binary():
    """Binary task with 200 rows per cluster, for fast fits."""
    return generate_synthetic(SyntheticSpec.for_task("binary", seed=3, count=200))


@pytest.fixture(scope="session")
def blob():
    """One correlated 2-D Gaussian blob of 400 rows."""
    rng = np.random.default_rng(0)
    data = rng.multivariate_normal([1.0, -2.0], [[2.0, 0.5], [0.5, 1.0]], size=400)
    return FeatureMatrix(data)


@pytest.fixture(scope="session")
def three_blobs():
    """Three well separated 2-D blobs, 150 rows each, labelled by blob."""
    rng = np.random.default_rng(1)
    centers = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    data = np.vstack([c + rng.normal(scale=0.5, size=(150, 2)) for c in centers])
    labels = np.repeat(np.arange(3), 150)
    return FeatureMatrix(data, labels)


def held_out_split(matrix, fraction=0.1, seed=0):
    """(train, test) with ``fraction`` of the rows held out at random."""
    order = np.random.default_rng(seed).permutation(matrix.n)
    n_test = int(round(fraction * matrix.n))
    return matrix.subset(order[n_test:]), matrix.subset(order[:n_test])


@pytest.fixture(scope="session")
def binary_split(binary_data):
    return held_out_split(binary_data)


@pytest.fixture(scope="session")
def multiclass_spec():
    return SyntheticSpec.for_task("multiclass", seed=7)


@pytest.fixture(scope="session")
def multiclass_split(multiclass_spec):
    return held_out_split(generate_synthetic(multiclass_spec))
