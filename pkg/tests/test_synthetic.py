import numpy as np
import pytest
from pydantic import ValidationError

from tapudd import constants
from tapudd.errors import InvalidInput
from tapudd.synthetic import (
    SyntheticSpec,
    far_ood_probes,
    generate_synthetic,
    mixture_density,
    near_ood_probes,
    provenance,
    ray_ood_probes,
)


def test_binary_counts(binary_data):
    assert binary_data.n == 6000
    assert np.bincount(binary_data.labels).tolist() == [3000, 3000]


def test_multiclass_counts():
    data = generate_synthetic(SyntheticSpec.for_task("multiclass", seed=7))
    assert data.n == 4000
    assert np.bincount(data.labels).tolist() == [500] * 8


def test_cluster_mean_law_of_large_numbers(binary_data):
    second = binary_data.data[binary_data.labels == 1]
    assert np.allclose(second.mean(axis=0), [14.0, 8.0], atol=0.1)


def test_cluster_correlation_signs(binary_data):
    first = binary_data.data[binary_data.labels == 0]
    second = binary_data.data[binary_data.labels == 1]
    assert np.corrcoef(first.T)[0, 1] < -0.7
    assert np.corrcoef(second.T)[0, 1] > 0.7


def test_deterministic(binary_spec, binary_data):
    again = generate_synthetic(binary_spec)
    assert np.array_equal(again.data, binary_data.data)
    other = generate_synthetic(SyntheticSpec.for_task("binary", seed=8))
    assert not np.array_equal(other.data, binary_data.data)


def test_count_override():
    spec = SyntheticSpec.for_task("multiclass", seed=1, count=10)
    assert generate_synthetic(spec).n == 80


def test_zero_count_is_rejected():
    with pytest.raises(ValidationError):
        SyntheticSpec.for_task("binary", seed=1, count=0)


def test_unknown_task():
    with pytest.raises(InvalidInput):
        SyntheticSpec.for_task("ternary", seed=0)


def test_provenance_records_repairs():
    record = provenance(SyntheticSpec.for_task("multiclass", seed=3))
    repaired = [r["cluster"] for r in record["psd_repairs"]]
    # The indefinite and the asymmetric tabulated covariances need repair.
    assert 3 in repaired and 6 in repaired
    assert record["rng"] == constants.RNG_ALGORITHM
    assert record["seed"] == 3
    for entry in record["psd_repairs"]:
        assert np.linalg.eigvalsh(np.array(entry["repaired"])).min() >= constants.PSD_FLOOR - 1e-12


def test_binary_needs_no_repair(binary_spec):
    assert provenance(binary_spec)["psd_repairs"] == []


def test_far_probes_have_negligible_density(binary_spec):
    probes = far_ood_probes(binary_spec, n=300)
    assert probes.n == 300
    assert probes.kind == constants.KIND_FAR_OOD
    assert np.all(mixture_density(binary_spec, probes.data) < constants.FAR_OOD_DENSITY)
    assert np.array_equal(probes.data, far_ood_probes(binary_spec, n=300).data)


def test_near_probes_lie_strictly_between_means(binary_spec):
    probes = near_ood_probes(binary_spec)
    assert probes.n == 50
    assert np.allclose(probes.data[:, 1], 8.0)
    assert np.all((probes.data[:, 0] > 5.0) & (probes.data[:, 0] < 14.0))
    assert np.allclose(np.diff(probes.data[:, 0]), 9.0 / 51)


def test_ray_probes_are_three_times_out():
    spec = SyntheticSpec.for_task("multiclass", seed=0)
    probes = ray_ood_probes(spec)
    means = np.array([c.mean for c in spec.clusters])
    center = means.mean(axis=0)
    assert probes.n == 8
    assert np.allclose(probes.data - center, 3.0 * (means - center))
