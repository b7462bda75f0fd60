import numpy as np
import pytest

from tapudd.config import EnsembleConfig, FitConfig, TrainConfig
from tapudd.ensemble import fit_tapudd, score_tapudd_batch
from tapudd.errors import InvalidInput
from tapudd.synthetic import ray_ood_probes
from tapudd.tap_mos import (
    CLUSTER,
    OTHERS,
    TapMosModel,
    design_matrix,
    fit_tapmos,
    group_log_softmax,
    group_targets,
    mos_loss,
    mos_loss_grad,
    others_probabilities,
    score_tapmos,
    score_tapmos_batch,
)


def fixed_model(weights, dim=2):
    weights = np.asarray(weights, dtype=np.float64)
    return TapMosModel(
        k=weights.shape[0],
        weights=weights,
        input_mean=np.zeros(dim),
        input_scale=np.ones(dim),
        trained_epochs=0,
        final_loss=0.0,
    )


def test_group_softmax_is_normalised(rng):
    weights = rng.normal(size=(4, 2, 4))
    design = design_matrix(rng.normal(size=(30, 3)), np.zeros(3), np.ones(3))
    probs = np.exp(group_log_softmax(weights, design))
    assert np.all(probs > 0)
    assert np.allclose(probs.sum(axis=2), 1.0, atol=1e-9)


def test_group_targets():
    targets = group_targets(np.array([0, 2, 1]), 3)
    assert targets.tolist() == [
        [CLUSTER, OTHERS, OTHERS],
        [OTHERS, OTHERS, CLUSTER],
        [OTHERS, CLUSTER, OTHERS],
    ]


def test_gradient_matches_finite_differences(rng):
    data = rng.normal(size=(5, 3))
    design = design_matrix(data, data.mean(axis=0), data.std(axis=0))
    targets = group_targets(np.array([0, 1, 0, 1, 1]), 2)
    weights = rng.normal(size=(2, 2, 4))
    analytic = mos_loss_grad(weights, design, targets)
    numeric = np.zeros_like(weights)
    h = 1e-5
    for idx in np.ndindex(weights.shape):
        up, down = weights.copy(), weights.copy()
        up[idx] += h
        down[idx] -= h
        numeric[idx] = (mos_loss(up, design, targets) - mos_loss(down, design, targets)) / (2 * h)
    rel = np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric)
    assert rel <= 1e-5


def test_score_bounds_are_attained():
    # Bias pushes the cluster logit far above "others" in the single group.
    confident = fixed_model([[[0.0, 0.0, 50.0], [0.0, 0.0, -50.0]]])
    assert score_tapmos(confident, [0.3, -0.2]) == pytest.approx(0.0, abs=1e-12)
    rejecting = fixed_model([[[0.0, 0.0, -50.0], [0.0, 0.0, 50.0]]] * 3)
    assert score_tapmos(rejecting, [0.3, -0.2]) == pytest.approx(-1.0, abs=1e-12)


def test_score_matches_group_loop(rng):
    model = fixed_model(rng.normal(size=(3, 2, 3)))
    x = rng.normal(size=(20, 2))
    expected = []
    for row in x:
        z = np.append(row, 1.0)
        others = []
        for group in model.weights:
            logits = group @ z
            p = np.exp(logits - logits.max())
            others.append(p[OTHERS] / p.sum())
        expected.append(-min(others))
    assert np.allclose(score_tapmos_batch(model, x), expected, atol=1e-12)
    assert np.all((score_tapmos_batch(model, x) >= -1) & (score_tapmos_batch(model, x) <= 0))


def test_training_learns_single_blob(blob):
    model = fit_tapmos(blob, 1, FitConfig(seed=0), TrainConfig(epochs=20, seed=0))
    assert model.final_loss < model.loss_history[0]
    assert others_probabilities(model, blob).mean() <= 0.5
    assert len(model.loss_history) == 21


def test_training_loss_decreases_early(three_blobs):
    model = fit_tapmos(three_blobs, 3, FitConfig(seed=0), TrainConfig(epochs=10, seed=0))
    history = model.loss_history
    assert np.mean(history[6:11]) < np.mean(history[0:5])


def test_deterministic_given_seed(three_blobs):
    train = TrainConfig(epochs=5, seed=3)
    a = fit_tapmos(three_blobs, 2, FitConfig(seed=0), train)
    b = fit_tapmos(three_blobs, 2, FitConfig(seed=0), train)
    assert np.array_equal(a.weights, b.weights)


def test_dimension_mismatch():
    model = fixed_model(np.zeros((1, 2, 3)))
    with pytest.raises(InvalidInput):
        score_tapmos(model, [1.0, 2.0, 3.0])


@pytest.mark.slow
def test_corner_ray_missed_by_tapmos_but_rejected_by_tapudd(multiclass_spec, multiclass_split):
    train, test = multiclass_split
    fit = FitConfig(seed=0)
    mos = fit_tapmos(train, 8, fit, TrainConfig())
    ensemble = fit_tapudd(train, EnsembleConfig(), fit)
    rays = ray_ood_probes(multiclass_spec)

    missed = score_tapmos_batch(mos, rays) >= np.percentile(score_tapmos_batch(mos, test), 10)
    tapudd_floor = np.percentile(score_tapudd_batch(ensemble, test), 1)
    rejected = score_tapudd_batch(ensemble, rays) < tapudd_floor
    assert np.any(missed & rejected)
