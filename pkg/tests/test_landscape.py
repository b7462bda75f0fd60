import numpy as np
import pytest

from tapudd import constants
from tapudd.config import FitConfig
from tapudd.errors import InvalidInput
from tapudd.landscape import grid_centers, landscape_grid
from tapudd.scoring import ModelScorer, scorer_for
from tapudd.tap_mahalanobis import fit_tapmb, score_tapmb


def constant_scorer(dim=2):
    return ModelScorer("constant", dim, lambda x: np.full(np.asarray(x).shape[0], -3.0))


def test_grid_layout():
    grid = landscape_grid(constant_scorer(), (0.0, 4.0), (10.0, 12.0), 4)
    assert grid.kind == constants.KIND_LANDSCAPE
    assert grid.data.shape == (16, 3)
    assert grid.data[:4, 0].tolist() == [0.5, 1.5, 2.5, 3.5]
    assert grid.data[:4, 1].tolist() == [10.25] * 4
    assert grid.data[4, 1] == 10.75


def test_constant_scorer_gives_flat_grid():
    grid = landscape_grid(constant_scorer(), (-1.0, 1.0), (-1.0, 1.0), 5)
    assert np.all(grid.data[:, 2] == -3.0)


def test_single_blob_peaks_next_to_mean(blob):
    model = fit_tapmb(blob, 1, FitConfig(seed=0))
    mean = model.clusters[0].mean
    grid = landscape_grid(scorer_for(model), (-4.0, 6.0), (-6.0, 2.0), 40)
    scores = grid.data[:, 2]
    best = np.argmax(scores)
    assert np.sum(scores == scores[best]) == 1
    cell = np.array([10.0 / 40, 8.0 / 40])
    assert np.all(np.abs(grid.data[best, :2] - mean) <= cell)


def test_grid_value_matches_direct_score(blob):
    model = fit_tapmb(blob, 1, FitConfig(seed=0))
    grid = landscape_grid(scorer_for(model), (-4.0, 6.0), (-6.0, 2.0), 7)
    for x, y, score in grid.data[::5]:
        assert score == pytest.approx(score_tapmb(model, [x, y]), rel=1e-12, abs=1e-12)


def test_rejects_non_2d_model():
    with pytest.raises(InvalidInput, match="2-D"):
        landscape_grid(constant_scorer(dim=3), (0.0, 1.0), (0.0, 1.0), 4)


@pytest.mark.parametrize("resolution", [0, 1])
def test_rejects_low_resolution(resolution):
    with pytest.raises(InvalidInput):
        landscape_grid(constant_scorer(), (0.0, 1.0), (0.0, 1.0), resolution)


def test_rejects_empty_range():
    with pytest.raises(InvalidInput):
        landscape_grid(constant_scorer(), (1.0, 1.0), (0.0, 1.0), 4)


def test_grid_centers():
    assert grid_centers(0.0, 1.0, 2).tolist() == [0.25, 0.75]
