"""Score landscapes of 2-D detectors, for external plotting."""

import logging

import numpy as np

from . import constants
from .errors import InvalidInput
from .stats import FeatureMatrix

logger = logging.getLogger(__name__)


def grid_centers(lo, hi, resolution):
    """Centres of ``resolution`` equal cells spanning [lo, hi]."""
    step = (hi - lo) / resolution
    return lo + step * (np.arange(resolution) + 0.5)


def landscape_grid(scorer, x_range, y_range, resolution):
    """Scores at the cell centres of a ``resolution``×``resolution`` grid.

    Rows are ordered with y in the outer loop and x in the inner loop; the
    result is a ``kind=landscape`` matrix with columns (x, y, score).
    """
    if scorer.dim != 2:
        raise InvalidInput(f"landscapes need a 2-D model, this one has D={scorer.dim}")
    if resolution < 2:
        raise InvalidInput(f"resolution must be >= 2, got {resolution}")
    for axis, (lo, hi) in (("x", x_range), ("y", y_range)):
        if not lo < hi:
            raise InvalidInput(f"{axis} range must satisfy min < max, got [{lo}, {hi}]")

    xs = grid_centers(*x_range, resolution)
    ys = grid_centers(*y_range, resolution)
    gx, gy = np.meshgrid(xs, ys)
    points = np.column_stack([gx.ravel(), gy.ravel()])
    scores = np.asarray(scorer(points), dtype=np.float64)
    logger.info(f"Scored {points.shape[0]} landscape cells with {getattr(scorer, 'name', scorer)}")
    return FeatureMatrix(np.column_stack([points, scores]), kind=constants.KIND_LANDSCAPE)
