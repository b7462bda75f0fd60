"""TAPUDD: aggregate TAP-Mahalanobis scores over several cluster counts."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import constants
from .config import EnsembleConfig, FitConfig
from .errors import InvalidInput, TapuddError
from .stats import as_array
from .tap_mahalanobis import TapMahalanobisModel, fit_tapmb, score_tapmb_batch

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TapuddModel:
    """One TAP-Mahalanobis member per K, keyed and ordered by ``config.k_list``."""

    members: dict[int, TapMahalanobisModel]
    config: EnsembleConfig
    dim: int

    def __post_init__(self):
        if list(self.members) != list(self.config.k_list):
            raise InvalidInput(
                f"members {list(self.members)} do not match k_list {self.config.k_list}"
            )
        if any(m.dim != self.dim for m in self.members.values()):
            raise InvalidInput("ensemble members disagree on the feature dimension")


def _fit_member(features, k, fit):
    try:
        return fit_tapmb(features, k, fit.for_member(k))
    except TapuddError as e:
        raise type(e)(f"ensemble member K={k}: {e}") from e


def fit_tapudd(features, config=None, fit=None, workers=1):
    """Fit every member of the ensemble; members are independent and may run in threads."""
    config = config or EnsembleConfig()
    fit = fit or FitConfig()
    data = as_array(features)
    if max(config.k_list) > data.shape[0]:
        raise InvalidInput(f"max K={max(config.k_list)} exceeds N={data.shape[0]}")

    logger.info(f"Fitting TAPUDD with k_list={config.k_list} using {workers} worker(s)")
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            fitted = list(pool.map(lambda k: _fit_member(data, k, fit), config.k_list))
    else:
        fitted = [_fit_member(data, k, fit) for k in config.k_list]
    return TapuddModel(members=dict(zip(config.k_list, fitted)), config=config, dim=data.shape[1])


def _mean(values):
    lo, hi = values.min(), values.max()
    if lo == hi:
        return float(lo)
    return min(max(math.fsum(values) / len(values), float(lo)), float(hi))


def aggregate(scores, config):
    """Combine one score per member into the ensemble score."""
    scores = np.asarray(scores, dtype=np.float64)
    n = len(config.k_list)
    if scores.shape != (n,):
        raise InvalidInput(f"expected {n} member scores, got shape {scores.shape}")
    if not np.all(np.isfinite(scores)):
        raise InvalidInput("member scores contain NaN or Inf")

    ranked = np.sort(scores)[::-1]
    strategy = config.strategy
    if strategy == constants.STRATEGY_AVERAGE:
        return _mean(ranked)
    if strategy == constants.STRATEGY_TRIMMED_AVERAGE:
        return _mean(ranked[config.m : n - config.m])
    if strategy == constants.STRATEGY_TOP:
        return _mean(ranked[: config.n_e])
    if strategy == constants.STRATEGY_BOTTOM:
        return _mean(ranked[n - config.n_e :])
    if strategy == constants.STRATEGY_SEESAW:
        # Ties between median and midpoint go to the bottom rule.
        if np.median(ranked) > (ranked[0] + ranked[-1]) / 2:
            return _mean(ranked[: config.n_e])
        return _mean(ranked[n - config.n_e :])
    raise InvalidInput(f"unknown strategy {strategy!r}")


def member_scores_batch(model, x):
    """N×len(k_list) matrix of member TAP-Mahalanobis scores, columns in k_list order."""
    data = as_array(x, dim=model.dim)
    return np.column_stack([score_tapmb_batch(model.members[k], data) for k in model.config.k_list])


def aggregate_batch(member_scores, config):
    return np.array([aggregate(row, config) for row in np.atleast_2d(member_scores)])


def score_tapudd_batch(model, x, strategy=None):
    """Ensemble score per row; ``strategy`` overrides the fitted aggregation rule."""
    config = model.config if strategy is None else model.config.with_strategy(strategy)
    return aggregate_batch(member_scores_batch(model, x), config)


def score_tapudd(model, x, strategy=None):
    x = np.asarray(x, dtype=np.float64)
    return float(score_tapudd_batch(model, x.reshape(1, -1), strategy)[0])
