"""Uniform batch scoring over every fitted detector type."""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .baselines import (
    KLReferences,
    TiedMahalanobisModel,
    score_kl_matching_batch,
    score_tied_mahalanobis_batch,
)
from .ensemble import TapuddModel, score_tapudd_batch
from .errors import InvalidInput
from .tap_mahalanobis import TapMahalanobisModel, score_tapmb_batch
from .tap_mos import TapMosModel, score_tapmos_batch


@dataclass(frozen=True)
class ModelScorer:
    """N×D array in, N scores out (higher = more in-distribution)."""

    name: str
    dim: int
    score_batch: Callable[[np.ndarray], np.ndarray]

    def __call__(self, x):
        return self.score_batch(x)


def scorer_for(model, strategy=None, member=None):
    """Batch scorer for ``model``.

    ``strategy`` re-aggregates a TAPUDD ensemble; ``member`` selects one of
    its TAP-Mahalanobis members instead. Both are rejected for other models.
    """
    if isinstance(model, TapuddModel):
        if member is not None:
            if member not in model.members:
                raise InvalidInput(f"K={member} is not a member of k_list {model.config.k_list}")
            return scorer_for(model.members[member])
        if strategy is not None:
            model.config.with_strategy(strategy)
        name = f"tapudd[{strategy or model.config.strategy}]"
        return ModelScorer(name, model.dim, lambda x: score_tapudd_batch(model, x, strategy))
    if strategy is not None or member is not None:
        kind = type(model).__name__
        raise InvalidInput(f"strategy and member apply only to TAPUDD ensembles, not {kind}")
    if isinstance(model, TapMahalanobisModel):
        return ModelScorer(f"tapmb[k={model.k}]", model.dim, lambda x: score_tapmb_batch(model, x))
    if isinstance(model, TapMosModel):
        name = f"tapmos[k={model.k}]"
        return ModelScorer(name, model.dim, lambda x: score_tapmos_batch(model, x))
    if isinstance(model, TiedMahalanobisModel):
        return ModelScorer("tied_mb", model.dim, lambda x: score_tied_mahalanobis_batch(model, x))
    if isinstance(model, KLReferences):
        return ModelScorer("kl", model.dim, lambda x: score_kl_matching_batch(model, x))
    raise InvalidInput(f"no scorer for objects of type {type(model).__name__}")
