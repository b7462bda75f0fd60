"""Validated configuration models."""

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import constants


class FitConfig(BaseModel):
    """Clustering settings shared by every cluster-based detector."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    max_iter: int = Field(default=constants.DEFAULT_MAX_ITER, ge=1)
    tol: float = Field(default=constants.DEFAULT_TOL, gt=0)
    reg_covar: float = Field(default=constants.DEFAULT_REG_COVAR, gt=0)
    n_init: int = Field(default=constants.DEFAULT_N_INIT, ge=1)
    seed: int = Field(default=0, ge=0)
    clustering: Literal["gmm", "kmeans"] = "gmm"

    def for_member(self, k):
        """Config for ensemble member ``k``: seed is ``seed XOR k``."""
        return self.model_copy(update={"seed": self.seed ^ k})


class TrainConfig(BaseModel):
    """Mini-batch SGD settings for the TAP-MOS head."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    epochs: int = Field(default=constants.DEFAULT_EPOCHS, ge=1)
    batch_size: int = Field(default=constants.DEFAULT_BATCH_SIZE, ge=1)
    learning_rate: float = Field(default=constants.DEFAULT_LEARNING_RATE, gt=0)
    seed: int = Field(default=0, ge=0)


class EnsembleConfig(BaseModel):
    """K list and aggregation rule of a TAPUDD ensemble."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    k_list: list[int] = Field(default_factory=lambda: list(constants.DEFAULT_K_LIST))
    strategy: Literal["average", "trimmed_average", "seesaw", "top", "bottom"] = (
        constants.DEFAULT_STRATEGY
    )
    n_e: int = constants.DEFAULT_N_E
    m: int = constants.DEFAULT_TRIM

    @field_validator("k_list")
    @classmethod
    def _check_k_list(cls, k_list):
        if not k_list:
            raise ValueError("k_list must not be empty")
        if any(k < 1 for k in k_list):
            raise ValueError(f"every K must be positive, got {k_list}")
        if len(set(k_list)) != len(k_list):
            raise ValueError(f"duplicate K in k_list {k_list}")
        return k_list

    @model_validator(mode="after")
    def _check_participants(self):
        n = len(self.k_list)
        if not 2 * self.n_e > n:
            raise ValueError(f"n_e > len(k_list)/2 violated: n_e={self.n_e}, len(k_list)={n}")
        if self.n_e > n:
            raise ValueError(f"n_e <= len(k_list) violated: n_e={self.n_e}, len(k_list)={n}")
        if self.m < 0 or not 2 * self.m < n:
            raise ValueError(f"0 <= 2*m < len(k_list) violated: m={self.m}, len(k_list)={n}")
        return self

    @classmethod
    def for_k_list(cls, k_list, **overrides):
        """Config for ``k_list`` with n_e and m clamped to what the list allows.

        Keeps the defaults (n_e=8, m=2) for the 12-member default list; short
        lists fall back to the smallest valid majority and no trimming.
        """
        n = len(k_list)
        n_e = overrides.pop("n_e", None)
        m = overrides.pop("m", None)
        if n_e is None:
            default = constants.DEFAULT_N_E
            n_e = default if 2 * default > n >= default else n // 2 + 1
        if m is None:
            m = constants.DEFAULT_TRIM if 2 * constants.DEFAULT_TRIM < n else 0
        return cls(k_list=list(k_list), n_e=n_e, m=m, **overrides)

    def with_strategy(self, strategy):
        """Same ensemble, different aggregation rule (validated)."""
        return EnsembleConfig(**{**self.model_dump(), "strategy": strategy})
