from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import logsumexp

from mfising.schemas.coupling import CouplingMatrix


# ============ Spin Configuration ============

class SpinConfiguration(BaseModel):
    """
    Vector of +-1 spins with cached local fields m_i = sum_j A(i,j) sigma_j.

    Mutable: set_spin keeps the cache consistent with an O(degree) update.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    spins: Any  # int8 vector of +-1
    local_fields: Any  # float vector

    @model_validator(mode="after")
    def check_spins(self) -> "SpinConfiguration":
        spins = np.asarray(self.spins)
        if spins.ndim != 1 or not np.all(np.abs(spins) == 1):
            raise ValueError("spins must be a vector of +-1 values")
        if np.shape(self.local_fields) != spins.shape:
            raise ValueError("local_fields must match the spin vector")
        return self

    @classmethod
    def from_spins(cls, coupling: CouplingMatrix, spins: np.ndarray) -> "SpinConfiguration":
        spins = np.asarray(spins, dtype=np.int8)
        if spins.shape != (coupling.n,):
            raise ValueError(f"expected {coupling.n} spins, got shape {spins.shape}")
        return cls(spins=spins.copy(), local_fields=coupling.dot(spins.astype(float)))

    @property
    def n(self) -> int:
        return int(self.spins.shape[0])

    @property
    def magnetization(self) -> int:
        return int(self.spins.sum(dtype=np.int64))

    @property
    def sigma_bar(self) -> float:
        return self.magnetization / self.n

    def set_spin(self, coupling: CouplingMatrix, i: int, value: int) -> None:
        old = int(self.spins[i])
        if old == value:
            return
        self.spins[i] = value
        idx, weights = coupling.neighbors(i)
        self.local_fields[idx] += weights * (value - old)

    def max_field_error(self, coupling: CouplingMatrix) -> float:
        return float(np.max(np.abs(coupling.dot(self.spins.astype(float)) - self.local_fields)))


# ============ Magnetization Law ============

class MagnetizationLaw(BaseModel):
    """
    Exact law of the total magnetization S = sum_i sigma_i.

    Probabilities are stored in log form so tails far below double precision
    keep exact log-probabilities.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    n: int = Field(..., gt=0)
    support: Any  # int64 vector, strictly increasing with step 2
    log_probs: Any  # float vector, log P(S = support[k])
    log_z: float
    label: str = ""

    @model_validator(mode="after")
    def check_law(self) -> "MagnetizationLaw":
        support = np.asarray(self.support)
        if support.ndim != 1 or support.shape != np.shape(self.log_probs):
            raise ValueError("support and log_probs must be vectors of equal length")
        if support.size > 1 and not np.all(np.diff(support) == 2):
            raise ValueError("support must be strictly increasing with step 2")
        if support.size and (support[0] < -self.n or support[-1] > self.n):
            raise ValueError("support must lie in [-n, n]")
        total = float(logsumexp(self.log_probs))
        if abs(np.expm1(total)) > 1e-10:
            raise ValueError(f"probabilities sum to {np.exp(total)!r}, not 1")
        return self

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    @property
    def sigma_bar(self) -> np.ndarray:
        return self.support / self.n

    def mean(self) -> float:
        return float(np.dot(self.probs, self.sigma_bar))

    def variance(self) -> float:
        mean = self.mean()
        return float(np.dot(self.probs, (self.sigma_bar - mean) ** 2))
