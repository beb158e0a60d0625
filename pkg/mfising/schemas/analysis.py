from enum import Enum
from typing import Any, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class LimitLawKind(str, Enum):
    GAUSSIAN = "gaussian"  # N(0, tau)
    QUARTIC_W = "quartic_w"  # density ~ exp(-x^4/12)
    MODIFIED_W_TILDE = "modified_w_tilde"  # density ~ exp(-x^4/12 - x^2/sqrt(2))
    QUARTIC_PAIR = "quartic_pair"  # (W1 + W2) / 2^{3/4}, W1 and W2 independent quartic_w


class Statistic(str, Enum):
    SQRTN_MINUS_T = "sqrtN_minus_t"  # sqrt(n) (sigma_bar - t)
    SQRTN_MINUS_M = "sqrtN_minus_M"  # sqrt(n) (sigma_bar - M(sigma))
    QUARTER_N = "quarterN"  # n^{1/4} sigma_bar


class EventSide(str, Enum):
    ABOVE = "above"
    BELOW = "below"


class LimitLaw(BaseModel):
    """Analytic limit law, optionally shifted by mu."""
    model_config = ConfigDict(frozen=True)

    kind: LimitLawKind
    tau: Optional[float] = Field(default=None, gt=0)
    mu: float = 0.0
    mirrored: bool = Field(
        default=False,
        description="Equal mixture of the law shifted by +mu and by -mu",
    )

    @model_validator(mode="after")
    def check_tau(self) -> "LimitLaw":
        if self.kind == LimitLawKind.GAUSSIAN and self.tau is None:
            raise ValueError("gaussian limit law needs a variance tau")
        return self

    @classmethod
    def gaussian(cls, tau: float) -> "LimitLaw":
        return cls(kind=LimitLawKind.GAUSSIAN, tau=tau)

    @classmethod
    def quartic_w(cls) -> "LimitLaw":
        return cls(kind=LimitLawKind.QUARTIC_W)

    @classmethod
    def modified_w_tilde(cls) -> "LimitLaw":
        return cls(kind=LimitLawKind.MODIFIED_W_TILDE)

    @classmethod
    def quartic_pair(cls) -> "LimitLaw":
        return cls(kind=LimitLawKind.QUARTIC_PAIR)

    def shifted(self, mu: float) -> "LimitLaw":
        return self.model_copy(update={"mu": self.mu + mu})

    def mirror(self) -> "LimitLaw":
        return self.model_copy(update={"mirrored": True})


class CenteredSample(BaseModel):
    """
    Centered statistic values. `weights` is None for an empirical sample
    (equal weights) and holds atom probabilities for a centered exact law.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    values: Any
    weights: Optional[Any] = None
    statistic: Statistic
    n: int = Field(..., gt=0)
    t: float = 0.0

    @model_validator(mode="after")
    def check_weights(self) -> "CenteredSample":
        if self.weights is not None and np.shape(self.weights) != np.shape(self.values):
            raise ValueError("weights must match values")
        return self

    @property
    def is_empty(self) -> bool:
        return np.size(self.values) == 0


class EventComparison(BaseModel):
    log_p: float
    log_ref: float
    gap: float
    reference_null: bool = Field(
        default=False,
        description="Reference event has probability zero while the model event does not",
    )
