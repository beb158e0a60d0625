from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class RegimeLabel(str, Enum):
    """Partition of the (beta, B) parameter set."""
    THETA11 = "Theta11"  # B = 0, beta < 1
    THETA12 = "Theta12"  # B != 0
    THETA2 = "Theta2"  # B = 0, beta > 1
    THETA3 = "Theta3"  # beta = 1, B = 0


class ModelParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    beta: float = Field(..., gt=0, description="Inverse temperature")
    b_field: float = Field(default=0.0, description="External magnetic field B")


class Regime(BaseModel):
    """Regime label together with the fixed point and the limit variance."""
    label: RegimeLabel
    beta: float
    b_field: float
    t: float = Field(..., description="Fixed point; the positive root in Theta2")
    phi_prime: float
    tau: Optional[float] = Field(default=None, description="Limit variance, absent at Theta3")

    @model_validator(mode="after")
    def check_invariants(self) -> "Regime":
        if self.label == RegimeLabel.THETA3:
            if self.tau is not None:
                raise ValueError("tau is undefined at the critical point")
            if abs(self.phi_prime) >= 1e-12:
                raise ValueError("phi'(0) must vanish at the critical point")
        elif self.phi_prime <= 0:
            raise ValueError(f"phi'(t) must be positive in {self.label.value}")
        return self

    @property
    def is_critical(self) -> bool:
        return self.label == RegimeLabel.THETA3
