from enum import Enum
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from mfising.schemas.exact import SpinConfiguration


class InitKind(str, Enum):
    ALL_PLUS = "all_plus"
    ALL_MINUS = "all_minus"
    RANDOM = "random"
    COLD_AT_T = "cold_at_t"  # i.i.d. spins with mean equal to the fixed point


class SamplerConfig(BaseModel):
    """Run plan for the Glauber chains; counts are in sweeps of n single-site steps."""
    burn_in_sweeps: int = Field(default=200, gt=0)
    thin_sweeps: int = Field(default=1, ge=1)
    n_samples: int = Field(default=1000, gt=0)
    n_chains: int = Field(default=1, gt=0)
    master_seed: int = Field(default=20200101, ge=0, lt=2**64)
    init: InitKind = InitKind.RANDOM


class ChainState(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    config: SpinConfiguration
    chain_index: int = 0
    steps: int = Field(default=0, ge=0)
    rng: Any  # numpy.random.Generator seeded from (master_seed, chain_index)

    @property
    def sweep_count(self) -> int:
        return self.steps // self.config.n


class SampleBatch(BaseModel):
    """Ordered draws of the magnetization density, merged by chain index."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    n: int
    chain: Any  # int vector
    draw: Any  # int vector, per-chain draw index
    sigma_bar: Any  # float vector
    m_sign: Any  # int8 vector of +-1, sign(sigma_bar) with 0 -> +1
    label: str = ""

    def __len__(self) -> int:
        return int(np.size(self.sigma_bar))

    def for_chain(self, chain_index: int) -> np.ndarray:
        return self.sigma_bar[self.chain == chain_index]
