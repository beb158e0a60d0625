from enum import Enum
from pathlib import Path
from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from mfising.schemas.analysis import LimitLawKind, Statistic
from mfising.schemas.coupling import RegularKind, WignerLaw
from mfising.schemas.meanfield import ModelParams
from mfising.schemas.sampler import SamplerConfig


Ensemble = Literal[
    "regular",
    "erdos_renyi",
    "sbm",
    "block_spin",
    "wigner",
    "line_graph",
    "complete",
    "two_complete",
    "uneven_complete",
    "graphon",
    "file",
]


class CouplingSpec(BaseModel):
    """Builder name and its parameters; `n` (or `m` for line_graph) may be swept by the experiment."""
    model_config = ConfigDict(extra="forbid")

    ensemble: Ensemble
    n: Optional[int] = Field(default=None, gt=0)
    d: Optional[int] = Field(default=None, gt=0)
    kind: RegularKind = RegularKind.RANDOM_REGULAR
    p: Optional[float] = Field(default=None, gt=0, le=1)
    directed: bool = False
    block_sizes: Optional[List[int]] = None
    prob: Optional[List[List[float]]] = None
    a: Optional[float] = Field(default=None, ge=0)
    b: Optional[float] = Field(default=None, ge=0)
    law: WignerLaw = WignerLaw.EXPONENTIAL
    mu: float = Field(default=1.0, gt=0)
    m: Optional[int] = Field(default=None, ge=4)
    denominator: Optional[float] = Field(default=None, gt=0)
    grid: Optional[List[List[float]]] = None
    gamma: float = Field(default=1.0, gt=0, le=1)
    seed: Optional[int] = Field(default=None, ge=0)
    path: Optional[Path] = None

    @model_validator(mode="after")
    def check_file(self) -> "CouplingSpec":
        if self.ensemble == "file":
            if self.path is None:
                raise ValueError("ensemble 'file' needs a path")
            if not self.path.is_file():
                raise ValueError(f"matrix file {self.path} does not exist")
        return self

    @property
    def size_field(self) -> str:
        """The parameter an experiment's `sizes` sweep substitutes."""
        return "m" if self.ensemble == "line_graph" else "n"


class Task(str, Enum):
    RATE = "rate"
    CLUSTERS = "clusters"
    MEANFIELD_GAP = "meanfield_gap"
    CONCENTRATION = "concentration"
    SHIFT = "shift"
    DIAGNOSE = "diagnose"


class LawSource(str, Enum):
    EXACT_CW = "exact_cw"
    EXACT_BLOCKED = "exact_blocked"
    BRUTEFORCE = "bruteforce"
    GLAUBER = "glauber"
    AUXILIARY = "auxiliary"


class AnalysisSpec(BaseModel):
    """Statistic and limit law; None picks the regime default."""
    model_config = ConfigDict(extra="forbid")

    statistic: Optional[Statistic] = None
    limit_law: Optional[LimitLawKind] = None
    shift_from: Optional[Literal["line_graph", "regularity_a", "regularity_b"]] = None
    rate: Literal["sqrt_n", "sqrt_n_over_log_n"] = "sqrt_n"


class CheckKind(str, Enum):
    RATIO_BAND = "ratio_band"  # every value / first value within 1 +- tolerance
    FACTOR_BAND = "factor_band"  # max / min <= factor
    STRICTLY_DECREASING = "strictly_decreasing"
    VALUE_RANGE = "value_range"  # lower <= value <= upper
    STABILIZES = "stabilizes"  # successive relative changes <= tolerance


class CheckSpec(BaseModel):
    """One acceptance check over a result column; rows are in sweep order."""
    model_config = ConfigDict(extra="forbid")

    name: str = Field(..., min_length=1)
    kind: CheckKind
    column: str = Field(..., min_length=1)
    where: Dict[str, float] = Field(default_factory=dict)
    lower: Optional[float] = None
    upper: Optional[float] = None
    tolerance: Optional[float] = Field(default=None, ge=0)
    factor: Optional[float] = Field(default=None, ge=1)
    gating: bool = True

    @model_validator(mode="after")
    def check_thresholds(self) -> "CheckSpec":
        if self.kind in (CheckKind.RATIO_BAND, CheckKind.STABILIZES) and self.tolerance is None:
            raise ValueError(f"{self.kind.value} needs a tolerance")
        if self.kind == CheckKind.FACTOR_BAND and self.factor is None:
            raise ValueError("factor_band needs a factor")
        if self.kind == CheckKind.VALUE_RANGE and self.lower is None and self.upper is None:
            raise ValueError("value_range needs lower and/or upper")
        return self


class ExperimentConfig(BaseModel):
    """A single JSON document describing one reproducible experiment."""
    model_config = ConfigDict(extra="forbid")

    name: str = Field(..., min_length=1)
    description: str = ""
    task: Task
    coupling: Optional[CouplingSpec] = None
    params: ModelParams
    sizes: List[int] = Field(default_factory=list)
    law_source: LawSource = LawSource.EXACT_CW
    block_count: int = Field(default=2, ge=1, le=3)
    sampler: Optional[SamplerConfig] = None
    analysis: AnalysisSpec = Field(default_factory=AnalysisSpec)
    deltas: List[float] = Field(default_factory=list)
    checks: List[CheckSpec] = Field(default_factory=list)
    output_dir: Optional[Path] = None

    @field_validator("name")
    @classmethod
    def strip_name(cls, v: str) -> str:
        if not v.strip():
            raise ValueError("name must not be blank")
        return v.strip()

    @field_validator("sizes")
    @classmethod
    def positive_sizes(cls, v: List[int]) -> List[int]:
        if any(size <= 0 for size in v):
            raise ValueError("sizes must be positive")
        return v

    @model_validator(mode="after")
    def check_task_inputs(self) -> "ExperimentConfig":
        needs_coupling = self.task in (Task.MEANFIELD_GAP, Task.SHIFT, Task.DIAGNOSE) or self.law_source in (
            LawSource.BRUTEFORCE,
            LawSource.GLAUBER,
        )
        if needs_coupling and self.coupling is None:
            raise ValueError(f"task {self.task.value} with source {self.law_source.value} needs a coupling")
        if self.task == Task.CONCENTRATION and not self.deltas:
            raise ValueError("concentration needs deltas")
        if self.law_source in (LawSource.GLAUBER, LawSource.AUXILIARY) and self.sampler is None:
            raise ValueError(f"law source {self.law_source.value} needs a sampler block")
        return self


class CheckResult(BaseModel):
    name: str
    kind: CheckKind
    passed: bool
    gating: bool
    measured: List[float]
    detail: str = ""

    @property
    def verdict(self) -> str:
        if self.passed:
            return "PASS"
        return "FAIL" if self.gating else "WARN"


class ExperimentResult(BaseModel):
    name: str
    task: Task
    columns: List[str]
    rows: List[Dict[str, Union[int, float]]]
    checks: List[CheckResult] = Field(default_factory=list)
    runtime_ms: float = 0.0

    @property
    def passed(self) -> bool:
        return all(check.passed or not check.gating for check in self.checks)
