from enum import Enum
from typing import Any, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, model_validator


# ============ Coupling Matrix ============

class CouplingMatrix(BaseModel):
    """
    Symmetric nonnegative coupling matrix with zero diagonal.

    Dense numpy storage up to DENSE_MAX_SITES sites, canonical (row/column sorted)
    CSR storage above. Immutable after construction.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    n: int = Field(..., gt=0, description="Number of sites")
    entries: Any = Field(..., description="numpy.ndarray or scipy.sparse.csr_matrix")
    label: str = Field(default="", description="Ensemble, parameters and seed")
    scale: Optional[float] = Field(
        default=None,
        gt=0,
        description="Divisor applied to the unscaled graph adjacency or weights; None if unknown",
    )

    _neighbors: Optional[List[Tuple[np.ndarray, np.ndarray]]] = PrivateAttr(default=None)

    @model_validator(mode="after")
    def check_entries(self) -> "CouplingMatrix":
        entries = self.entries
        if sp.issparse(entries):
            if entries.shape != (self.n, self.n):
                raise ValueError(f"entries shape {entries.shape} does not match n={self.n}")
            if (entries != entries.T).nnz != 0:
                raise ValueError("coupling matrix must be symmetric")
            if np.any(entries.diagonal() != 0):
                raise ValueError("coupling matrix must have zero diagonal")
            if entries.nnz and entries.data.min() < 0:
                raise ValueError("coupling matrix entries must be nonnegative")
            return self

        if not isinstance(entries, np.ndarray):
            raise ValueError("entries must be a numpy array or a scipy sparse matrix")
        if entries.shape != (self.n, self.n):
            raise ValueError(f"entries shape {entries.shape} does not match n={self.n}")
        if not np.array_equal(entries, entries.T):
            raise ValueError("coupling matrix must be symmetric")
        if np.any(np.diag(entries) != 0):
            raise ValueError("coupling matrix must have zero diagonal")
        if np.any(entries < 0):
            raise ValueError("coupling matrix entries must be nonnegative")
        entries.setflags(write=False)
        return self

    @property
    def is_dense(self) -> bool:
        return not sp.issparse(self.entries)

    def row_sums(self) -> np.ndarray:
        """R_i = sum_j A(i, j)."""
        return np.asarray(self.entries.sum(axis=1)).ravel()

    def dot(self, vector: np.ndarray) -> np.ndarray:
        return np.asarray(self.entries @ vector).ravel()

    def to_dense(self) -> np.ndarray:
        if self.is_dense:
            return self.entries
        return self.entries.toarray()

    def unscaled(self) -> np.ndarray:
        """The underlying graph adjacency (or the raw weights for weighted ensembles)."""
        return self.to_dense() * (self.scale if self.scale is not None else 1.0)

    def neighbors(self, i: int) -> Tuple[np.ndarray, np.ndarray]:
        """Column i as (indices, weights) over its nonzero entries."""
        if self._neighbors is None:
            csc = sp.csc_matrix(self.entries)
            self._neighbors = [
                (csc.indices[csc.indptr[j]:csc.indptr[j + 1]].copy(),
                 csc.data[csc.indptr[j]:csc.indptr[j + 1]].copy())
                for j in range(self.n)
            ]
        return self._neighbors[i]

    def upper_triplets(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stored upper-triangle entries (i < j) in row-major order."""
        upper = sp.triu(sp.coo_matrix(self.entries), k=1).tocsr()
        upper.sort_indices()
        coo = upper.tocoo()
        return coo.row, coo.col, coo.data


# ============ Diagnostics ============

class MatrixDiagnostics(BaseModel):
    """Row-sum, norm and spectral summaries of a coupling matrix."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    n: int
    row_sums: Any  # numpy vector R_i
    frobenius_sq: float
    lambda1: float
    lambda2: float
    alpha: float  # max_i sum_j A(i,j)^2
    sum_dev: float  # sum (R_i - 1)
    sum_dev_sq: float  # sum (R_i - 1)^2
    max_dev: float  # max |R_i - 1|
    well_connected_ratio: float  # lambda2 / lambda1
    a4_stat: float  # n^{1/4} max_dev
    eigen_residual: float = 0.0

    @model_validator(mode="after")
    def check_consistency(self) -> "MatrixDiagnostics":
        tol = 1e-10 * max(1.0, self.frobenius_sq)
        if self.lambda1 < self.lambda2:
            raise ValueError("lambda1 must dominate lambda2")
        if self.alpha > self.frobenius_sq + tol:
            raise ValueError("alpha cannot exceed the squared Frobenius norm")
        if self.n * self.alpha < self.frobenius_sq - tol:
            raise ValueError("n * alpha must dominate the squared Frobenius norm")
        return self

    def summary(self) -> dict:
        """JSON-friendly view without the row-sum vector."""
        return self.model_dump(exclude={"row_sums"})


class RateTerms(BaseModel):
    """Right-hand sides of the fluctuation and partition-function bounds."""
    eta: float = Field(..., ge=0)
    nonuniq: float = Field(..., ge=0)
    epsilon: float = Field(..., ge=0)
    r: float = Field(..., ge=0)
    delta: float = Field(..., ge=0)
    theta11: float = Field(..., ge=0)
    uniq: float = Field(..., ge=0)
    critical: float = Field(..., ge=0)
    partition_critical: float = Field(..., ge=0)


# ============ Ensemble Options ============

class RegularKind(str, Enum):
    RANDOM_REGULAR = "random_regular"
    COMPLETE = "complete"
    CIRCULANT = "circulant"
    BIPARTITE_REGULAR = "bipartite_regular"


class WignerLaw(str, Enum):
    EXPONENTIAL = "exponential"  # mean mu
    UNIFORM = "uniform"  # on (0, 2 mu)
