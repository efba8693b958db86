from typing import List, Optional, Tuple

import numpy as np
from pydantic import Field, field_validator, model_validator

from app.schemas.base import ArrayModel, frozen_array


class KernelTable(ArrayModel):
    """
    Time-sampled memory kernel M_kl(t) and inhomogeneity G_k(t).

    Either part may be absent when only the other was requested.
    """
    times: np.ndarray = Field(..., description="Sample times, increasing")
    M_values: Optional[np.ndarray] = Field(None, description="M(t), shape (T, d, d)")
    G_values: Optional[np.ndarray] = Field(None, description="G(t), shape (T, d)")

    @field_validator("times", mode="before")
    @classmethod
    def _check_times(cls, value):
        arr = frozen_array(value, float, ndim=1, name="times")
        if np.any(np.diff(arr) <= 0):
            raise ValueError("times must be strictly increasing")
        return arr

    @field_validator("M_values", mode="before")
    @classmethod
    def _check_m(cls, value):
        return None if value is None else frozen_array(value, complex, ndim=3, name="M_values")

    @field_validator("G_values", mode="before")
    @classmethod
    def _check_g(cls, value):
        return None if value is None else frozen_array(value, complex, ndim=2, name="G_values")

    @model_validator(mode="after")
    def _check_lengths(self):
        for name in ("M_values", "G_values"):
            table = getattr(self, name)
            if table is not None and table.shape[0] != self.times.size:
                raise ValueError(f"{name} has {table.shape[0]} samples for {self.times.size} times")
        return self


class CorrelationSet(ArrayModel):
    """
    Reservoir correlation functions on a time grid.

    ``a[t, m, n, p, q]`` = a_{mn,pq}(t), ``b[t, m, n, p]`` = b_{mn,p}(t),
    ``c[t, p, q]`` = c_{p,q}(t).
    """
    times: np.ndarray = Field(..., description="Sample times (may include negative values)")
    a: np.ndarray = Field(..., description="Form factor / form factor correlations")
    b: np.ndarray = Field(..., description="Form factor / initial mode correlations")
    c: np.ndarray = Field(..., description="Initial mode / initial mode correlations")

    @field_validator("times", mode="before")
    @classmethod
    def _check_times(cls, value):
        arr = frozen_array(value, float, ndim=1, name="times")
        if np.any(np.diff(arr) <= 0):
            raise ValueError("times must be strictly increasing")
        return arr

    @field_validator("a", mode="before")
    @classmethod
    def _check_a(cls, value):
        return frozen_array(value, complex, ndim=5, name="a")

    @field_validator("b", mode="before")
    @classmethod
    def _check_b(cls, value):
        return frozen_array(value, complex, ndim=4, name="b")

    @field_validator("c", mode="before")
    @classmethod
    def _check_c(cls, value):
        return frozen_array(value, complex, ndim=3, name="c")

    @model_validator(mode="after")
    def _check_shapes(self):
        n_t, d = self.times.size, self.c.shape[1]
        if self.a.shape != (n_t, d, d, d, d) or self.b.shape != (n_t, d, d, d) or self.c.shape != (n_t, d, d):
            raise ValueError("correlation tables have inconsistent shapes")
        return self

    @property
    def d(self) -> int:
        return int(self.c.shape[1])


class SpectralDensityMatrix(ArrayModel):
    """
    Atomic spectral measure of the correlation functions.

    Each atom sits at one frequency and carries a Hermitian PSD block over the
    combined index set: the d*d pairs (m, n) first, then the d levels p.
    """
    d: int = Field(..., ge=1, description="System dimension")
    frequencies: np.ndarray = Field(..., description="Atom positions, ascending")
    blocks: np.ndarray = Field(..., description="Per-atom blocks, shape (K, d*d + d, d*d + d)")

    @field_validator("frequencies", mode="before")
    @classmethod
    def _check_frequencies(cls, value):
        return frozen_array(value, float, ndim=1, name="frequencies")

    @field_validator("blocks", mode="before")
    @classmethod
    def _check_blocks(cls, value):
        return frozen_array(value, complex, ndim=3, name="blocks")

    @model_validator(mode="after")
    def _check_shapes(self):
        size = self.d * self.d + self.d
        if self.blocks.shape != (self.frequencies.size, size, size):
            raise ValueError(f"blocks have shape {self.blocks.shape}, expected ({self.frequencies.size}, {size}, {size})")
        return self

    @property
    def labels(self) -> List[Tuple[int, ...]]:
        """Row labels of every block: (m, n) pairs, then (p,)."""
        pairs = [(m, n) for m in range(self.d) for n in range(self.d)]
        return pairs + [(p,) for p in range(self.d)]


class GramCheckReport(ArrayModel):
    """Outcome of the correlation positivity test."""
    min_eigenvalue: float = Field(..., description="Smallest eigenvalue of the block Gram matrix")
    min_quadratic_form: float = Field(..., description="Smallest normalized x^H G x over the random vectors")
    matrix_size: int = Field(..., description="Order of the Gram matrix")
    passed: bool = Field(..., description="min_eigenvalue >= -tolerance")
