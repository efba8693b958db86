from enum import Enum
from typing import Optional

import numpy as np
from pydantic import Field, field_validator, model_validator

from app.schemas.base import ArrayModel, frozen_array


class SolverKind(str, Enum):
    """Enumeration for time-evolution paths."""
    DIRECT = "direct"
    VOLTERRA = "volterra"
    ORACLE = "oracle"


class SectorState(ArrayModel):
    """Wave function sum_i |i> [c_i(t)|Omega> + a*(g_t^i)|Omega>] at one time."""
    t: float = Field(..., description="Time")
    c: np.ndarray = Field(..., description="Amplitudes c_i(t), shape (d,)")
    g: np.ndarray = Field(..., description="Mode functions g_t^i on the grid, shape (d, N)")

    @field_validator("c", mode="before")
    @classmethod
    def _check_c(cls, value):
        return frozen_array(value, complex, ndim=1, name="c")

    @field_validator("g", mode="before")
    @classmethod
    def _check_g(cls, value):
        return frozen_array(value, complex, ndim=2, name="g")

    @model_validator(mode="after")
    def _check_shapes(self):
        if self.g.shape[0] != self.c.size:
            raise ValueError(f"g has {self.g.shape[0]} rows for {self.c.size} amplitudes")
        return self


class Trajectory(ArrayModel):
    """
    Sampled solution of one solver run.

    ``g`` is present for runs that carry the mode functions (direct, oracle)
    and absent for amplitude-only runs (volterra).
    """
    times: np.ndarray = Field(..., description="Sample times, strictly increasing")
    c: np.ndarray = Field(..., description="Amplitudes, shape (T, d)")
    g: Optional[np.ndarray] = Field(None, description="Mode functions, shape (T, d, N)")
    solver: SolverKind = Field(..., description="Which path produced the run")
    dt: float = Field(..., ge=0, description="Internal step size (0 for the exact oracle)")
    n_steps: int = Field(0, ge=0, description="Number of internal steps taken")
    norms: Optional[np.ndarray] = Field(None, description="Weighted norm at every sample")

    @field_validator("times", mode="before")
    @classmethod
    def _check_times(cls, value):
        arr = frozen_array(value, float, ndim=1, name="times")
        if np.any(np.diff(arr) <= 0):
            raise ValueError("times must be strictly increasing")
        return arr

    @field_validator("c", mode="before")
    @classmethod
    def _check_c(cls, value):
        return frozen_array(value, complex, ndim=2, name="c")

    @field_validator("g", mode="before")
    @classmethod
    def _check_g(cls, value):
        return None if value is None else frozen_array(value, complex, ndim=3, name="g")

    @field_validator("norms", mode="before")
    @classmethod
    def _check_norms(cls, value):
        return None if value is None else frozen_array(value, float, ndim=1, name="norms")

    @model_validator(mode="after")
    def _check_shapes(self):
        n_t = self.times.size
        if self.c.shape[0] != n_t:
            raise ValueError(f"c has {self.c.shape[0]} samples for {n_t} times")
        if self.g is not None and (self.g.shape[0] != n_t or self.g.shape[1] != self.c.shape[1]):
            raise ValueError(f"g has shape {self.g.shape}, inconsistent with c {self.c.shape}")
        if self.norms is not None and self.norms.size != n_t:
            raise ValueError("norms must have one entry per sample")
        return self

    @property
    def d(self) -> int:
        return int(self.c.shape[1])

    @property
    def has_modes(self) -> bool:
        return self.g is not None

    @property
    def norm_drift(self) -> Optional[float]:
        """max_t |norm(t) - 1|, when norms were recorded."""
        if self.norms is None:
            return None
        return float(np.max(np.abs(self.norms - 1.0)))

    def state(self, index: int) -> SectorState:
        """The sample at ``index`` as a SectorState (requires mode data)."""
        if self.g is None:
            raise ValueError(f"{self.solver.value} trajectory carries no mode functions")
        return SectorState(t=float(self.times[index]), c=self.c[index], g=self.g[index])
