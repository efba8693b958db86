import math
from typing import Tuple

import numpy as np
from pydantic import Field, field_validator, model_validator

from app.schemas.base import ArrayModel, frozen_array
from app.schemas.model import ReservoirGrid


class SpinBosonConfig(ArrayModel):
    """
    Two-level system coupled to one reservoir through a resonant channel f
    (sigma^- (x) a*(f)) and an anti-resonant channel h (sigma^+ (x) a*(h)).

    Maps to d=2 with eps = (0, omega), f_01 = f, f_10 = h, f_00 = f_11 = 0.
    """
    omega: float = Field(..., description="Two-level splitting")
    reservoir: ReservoirGrid
    f: np.ndarray = Field(..., description="Resonant-channel form factor on the grid")
    h: np.ndarray = Field(..., description="Anti-resonant-channel form factor on the grid")

    @field_validator("omega")
    @classmethod
    def _check_omega(cls, value):
        if not math.isfinite(value):
            raise ValueError("omega must be finite")
        return value

    @field_validator("f", "h", mode="before")
    @classmethod
    def _check_channel(cls, value, info):
        return frozen_array(value, complex, ndim=1, name=info.field_name)

    @model_validator(mode="after")
    def _check_lengths(self):
        n = self.reservoir.n_modes
        if self.f.size != n or self.h.size != n:
            raise ValueError(f"channels sampled on {self.f.size} / {self.h.size} modes, grid has {n}")
        return self

    @property
    def is_rwa(self) -> bool:
        return not np.any(self.h)


class SpinBosonKernels(ArrayModel):
    """Sector kernels m0, m1 and inhomogeneities n0, n1 on a time grid."""
    times: np.ndarray
    m0: np.ndarray = Field(..., description="Anti-resonant memory kernel")
    m1: np.ndarray = Field(..., description="Resonant memory kernel")
    n0: np.ndarray = Field(..., description="Drive of c_0 by the initial g_0^1")
    n1: np.ndarray = Field(..., description="Drive of c_1 by the initial g_0^0")

    @field_validator("times", mode="before")
    @classmethod
    def _check_times(cls, value):
        return frozen_array(value, float, ndim=1, name="times")

    @field_validator("m0", "m1", "n0", "n1", mode="before")
    @classmethod
    def _check_series(cls, value, info):
        return frozen_array(value, complex, ndim=1, name=info.field_name)

    @model_validator(mode="after")
    def _check_lengths(self):
        if any(getattr(self, name).size != self.times.size for name in ("m0", "m1", "n0", "n1")):
            raise ValueError("kernel series must match the time grid")
        return self


class AsymptoticReport(ArrayModel):
    """
    Predicted long-time population of level 0 and whether a finite mode grid
    can show it before energy returns from the reservoir.
    """
    predicted_limit: float = Field(..., description="|c_1(0)|^2 + (g_0^0, g_0^0)")
    kernel_half_life: float = Field(..., description="Slowest half-life among the kernels of populated sectors")
    recurrence_time: float = Field(..., description="2 pi / median mode spacing")
    approachable: bool = Field(..., description="Five half-lives fit inside the recurrence time")

    @property
    def settle_time(self) -> float:
        return 5.0 * self.kernel_half_life


class RWARecoveryReport(ArrayModel):
    """Identities of the rotating-wave limit h = 0, g_0^1 = 0 along a trajectory."""
    rho00_defect: float = Field(..., description="max_t |rho_00 - (1 - |c_1|^2)|")
    c0_modulus_defect: float = Field(..., description="max_t ||c_0(t)| - |c_0(0)||")
    transfer_identity_defect: float = Field(..., description="max_t ||c_0(t)|^2 - |c_1(0)|^2|, informational")
    passed: bool


class EquilibriumReport(ArrayModel):
    """Long-time rho_00 of two initial conditions, predicted against observed."""
    horizon: float
    predicted: Tuple[float, float] = Field(..., description="Predicted limits (a, b)")
    observed: Tuple[float, float] = Field(..., description="rho_00 at the horizon (a, b)")

    @property
    def predicted_separation(self) -> float:
        return abs(self.predicted[0] - self.predicted[1])

    @property
    def observed_separation(self) -> float:
        return abs(self.observed[0] - self.observed[1])

    @property
    def mismatch(self) -> float:
        return abs(self.predicted_separation - self.observed_separation)
