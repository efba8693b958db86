from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.schemas.base import ArrayModel, frozen_array


class SystemSpec(ArrayModel):
    """The d-level system: H_S = sum_i eps_i |i><i| (hbar = 1)."""
    energies: np.ndarray = Field(..., description="Level energies eps_i, indexed 0..d-1")

    @field_validator("energies", mode="before")
    @classmethod
    def _check_energies(cls, value):
        arr = frozen_array(value, float, ndim=1, name="energies")
        if arr.size < 1:
            raise ValueError("energies must contain at least one level")
        return arr

    @property
    def d(self) -> int:
        return int(self.energies.size)


class ReservoirGrid(ArrayModel):
    """
    Discretized reservoir: mode frequencies omega_n and quadrature weights w_n.

    Every inner product of mode functions in the package goes through ``inner``,
    so the measure dk lives in one place.
    """
    frequencies: np.ndarray = Field(..., description="Mode frequencies omega_n (negative values allowed)")
    weights: np.ndarray = Field(..., description="Quadrature weights w_n > 0")

    @field_validator("frequencies", mode="before")
    @classmethod
    def _check_frequencies(cls, value):
        arr = frozen_array(value, float, ndim=1, name="frequencies")
        if arr.size < 1:
            raise ValueError("reservoir needs at least one mode")
        return arr

    @field_validator("weights", mode="before")
    @classmethod
    def _check_weights(cls, value):
        arr = frozen_array(value, float, ndim=1, name="weights")
        if np.any(arr <= 0.0):
            raise ValueError("weights must be strictly positive")
        return arr

    @model_validator(mode="after")
    def _check_lengths(self):
        if self.frequencies.shape != self.weights.shape:
            raise ValueError(
                f"frequencies ({self.frequencies.size}) and weights ({self.weights.size}) differ in length"
            )
        return self

    @property
    def n_modes(self) -> int:
        return int(self.frequencies.size)

    def inner(self, f: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Weighted scalar product (f, g) = sum_n w_n conj(f_n) g_n over the last axis."""
        return np.sum(self.weights * np.conj(f) * g, axis=-1)

    def norm2(self, g: np.ndarray) -> np.ndarray:
        """Weighted squared norm (g, g), real."""
        return np.sum(self.weights * np.abs(g) ** 2, axis=-1)


class FormFactorSet(ArrayModel):
    """Form factors f_ij sampled on the mode grid; ``values[i, j, n] = f_ij(k_n)``."""
    values: np.ndarray = Field(..., description="Complex array of shape (d, d, N)")

    @field_validator("values", mode="before")
    @classmethod
    def _check_values(cls, value):
        arr = frozen_array(value, complex, ndim=3, name="form factors")
        if arr.shape[0] != arr.shape[1]:
            raise ValueError(f"form factors must be d x d x N, got {arr.shape}")
        return arr

    @property
    def d(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_modes(self) -> int:
        return int(self.values.shape[2])


class SpectralKind(str, Enum):
    """Enumeration for spectral density families."""
    LORENTZIAN = "lorentzian"
    GAUSSIAN = "gaussian"
    OHMIC_EXPCUTOFF = "ohmic_expcutoff"
    TABULATED = "tabulated"


class QuadratureScheme(str, Enum):
    """Enumeration for reservoir quadrature rules."""
    MIDPOINT = "midpoint"
    GAUSS_LEGENDRE = "gauss_legendre"


class SpectralFamily(BaseModel):
    """A spectral density J(omega) from which reservoir modes and couplings are drawn."""
    kind: SpectralKind = Field(..., description="Family of the spectral density")
    center: Optional[float] = Field(None, description="Peak position (lorentzian, gaussian)")
    width: Optional[float] = Field(None, gt=0, description="Half width (lorentzian) or standard deviation (gaussian)")
    strength: Optional[float] = Field(None, gt=0, description="Total integral of J (lorentzian, gaussian)")
    alpha: Optional[float] = Field(None, gt=0, description="Ohmic coupling constant")
    cutoff: Optional[float] = Field(None, gt=0, description="Ohmic exponential cutoff frequency")
    frequencies: Optional[List[float]] = Field(None, description="Tabulated frequencies, strictly increasing")
    values: Optional[List[float]] = Field(None, description="Tabulated J values, non-negative")
    support: Optional[Tuple[float, float]] = Field(None, description="Explicit frequency interval; overrides the mass threshold")
    mass_threshold: Optional[float] = Field(None, gt=0, le=1, description="Retained fraction of the total spectral weight")

    model_config = ConfigDict(frozen=True, extra="forbid")

    @model_validator(mode="after")
    def _check_parameters(self):
        required = {
            SpectralKind.LORENTZIAN: ("center", "width", "strength"),
            SpectralKind.GAUSSIAN: ("center", "width", "strength"),
            SpectralKind.OHMIC_EXPCUTOFF: ("alpha", "cutoff"),
            SpectralKind.TABULATED: ("frequencies", "values"),
        }[self.kind]
        missing = [name for name in required if getattr(self, name) is None]
        if missing:
            raise ValueError(f"{self.kind.value} family requires {', '.join(missing)}")

        if self.kind == SpectralKind.TABULATED:
            freqs = np.asarray(self.frequencies, dtype=float)
            vals = np.asarray(self.values, dtype=float)
            if freqs.size == 0 or freqs.size != vals.size:
                raise ValueError("tabulated frequencies and values must be non-empty and of equal length")
            if not (np.all(np.isfinite(freqs)) and np.all(np.isfinite(vals))):
                raise ValueError("tabulated entries must be finite")
            if np.any(vals < 0):
                raise ValueError("tabulated values must be non-negative")
            if np.any(np.diff(freqs) <= 0):
                raise ValueError("tabulated frequencies must be strictly increasing")

        if self.support is not None:
            lo, hi = self.support
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValueError("support must be a finite interval with lo < hi")
        return self


class InitialState(ArrayModel):
    """
    Initial wave function sum_i |i> (x) [c_i(0)|Omega> + a*(g_0^i)|Omega>].

    The factorized case is g0 == 0.
    """
    c0: np.ndarray = Field(..., description="Amplitudes c_i(0), complex, length d")
    g0: np.ndarray = Field(..., description="Mode functions g_0^i on the grid, complex, shape (d, N)")
    rescale_factor: float = Field(1.0, description="Factor applied by validate_initial_state")

    @field_validator("c0", mode="before")
    @classmethod
    def _check_c0(cls, value):
        return frozen_array(value, complex, ndim=1, name="c0")

    @field_validator("g0", mode="before")
    @classmethod
    def _check_g0(cls, value):
        return frozen_array(value, complex, ndim=2, name="g0")

    @model_validator(mode="after")
    def _check_shapes(self):
        if self.g0.shape[0] != self.c0.size:
            raise ValueError(f"g0 has {self.g0.shape[0]} rows but c0 has {self.c0.size} levels")
        return self

    @classmethod
    def factorized(cls, c0, n_modes: int) -> "InitialState":
        """Product state (sum_i c_i|i>) (x) |Omega>."""
        c0 = np.asarray(c0, dtype=complex)
        return cls(c0=c0, g0=np.zeros((c0.size, n_modes), dtype=complex))

    @property
    def is_factorized(self) -> bool:
        return not np.any(self.g0)


class Model(ArrayModel):
    """System, reservoir grid and form factors of the single-excitation problem."""
    system: SystemSpec
    reservoir: ReservoirGrid
    formfactors: FormFactorSet

    @model_validator(mode="after")
    def _check_dimensions(self):
        if self.formfactors.d != self.system.d:
            raise ValueError(
                f"form factors are {self.formfactors.d} x {self.formfactors.d} but the system has d={self.system.d}"
            )
        if self.formfactors.n_modes != self.reservoir.n_modes:
            raise ValueError(
                f"form factors sampled on {self.formfactors.n_modes} modes but the grid has {self.reservoir.n_modes}"
            )
        return self

    @property
    def d(self) -> int:
        return self.system.d

    @property
    def n_modes(self) -> int:
        return self.reservoir.n_modes

    @property
    def shifted_frequencies(self) -> np.ndarray:
        """eps_m + omega_n as a (d, N) array."""
        return self.system.energies[:, None] + self.reservoir.frequencies[None, :]

    def state_norm(self, c: np.ndarray, g: np.ndarray) -> float:
        """sum_i |c_i|^2 + sum_i (g^i, g^i)."""
        return float(np.sum(np.abs(c) ** 2) + np.sum(self.reservoir.norm2(g)))
