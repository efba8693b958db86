import numpy as np
from pydantic import Field, field_validator, model_validator

from app.schemas.base import ArrayModel, frozen_array


class ReducedState(ArrayModel):
    """System density matrix rho_ij(t) after tracing out the reservoir."""
    t: float = Field(..., description="Time")
    rho: np.ndarray = Field(..., description="Density matrix, shape (d, d)")

    @field_validator("rho", mode="before")
    @classmethod
    def _check_rho(cls, value):
        arr = frozen_array(value, complex, ndim=2, name="rho")
        if arr.shape[0] != arr.shape[1]:
            raise ValueError(f"rho must be square, got shape {arr.shape}")
        return arr

    @property
    def d(self) -> int:
        return int(self.rho.shape[0])

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.rho))

    @property
    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.rho))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.rho)[0])


class DynamicalMap(ArrayModel):
    """
    The map A_t on d x d matrices of a factorized initial condition.

    ``L[k, l]`` = L_kl(t), ``R[k, m, h, n]`` = R_{km,hn}(t) and
    ``S[j, m, i, n]`` = S_{jm,in}(t) = conj(L_jm) L_in + R_{jm,in}.
    """
    t: float = Field(..., description="Time")
    L: np.ndarray = Field(..., description="Amplitude propagator, shape (d, d)")
    R: np.ndarray = Field(..., description="Mode overlap tensor, shape (d, d, d, d)")
    S: np.ndarray = Field(..., description="Map tensor, shape (d, d, d, d)")

    @field_validator("L", mode="before")
    @classmethod
    def _check_l(cls, value):
        return frozen_array(value, complex, ndim=2, name="L")

    @field_validator("R", "S", mode="before")
    @classmethod
    def _check_tensor(cls, value, info):
        return frozen_array(value, complex, ndim=4, name=info.field_name)

    @model_validator(mode="after")
    def _check_shapes(self):
        d = self.L.shape[0]
        if self.L.shape != (d, d) or self.R.shape != (d,) * 4 or self.S.shape != (d,) * 4:
            raise ValueError(f"inconsistent map shapes L{self.L.shape}, R{self.R.shape}, S{self.S.shape}")
        return self

    @property
    def d(self) -> int:
        return int(self.L.shape[0])

    def decomposition_defect(self) -> float:
        """max |S - conj(L) (x) L - R|."""
        product = np.einsum("jm,in->jmin", np.conj(self.L), self.L)
        return float(np.max(np.abs(self.S - product - self.R)))


class ChoiMatrix(ArrayModel):
    """C = sum_ij A_t(|i><j|) (x) |i><j|, rows ordered (output, input)."""
    t: float = Field(..., description="Time of the map")
    matrix: np.ndarray = Field(..., description="Choi matrix, shape (d*d, d*d)")

    @field_validator("matrix", mode="before")
    @classmethod
    def _check_matrix(cls, value):
        arr = frozen_array(value, complex, ndim=2, name="matrix")
        d = int(round(np.sqrt(arr.shape[0])))
        if arr.shape != (d * d, d * d):
            raise ValueError(f"Choi matrix must be d^2 x d^2, got shape {arr.shape}")
        return arr

    @property
    def d(self) -> int:
        return int(round(np.sqrt(self.matrix.shape[0])))


class CPTPReport(ArrayModel):
    """Complete positivity and trace preservation verdict for one map."""
    t: float = Field(..., description="Time of the map")
    min_eigenvalue: float = Field(..., description="Smallest Choi eigenvalue")
    trace_defect: float = Field(..., description="max_mn |sum_i S_{im,in} - delta_mn|")
    hermiticity_defect: float = Field(..., description="max |C - C^H|")
    completely_positive: bool = Field(..., description="min_eigenvalue >= -PSD tolerance")
    trace_preserving: bool = Field(..., description="trace_defect <= trace tolerance")

    @property
    def verdict(self) -> bool:
        return self.completely_positive and self.trace_preserving

    def to_json_dict(self) -> dict:
        """Machine-readable form written next to the run outputs."""
        return {
            "t": self.t,
            "min_eigenvalue": self.min_eigenvalue,
            "trace_defect": self.trace_defect,
            "hermiticity_defect": self.hermiticity_defect,
            "verdict": "PASS" if self.verdict else "FAIL",
        }
