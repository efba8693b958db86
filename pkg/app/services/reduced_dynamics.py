"""
Reduced Dynamics Service

Turns sector states into system density matrices and, for factorized initial
conditions, builds the dynamical map A_t:
1. reduced_density - partial trace over the reservoir
2. propagator_L / overlap_R - the amplitude propagator and the mode overlap
   tensor, extracted from d basis runs c(0) = e_l
3. assemble_map / apply_map - the map tensor S and its linear action on M_d
4. choi_matrix / cptp_check - complete positivity and trace preservation

MapBuilder holds the basis runs of one model and step, so L, R and the maps
at the same times are computed once.
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from app.core.config import get_settings
from app.core.exceptions import ModelError, NumericalError
from app.schemas.dynamics import SectorState, Trajectory
from app.schemas.model import InitialState, Model
from app.schemas.reduced import ChoiMatrix, CPTPReport, DynamicalMap, ReducedState
from app.services.solver_service import SectorSolver

logger = logging.getLogger(__name__)

BASIS_METHODS = ("volterra", "direct")
_HERMITIAN_LOG_THRESHOLD = 1e-12


def reduced_density(model: Model, state: SectorState) -> ReducedState:
    """
    rho_ij = c_i conj(c_j) + (g^j, g^i), symmetrized to (rho + rho^H) / 2.

    Args:
        model: The model supplying the quadrature weights
        state: Sector state with mode data

    Returns:
        ReducedState: The density matrix at state.t
    """
    if state.c.size != model.d or state.g.shape != (model.d, model.n_modes):
        raise ModelError(f"state of shape {state.g.shape} does not belong to a model with d={model.d}, N={model.n_modes}")
    rho = _density(model, state.c, state.g)
    return ReducedState(t=state.t, rho=_symmetrize(rho, state.t))


def reduced_trajectory(model: Model, trajectory: Trajectory) -> List[ReducedState]:
    """reduced_density at every sample of a trajectory that carries mode functions."""
    if not trajectory.has_modes:
        raise ModelError(f"{trajectory.solver.value} trajectory has no mode functions; reconstruct them first")
    return [reduced_density(model, trajectory.state(i)) for i in range(trajectory.times.size)]


class MapBuilder:
    """
    Dynamical maps of one model from d factorized basis runs.

    The basis runs share one SectorSolver, so the memory-kernel table is
    built once, and they are cached per output grid: L, R and the maps at the
    same times reuse them.
    """

    def __init__(self, model: Model, dt: float, method: str = "volterra"):
        if method not in BASIS_METHODS:
            raise ModelError(f"unknown basis method '{method}', expected one of {BASIS_METHODS}")
        self.model = model
        self.dt = dt
        self.method = method
        self.solver = SectorSolver(model)
        self._runs: Dict[Tuple[float, ...], Tuple[np.ndarray, np.ndarray]] = {}

    def basis_runs(self, times: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
        """
        The d runs started from c(0) = e_l with no reservoir excitation.

        Returns:
            Tuple[np.ndarray, np.ndarray]: L of shape (T, d, d) and the basis mode
            functions gamma of shape (T, m, k, N)
        """
        times = np.atleast_1d(np.asarray(times, dtype=float))
        key = tuple(times.tolist())
        if key in self._runs:
            return self._runs[key]

        d, n_modes = self.model.d, self.model.n_modes
        solve = self.solver.volterra_with_modes if self.method == "volterra" else self.solver.direct
        runs = [solve(InitialState.factorized(np.eye(d)[l], n_modes), times, self.dt) for l in range(d)]
        L = np.stack([run.c for run in runs], axis=-1)
        gamma = np.stack([run.g for run in runs], axis=1)
        logger.info(f"Built {d} {self.method} basis runs over {L.shape[0]} times")
        self._runs[key] = (L, gamma)
        return L, gamma

    def propagator(self, times: Sequence[float]) -> np.ndarray:
        """
        c_k(t) = sum_l L_kl(t) c_l(0) for factorized initial data.

        Returns:
            np.ndarray: L at every time, shape (T, d, d)
        """
        return self.basis_runs(times)[0]

    def overlaps(self, times: Sequence[float]) -> np.ndarray:
        """
        (g_t^k, g_t^h) = sum_mn R_{km,hn}(t) conj(c_m(0)) c_n(0) for factorized initial data.

        R_{km,hn} = (gamma^{k,m}, gamma^{h,n}) where gamma^{k,m} is the level-k mode
        function of the basis run started from e_m.

        Returns:
            np.ndarray: R at every time, shape (T, d, d, d, d)
        """
        return _overlaps(self.model, self.basis_runs(times)[1])

    def maps(self, times: Sequence[float]) -> List[DynamicalMap]:
        """assemble_map at every time."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        L = self.propagator(times)
        R = self.overlaps(times)
        return [assemble_map(L[i], R[i], float(t)) for i, t in enumerate(times)]


def propagator_L(model: Model, times: Sequence[float], dt: float, method: str = "volterra") -> np.ndarray:
    return MapBuilder(model, dt, method).propagator(times)


def overlap_R(model: Model, times: Sequence[float], dt: float, method: str = "volterra") -> np.ndarray:
    return MapBuilder(model, dt, method).overlaps(times)


def basis_runs(model: Model, times: Sequence[float], dt: float, method: str = "volterra") -> Tuple[np.ndarray, np.ndarray]:
    """
    The d factorized runs behind L and R.

    Args:
        model: The model
        times: Output times
        dt: Internal step
        method: "volterra" (memory-kernel route with mode reconstruction) or
            "direct" (RK4 on the full system)
    """
    return MapBuilder(model, dt, method).basis_runs(times)


def dynamical_maps(model: Model, times: Sequence[float], dt: float, method: str = "volterra") -> List[DynamicalMap]:
    return MapBuilder(model, dt, method).maps(times)


def assemble_map(L: np.ndarray, R: np.ndarray, t: float) -> DynamicalMap:
    """
    S_{jm,in} = conj(L_jm) L_in + R_{jm,in}.

    Raises:
        ModelError: If L and R do not share the dimension d
    """
    L = np.asarray(L, dtype=complex)
    R = np.asarray(R, dtype=complex)
    d = L.shape[0]
    if L.shape != (d, d) or R.shape != (d, d, d, d):
        raise ModelError(f"L{L.shape} and R{R.shape} do not describe one map")
    S = np.einsum("jm,in->jmin", np.conj(L), L) + R
    return DynamicalMap(t=t, L=L, R=R, S=S)


def apply_map(dyn_map: DynamicalMap, rho0: np.ndarray) -> np.ndarray:
    """
    A_t(rho0), linear on all d x d matrices:

        A_t(|i><j|) = sum_mn |m><n| S_{nj,mi}
    """
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (dyn_map.d, dyn_map.d):
        raise ModelError(f"input matrix has shape {rho0.shape}, map acts on {dyn_map.d} x {dyn_map.d}")
    return np.einsum("njmi,ij->mn", dyn_map.S, rho0)


def choi_matrix(dyn_map: DynamicalMap) -> ChoiMatrix:
    """C[(m, i), (n, j)] = A_t(|i><j|)[m, n] = S_{nj,mi}."""
    d = dyn_map.d
    choi = dyn_map.S.transpose(2, 3, 0, 1).reshape(d * d, d * d)
    return ChoiMatrix(t=dyn_map.t, matrix=choi)


def cptp_check(choi: ChoiMatrix, psd_tolerance: Optional[float] = None,
               trace_tolerance: Optional[float] = None) -> CPTPReport:
    """
    Positivity of the Choi matrix and the trace-preservation defect.

    The defect is read off the partial trace over the output factor, which
    equals sum_i S_{im,in}.
    """
    settings = get_settings()
    psd_tolerance = settings.PSD_TOLERANCE if psd_tolerance is None else psd_tolerance
    trace_tolerance = settings.TRACE_TOLERANCE if trace_tolerance is None else trace_tolerance

    d, C = choi.d, choi.matrix
    hermiticity_defect = float(np.max(np.abs(C - C.conj().T)))
    min_eigenvalue = float(linalg.eigvalsh(0.5 * (C + C.conj().T))[0])
    partial = np.einsum("aiaj->ij", C.reshape(d, d, d, d))
    trace_defect = float(np.max(np.abs(partial - np.eye(d))))

    report = CPTPReport(
        t=choi.t,
        min_eigenvalue=min_eigenvalue,
        trace_defect=trace_defect,
        hermiticity_defect=hermiticity_defect,
        completely_positive=min_eigenvalue >= -psd_tolerance,
        trace_preserving=trace_defect <= trace_tolerance,
    )
    if not report.verdict:
        logger.warning(
            f"Map at t={choi.t:.6g} fails CPTP: min eigenvalue {min_eigenvalue:.3e}, trace defect {trace_defect:.3e}"
        )
    return report


def _density(model: Model, c: np.ndarray, g: np.ndarray) -> np.ndarray:
    return np.outer(c, np.conj(c)) + np.einsum("in,jn,n->ij", g, np.conj(g), model.reservoir.weights)


def _overlaps(model: Model, gamma: np.ndarray) -> np.ndarray:
    if gamma.ndim != 4:
        raise NumericalError("basis runs carry no mode functions")
    # R[t, k, m, h, n] = sum_x w_x conj(gamma[t, m, k, x]) gamma[t, n, h, x]
    return np.einsum("tmkx,tnhx,x->tkmhn", np.conj(gamma), gamma, model.reservoir.weights)


def _symmetrize(rho: np.ndarray, t: float) -> np.ndarray:
    deviation = float(np.max(np.abs(rho - rho.conj().T)))
    if deviation > _HERMITIAN_LOG_THRESHOLD:
        logger.warning(f"Reduced density at t={t:.6g} deviates from Hermitian by {deviation:.3e}")
    return 0.5 * (rho + rho.conj().T)
