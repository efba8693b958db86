"""
Solver Service

Three independent routes through the same finite-mode dynamics:
1. solve_direct - classical RK4 on the coupled amplitude / mode equations
2. solve_volterra - Heun predictor-corrector on the memory-kernel equation for
   the amplitudes, with reconstruct_modes recovering the mode functions
3. oracle_expm - exact propagation of the sector Hamiltonian by Hermitian
   eigendecomposition, the reference the other two are checked against

SectorSolver holds one model and keeps what is shared between runs: the RK4
right-hand side, memory-kernel tables per internal grid and the
eigendecomposition. The module-level functions wrap a fresh solver.

All steps are fixed-size; the system is linear with a known spectral radius.
"""

import logging
import math
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from app.core.config import get_settings
from app.core.exceptions import ModelError, NumericalError
from app.schemas.dynamics import SectorState, SolverKind, Trajectory
from app.schemas.model import InitialState, Model
from app.services.kernel_service import inhomogeneity, memory_kernel

logger = logging.getLogger(__name__)

_GRID_TOLERANCE = 1e-9


class SectorSolver:
    """Time evolution of one model in the single-excitation sector."""

    def __init__(self, model: Model):
        self.model = model
        self._rhs: Optional[Callable[[np.ndarray], np.ndarray]] = None
        self._spectrum: Optional[Tuple[np.ndarray, np.ndarray]] = None
        self._kernels: Dict[Tuple[int, float], np.ndarray] = {}

    @property
    def rhs(self) -> Callable[[np.ndarray], np.ndarray]:
        if self._rhs is None:
            self._rhs = _sector_rhs(self.model)
        return self._rhs

    @property
    def spectrum(self) -> Tuple[np.ndarray, np.ndarray]:
        """Eigenvalues and eigenvectors of the sector Hamiltonian, computed once."""
        if self._spectrum is None:
            dim = self.model.d * (1 + self.model.n_modes)
            limit = get_settings().MAX_ORACLE_DIMENSION
            if dim > limit:
                raise NumericalError(f"oracle dimension {dim} exceeds the dense-matrix guard {limit}")
            self._spectrum = linalg.eigh(self.hamiltonian())
            logger.debug(f"Diagonalized sector Hamiltonian of dimension {dim}")
        return self._spectrum

    def kernel_on(self, grid: np.ndarray) -> np.ndarray:
        """M on a uniform internal grid, cached by (size, end time)."""
        key = (int(grid.size), float(grid[-1]))
        if key not in self._kernels:
            self._kernels[key] = memory_kernel(self.model, grid).M_values
        return self._kernels[key]

    def direct(self, initial: InitialState, times: Sequence[float], dt: float) -> Trajectory:
        """
        Integrate the coupled equations

            dc_k/dt = -i eps_k c_k - i sum_l (f_lk, g^l)
            dg^l/dt = -i (eps_l + omega) g^l - i sum_n f_ln c_n

        with classical RK4 on the full (d + d*N)-dimensional state.

        Args:
            initial: Validated initial state
            times: Non-negative, strictly increasing output times
            dt: Maximum internal step; each output interval is split into equal substeps

        Returns:
            Trajectory: Amplitudes, mode functions and norms at the output times

        Raises:
            NumericalError: On step-size violation or a non-finite state
        """
        model = self.model
        times = _check_times(times)
        check_step_size(model, dt)
        _check_state_shape(model, initial)
        d, n_modes = model.d, model.n_modes

        rhs = self.rhs
        y = np.concatenate([initial.c0, initial.g0.ravel()])

        c_out = np.empty((times.size, d), dtype=complex)
        g_out = np.empty((times.size, d, n_modes), dtype=complex)
        norms = np.empty(times.size)
        t_now, n_steps = 0.0, 0
        for i, target in enumerate(times):
            span = target - t_now
            if span > 0:
                n_sub = max(1, math.ceil(span / dt - _GRID_TOLERANCE))
                h = span / n_sub
                for _ in range(n_sub):
                    y = _rk4_step(y, rhs, h)
                n_steps += n_sub
                t_now = target
            if not np.all(np.isfinite(y)):
                raise NumericalError(f"direct solver produced a non-finite state at t={target:.6g}")
            c_out[i] = y[:d]
            g_out[i] = y[d:].reshape(d, n_modes)
            norms[i] = model.state_norm(c_out[i], g_out[i])

        trajectory = Trajectory(
            times=times, c=c_out, g=g_out, solver=SolverKind.DIRECT, dt=dt, n_steps=n_steps, norms=norms
        )
        logger.info(f"Direct solve: {n_steps} RK4 steps to t={times[-1]:.6g}, norm drift {trajectory.norm_drift:.3e}")
        return trajectory

    def volterra(self, initial: InitialState, times: Sequence[float], dt: float) -> Trajectory:
        """
        Solve the closed amplitude equation

            dc_k/dt = -i eps_k c_k - int_0^t ds sum_l M_kl(t - s) c_l(s) + G_k(t)

        on a uniform internal grid with a Heun predictor-corrector and a composite
        trapezoid memory sum. Output times off the grid are interpolated linearly.

        Args:
            initial: Validated initial state
            times: Non-negative, strictly increasing output times
            dt: Maximum internal step (the grid step is T / ceil(T / dt))

        Returns:
            Trajectory: Amplitudes only
        """
        times = _check_times(times)
        check_step_size(self.model, dt)
        _check_state_shape(self.model, initial)

        grid = uniform_times(float(times[-1]), dt)
        h = float(grid[1] - grid[0]) if grid.size > 1 else dt
        c = self._volterra_grid(initial, grid)
        if not np.all(np.isfinite(c)):
            raise NumericalError("volterra solver produced a non-finite amplitude")

        sampled = _sample_on_grid(grid, c, times)
        logger.info(f"Volterra solve: {grid.size - 1} steps of {h:.3g} to t={times[-1]:.6g}")
        return Trajectory(times=times, c=sampled, solver=SolverKind.VOLTERRA, dt=h, n_steps=grid.size - 1)

    def volterra_with_modes(self, initial: InitialState, times: Sequence[float], dt: float) -> Trajectory:
        """
        volterra on the full internal grid, then mode_history at the output
        times, so the result carries g and norms like the other paths.
        """
        model = self.model
        times = _check_times(times)
        fine = self.volterra(initial, uniform_times(float(times[-1]), dt), dt)
        c = _sample_on_grid(fine.times, fine.c, times)
        g = self.mode_history(initial, fine, times)
        norms = np.array([model.state_norm(c[i], g[i]) for i in range(times.size)])
        trajectory = Trajectory(
            times=times, c=c, g=g, solver=SolverKind.VOLTERRA, dt=fine.dt, n_steps=fine.n_steps, norms=norms
        )
        logger.debug(f"Reconstructed modes at {times.size} times, norm drift {trajectory.norm_drift:.3e}")
        return trajectory

    def mode_history(self, initial: InitialState, amplitude_history: Trajectory,
                     targets: Sequence[float]) -> np.ndarray:
        """
        Mode functions from the amplitude history at several increasing times:

            g_t^m = exp(-i t (eps_m + omega)) g_0^m
                    - i int_0^t ds exp(-i (t - s)(eps_m + omega)) sum_n f_mn c_n(s)

        The history integral uses the trapezoid rule on the history's own grid,
        with a partial step for targets between grid points.

        Returns:
            np.ndarray: g at every target, shape (len(targets), d, N)

        Raises:
            NumericalError: If the history does not cover [0, max(targets)]
        """
        model = self.model
        s, c = amplitude_history.times, amplitude_history.c
        targets = np.atleast_1d(np.asarray(targets, dtype=float))
        if np.any(np.diff(targets) < 0):
            raise NumericalError("reconstruction targets must be non-decreasing")
        if abs(s[0]) > _GRID_TOLERANCE or targets[0] < 0 or targets[-1] > s[-1] + _GRID_TOLERANCE:
            raise NumericalError(
                f"amplitude history covers [{s[0]:.6g}, {s[-1]:.6g}], cannot reconstruct up to t={targets[-1]:.6g}"
            )

        f = model.formfactors.values
        omega = model.shifted_frequencies
        out = np.empty((targets.size, model.d, model.n_modes), dtype=complex)

        def source(cs):
            return np.einsum("mjn,j->mn", f, cs)

        integral = np.zeros_like(omega, dtype=complex)
        f_prev = source(c[0])
        k = 0
        for i, target in enumerate(targets):
            while k + 1 < s.size and s[k + 1] <= target + _GRID_TOLERANCE:
                h = s[k + 1] - s[k]
                rotation = np.exp(-1j * h * omega)
                f_next = source(c[k + 1])
                integral = rotation * integral + 0.5 * h * (rotation * f_prev + f_next)
                f_prev = f_next
                k += 1
            partial = integral
            h = target - s[k]
            if h > _GRID_TOLERANCE:
                frac = h / (s[k + 1] - s[k])
                c_mid = (1.0 - frac) * c[k] + frac * c[k + 1]
                rotation = np.exp(-1j * h * omega)
                partial = rotation * integral + 0.5 * h * (rotation * f_prev + source(c_mid))
            out[i] = np.exp(-1j * target * omega) * initial.g0 - 1j * partial
        return out

    def hamiltonian(self) -> np.ndarray:
        """
        Hermitian matrix of the projected Hamiltonian on {|i, Omega>} + {|i, 1_n>}.

        One-boson states carry sqrt(w_n) so that the discrete dynamics matches the
        weighted inner products exactly. Ordering: the d vacuum states, then
        level-major blocks of N one-boson states.
        """
        model = self.model
        d, n_modes = model.d, model.n_modes
        dim = d * (1 + n_modes)
        ham = np.zeros((dim, dim), dtype=complex)
        ham[np.arange(d), np.arange(d)] = model.system.energies
        boson = d + np.arange(d * n_modes)
        ham[boson, boson] = model.shifted_frequencies.ravel()
        # <l, 1_n| V |j, Omega> = sqrt(w_n) f_lj(n)
        coupling = (model.formfactors.values * np.sqrt(model.reservoir.weights)).transpose(0, 2, 1).reshape(d * n_modes, d)
        ham[d:, :d] = coupling
        ham[:d, d:] = coupling.conj().T
        return ham

    def propagator(self, t: float) -> np.ndarray:
        """exp(-i H t) of the sector Hamiltonian."""
        energies, vectors = self.spectrum
        return (vectors * np.exp(-1j * energies * t)) @ vectors.conj().T

    def exact(self, initial: InitialState, times: Sequence[float]) -> Trajectory:
        """Exact states at several times from the cached eigendecomposition."""
        model = self.model
        times = _check_times(times)
        _check_state_shape(model, initial)
        d, n_modes = model.d, model.n_modes
        sqrt_w = np.sqrt(model.reservoir.weights)

        energies, vectors = self.spectrum
        psi0 = np.concatenate([initial.c0, (initial.g0 * sqrt_w).ravel()])
        coefficients = vectors.conj().T @ psi0
        psi = (np.exp(-1j * np.outer(times, energies)) * coefficients) @ vectors.T

        c = psi[:, :d]
        g = psi[:, d:].reshape(times.size, d, n_modes) / sqrt_w
        norms = np.array([model.state_norm(c[i], g[i]) for i in range(times.size)])
        return Trajectory(times=times, c=c, g=g, solver=SolverKind.ORACLE, dt=0.0, norms=norms)

    def _volterra_grid(self, initial: InitialState, grid: np.ndarray) -> np.ndarray:
        """Heun predictor-corrector with trapezoid memory on a uniform grid."""
        d = self.model.d
        eps = self.model.system.energies
        c = np.zeros((grid.size, d), dtype=complex)
        c[0] = initial.c0
        if grid.size == 1:
            return c

        h = grid[1] - grid[0]
        kernel = self.kernel_on(grid)
        drive = inhomogeneity(self.model, initial, grid).G_values
        half_m0 = 0.5 * h * kernel[0]

        def slope(j, cj, history):
            memory = history + half_m0 @ cj if j > 0 else 0.0
            return -1j * eps * cj - memory + drive[j]

        history = np.zeros(d, dtype=complex)
        for j in range(grid.size - 1):
            f_now = slope(j, c[j], history)
            predicted = c[j] + h * f_now
            # h * [M(t_{j+1}) c_0 / 2 + sum_{i=1..j} M(t_{j+1} - t_i) c_i]
            history = h * (0.5 * kernel[j + 1] @ c[0] + np.einsum("ikl,il->k", kernel[j:0:-1], c[1:j + 1]))
            f_next = slope(j + 1, predicted, history)
            c[j + 1] = c[j] + 0.5 * h * (f_now + f_next)
        return c


def uniform_times(T: float, dt: float) -> np.ndarray:
    """The grid 0, h, 2h, ..., T with h = T / ceil(T / dt)."""
    if dt <= 0:
        raise NumericalError("dt must be positive")
    if T <= 0:
        return np.array([0.0])
    n = max(1, math.ceil(T / dt - _GRID_TOLERANCE))
    return np.linspace(0.0, T, n + 1)


def check_step_size(model: Model, dt: float) -> float:
    """
    Ratio dt * max|eps_m + omega_n| against the fastest free frequency.

    Returns:
        float: The ratio

    Raises:
        NumericalError: If dt is not positive or the ratio exceeds STEP_ERROR_RATIO
    """
    settings = get_settings()
    if not dt > 0:
        raise NumericalError(f"dt must be positive, got {dt}")
    fastest = max(float(np.max(np.abs(model.shifted_frequencies))), float(np.max(np.abs(model.system.energies))))
    ratio = dt * fastest
    if ratio > settings.STEP_ERROR_RATIO:
        raise NumericalError(
            f"dt={dt:.3g} does not resolve the fastest frequency {fastest:.3g} "
            f"(dt*omega_max={ratio:.3g} > {settings.STEP_ERROR_RATIO})"
        )
    if ratio > settings.STEP_WARN_RATIO:
        logger.warning(f"dt*omega_max={ratio:.3g} exceeds {settings.STEP_WARN_RATIO}; accuracy may suffer")
    return ratio


def solve_direct(model: Model, initial: InitialState, times: Sequence[float], dt: float) -> Trajectory:
    """RK4 on the full sector state, see SectorSolver.direct."""
    return SectorSolver(model).direct(initial, times, dt)


def solve_volterra(model: Model, initial: InitialState, times: Sequence[float], dt: float) -> Trajectory:
    """Amplitude-only memory-kernel solve, see SectorSolver.volterra."""
    return SectorSolver(model).volterra(initial, times, dt)


def solve_volterra_with_modes(model: Model, initial: InitialState, times: Sequence[float], dt: float) -> Trajectory:
    return SectorSolver(model).volterra_with_modes(initial, times, dt)


def reconstruct_modes(model: Model, initial: InitialState, amplitude_history: Trajectory, t: float) -> np.ndarray:
    """
    Mode functions g_t from an amplitude history sampled from s = 0.

    Args:
        model: The model
        initial: The initial state supplying g_0
        amplitude_history: Amplitudes c(s) on a fine grid
        t: Evaluation time

    Returns:
        np.ndarray: g_t, shape (d, N)

    Raises:
        NumericalError: If the history does not cover [0, t]
    """
    return SectorSolver(model).mode_history(initial, amplitude_history, [t])[0]


def mode_history(model: Model, initial: InitialState, amplitude_history: Trajectory,
                 targets: Sequence[float]) -> np.ndarray:
    return SectorSolver(model).mode_history(initial, amplitude_history, targets)


def sector_hamiltonian(model: Model) -> np.ndarray:
    return SectorSolver(model).hamiltonian()


def oracle_propagator(model: Model, t: float) -> np.ndarray:
    return SectorSolver(model).propagator(t)


def oracle_expm(model: Model, initial: InitialState, t: float) -> SectorState:
    """
    Exact state at time t via the eigendecomposition of the sector Hamiltonian.

    Raises:
        NumericalError: If d * (1 + N) exceeds Settings.MAX_ORACLE_DIMENSION
    """
    return SectorSolver(model).exact(initial, [t]).state(0)


def oracle_trajectory(model: Model, initial: InitialState, times: Sequence[float]) -> Trajectory:
    """oracle_expm at several times, sharing one diagonalization."""
    return SectorSolver(model).exact(initial, times)


def _sample_on_grid(grid: np.ndarray, values: np.ndarray, times: np.ndarray) -> np.ndarray:
    if grid.size == 1:
        return np.repeat(values[:1], times.size, axis=0)
    h = grid[1] - grid[0]
    position = times / h
    index = np.rint(position).astype(int)
    out = np.empty((times.size,) + values.shape[1:], dtype=values.dtype)
    for i, (pos, j) in enumerate(zip(position, index)):
        if abs(pos - j) < _GRID_TOLERANCE * max(1.0, pos):
            out[i] = values[min(j, grid.size - 1)]
        else:
            lo = min(int(np.floor(pos)), grid.size - 2)
            frac = pos - lo
            out[i] = (1.0 - frac) * values[lo] + frac * values[lo + 1]
    return out


def _sector_rhs(model: Model) -> Callable[[np.ndarray], np.ndarray]:
    d, n_modes = model.d, model.n_modes
    eps = model.system.energies
    omega = model.shifted_frequencies
    f = model.formfactors.values
    f_weighted_conj = np.conj(f) * model.reservoir.weights

    def rhs(y: np.ndarray) -> np.ndarray:
        c = y[:d]
        g = y[d:].reshape(d, n_modes)
        dc = -1j * eps * c - 1j * np.einsum("lkn,ln->k", f_weighted_conj, g)
        dg = -1j * omega * g - 1j * np.einsum("ljn,j->ln", f, c)
        return np.concatenate([dc, dg.ravel()])

    return rhs


def _rk4_step(y: np.ndarray, rhs: Callable[[np.ndarray], np.ndarray], h: float) -> np.ndarray:
    """Runge-Kutta 4 integrator for a single time step."""
    h2 = 0.5 * h
    k1 = rhs(y)
    k2 = rhs(y + h2 * k1)
    k3 = rhs(y + h2 * k2)
    k4 = rhs(y + h * k3)
    return y + (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0)


def _check_times(times: Sequence[float]) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(times, dtype=float))
    if arr.size == 0:
        raise NumericalError("at least one output time is required")
    if not np.all(np.isfinite(arr)) or arr[0] < 0 or np.any(np.diff(arr) <= 0):
        raise NumericalError("output times must be finite, non-negative and strictly increasing")
    return arr


def _check_state_shape(model: Model, initial: InitialState) -> None:
    if initial.c0.size != model.d or initial.g0.shape != (model.d, model.n_modes):
        raise ModelError(
            f"initial state shape ({initial.c0.size}, {initial.g0.shape}) does not match model d={model.d}, N={model.n_modes}"
        )
