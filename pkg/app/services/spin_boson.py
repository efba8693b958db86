"""
Spin-Boson Service

The two-level system with resonant (f) and anti-resonant (h) coupling as a
specialization of the generic engine. The dynamics splits into two blocks,
(c_0, g^1) driven by h and (c_1, g^0) driven by f, so each block carries a
conserved weight:

    p0 = |c_0|^2 + (g^1, g^1)        p1 = |c_1|^2 + (g^0, g^0)

Sector equations, consistent with the generic amplitude equation:

    dc_0/dt = -int_0^t m0(t - s) c_0(s) ds + n0(t)
    dc_1/dt = -i omega c_1 - int_0^t m1(t - s) c_1(s) ds + n1(t)
"""

import logging
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from app.core.exceptions import ModelError
from app.schemas.dynamics import Trajectory
from app.schemas.model import FormFactorSet, InitialState, Model, ReservoirGrid, SpectralFamily, SystemSpec
from app.schemas.spinboson import (
    AsymptoticReport,
    EquilibriumReport,
    RWARecoveryReport,
    SpinBosonConfig,
    SpinBosonKernels,
)
from app.services.model_builder import build_model, sample_form_factor
from app.services.solver_service import solve_direct

logger = logging.getLogger(__name__)

_HALF_LIFE_SAMPLES = 4001
_POPULATED = 1e-14


def build_spinboson(cfg: SpinBosonConfig) -> Model:
    """Generic model with eps = (0, omega), f_01 = f, f_10 = h."""
    values = np.zeros((2, 2, cfg.reservoir.n_modes), dtype=complex)
    values[0, 1] = cfg.f
    values[1, 0] = cfg.h
    return build_model(SystemSpec(energies=[0.0, cfg.omega]), cfg.reservoir, FormFactorSet(values=values))


def spinboson_from_families(omega: float, reservoir: ReservoirGrid, f_family: Optional[SpectralFamily],
                            h_family: Optional[SpectralFamily] = None) -> SpinBosonConfig:
    """Sample both channels on one grid; a missing family is a zero channel."""
    zero = np.zeros(reservoir.n_modes, dtype=complex)
    f = sample_form_factor(f_family, reservoir) if f_family is not None else zero
    h = sample_form_factor(h_family, reservoir) if h_family is not None else zero
    return SpinBosonConfig(omega=omega, reservoir=reservoir, f=f, h=h)


def spinboson_config(model: Model) -> SpinBosonConfig:
    """
    Read a generic model back as a spin-boson configuration.

    Raises:
        ModelError: If the model is not two-level with only f_01 and f_10 coupled
    """
    if not is_spinboson(model):
        raise ModelError("model is not of spin-boson shape (d=2, eps_0=0, f_00=f_11=0)")
    values = model.formfactors.values
    return SpinBosonConfig(
        omega=float(model.system.energies[1]), reservoir=model.reservoir, f=values[0, 1], h=values[1, 0]
    )


def is_spinboson(model: Model) -> bool:
    values = model.formfactors.values
    return (
        model.d == 2
        and model.system.energies[0] == 0.0
        and not np.any(values[0, 0])
        and not np.any(values[1, 1])
    )


def constants_of_motion(model: Model, trajectory: Trajectory) -> Tuple[np.ndarray, np.ndarray]:
    """
    p0(t) and p1(t) along a trajectory with mode data.

    Raises:
        ModelError: For a non spin-boson model or a trajectory without modes
    """
    if not is_spinboson(model):
        raise ModelError("constants of motion need a spin-boson shaped model")
    return sector_weights(model, trajectory)


def sector_weights(model: Model, trajectory: Trajectory) -> Tuple[np.ndarray, np.ndarray]:
    """
    p0 = |c_0|^2 + (g^1, g^1) and p1 = |c_1|^2 + (g^0, g^0) for any two-level
    model. They sum to the norm; each is conserved only for the spin-boson shape.
    """
    if model.d != 2:
        raise ModelError(f"sector weights need a two-level model, got d={model.d}")
    if not trajectory.has_modes:
        raise ModelError(f"{trajectory.solver.value} trajectory has no mode functions")
    c, g = trajectory.c, trajectory.g
    norm2 = model.reservoir.norm2(g)
    p0 = np.abs(c[:, 0]) ** 2 + norm2[:, 1]
    p1 = np.abs(c[:, 1]) ** 2 + norm2[:, 0]
    return p0, p1


def spinboson_kernels(cfg: SpinBosonConfig, times: Sequence[float],
                      initial: Optional[InitialState] = None) -> SpinBosonKernels:
    """
    m0(t) = sum_n w_n |h_n|^2 exp(-i t (omega + omega_n))
    m1(t) = sum_n w_n |f_n|^2 exp(-i t omega_n)
    n0(t) = -i sum_n w_n conj(h_n) g_0^1(n) exp(-i t (omega + omega_n))
    n1(t) = -i sum_n w_n conj(f_n) g_0^0(n) exp(-i t omega_n)

    Without an initial state both drives vanish.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    w, freqs = cfg.reservoir.weights, cfg.reservoir.frequencies
    upper = np.exp(-1j * np.outer(times, cfg.omega + freqs))
    lower = np.exp(-1j * np.outer(times, freqs))

    m0 = upper @ (w * np.abs(cfg.h) ** 2)
    m1 = lower @ (w * np.abs(cfg.f) ** 2)
    if initial is None:
        n0 = n1 = np.zeros(times.size, dtype=complex)
    else:
        if initial.g0.shape != (2, cfg.reservoir.n_modes):
            raise ModelError(f"initial g0 of shape {initial.g0.shape} does not fit the spin-boson grid")
        n0 = -1j * (upper @ (w * np.conj(cfg.h) * initial.g0[1]))
        n1 = -1j * (lower @ (w * np.conj(cfg.f) * initial.g0[0]))
    return SpinBosonKernels(times=times, m0=m0, m1=m1, n0=n0, n1=n1)


def asymptotic_population(model: Model, initial: InitialState) -> AsymptoticReport:
    """
    Long-time limit |c_1(0)|^2 + (g_0^0, g_0^0) of rho_00, valid when both
    amplitudes decay.

    A finite grid returns energy after about 2 pi / (mode spacing), so the
    limit is only observable if the populated sectors' kernels lose half their
    weight well before that (five half-lives inside the recurrence time).
    """
    cfg = spinboson_config(model)
    grid = model.reservoir
    norm2 = grid.norm2(initial.g0)
    predicted = float(np.abs(initial.c0[1]) ** 2 + norm2[0])

    spacing = np.diff(np.sort(grid.frequencies))
    spacing = spacing[spacing > 0]
    recurrence = float(2.0 * np.pi / np.median(spacing)) if spacing.size else np.inf

    p0 = float(np.abs(initial.c0[0]) ** 2 + norm2[1])
    p1 = float(np.abs(initial.c0[1]) ** 2 + norm2[0])
    horizon = recurrence if np.isfinite(recurrence) else 2.0 * np.pi * 100.0
    samples = np.linspace(0.0, horizon, _HALF_LIFE_SAMPLES)
    kernels = spinboson_kernels(cfg, samples)

    half_life = 0.0
    for weight, kernel in ((p0, kernels.m0), (p1, kernels.m1)):
        if weight > _POPULATED:
            half_life = max(half_life, _half_life(samples, kernel))

    approachable = bool(np.isfinite(half_life) and 5.0 * half_life < recurrence)
    if not approachable:
        logger.warning(
            f"Finite grid cannot settle: half-life {half_life:.3g}, recurrence time {recurrence:.3g}"
        )
    return AsymptoticReport(
        predicted_limit=predicted,
        kernel_half_life=half_life,
        recurrence_time=recurrence,
        approachable=approachable,
    )


def rwa_recovery_check(model: Model, initial: InitialState, trajectory: Trajectory,
                       tolerance: float = 1e-12) -> RWARecoveryReport:
    """
    Rotating-wave identities along a trajectory: with h = 0 and g_0^1 = 0,
    rho_00(t) = 1 - |c_1(t)|^2 and c_0 evolves by a phase only.

    Also reports max ||c_0(t)|^2 - |c_1(0)|^2|, which only vanishes for
    special initial data and is not part of the verdict.

    Raises:
        ModelError: If h or g_0^1 is non-zero
    """
    cfg = spinboson_config(model)
    if not cfg.is_rwa:
        raise ModelError("rotating-wave check needs h = 0")
    if np.any(initial.g0[1]):
        raise ModelError("rotating-wave check needs g_0^1 = 0")
    if not trajectory.has_modes:
        raise ModelError(f"{trajectory.solver.value} trajectory has no mode functions")

    c = trajectory.c
    rho00 = np.abs(c[:, 0]) ** 2 + model.reservoir.norm2(trajectory.g[:, 0])
    rho00_defect = float(np.max(np.abs(rho00 - (1.0 - np.abs(c[:, 1]) ** 2))))
    c0_defect = float(np.max(np.abs(np.abs(c[:, 0]) - np.abs(initial.c0[0]))))
    transfer_defect = float(np.max(np.abs(np.abs(c[:, 0]) ** 2 - np.abs(initial.c0[1]) ** 2)))
    passed = rho00_defect <= tolerance and c0_defect <= tolerance
    return RWARecoveryReport(
        rho00_defect=rho00_defect,
        c0_modulus_defect=c0_defect,
        transfer_identity_defect=transfer_defect,
        passed=passed,
    )


def inhomogeneous_response(A: Sequence[complex], n: Sequence[complex], c0: complex,
                           times: Sequence[float]) -> np.ndarray:
    """
    c(t) = A(t) c(0) + int_0^t A(t - s) n(s) ds on a uniform grid from 0.

    A is the homogeneous solution with A(0) = 1; the convolution uses the
    trapezoid rule on the same grid.
    """
    A = np.asarray(A, dtype=complex)
    n = np.asarray(n, dtype=complex)
    times = np.asarray(times, dtype=float)
    if not (A.shape == n.shape == times.shape):
        raise ModelError("A, n and times must share one grid")
    steps = np.diff(times)
    if times[0] != 0.0 or (steps.size and not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0)):
        raise ModelError("inhomogeneous response needs a uniform grid starting at 0")

    out = A * c0
    for i in range(1, times.size):
        out[i] += trapezoid(A[i::-1] * n[: i + 1], times[: i + 1])
    return out


def equilibrium_separation(model: Model, state_a: InitialState, state_b: InitialState,
                           T: float, dt: float) -> EquilibriumReport:
    """
    Run two initial conditions to T and compare rho_00(T) with the predicted
    limits. Distinct limits mean there is no common equilibrium state.
    """
    spinboson_config(model)
    predicted, observed = [], []
    for state in (state_a, state_b):
        predicted.append(asymptotic_population(model, state).predicted_limit)
        run = solve_direct(model, state, [T], dt)
        rho00 = float(np.abs(run.c[-1, 0]) ** 2 + model.reservoir.norm2(run.g[-1, 0]))
        observed.append(rho00)
    report = EquilibriumReport(horizon=T, predicted=tuple(predicted), observed=tuple(observed))
    logger.info(
        f"Equilibrium check at T={T:.6g}: predicted separation {report.predicted_separation:.4f}, "
        f"observed {report.observed_separation:.4f}"
    )
    return report


def _half_life(times: np.ndarray, kernel: np.ndarray) -> float:
    """First time |kernel| drops to half of |kernel(0)|; inf if it never does."""
    magnitude = np.abs(kernel)
    if magnitude[0] == 0.0:
        return np.inf
    below = np.nonzero(magnitude <= 0.5 * magnitude[0])[0]
    return float(times[below[0]]) if below.size else np.inf
