"""
Model Builder Service

Turns a problem description into validated, immutable model objects:
- build_model: assembles system, reservoir grid and form factors into a Model
- discretize_spectral_family: draws a mode grid and coupling vector from a spectral density
- sample_form_factor: evaluates a family on an existing grid (several channels, one reservoir)
- validate_initial_state: enforces the normalization of the initial wave function

Building a Model commits to the single-excitation sector: only the projected
interaction is ever represented, through the form factors sampled on the grid.
"""

import logging
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError
from scipy import special
from scipy.integrate import trapezoid

from app.core.config import get_settings
from app.core.exceptions import InitialStateError, ModelError
from app.schemas.model import (
    FormFactorSet,
    InitialState,
    Model,
    QuadratureScheme,
    ReservoirGrid,
    SpectralFamily,
    SpectralKind,
    SystemSpec,
)

logger = logging.getLogger(__name__)


def build_model(system: SystemSpec, reservoir: ReservoirGrid, ff: FormFactorSet) -> Model:
    """
    Assemble a validated Model. No numerical work is done here.

    Args:
        system: Level energies
        reservoir: Mode grid with quadrature weights
        ff: Form factors sampled on the grid

    Returns:
        Model: The validated problem definition

    Raises:
        ModelError: If the dimensions of the parts disagree
    """
    try:
        model = Model(system=system, reservoir=reservoir, formfactors=ff)
    except ValidationError as e:
        raise ModelError(f"Invalid model: {_first_error(e)}") from e
    logger.info(f"Built model with d={model.d}, N={model.n_modes}")
    return model


def make_model(energies: Sequence[float], frequencies: Sequence[float], weights: Sequence[float],
               formfactors: np.ndarray) -> Model:
    """
    Build a Model straight from arrays, validating every part.

    Raises:
        ModelError: On non-finite entries, non-positive weights or dimension mismatch
    """
    try:
        system = SystemSpec(energies=energies)
        reservoir = ReservoirGrid(frequencies=frequencies, weights=weights)
        ff = FormFactorSet(values=formfactors)
    except ValidationError as e:
        raise ModelError(f"Invalid model: {_first_error(e)}") from e
    return build_model(system, reservoir, ff)


def v_model_formfactors(d: int, couplings: Dict[int, np.ndarray], ground: int = 0) -> FormFactorSet:
    """
    Form factors of a V-model: only the transitions ground -> i listed in ``couplings`` are allowed.

    Args:
        d: Number of levels
        couplings: Map from excited level i to its form factor f_{i,ground} on the grid
        ground: Index of the common lower level

    Returns:
        FormFactorSet: Zero everywhere except f[i, ground] for the listed levels
    """
    if not couplings:
        raise ModelError("V-model needs at least one coupled level")
    n_modes = {np.asarray(v).size for v in couplings.values()}
    if len(n_modes) != 1:
        raise ModelError("all V-model couplings must be sampled on the same grid")
    values = np.zeros((d, d, n_modes.pop()), dtype=complex)
    for level, coupling in couplings.items():
        if not 0 <= level < d or level == ground:
            raise ModelError(f"level {level} cannot couple to ground level {ground}")
        values[level, ground] = np.asarray(coupling, dtype=complex)
    return FormFactorSet(values=values)


def discretize_spectral_family(
    fam: SpectralFamily,
    n_modes: int,
    scheme: Union[QuadratureScheme, str] = QuadratureScheme.GAUSS_LEGENDRE,
    mass_threshold: Optional[float] = None,
    renormalize: bool = True,
) -> Tuple[ReservoirGrid, np.ndarray]:
    """
    Discretize a spectral density into reservoir modes.

    Smooth families are sampled in their cumulative-mass variable, so nodes
    crowd where J carries weight; tabulated families are sampled linearly in
    frequency. After truncation the couplings are rescaled so that
    sum_n w_n |g_n|^2 equals the total weight of J.

    Args:
        fam: The spectral family
        n_modes: Number of modes (ignored for a single tabulated point)
        scheme: Quadrature rule on the sampling interval
        mass_threshold: Retained fraction of the total weight; defaults to the family's
            own threshold, then to the settings
        renormalize: Restore the total weight lost to truncation

    Returns:
        Tuple[ReservoirGrid, np.ndarray]: The grid and the real coupling vector g_n

    Raises:
        ModelError: On n_modes < 1, unbounded support without cutoff or zero total weight
    """
    if n_modes < 1:
        raise ModelError("n_modes must be at least 1")
    scheme = QuadratureScheme(scheme)

    if fam.kind == SpectralKind.TABULATED and len(fam.frequencies) == 1:
        strength = float(fam.values[0])
        if strength <= 0.0:
            raise ModelError("tabulated family has zero total weight")
        grid = ReservoirGrid(frequencies=[fam.frequencies[0]], weights=[1.0])
        return grid, _readonly(np.array([np.sqrt(strength)]))

    x, v = _reference_rule(n_modes, scheme)

    if fam.kind == SpectralKind.TABULATED:
        lo, hi = fam.support if fam.support is not None else (fam.frequencies[0], fam.frequencies[-1])
        total = _tabulated_integral(fam, lo, hi)
        if total <= 0.0:
            raise ModelError("tabulated family has zero total weight")
        frequencies = lo + 0.5 * (x + 1.0) * (hi - lo)
        weights = 0.5 * (hi - lo) * v
        coupling = np.sqrt(spectral_density(fam, frequencies))
    else:
        total = spectral_total(fam)
        u_lo, u_hi = _mass_window(fam, mass_threshold)
        u = u_lo + 0.5 * (x + 1.0) * (u_hi - u_lo)
        frequencies = _quantile(fam, u)
        density = spectral_density(fam, frequencies)
        if np.any(density <= 0.0):
            raise ModelError(f"{fam.kind.value} density vanishes inside the sampling window")
        # d(omega)/du = total / J(omega) on the cumulative-mass scale
        weights = 0.5 * (u_hi - u_lo) * v * total / density
        coupling = np.sqrt(density)

    discrete = float(np.sum(weights * coupling ** 2))
    if discrete <= 0.0:
        raise ModelError(f"{fam.kind.value} family has zero weight on the sampling interval")
    if renormalize:
        coupling = coupling * np.sqrt(total / discrete)

    try:
        grid = ReservoirGrid(frequencies=frequencies, weights=weights)
    except ValidationError as e:
        raise ModelError(f"Discretization produced an invalid grid: {_first_error(e)}") from e

    logger.debug(
        f"Discretized {fam.kind.value} into {n_modes} modes on "
        f"[{frequencies[0]:.6g}, {frequencies[-1]:.6g}] ({scheme.value})"
    )
    return grid, _readonly(coupling)


def sample_form_factor(fam: SpectralFamily, grid: ReservoirGrid) -> np.ndarray:
    """
    Form factor sqrt(J(omega_n)) of a family on an existing grid.

    A single tabulated point is a line: all its weight goes to the closest
    mode, with coupling sqrt(J / w_n).
    """
    if fam.kind == SpectralKind.TABULATED and len(fam.frequencies) == 1:
        out = np.zeros(grid.n_modes)
        n = int(np.argmin(np.abs(grid.frequencies - fam.frequencies[0])))
        out[n] = np.sqrt(fam.values[0] / grid.weights[n])
        return _readonly(out.astype(complex))
    return _readonly(np.sqrt(spectral_density(fam, grid.frequencies)).astype(complex))


def validate_initial_state(model: Model, state: InitialState, tolerance: Optional[float] = None) -> InitialState:
    """
    Check the normalization sum_i |c_i(0)|^2 + sum_i (g_0^i, g_0^i) = 1.

    Deviations below ``tolerance`` are treated as rounding and rescaled away;
    larger ones signal a construction bug and are rejected.

    Args:
        model: The model the state belongs to
        state: The candidate initial state
        tolerance: Accepted |norm - 1|, default Settings.NORM_TOLERANCE

    Returns:
        InitialState: The normalized state, carrying the applied rescale factor

    Raises:
        ModelError: If the state dimensions do not match the model
        InitialStateError: On zero norm or a deviation above tolerance
    """
    tolerance = get_settings().NORM_TOLERANCE if tolerance is None else tolerance
    if state.c0.size != model.d or state.g0.shape != (model.d, model.n_modes):
        raise ModelError(
            f"initial state has c0 length {state.c0.size} and g0 shape {state.g0.shape}, "
            f"model needs {model.d} and {(model.d, model.n_modes)}"
        )

    norm = model.state_norm(state.c0, state.g0)
    if norm == 0.0:
        raise InitialStateError("initial state has zero norm")
    deviation = abs(norm - 1.0)
    if deviation > tolerance:
        raise InitialStateError(
            f"initial state norm {norm:.12g} deviates from 1 by {deviation:.3g} (tolerance {tolerance:.1g})"
        )

    factor = 1.0 / np.sqrt(norm)
    if factor != 1.0:
        logger.warning(f"Rescaled initial state by {factor:.17g} (norm defect {deviation:.3g})")
    return InitialState(c0=state.c0 * factor, g0=state.g0 * factor, rescale_factor=state.rescale_factor * factor)


def spectral_density(fam: SpectralFamily, omega: np.ndarray) -> np.ndarray:
    """J(omega) for the family, zero outside its natural domain."""
    omega = np.asarray(omega, dtype=float)
    if fam.kind == SpectralKind.LORENTZIAN:
        return fam.strength / np.pi * fam.width / ((omega - fam.center) ** 2 + fam.width ** 2)
    if fam.kind == SpectralKind.GAUSSIAN:
        z = (omega - fam.center) / fam.width
        return fam.strength / (np.sqrt(2.0 * np.pi) * fam.width) * np.exp(-0.5 * z ** 2)
    if fam.kind == SpectralKind.OHMIC_EXPCUTOFF:
        positive = np.clip(omega, 0.0, None)
        return np.where(omega >= 0.0, fam.alpha * positive * np.exp(-positive / fam.cutoff), 0.0)
    return np.interp(omega, fam.frequencies, fam.values, left=0.0, right=0.0)


def spectral_total(fam: SpectralFamily) -> float:
    """Closed-form integral of J over the real line."""
    if fam.kind in (SpectralKind.LORENTZIAN, SpectralKind.GAUSSIAN):
        return float(fam.strength)
    if fam.kind == SpectralKind.OHMIC_EXPCUTOFF:
        return float(fam.alpha * fam.cutoff ** 2)
    if len(fam.frequencies) == 1:
        return float(fam.values[0])
    return _tabulated_integral(fam, fam.frequencies[0], fam.frequencies[-1])


def _mass_window(fam: SpectralFamily, mass_threshold: Optional[float]) -> Tuple[float, float]:
    if fam.support is not None:
        lo, hi = fam.support
        u_lo, u_hi = float(_cdf(fam, lo)), float(_cdf(fam, hi))
        if u_hi <= u_lo:
            raise ModelError(f"support {fam.support} carries no spectral weight")
        return u_lo, u_hi

    threshold = mass_threshold
    if threshold is None:
        threshold = fam.mass_threshold if fam.mass_threshold is not None else get_settings().DEFAULT_MASS_THRESHOLD
    if not 0.0 < threshold < 1.0:
        raise ModelError(f"{fam.kind.value} family has unbounded support; set a mass threshold below 1 or a support")
    if fam.kind == SpectralKind.OHMIC_EXPCUTOFF:
        return 0.0, threshold
    return 0.5 * (1.0 - threshold), 0.5 * (1.0 + threshold)


def _cdf(fam: SpectralFamily, omega: float) -> float:
    """Fraction of the total weight below omega."""
    if fam.kind == SpectralKind.LORENTZIAN:
        return 0.5 + np.arctan((omega - fam.center) / fam.width) / np.pi
    if fam.kind == SpectralKind.GAUSSIAN:
        return special.ndtr((omega - fam.center) / fam.width)
    return special.gammainc(2.0, max(omega, 0.0) / fam.cutoff)


def _quantile(fam: SpectralFamily, u: np.ndarray) -> np.ndarray:
    if fam.kind == SpectralKind.LORENTZIAN:
        return fam.center + fam.width * np.tan(np.pi * (u - 0.5))
    if fam.kind == SpectralKind.GAUSSIAN:
        return fam.center + fam.width * special.ndtri(u)
    return fam.cutoff * special.gammaincinv(2.0, u)


def _tabulated_integral(fam: SpectralFamily, lo: float, hi: float) -> float:
    """Exact integral of the piecewise-linear interpolant over [lo, hi]."""
    table = np.asarray(fam.frequencies, dtype=float)
    knots = np.concatenate(([lo], table[(table > lo) & (table < hi)], [hi]))
    return float(trapezoid(spectral_density(fam, knots), knots))


def _reference_rule(n: int, scheme: QuadratureScheme) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [-1, 1], nodes ascending."""
    if scheme == QuadratureScheme.GAUSS_LEGENDRE:
        return np.polynomial.legendre.leggauss(n)
    x = -1.0 + (2.0 * np.arange(n) + 1.0) / n
    return x, np.full(n, 2.0 / n)


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


def _first_error(e: ValidationError) -> str:
    err = e.errors()[0]
    loc = ".".join(str(part) for part in err.get("loc", ()))
    return f"{loc}: {err.get('msg')}" if loc else str(err.get("msg"))
