"""
Kernel Service

Memory layer of the single-excitation dynamics:
1. memory_kernel - M_kl(t), the reservoir correlation matrix of the Volterra equation
2. inhomogeneity - G_k(t), the drive from initial reservoir excitation
3. correlations - the a/b/c correlation functions needed for the reduced state
4. gram_positivity_check - positivity of the correlation functions over time samples
5. spectral_density_matrix - atomic spectral measure reproducing the correlations

All quantities are finite weighted mode sums, so they are exact on the grid.
Sums run over modes for each level m in ascending order of m.
"""

import logging
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from app.core.config import get_settings
from app.core.exceptions import NumericalError
from app.schemas.kernels import CorrelationSet, GramCheckReport, KernelTable, SpectralDensityMatrix
from app.schemas.model import InitialState, Model

logger = logging.getLogger(__name__)


def memory_kernel(model: Model, times: Sequence[float]) -> KernelTable:
    """
    M_kl(t) = sum_m sum_n w_n conj(f_mk(n)) f_ml(n) exp(-i t (eps_m + omega_n)).

    Args:
        model: The model
        times: Increasing sample times

    Returns:
        KernelTable: Table with M_values of shape (T, d, d)
    """
    times = _as_times(times)
    d, w, f = model.d, model.reservoir.weights, model.formfactors.values
    kernel = np.zeros((times.size, d * d), dtype=complex)
    for m in range(d):
        phase = np.exp(-1j * np.outer(times, model.shifted_frequencies[m]))
        pair = (np.conj(f[m])[:, None, :] * f[m][None, :, :] * w).reshape(d * d, -1)
        kernel += phase @ pair.T
    return KernelTable(times=times, M_values=kernel.reshape(times.size, d, d))


def inhomogeneity(model: Model, initial: InitialState, times: Sequence[float]) -> KernelTable:
    """
    G_k(t) = -i sum_m sum_n w_n conj(f_mk(n)) g_0^m(n) exp(-i t (eps_m + omega_n)).

    G vanishes identically for a factorized initial state.

    Returns:
        KernelTable: Table with G_values of shape (T, d)
    """
    times = _as_times(times)
    d, w, f = model.d, model.reservoir.weights, model.formfactors.values
    drive = np.zeros((times.size, d), dtype=complex)
    if not initial.is_factorized:
        for m in range(d):
            phase = np.exp(-1j * np.outer(times, model.shifted_frequencies[m]))
            drive += phase @ (np.conj(f[m]) * w * initial.g0[m]).T
        drive *= -1j
    return KernelTable(times=times, G_values=drive)


def kernel_table(model: Model, initial: InitialState, times: Sequence[float]) -> KernelTable:
    """Both M and G on one time grid."""
    m_part = memory_kernel(model, times)
    g_part = inhomogeneity(model, initial, times)
    return KernelTable(times=m_part.times, M_values=m_part.M_values, G_values=g_part.G_values)


def correlations(model: Model, initial: InitialState, times: Sequence[float]) -> CorrelationSet:
    """
    Tabulate the correlation functions

        a_{mn,pq}(t) = (f_mn, exp(-i omega t) f_pq)
        b_{mn,p}(t)  = (f_mn, exp(-i omega t) g_0^p)
        c_{p,q}(t)   = (g_0^p, exp(-i omega t) g_0^q)

    with weighted inner products and no level-energy shift.

    Args:
        model: The model
        initial: The initial state providing g_0
        times: Increasing sample times; negative times are allowed

    Returns:
        CorrelationSet: All three families on the grid
    """
    times = _as_times(times)
    a, b, c = _correlations_at(model, initial, times)
    return CorrelationSet(times=times, a=a, b=b, c=c)


def gram_positivity_check(
    corr: CorrelationSet,
    sample_times: Sequence[float],
    n_random_vectors: int = 16,
    model: Optional[Model] = None,
    initial: Optional[InitialState] = None,
    tolerance: Optional[float] = None,
    seed: int = 0,
) -> GramCheckReport:
    """
    Positivity of the correlation functions over a set of sample times.

    Builds the block Gram matrix over the indices (alpha, mn) and (alpha, r)
    with entries a, b, c evaluated at t_alpha - t_beta, and returns its
    smallest eigenvalue. When the model and initial state are given the
    correlation functions are re-evaluated exactly at the differences;
    otherwise the tables are interpolated linearly.

    Args:
        corr: Tabulated correlation functions
        sample_times: The times t_alpha
        n_random_vectors: Number of random vectors x for the quadratic form
        model: Optional model for exact evaluation
        initial: Initial state paired with ``model``
        tolerance: PSD tolerance, default Settings.PSD_TOLERANCE
        seed: Seed of the random vectors

    Returns:
        GramCheckReport: Minimum eigenvalue, minimum quadratic form and verdict

    Raises:
        NumericalError: If a time difference falls outside the tabulated range
    """
    tolerance = get_settings().PSD_TOLERANCE if tolerance is None else tolerance
    samples = np.asarray(sample_times, dtype=float)
    d = corr.d
    diffs = samples[:, None] - samples[None, :]

    if model is not None and initial is not None:
        a, b, c = _correlations_at(model, initial, diffs.ravel())
    else:
        a, b, c = _interpolate_correlations(corr, diffs.ravel())

    n_s, dd = samples.size, d * d
    a = a.reshape(n_s, n_s, dd, dd)
    b = b.reshape(n_s, n_s, dd, d)
    c = c.reshape(n_s, n_s, d, d)

    # rows (alpha, mn) then (alpha, r)
    aa = a.transpose(0, 2, 1, 3).reshape(n_s * dd, n_s * dd)
    ab = b.transpose(0, 2, 1, 3).reshape(n_s * dd, n_s * d)
    cc = c.transpose(0, 2, 1, 3).reshape(n_s * d, n_s * d)
    gram = np.block([[aa, ab], [ab.conj().T, cc]])
    gram = 0.5 * (gram + gram.conj().T)

    eigenvalues = linalg.eigvalsh(gram)
    min_eigenvalue = float(eigenvalues[0]) if eigenvalues.size else 0.0

    rng = np.random.default_rng(seed)
    min_form = np.inf
    for _ in range(n_random_vectors):
        x = rng.normal(size=gram.shape[0]) + 1j * rng.normal(size=gram.shape[0])
        min_form = min(min_form, float(np.real(x.conj() @ gram @ x) / np.real(x.conj() @ x)))
    if not np.isfinite(min_form):
        min_form = min_eigenvalue

    passed = min_eigenvalue >= -tolerance
    if not passed:
        logger.warning(f"Correlation Gram matrix has eigenvalue {min_eigenvalue:.3e} below -{tolerance:.1e}")
    return GramCheckReport(
        min_eigenvalue=min_eigenvalue,
        min_quadratic_form=min_form,
        matrix_size=int(gram.shape[0]),
        passed=passed,
    )


def spectral_density_matrix(model: Model, initial: InitialState, merge_tolerance: Optional[float] = None) -> SpectralDensityMatrix:
    """
    Atomic spectral measure of the correlation functions.

    Every mode frequency omega_n carries the block w_n conj(v) v^T, where v
    stacks the samples f_mn(n) and g_0^p(n); modes whose frequencies agree
    within ``merge_tolerance`` share one atom, and atoms with a zero block are
    dropped. Summing exp(-i omega t) J over the atoms gives back the
    correlation tables.

    Returns:
        SpectralDensityMatrix: Atoms ordered by frequency
    """
    merge_tolerance = get_settings().FREQUENCY_MERGE_TOLERANCE if merge_tolerance is None else merge_tolerance
    d, grid = model.d, model.reservoir
    size = d * d + d
    stacked = np.concatenate(
        [model.formfactors.values.reshape(d * d, grid.n_modes), initial.g0], axis=0
    )

    order = np.argsort(grid.frequencies, kind="stable")
    frequencies, blocks = [], []
    start = 0
    while start < order.size:
        stop = start + 1
        while stop < order.size and grid.frequencies[order[stop]] - grid.frequencies[order[start]] <= merge_tolerance:
            stop += 1
        group = order[start:stop]
        block = np.zeros((size, size), dtype=complex)
        for n in group:
            v = stacked[:, n]
            block += grid.weights[n] * np.outer(np.conj(v), v)
        if np.any(block):
            frequencies.append(float(np.mean(grid.frequencies[group])))
            blocks.append(block)
        start = stop

    blocks_arr = np.array(blocks) if blocks else np.zeros((0, size, size), dtype=complex)
    logger.debug(f"Spectral measure has {len(frequencies)} atoms")
    return SpectralDensityMatrix(d=d, frequencies=np.array(frequencies, dtype=float), blocks=blocks_arr)


def spectral_min_eigenvalue(sdm: SpectralDensityMatrix) -> float:
    """Smallest eigenvalue over all atom blocks (0 for an empty measure)."""
    if sdm.frequencies.size == 0:
        return 0.0
    return float(min(linalg.eigvalsh(block)[0] for block in sdm.blocks))


def correlations_from_spectral(sdm: SpectralDensityMatrix, times: Sequence[float]) -> CorrelationSet:
    """Fourier sum over the atoms: sum_k exp(-i omega_k t) J_k."""
    times = _as_times(times)
    d, dd = sdm.d, sdm.d * sdm.d
    phase = np.exp(-1j * np.outer(times, sdm.frequencies))
    total = np.tensordot(phase, sdm.blocks, axes=(1, 0)) if sdm.frequencies.size else np.zeros(
        (times.size, dd + d, dd + d), dtype=complex
    )
    a = total[:, :dd, :dd].reshape(times.size, d, d, d, d)
    b = total[:, :dd, dd:].reshape(times.size, d, d, d)
    c = total[:, dd:, dd:]
    return CorrelationSet(times=times, a=a, b=b, c=c)


def _correlations_at(model: Model, initial: InitialState, times: np.ndarray):
    d, grid = model.d, model.reservoir
    f = model.formfactors.values.reshape(d * d, grid.n_modes)
    g0 = initial.g0
    phase = np.exp(-1j * np.outer(times, grid.frequencies))
    weighted_f = np.conj(f) * grid.weights
    a = np.einsum("in,tn,jn->tij", weighted_f, phase, f).reshape(times.size, d, d, d, d)
    b = np.einsum("in,tn,pn->tip", weighted_f, phase, g0).reshape(times.size, d, d, d)
    c = np.einsum("pn,tn,qn->tpq", np.conj(g0) * grid.weights, phase, g0)
    return a, b, c


def _interpolate_correlations(corr: CorrelationSet, diffs: np.ndarray):
    """Linear interpolation of the tables; negative differences need tables reaching negative times."""
    t = corr.times
    d, dd = corr.d, corr.d * corr.d
    a_flat = corr.a.reshape(t.size, dd, dd)
    b_flat = corr.b.reshape(t.size, dd, d)

    a_out = np.empty((diffs.size, dd, dd), dtype=complex)
    b_out = np.empty((diffs.size, dd, d), dtype=complex)
    c_out = np.empty((diffs.size, d, d), dtype=complex)
    for i, tau in enumerate(diffs):
        if t[0] <= tau <= t[-1]:
            a_out[i] = _interp_table(t, a_flat, tau)
            b_out[i] = _interp_table(t, b_flat, tau)
            c_out[i] = _interp_table(t, corr.c, tau)
        else:
            raise NumericalError(f"time difference {tau:.6g} outside tabulated range [{t[0]:.6g}, {t[-1]:.6g}]")
    return a_out.reshape(-1, d, d, d, d), b_out.reshape(-1, d, d, d), c_out


def _interp_table(t: np.ndarray, table: np.ndarray, tau: float) -> np.ndarray:
    j = int(np.clip(np.searchsorted(t, tau) - 1, 0, t.size - 2)) if t.size > 1 else 0
    if t.size == 1:
        return table[0]
    s = (tau - t[j]) / (t[j + 1] - t[j])
    return (1.0 - s) * table[j] + s * table[j + 1]


def _as_times(times: Sequence[float]) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(times, dtype=float))
    if not np.all(np.isfinite(arr)):
        raise NumericalError("times must be finite")
    return arr
