import numpy as np
import pytest

from app.core.exceptions import NumericalError
from app.schemas.model import InitialState
from app.services.kernel_service import (
    correlations,
    correlations_from_spectral,
    gram_positivity_check,
    inhomogeneity,
    kernel_table,
    memory_kernel,
    spectral_density_matrix,
    spectral_min_eigenvalue,
)
from app.services.model_builder import make_model

TIMES = np.linspace(0.0, 5.0, 51)
SYMMETRIC_TIMES = np.linspace(-5.0, 5.0, 101)


def test_zero_coupling_kernel_vanishes():
    """Test M == 0 without form factors"""
    model = make_model([0.0, 1.0], [0.0, 1.0], [0.5, 0.5], np.zeros((2, 2, 2)))
    table = memory_kernel(model, TIMES)
    assert not np.any(table.M_values)


def test_single_mode_kernel_at_zero():
    """Test M_11(0) = w |g|^2 for one level and one mode"""
    model = make_model([0.4], [1.3], [0.7], np.full((1, 1, 1), 0.5 - 0.2j))
    table = memory_kernel(model, [0.0, 1.0])
    assert table.M_values[0, 0, 0] == pytest.approx(0.7 * 0.29)
    assert table.M_values[1, 0, 0] == pytest.approx(0.7 * 0.29 * np.exp(-1j * 1.7))


def test_kernel_at_zero_is_psd_gram(model_factory):
    """Test that M(0) is Hermitian positive semidefinite"""
    model = model_factory(seed=11, d=3, n_modes=8)
    m0 = memory_kernel(model, [0.0]).M_values[0]
    np.testing.assert_allclose(m0, m0.conj().T, atol=1e-14)
    assert np.linalg.eigvalsh(m0)[0] >= -1e-12


def test_kernel_matches_explicit_sum(model_factory):
    """Test the vectorized kernel against the literal triple sum"""
    model = model_factory(seed=5)
    t = 0.37
    f, w, eps, omega = model.formfactors.values, model.reservoir.weights, model.system.energies, model.reservoir.frequencies
    expected = np.zeros((2, 2), dtype=complex)
    for k in range(2):
        for l in range(2):
            for m in range(2):
                expected[k, l] += np.sum(w * np.conj(f[m, k]) * f[m, l] * np.exp(-1j * t * (eps[m] + omega)))
    np.testing.assert_allclose(memory_kernel(model, [t]).M_values[0], expected, atol=1e-14)


def test_factorized_inhomogeneity_vanishes(acceptance_model):
    """Test G == 0 when g0 == 0"""
    state = InitialState.factorized([1.0, 0.0], acceptance_model.n_modes)
    assert not np.any(inhomogeneity(acceptance_model, state, TIMES).G_values)


def test_inhomogeneity_at_zero(model_factory, state_factory):
    """Test G_k(0) = -i sum_m (f_mk, g_0^m)"""
    model = model_factory(seed=2)
    state = state_factory(model, seed=2, correlated=True)
    expected = [-1j * sum(model.reservoir.inner(model.formfactors.values[m, k], state.g0[m]) for m in range(2))
                for k in range(2)]
    np.testing.assert_allclose(inhomogeneity(model, state, [0.0]).G_values[0], expected, atol=1e-14)


def test_single_mode_inhomogeneity():
    """Test G_1(t) = -i w |f|^2 exp(-i t (eps + omega)) when g0 equals f"""
    f = 0.6 + 0.3j
    model = make_model([0.5], [2.0], [0.4], np.full((1, 1, 1), f))
    state = InitialState(c0=[0.0], g0=[[f]])
    t = 1.1
    value = inhomogeneity(model, state, [t]).G_values[0, 0]
    assert value == pytest.approx(-1j * 0.4 * abs(f) ** 2 * np.exp(-1j * t * 2.5))


def test_kernel_table_carries_both_parts(acceptance_model, state_factory):
    """Test that the combined table holds M and G on one grid"""
    state = state_factory(acceptance_model, seed=1, correlated=True)
    table = kernel_table(acceptance_model, state, TIMES)
    assert table.M_values.shape == (TIMES.size, 2, 2)
    assert table.G_values.shape == (TIMES.size, 2)


def test_correlations_at_zero(model_factory, state_factory):
    """Test equal-time overlaps a(0) = (f_mn, f_pq) and c(0) = (g_0^p, g_0^q)"""
    model = model_factory(seed=9)
    state = state_factory(model, seed=9, correlated=True)
    corr = correlations(model, state, [0.0])
    f, grid = model.formfactors.values, model.reservoir
    assert corr.a[0, 0, 1, 1, 0] == pytest.approx(grid.inner(f[0, 1], f[1, 0]))
    assert corr.c[0, 1, 0] == pytest.approx(grid.inner(state.g0[1], state.g0[0]))
    assert corr.b[0, 1, 1, 0] == pytest.approx(grid.inner(f[1, 1], state.g0[0]))


def test_factorized_correlations_b_c_vanish(acceptance_model):
    """Test b == 0 and c == 0 without initial reservoir excitation"""
    corr = correlations(acceptance_model, InitialState.factorized([0.0, 1.0], acceptance_model.n_modes), TIMES)
    assert not np.any(corr.b)
    assert not np.any(corr.c)


def test_single_mode_correlation():
    """Test a(t) = exp(-2 i t) for omega = 2, f = 1, w = 1"""
    model = make_model([0.0], [2.0], [1.0], np.ones((1, 1, 1)))
    corr = correlations(model, InitialState.factorized([1.0], 1), TIMES)
    np.testing.assert_allclose(corr.a[:, 0, 0, 0, 0], np.exp(-2j * TIMES), atol=1e-14)


def test_correlation_hermitian_symmetry(model_factory, state_factory):
    """Test a(t) = conj(a(-t)) with swapped pairs and c(t) = conj(c(-t)) transposed"""
    model = model_factory(seed=4)
    state = state_factory(model, seed=4, correlated=True)
    corr = correlations(model, state, SYMMETRIC_TIMES)
    mirrored_a = np.conj(corr.a[::-1]).transpose(0, 3, 4, 1, 2)
    mirrored_c = np.conj(corr.c[::-1]).transpose(0, 2, 1)
    np.testing.assert_allclose(corr.a, mirrored_a, atol=1e-12)
    np.testing.assert_allclose(corr.c, mirrored_c, atol=1e-12)


def test_gram_single_time_is_psd(model_factory, state_factory):
    """Test that the Gram matrix at one sample time is an overlap matrix"""
    model = model_factory(seed=6)
    state = state_factory(model, seed=6, correlated=True)
    corr = correlations(model, state, [0.0])
    report = gram_positivity_check(corr, [0.0])
    assert report.min_eigenvalue >= -1e-12
    assert report.matrix_size == 4 + 2
    assert report.passed


def test_gram_zero_model():
    """Test a zero model: zero Gram matrix, eigenvalue 0"""
    model = make_model([0.0, 1.0], [0.0], [1.0], np.zeros((2, 2, 1)))
    state = InitialState.factorized([1.0, 0.0], 1)
    corr = correlations(model, state, [0.0])
    report = gram_positivity_check(corr, [0.0])
    assert report.min_eigenvalue == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("seed", range(100))
def test_gram_positivity_random_models(seed, model_factory, state_factory):
    """Test the Gram matrix over 5 random times for random models"""
    rng = np.random.default_rng(seed)
    d = 2 + seed % 2
    model = model_factory(seed=seed, d=d, n_modes=4 + seed % 5)
    state = state_factory(model, seed=seed, correlated=bool(seed % 2))
    samples = np.sort(rng.uniform(0.0, 5.0, 5))
    corr = correlations(model, state, SYMMETRIC_TIMES)
    report = gram_positivity_check(corr, samples, model=model, initial=state)
    assert report.min_eigenvalue >= -1e-10
    assert report.min_quadratic_form >= report.min_eigenvalue - 1e-12


def test_gram_interpolated_on_grid_times(model_factory, state_factory):
    """Test the interpolated path when every difference falls on a grid point"""
    model = model_factory(seed=8)
    state = state_factory(model, seed=8, correlated=True)
    corr = correlations(model, state, SYMMETRIC_TIMES)
    report = gram_positivity_check(corr, [0.0, 1.0, 2.5])
    exact = gram_positivity_check(corr, [0.0, 1.0, 2.5], model=model, initial=state)
    assert report.min_eigenvalue == pytest.approx(exact.min_eigenvalue, abs=1e-10)


def test_gram_outside_table_range(acceptance_model):
    """Test that a difference outside the table is an error"""
    state = InitialState.factorized([1.0, 0.0], acceptance_model.n_modes)
    corr = correlations(acceptance_model, state, TIMES)
    with pytest.raises(NumericalError):
        gram_positivity_check(corr, [0.0, 1.0])


def test_spectral_zero_model_has_no_atoms():
    """Test that a model without couplings or g0 has an empty measure"""
    model = make_model([0.0, 1.0], [0.0, 1.0], [0.5, 0.5], np.zeros((2, 2, 2)))
    sdm = spectral_density_matrix(model, InitialState.factorized([1.0, 0.0], 2))
    assert sdm.frequencies.size == 0
    assert spectral_min_eigenvalue(sdm) == 0.0


def test_spectral_single_mode_atom():
    """Test one atom carrying w |f|^2 with rank one"""
    model = make_model([0.3], [1.2], [0.5], np.full((1, 1, 1), 2.0))
    sdm = spectral_density_matrix(model, InitialState.factorized([1.0], 1))
    assert sdm.frequencies.tolist() == [1.2]
    assert sdm.blocks[0, 0, 0] == pytest.approx(0.5 * 4.0)
    assert np.linalg.matrix_rank(sdm.blocks[0]) == 1


def test_spectral_merges_degenerate_frequencies():
    """Test that equal frequencies share one atom"""
    model = make_model([0.0], [1.0, 1.0, 2.0], [0.5, 0.25, 0.25], np.ones((1, 1, 3)))
    sdm = spectral_density_matrix(model, InitialState.factorized([1.0], 3))
    assert sdm.frequencies.tolist() == [1.0, 2.0]
    assert sdm.blocks[0, 0, 0] == pytest.approx(0.75)


def test_spectral_blocks_are_psd(model_factory, state_factory):
    """Test that every atom block is positive semidefinite"""
    model = model_factory(seed=12, d=3, n_modes=8)
    state = state_factory(model, seed=12, correlated=True)
    assert spectral_min_eigenvalue(spectral_density_matrix(model, state)) >= -1e-10


@pytest.mark.parametrize("seed", range(5))
def test_spectral_round_trip(seed, model_factory, state_factory):
    """Test that the Fourier sum over atoms reproduces the correlation tables"""
    model = model_factory(seed=seed, d=2 + seed % 2)
    state = state_factory(model, seed=seed, correlated=True)
    direct = correlations(model, state, SYMMETRIC_TIMES)
    rebuilt = correlations_from_spectral(spectral_density_matrix(model, state), SYMMETRIC_TIMES)
    np.testing.assert_allclose(rebuilt.a, direct.a, atol=1e-12)
    np.testing.assert_allclose(rebuilt.b, direct.b, atol=1e-12)
    np.testing.assert_allclose(rebuilt.c, direct.c, atol=1e-12)
