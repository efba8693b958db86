import numpy as np
import pytest

from app.core.config import get_settings
from app.schemas.model import InitialState, Model, ReservoirGrid
from app.schemas.spinboson import SpinBosonConfig
from app.services.model_builder import make_model
from app.services.spin_boson import build_spinboson


def _random_model(seed: int, d: int = 2, n_modes: int = 6, coupling: float = 0.3) -> Model:
    rng = np.random.default_rng(seed)
    energies = rng.uniform(0.0, 1.0, d)
    frequencies = np.sort(rng.uniform(-1.0, 1.0, n_modes))
    weights = np.full(n_modes, 1.0 / n_modes)
    formfactors = coupling * (rng.normal(size=(d, d, n_modes)) + 1j * rng.normal(size=(d, d, n_modes))) / np.sqrt(2)
    return make_model(energies, frequencies, weights, formfactors)


def _random_state(model: Model, seed: int, correlated: bool = False) -> InitialState:
    rng = np.random.default_rng(seed + 1000)
    c0 = rng.normal(size=model.d) + 1j * rng.normal(size=model.d)
    g0 = np.zeros((model.d, model.n_modes), dtype=complex)
    if correlated:
        g0 = 0.5 * (rng.normal(size=g0.shape) + 1j * rng.normal(size=g0.shape))
    norm = model.state_norm(c0, g0)
    return InitialState(c0=c0 / np.sqrt(norm), g0=g0 / np.sqrt(norm))


@pytest.fixture(autouse=True)
def clear_settings_cache():
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def model_factory():
    """Random complex model: energies in [0, 1], frequencies in [-1, 1], weights 1/N."""
    return _random_model


@pytest.fixture
def state_factory():
    """Random normalized initial state for a model, factorized unless correlated=True."""
    return _random_state


@pytest.fixture
def acceptance_model():
    return _random_model(seed=7)


@pytest.fixture
def spinboson_factory():
    """Spin-boson model with random resonant and anti-resonant channels on a small grid."""

    def factory(seed: int = 3, n_modes: int = 6, rwa: bool = False, omega: float = 1.0):
        rng = np.random.default_rng(seed)
        grid = ReservoirGrid(frequencies=np.sort(rng.uniform(-1.0, 1.5, n_modes)), weights=np.full(n_modes, 1.0 / n_modes))
        f = 0.4 * (rng.normal(size=n_modes) + 1j * rng.normal(size=n_modes))
        h = np.zeros(n_modes) if rwa else 0.3 * (rng.normal(size=n_modes) + 1j * rng.normal(size=n_modes))
        cfg = SpinBosonConfig(omega=omega, reservoir=grid, f=f, h=h)
        return cfg, build_spinboson(cfg)

    return factory


@pytest.fixture
def single_mode_rwa():
    """Resonant two-level system and one mode: lambda = sqrt(w) |f| = 0.2."""
    grid = ReservoirGrid(frequencies=[1.0], weights=[1.0])
    cfg = SpinBosonConfig(omega=1.0, reservoir=grid, f=[0.2], h=[0.0])
    return cfg, build_spinboson(cfg)
