import copy
import json

import numpy as np
import pytest

from app.core.exceptions import ConfigError
from app.schemas.run_config import RunSolver
from app.services.config_parser import (
    apply_overrides,
    config_digest_payload,
    list_presets,
    load_config,
    load_preset,
    materialize,
    parse_config,
)

MINIMAL = {
    "name": "minimal",
    "model": {
        "energies": [0.0, 1.0],
        "reservoir": {"frequencies": [0.5, 1.0], "weights": [0.5, 0.5]},
        "channels": [{"target": 0, "source": 1, "tabulated": {"values": [0.1, [0.0, 0.2]]}}],
    },
    "initial": {"c0": [0.0, 1.0]},
    "run": {"T": 1.0, "dt": 0.01},
}


def _config(**edits):
    data = copy.deepcopy(MINIMAL)
    for path, value in edits.items():
        target = data
        keys = path.split("__")
        for key in keys[:-1]:
            target = target[key]
        target[keys[-1]] = value
    return json.dumps(data)


def _paths(excinfo):
    return dict(excinfo.value.errors)


def test_minimal_config():
    """Test that a minimal config parses and builds the expected model"""
    cfg = parse_config(_config())
    assert cfg.run.solver == RunSolver.DIRECT
    assert cfg.run.n_samples == 101
    model, state = materialize(cfg)
    np.testing.assert_array_equal(model.formfactors.values[0, 1], [0.1, 0.2j])
    assert not np.any(model.formfactors.values[1, 0])
    np.testing.assert_array_equal(state.c0, [0.0, 1.0])
    assert state.is_factorized


def test_invalid_json():
    """Test that malformed JSON is reported at the root"""
    with pytest.raises(ConfigError) as excinfo:
        parse_config("{not json")
    assert "<root>" in _paths(excinfo)


def test_non_positive_dt():
    """Test that run.dt must be positive"""
    with pytest.raises(ConfigError) as excinfo:
        parse_config(_config(run__dt=-0.01))
    assert _paths(excinfo)["run.dt"] == "must be positive"


def test_every_problem_is_reported():
    """Test that several invalid keys are reported together"""
    with pytest.raises(ConfigError) as excinfo:
        parse_config(_config(run__dt=0.0, run__T=-1.0))
    paths = _paths(excinfo)
    assert paths["run.dt"] == "must be positive"
    assert paths["run.T"] == "must be positive"
    assert "run.dt: must be positive" in str(excinfo.value)


def test_unknown_key_rejected():
    """Test that unknown keys are errors"""
    with pytest.raises(ConfigError) as excinfo:
        parse_config(_config(run__stepsize=0.1))
    assert "run.stepsize" in _paths(excinfo)


def test_channel_sources_are_exclusive():
    """Test that a channel cannot take both a family and the reservoir coupling"""
    channel = {
        "target": 0,
        "source": 1,
        "reservoir": True,
        "family": {"kind": "lorentzian", "center": 1.0, "width": 0.1, "strength": 0.01},
    }
    with pytest.raises(ConfigError) as excinfo:
        parse_config(_config(model__channels=[channel]))
    assert "mutually exclusive" in _paths(excinfo)["model.channels.0"]


def test_channel_outside_levels():
    """Test that channels must address existing levels"""
    channel = {"target": 0, "source": 2, "tabulated": {"values": [0.1, 0.1]}}
    with pytest.raises(ConfigError) as excinfo:
        parse_config(_config(model__channels=[channel]))
    assert "outside 2 levels" in _paths(excinfo)["model"]


def test_reservoir_needs_one_source():
    """Test that the grid is given by exactly one source"""
    reservoir = {"frequencies": [0.0], "weights": [1.0], "interval": [0.0, 1.0], "n_modes": 4}
    with pytest.raises(ConfigError) as excinfo:
        parse_config(_config(model__reservoir=reservoir))
    assert "exactly one" in _paths(excinfo)["model.reservoir"]


def test_initial_amplitudes_must_match_levels():
    """Test that c0 needs one entry per level"""
    with pytest.raises(ConfigError) as excinfo:
        parse_config(_config(initial__c0=[1.0]))
    assert "initial.c0" in _paths(excinfo)["<root>"]


def test_unnormalized_state_rejected():
    """Test that a normalization defect fails unless normalize is set"""
    cfg = parse_config(_config(initial__c0=[1.0, 1.0]))
    with pytest.raises(ConfigError) as excinfo:
        materialize(cfg)
    assert "initial" in _paths(excinfo)

    _, state = materialize(parse_config(_config(initial={"c0": [1.0, 1.0], "normalize": True})))
    np.testing.assert_allclose(state.c0, [np.sqrt(0.5), np.sqrt(0.5)])


def test_reservoir_coupling_needs_family_grid():
    """Test that reservoir: true requires a grid built from a family"""
    channel = {"target": 0, "source": 1, "reservoir": True}
    cfg = parse_config(_config(model__channels=[channel]))
    with pytest.raises(ConfigError) as excinfo:
        materialize(cfg)
    assert "model.channels.0.reservoir" in _paths(excinfo)


def test_tabulated_length_mismatch():
    """Test that tabulated values need one entry per mode"""
    channel = {"target": 0, "source": 1, "tabulated": {"values": [0.1, 0.2, 0.3]}}
    cfg = parse_config(_config(model__channels=[channel]))
    with pytest.raises(ConfigError) as excinfo:
        materialize(cfg)
    assert "model.channels.0.tabulated.values" in _paths(excinfo)


def test_load_missing_file(tmp_path):
    """Test that an unreadable file is a config error"""
    with pytest.raises(ConfigError) as excinfo:
        load_config(str(tmp_path / "absent.json"))
    assert "<file>" in _paths(excinfo)


def test_load_config_from_file(tmp_path):
    """Test reading a config from disk"""
    path = tmp_path / "scenario.json"
    path.write_text(_config(), encoding="utf-8")
    assert load_config(str(path)).name == "minimal"


def test_bundled_presets():
    """Test that every preset parses and materializes"""
    names = list_presets()
    assert {"rwa-resonant", "beyond-rwa-lorentzian", "correlated-initial", "asymptotic-limit"} <= set(names)
    for name in names:
        model, state = materialize(load_preset(name))
        assert model.state_norm(state.c0, state.g0) == pytest.approx(1.0, abs=1e-12)


def test_unknown_preset():
    """Test that an unknown preset name lists the available ones"""
    with pytest.raises(ConfigError) as excinfo:
        load_preset("no-such-preset")
    assert "rwa-resonant" in _paths(excinfo)["preset"]


def test_rwa_preset_is_single_line():
    """Test the single reservoir line with lambda = 0.2"""
    model, _ = materialize(load_preset("rwa-resonant"))
    assert model.n_modes == 1
    assert model.reservoir.norm2(model.formfactors.values[0, 1]) == pytest.approx(0.04)


def test_lorentzian_preset_grid():
    """Test the midpoint grid on [-4, 4] with 400 cells"""
    model, _ = materialize(load_preset("beyond-rwa-lorentzian"))
    assert model.n_modes == 400
    assert model.reservoir.frequencies[0] == pytest.approx(-3.99)
    np.testing.assert_allclose(model.reservoir.weights, 0.02)
    assert np.argmax(np.abs(model.formfactors.values[0, 1])) in (249, 250)


def test_correlated_preset_carries_mode_function():
    """Test that the correlated preset starts with reservoir excitation on level 0"""
    _, state = materialize(load_preset("correlated-initial"))
    assert np.any(state.g0[0])
    assert not np.any(state.g0[1])


def test_overrides():
    """Test solver, dt, mode count and directory overrides"""
    cfg = load_preset("beyond-rwa-lorentzian")
    changed = apply_overrides(cfg, solver="volterra", dt=0.005, modes=200, directory="elsewhere")
    assert changed.run.solver == RunSolver.VOLTERRA
    assert changed.run.dt == 0.005
    assert changed.model.reservoir.n_modes == 200
    assert changed.output.directory == "elsewhere"
    assert cfg.run.dt == 0.01


def test_invalid_override():
    """Test that overrides are validated like the file"""
    with pytest.raises(ConfigError) as excinfo:
        apply_overrides(load_preset("rwa-resonant"), dt=-1.0)
    assert _paths(excinfo)["run.dt"] == "must be positive"


def test_mode_override_on_explicit_grid():
    """Test that an explicit grid cannot be resized"""
    with pytest.raises(ConfigError):
        apply_overrides(parse_config(_config()), modes=10)


def test_digest_payload_is_canonical():
    """Test that equal configs give equal digests and overrides change them"""
    first = parse_config(_config())
    second = parse_config(_config())
    assert config_digest_payload(first) == config_digest_payload(second)
    assert config_digest_payload(apply_overrides(first, dt=0.02)) != config_digest_payload(first)


@pytest.mark.parametrize("key", ["T", "dt"])
def test_non_finite_run_values(key):
    """Test that an infinite horizon or step is a config error at its key"""
    with pytest.raises(ConfigError) as excinfo:
        parse_config(_config(**{f"run__{key}": float("inf")}))
    assert _paths(excinfo)[f"run.{key}"] == "must be finite"


def test_non_finite_output_times():
    """Test that explicit output times must be finite"""
    with pytest.raises(ConfigError) as excinfo:
        parse_config(_config(run__times=[0.0, float("nan")]))
    assert _paths(excinfo)["run.times"] == "must be finite"


def test_non_finite_initial_amplitude():
    """Test that an infinite c0 entry is reported under initial"""
    cfg = parse_config(_config(initial__c0=[float("inf"), 0.0]))
    with pytest.raises(ConfigError) as excinfo:
        materialize(cfg)
    assert "non-finite" in _paths(excinfo)["initial"]


def test_non_finite_mode_function_scale():
    """Test that an infinite g0 scale is reported under initial"""
    entry = {"level": 0, "tabulated": {"values": [0.1, 0.1]}, "scale": float("inf")}
    cfg = parse_config(_config(initial={"c0": [0.0, 1.0], "g0": [entry]}))
    with pytest.raises(ConfigError) as excinfo:
        materialize(cfg)
    assert "non-finite" in _paths(excinfo)["initial"]
