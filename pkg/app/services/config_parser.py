"""
Config Parser Service

Reads scenario files (JSON) into validated RunConfig objects and turns them
into the Model / InitialState pair the solvers consume. Every problem is
reported as a (key path, reason) pair inside one ConfigError.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import ValidationError

from app.core.exceptions import ConfigError, ModelError
from app.schemas.model import FormFactorSet, InitialState, Model, ReservoirGrid, SystemSpec
from app.schemas.run_config import ComplexEntry, RunConfig
from app.services.model_builder import (
    build_model,
    discretize_spectral_family,
    sample_form_factor,
    validate_initial_state,
)

logger = logging.getLogger(__name__)

PRESET_DIR = Path(__file__).resolve().parent.parent / "examples" / "presets"


def parse_config(text: str) -> RunConfig:
    """
    Parse and validate a JSON scenario.

    Raises:
        ConfigError: With every key path that failed and why
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError([("<root>", f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}")]) from e
    if not isinstance(data, dict):
        raise ConfigError([("<root>", "config must be a JSON object")])
    return _validate(data)


def load_config(path: str) -> RunConfig:
    """parse_config on a file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError([("<file>", f"cannot read {path}: {e.strerror or e}")]) from e
    return parse_config(text)


def list_presets() -> List[str]:
    return sorted(p.stem for p in PRESET_DIR.glob("*.json"))


def load_preset(name: str) -> RunConfig:
    """A named scenario from the bundled presets."""
    path = PRESET_DIR / f"{name}.json"
    if not path.is_file():
        raise ConfigError([("preset", f"unknown preset '{name}', available: {', '.join(list_presets())}")])
    return load_config(str(path))


def apply_overrides(cfg: RunConfig, solver: Optional[str] = None, dt: Optional[float] = None,
                    modes: Optional[int] = None, directory: Optional[str] = None) -> RunConfig:
    """Command-line overrides, re-validated like a fresh config."""
    data = cfg.model_dump(mode="json")
    if solver is not None:
        data["run"]["solver"] = solver
    if dt is not None:
        data["run"]["dt"] = dt
    if modes is not None:
        reservoir = data["model"]["reservoir"]
        if reservoir.get("frequencies") is not None:
            raise ConfigError([("model.reservoir.n_modes", "cannot override the mode count of an explicit grid")])
        reservoir["n_modes"] = modes
    if directory is not None:
        data["output"]["directory"] = directory
    return _validate(data)


def materialize(cfg: RunConfig) -> Tuple[Model, InitialState]:
    """
    Build the validated Model and normalized InitialState of a config.

    Raises:
        ConfigError: If a model-level constraint fails, naming the section
    """
    section = cfg.model
    grid, coupling = _build_grid(cfg)
    n_modes = grid.n_modes

    values = np.zeros((len(section.energies), len(section.energies), n_modes), dtype=complex)
    for i, channel in enumerate(section.channels):
        path = f"model.channels.{i}"
        values[channel.target, channel.source] = _to_complex(channel.scale) * _mode_values(
            channel, grid, coupling, path
        )

    try:
        model = build_model(SystemSpec(energies=section.energies), grid, FormFactorSet(values=values))
    except (ModelError, ValidationError) as e:
        raise ConfigError([("model", str(e))]) from e

    g0 = np.zeros((model.d, n_modes), dtype=complex)
    for i, entry in enumerate(cfg.initial.g0):
        g0[entry.level] = _to_complex(entry.scale) * _mode_values(entry, grid, coupling, f"initial.g0.{i}")
    c0 = np.array([_to_complex(c) for c in cfg.initial.c0])

    try:
        state = InitialState(c0=c0, g0=g0)
        if cfg.initial.normalize:
            norm = model.state_norm(c0, g0)
            if norm == 0.0:
                raise ModelError("initial state has zero norm")
            state = InitialState(c0=c0 / np.sqrt(norm), g0=g0 / np.sqrt(norm))
        state = validate_initial_state(model, state)
    except ModelError as e:
        raise ConfigError([("initial", str(e))]) from e
    except ValidationError as e:
        raise ConfigError([("initial", _reasons(e))]) from e
    return model, state


def config_digest_payload(cfg: RunConfig) -> str:
    """Canonical JSON of a config, the input of the run-manifest hash."""
    return json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def _build_grid(cfg: RunConfig) -> Tuple[ReservoirGrid, Optional[np.ndarray]]:
    reservoir = cfg.model.reservoir
    try:
        if reservoir.family is not None:
            return discretize_spectral_family(reservoir.family, reservoir.n_modes, scheme=reservoir.scheme)
        if reservoir.interval is not None:
            lo, hi = reservoir.interval
            width = (hi - lo) / reservoir.n_modes
            frequencies = lo + width * (np.arange(reservoir.n_modes) + 0.5)
            return ReservoirGrid(frequencies=frequencies, weights=np.full(reservoir.n_modes, width)), None
        return ReservoirGrid(frequencies=reservoir.frequencies, weights=reservoir.weights), None
    except (ModelError, ValidationError) as e:
        raise ConfigError([("model.reservoir", str(e))]) from e


def _mode_values(entry: Any, grid: ReservoirGrid, coupling: Optional[np.ndarray], path: str) -> np.ndarray:
    if entry.family is not None:
        try:
            return sample_form_factor(entry.family, grid)
        except (ModelError, ValidationError) as e:
            raise ConfigError([(f"{path}.family", str(e))]) from e
    if entry.tabulated is not None:
        values = np.array([_to_complex(v) for v in entry.tabulated.values])
        if values.size != grid.n_modes:
            raise ConfigError([(f"{path}.tabulated.values", f"has {values.size} entries for {grid.n_modes} modes")])
        return values
    if coupling is None:
        raise ConfigError([(f"{path}.reservoir", "needs a reservoir given by 'family'")])
    return np.asarray(coupling, dtype=complex)


def _to_complex(entry: ComplexEntry) -> complex:
    if isinstance(entry, (tuple, list)):
        return complex(entry[0], entry[1])
    return complex(entry)


def _validate(data: Dict[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_error_pairs(e)) from e


def _error_pairs(e: ValidationError) -> List[Tuple[str, str]]:
    pairs = []
    for err in e.errors():
        path = ".".join(str(part) for part in err.get("loc", ())) or "<root>"
        reason = str(err.get("msg", "invalid value"))
        if reason.startswith("Value error, "):
            reason = reason[len("Value error, "):]
        pairs.append((path, reason))
    return pairs


def _reasons(e: ValidationError) -> str:
    return "; ".join(reason for _, reason in _error_pairs(e))
