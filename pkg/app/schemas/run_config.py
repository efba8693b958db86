import math
from enum import Enum
from typing import Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.schemas.model import QuadratureScheme, SpectralFamily

# A complex number in a config file: a plain real or a [re, im] pair
ComplexEntry = Union[float, Tuple[float, float]]


class RunSolver(str, Enum):
    """Enumeration for the solver selection of a run."""
    DIRECT = "direct"
    VOLTERRA = "volterra"
    BOTH = "both"
    ORACLE = "oracle"


class ConfigSection(BaseModel):
    """Base for config sections: unknown keys are errors."""
    model_config = ConfigDict(extra="forbid")


class TabulatedValues(ConfigSection):
    """Per-mode complex values on the reservoir grid."""
    values: List[ComplexEntry] = Field(..., min_length=1)


class ReservoirSection(ConfigSection):
    """
    The mode grid, given by exactly one of:
    - family: discretize a spectral density with n_modes nodes
    - interval: [lo, hi] split into n_modes equal cells
    - frequencies + weights: an explicit grid
    """
    family: Optional[SpectralFamily] = None
    interval: Optional[Tuple[float, float]] = None
    frequencies: Optional[List[float]] = None
    weights: Optional[List[float]] = None
    n_modes: Optional[int] = Field(None, ge=1)
    scheme: QuadratureScheme = QuadratureScheme.GAUSS_LEGENDRE

    @model_validator(mode="after")
    def _check_source(self):
        given = [self.family is not None, self.interval is not None, self.frequencies is not None]
        if sum(given) != 1:
            raise ValueError("give exactly one of 'family', 'interval' or 'frequencies'")
        if self.frequencies is not None and (self.weights is None or len(self.weights) != len(self.frequencies)):
            raise ValueError("'weights' must accompany 'frequencies' with the same length")
        if self.frequencies is None and self.weights is not None:
            raise ValueError("'weights' is only valid with 'frequencies'")
        if self.interval is not None:
            if self.n_modes is None:
                raise ValueError("'interval' needs 'n_modes'")
            if not self.interval[0] < self.interval[1]:
                raise ValueError("'interval' must satisfy lo < hi")
        if self.family is not None and self.n_modes is None:
            raise ValueError("'family' needs 'n_modes'")
        return self


class ChannelSection(ConfigSection):
    """
    One form factor f_{target,source}, from exactly one of a spectral family
    sampled on the grid, tabulated per-mode values, or the coupling produced
    by discretizing the reservoir family.
    """
    target: int = Field(..., ge=0)
    source: int = Field(..., ge=0)
    family: Optional[SpectralFamily] = None
    tabulated: Optional[TabulatedValues] = None
    reservoir: bool = False
    scale: ComplexEntry = 1.0

    @model_validator(mode="after")
    def _check_exclusive(self):
        given = [self.family is not None, self.tabulated is not None, self.reservoir]
        if sum(given) > 1:
            raise ValueError("'family', 'tabulated' and 'reservoir' are mutually exclusive")
        if sum(given) == 0:
            raise ValueError("give one of 'family', 'tabulated' or 'reservoir'")
        return self


class ModelSection(ConfigSection):
    energies: List[float] = Field(..., min_length=1)
    reservoir: ReservoirSection
    channels: List[ChannelSection] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_channels(self):
        d = len(self.energies)
        seen = set()
        for channel in self.channels:
            if channel.target >= d or channel.source >= d:
                raise ValueError(f"channel ({channel.target}, {channel.source}) outside {d} levels")
            key = (channel.target, channel.source)
            if key in seen:
                raise ValueError(f"channel {key} given twice")
            seen.add(key)
        return self


class ModeFunctionSection(ConfigSection):
    """Initial reservoir excitation g_0^level, same sources as a channel."""
    level: int = Field(..., ge=0)
    family: Optional[SpectralFamily] = None
    tabulated: Optional[TabulatedValues] = None
    reservoir: bool = False
    scale: ComplexEntry = 1.0

    @model_validator(mode="after")
    def _check_exclusive(self):
        given = [self.family is not None, self.tabulated is not None, self.reservoir]
        if sum(given) > 1:
            raise ValueError("'family', 'tabulated' and 'reservoir' are mutually exclusive")
        if sum(given) == 0:
            raise ValueError("give one of 'family', 'tabulated' or 'reservoir'")
        return self


class InitialSection(ConfigSection):
    c0: List[ComplexEntry] = Field(..., min_length=1)
    g0: List[ModeFunctionSection] = Field(default_factory=list)
    normalize: bool = Field(False, description="Rescale to unit norm instead of rejecting a defect")


class RunSection(ConfigSection):
    T: float
    dt: Optional[float] = None
    times: Optional[List[float]] = Field(None, min_length=1)
    n_samples: int = Field(101, ge=2)
    solver: RunSolver = RunSolver.DIRECT

    @field_validator("T")
    @classmethod
    def _check_horizon(cls, value):
        return _positive_finite(value)

    @field_validator("dt")
    @classmethod
    def _check_step(cls, value):
        return None if value is None else _positive_finite(value)

    @field_validator("times")
    @classmethod
    def _check_finite_times(cls, value):
        if value is not None and not all(math.isfinite(t) for t in value):
            raise ValueError("must be finite")
        return value

    @model_validator(mode="after")
    def _check_times(self):
        if self.times is not None:
            if any(b <= a for a, b in zip(self.times, self.times[1:])) or self.times[0] < 0:
                raise ValueError("'times' must be non-negative and strictly increasing")
            if self.times[-1] > self.T:
                raise ValueError("'times' must not exceed T")
        return self


class OutputSection(ConfigSection):
    directory: Optional[str] = None
    reduced: bool = True
    modes: bool = Field(False, description="Append per-mode g columns to trajectory CSVs")
    kernels: bool = False
    correlations: bool = False
    cptp: bool = False
    cptp_samples: int = Field(11, ge=1)
    map_method: str = Field("volterra", pattern="^(volterra|direct)$")


class RunConfig(ConfigSection):
    """A complete scenario: model, initial state, run and output settings."""
    name: str = Field("run", min_length=1, pattern=r"^[A-Za-z0-9_.-]+$")
    description: Optional[str] = None
    model: ModelSection
    initial: InitialSection
    run: RunSection
    output: OutputSection = Field(default_factory=OutputSection)

    @model_validator(mode="after")
    def _check_levels(self):
        d = len(self.model.energies)
        if len(self.initial.c0) != d:
            raise ValueError(f"initial.c0 has {len(self.initial.c0)} entries for {d} levels")
        levels = [entry.level for entry in self.initial.g0]
        if any(level >= d for level in levels) or len(set(levels)) != len(levels):
            raise ValueError("initial.g0 levels must be distinct and below d")
        return self


class RunSummary(BaseModel):
    """What run_scenario produced."""
    name: str
    output_dir: str
    files: List[str]
    norm_drift: Dict[str, float] = Field(default_factory=dict)
    max_deviation: Optional[float] = Field(None, description="max |c_direct - c_volterra| for solver=both")
    cptp_passed: Optional[bool] = None


def _positive_finite(value: float) -> float:
    if not math.isfinite(value):
        raise ValueError("must be finite")
    if not value > 0:
        raise ValueError("must be positive")
    return value
