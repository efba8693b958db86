from typing import List, Optional, Tuple


class SectorDynamicsError(Exception):
    """Base class for every error raised by the engine."""


class ModelError(SectorDynamicsError, ValueError):
    """Invalid problem definition: dimensions, non-finite data, weights, families."""


class InitialStateError(ModelError):
    """Initial state with zero norm or a normalization defect above tolerance."""


class NumericalError(SectorDynamicsError, ArithmeticError):
    """Step-size violations, overflow, guards and coverage failures during evaluation."""


class OutputError(SectorDynamicsError, OSError):
    """Result files could not be written."""


class ConfigError(SectorDynamicsError, ValueError):
    """
    Run configuration rejected.

    Carries every problem found as a (key path, reason) pair so the caller can
    report them all at once.
    """

    def __init__(self, errors: List[Tuple[str, str]], message: Optional[str] = None):
        self.errors = list(errors)
        if message is None:
            message = "; ".join(f"{path}: {reason}" for path, reason in self.errors)
        super().__init__(message)
