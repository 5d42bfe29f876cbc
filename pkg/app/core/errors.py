"""
Exception hierarchy for the simulator.

Every error carries the exit code the command-line front door reports for it:
0 success, 1 usage/config, 2 numerical.
"""

from typing import Any, Dict, Optional


class NLWaveError(Exception):
    """Base class for all simulator errors."""

    exit_code: int = 1

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}


class ConfigurationError(NLWaveError, ValueError):
    """Invalid parameters, malformed config files or bad overrides."""

    exit_code = 1


class ShapeError(NLWaveError, ValueError):
    """Coefficient or grid sizes do not match the basis."""

    exit_code = 1


class InputError(NLWaveError, ValueError):
    """Operation called with unusable input (e.g. too few snapshots)."""

    exit_code = 1


class NumericalError(NLWaveError, RuntimeError):
    """A solver failed to converge or a trajectory became non-finite."""

    exit_code = 2
