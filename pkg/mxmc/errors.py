"""
Exception hierarchy for the M^X/M/c toolkit
Every message is looked up in ``config.ERROR_MESSAGES`` so wording stays stable.
"""

from __future__ import annotations

from config import ERROR_MESSAGES


class MxmcError(Exception):
    """Base class; ``key`` names the ERROR_MESSAGES entry."""

    def __init__(self, key: str, detail: str | None = None) -> None:
        self.key = key
        message = ERROR_MESSAGES.get(key, key)
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class ModelValidationError(MxmcError, ValueError):
    """Invalid parameters or model file."""


class GateError(MxmcError, ValueError):
    """Operation called outside the regime it is defined for."""


class NumericalError(MxmcError, RuntimeError):
    """Instability, singular systems or truncation caps."""


class SimulationError(MxmcError, RuntimeError):
    """Incompatible statistic/variant or exhausted horizon."""
