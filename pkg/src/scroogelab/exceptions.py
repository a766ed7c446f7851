"""Exception and warning types shared across the package."""

from __future__ import annotations


class ScroogeLabError(Exception):
    """Base class for all package errors."""


class SizeError(ScroogeLabError, ValueError):
    """Requested dense object exceeds the configured size cap."""


class ShapeError(ScroogeLabError, ValueError):
    """Operand dimensions are inconsistent."""


class InputError(ScroogeLabError, ValueError):
    """Input violates a documented precondition (e.g. non-Hermitian)."""


class ConfigError(ScroogeLabError, ValueError):
    """Experiment configuration is malformed or incomplete."""


class NumericalError(ScroogeLabError, RuntimeError):
    """A numerical routine failed to converge or produced invalid output."""


class RegimeWarning(UserWarning):
    """Parameters fall outside the hypotheses under which a bound is stated."""
