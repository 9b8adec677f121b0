"""Exception and warning types raised by the numerical routines."""


class LmgError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(LmgError, ValueError):
    """A state or operator does not live in the expected Dicke space."""


class NormDrift(LmgError):
    """A propagated state lost normalization beyond the allowed tolerance."""


class StepNotConverged(LmgError):
    """A finite-difference step could not be brought into its valid window."""


class NoPeak(LmgError):
    """A scan contained no interior maximum."""


class NonPositiveValue(LmgError, ValueError):
    """A log-log fit received a non-positive ordinate."""


class InsufficientPoints(LmgError, ValueError):
    """Too few samples for the requested fit."""


class ConvergenceFailure(LmgError):
    """An eigensolver or root finder failed to converge."""


class CrossoverRegime(LmgError):
    """Parameters lie where the effective potential has no double well."""


class NoBarrier(LmgError):
    """The effective potential has a single minimum."""


class EnergyDrift(LmgError):
    """Classical integration did not conserve energy."""


class ZeroVariance(LmgError):
    """An observable has vanishing variance so the error propagation is undefined."""


class TraceDrift(LmgError):
    """A density matrix lost trace during open-system integration."""


class PositivityViolation(LmgError):
    """A density-matrix block has a significantly negative eigenvalue."""


class ConfigError(LmgError, ValueError):
    """A sweep configuration could not be parsed or validated."""


class DegenerateSpectrum(UserWarning):
    """Near-degenerate eigenvalues were detected and handled specially."""
