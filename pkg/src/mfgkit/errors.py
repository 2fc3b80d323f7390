"""Exception types shared across the package."""


class MFGKitError(Exception):
    """Base class for package errors."""


class GridError(MFGKitError, ValueError):
    """Invalid grid construction or mismatched grid/field shapes."""


class PositivityError(MFGKitError, ValueError):
    """A density (or density-like) value fell at or below the hard floor."""


class CurlError(MFGKitError, ValueError):
    """A field that must be a spatial gradient has curl content above tolerance."""


class ModelError(MFGKitError, ValueError):
    """Invalid model parameters (exponents, coupling coefficients, ...)."""


class SolverError(MFGKitError, RuntimeError):
    """An iterative solver failed to reach its tolerance."""


class CheckError(MFGKitError, RuntimeError):
    """A requested cross-check or identity verification failed."""


class ConfigError(MFGKitError, ValueError):
    """Malformed or inconsistent run configuration."""
