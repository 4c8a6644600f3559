"""Exception types raised across the package."""


class ReconError(Exception):
    """Base class for all errors raised by ssrecon."""


class ShapeError(ReconError, ValueError):
    """Array shapes or lengths are inconsistent."""


class ParameterError(ReconError, ValueError):
    """A numeric parameter is outside its valid range."""


class DegenerateSplitError(ParameterError):
    """A Theta/Lambda split would leave one of the two subsets empty."""


class NormalizationError(ReconError, ValueError):
    """A normalizing quantity (reference norm, coil SOS) is zero or invalid."""


class NumericError(ReconError, ArithmeticError):
    """A non-finite value appeared in an input or intermediate quantity."""


class FormatError(ReconError):
    """A serialized file is malformed."""


class ConfigError(ReconError, ValueError):
    """A run configuration is incomplete or invalid."""
