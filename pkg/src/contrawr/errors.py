"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: config 2, data 3, numeric 4.
"""


class ContraWRError(Exception):
    """Base class for all package errors."""


class ParameterError(ContraWRError, ValueError):
    """An argument is outside its valid domain."""


class ContractError(ContraWRError, ValueError):
    """A caller violated a documented precondition."""


class ShapeError(ContraWRError, ValueError):
    """Tensor shapes do not match what a layer was built for."""


class ConfigError(ContraWRError):
    """Invalid or unknown configuration."""


class DataError(ContraWRError):
    """Input data is missing, malformed, or inconsistent."""


class FormatError(DataError):
    """An epoch file could not be parsed."""


class SplitError(DataError):
    """Subjects cannot be partitioned as requested."""


class CompatibilityError(DataError):
    """A checkpoint does not match the current configuration."""


class NumericError(ContraWRError, FloatingPointError):
    """A NaN or Inf appeared during computation."""
