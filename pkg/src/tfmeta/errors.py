"""Exception taxonomy shared by every tfmeta module.

The CLI maps these onto process exit codes, so new error types should
subclass one of the categories below rather than ValueError.
"""


class TfmetaError(Exception):
    """Base class for all library errors."""


class ConfigError(TfmetaError):
    """A run configuration failed validation (exit code 2)."""


class ContractError(TfmetaError):
    """A call violated an operation's precondition (exit code 3)."""


class DimensionError(ContractError):
    """Operand shapes are incompatible."""


class CapacityError(ContractError):
    """A dataset or class has too few items for the requested operation."""


class NumericError(TfmetaError):
    """A computation produced NaN/Inf (exit code 4)."""
