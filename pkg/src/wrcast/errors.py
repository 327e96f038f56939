"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError (and
subclasses) -> 3, TrainingError -> 4.
"""


class WrcastError(Exception):
    """Base class for all package errors."""


class ConfigError(WrcastError):
    """Invalid configuration: bad parameter values, shape mismatches."""


class DataError(WrcastError):
    """Invalid input data."""


class SchemaError(DataError):
    """A declared column is missing or the file layout is wrong."""


class IntegrityError(DataError):
    """Duplicate keys, date gaps, or misaligned covariate rows."""


class DomainError(WrcastError, ValueError):
    """An argument is outside the mathematical domain of an operation."""


class TrainingError(WrcastError):
    """Optimization failed (non-finite loss/gradient, no convergence)."""


class DegenerateInstanceError(DomainError):
    """A closed-form solution does not exist for this instance."""


class DegenerateFitError(DomainError):
    """A local fit has no usable observations (all weights zero)."""


class IdentifiabilityError(DomainError):
    """The causal effect is not identified (no treatment variance)."""


class NoEffectError(DomainError):
    """Reweighting a zero estimate has no effect."""
