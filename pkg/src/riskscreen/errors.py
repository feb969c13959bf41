"""Exception types shared across the pipeline.

The CLI maps :class:`ValidationError` (and subclasses) to exit code 2 and
:class:`NumericalError` (and subclasses) to exit code 3.
"""


class ValidationError(ValueError):
    """Bad input data or configuration."""


class ConfigurationError(ValidationError):
    """Parameters that cannot describe a valid computation."""


class EmptyCorpusError(ValidationError):
    """No usable tokens remain after preprocessing and filtering."""


class AlignmentError(ValidationError):
    """Feature fragments or matrices whose rows/columns do not line up."""


class NumericalError(RuntimeError):
    """A numerical routine failed to produce a valid result."""


class ConvergenceError(NumericalError):
    """An iterative solver hit its iteration cap."""


class UndefinedMetricError(NumericalError):
    """A metric is undefined for the given inputs (e.g. single-class AUC)."""
