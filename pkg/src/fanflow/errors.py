"""Exception hierarchy shared by every stage of the pipeline."""


class FanflowError(Exception):
    """Base class for all errors raised by fanflow."""


class EmptyInputError(FanflowError):
    """Raised when an input yields no usable records."""


class ConfigError(FanflowError, ValueError):
    """Invalid run or generator configuration."""


class UndefinedInputError(FanflowError, ValueError):
    """A quantity is undefined for the given input (e.g. empty audience set)."""


class NotApplicableError(FanflowError, ValueError):
    """A statistical test's preconditions are not met.

    Callers of the selection procedures catch this and fall back to the
    nonparametric branch.
    """


class DegenerateDataError(NotApplicableError):
    """Zero-variance or all-zero input for which a test statistic is undefined."""


class PairingError(FanflowError, ValueError):
    """Paired samples cannot be aligned."""


class FormatError(FanflowError, ValueError):
    """Input is structurally unusable (missing header columns, unknown format)."""
