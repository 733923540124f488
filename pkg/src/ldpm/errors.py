"""Exception hierarchy shared across the package.

User/config mistakes derive from ``UsageError`` and map to CLI exit code 2;
numeric failures derive from ``NumericError`` and map to exit code 3.
"""


class LdpmError(Exception):
    """Base class for all package errors."""


class UsageError(LdpmError):
    """Bad inputs, bad files, or bad configuration."""


class NumericError(LdpmError):
    """Numerical failure during computation."""


class ZeroDispersion(UsageError):
    """A region's series is constant and cannot be standardized."""


class EmptyGroup(UsageError):
    """An aggregation or calibration group holds no observations."""


class BadSplit(UsageError):
    """Chronological split indices violate the required ordering."""


class BadRank(UsageError):
    """Requested truncation rank outside the valid range."""


class NotPSD(UsageError):
    """Equicorrelation parameter outside the positive-semidefinite range."""


class DimMismatch(UsageError):
    """Operand dimensions do not agree."""


class InsufficientData(UsageError):
    """Too few observations for the requested fit."""


class MissingFeatures(UsageError):
    """Covariates or residual features unavailable at prediction time."""


class UnknownGroup(UsageError):
    """Interval requested for a group with no calibration."""


class LengthMismatch(UsageError):
    """Aligned input sequences differ in length."""


class BadSigma(UsageError):
    """Invalid noise scales for the interval-length experiment."""


class BadScale(UsageError):
    """Non-positive scaling factors in a symmetry transform."""


class ConfigError(UsageError):
    """Malformed run configuration."""


class RankDeficient(NumericError):
    """Design matrix numerically rank deficient."""


class NonFinite(NumericError):
    """Training loss diverged or produced non-finite values."""
