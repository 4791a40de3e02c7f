"""Exception types shared across the toolkit.

Plain ``ValueError`` is used for ordinary argument validation; the classes
here exist so that callers (and the experiment driver) can tell apart the
statistically meaningful failure modes.
"""

from __future__ import annotations


class ConfigError(ValueError):
    """Raised for malformed, unknown-key or out-of-range configuration."""


class InsufficientDataError(ValueError):
    """Raised when an estimator does not have enough points to be meaningful."""


class InsufficientMassError(ValueError):
    """Raised when too many paths lack the local-time mass an analysis needs."""


class FitRangeError(ValueError):
    """Raised when a regression window contains too few or degenerate points."""
