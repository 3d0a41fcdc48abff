"""Exception types shared across the package.

The CLI maps these onto distinct exit codes, so library code should raise
the most specific class that applies.
"""

from __future__ import annotations


class MatesError(Exception):
    """Base class for all package-specific errors."""


class DataError(MatesError, ValueError):
    """Invalid input data: bad shapes, non-numeric cells, broken invariants."""


class PowerOverflowError(MatesError, OverflowError):
    """A moment power or distance sum left the representable double range."""


class DegenerateStatisticError(MatesError, RuntimeError):
    """The test statistic is undefined for this input.

    Raised for singular covariance matrices and for degenerate view
    construction (for example a zero kernel bandwidth from duplicate
    observations). ``report`` carries the view independence diagnosis
    when one is available.
    """

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report
