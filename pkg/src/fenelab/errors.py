"""Exception types shared by the simulation modules."""


class FeneLabError(Exception):
    """Base class for all package errors."""


class InvalidArgument(FeneLabError, ValueError):
    """An argument is outside the documented parameter range."""


class DomainViolation(FeneLabError, ValueError):
    """A point lies outside the domain where the quantity is defined
    (e.g. an end-to-end vector with ``|r| >= 1``)."""


class UnsolvableStep(FeneLabError, ArithmeticError):
    """The implicit spring equation has no root in ``[0, 1)``."""


class NumericalBreakdown(FeneLabError, RuntimeError):
    """A linear solve or eigensolve failed.

    ``condition`` carries a reciprocal condition estimate when one is
    available.
    """

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class RegimeViolation(FeneLabError):
    """Strict mode refused to run outside the validated parameter regime."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
