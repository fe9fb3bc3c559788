"""Exception hierarchy shared by every module."""


class LogPoolError(Exception):
    """Base class for all package errors."""


class StructuralError(LogPoolError, ValueError):
    """Shapes or indices do not line up (dimension mismatch, bad outcome index)."""


class DomainError(LogPoolError, ValueError):
    """A value lies outside the mathematical domain of an operation."""


class ConfigError(LogPoolError, ValueError):
    """An experiment or scenario configuration failed validation."""


class LoadError(LogPoolError, ValueError):
    """A file could not be parsed or failed validation on load."""


class NumericalError(LogPoolError, ArithmeticError):
    """A numerical routine failed (non-finite values, bracketing failure)."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record
