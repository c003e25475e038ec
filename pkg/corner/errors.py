"""
Errors
Exception hierarchy shared by all corner modules.
Every error also derives from the builtin a caller would naturally catch.
"""


class CornerError(Exception):
    """
    Base class for all corner errors
    """


class ParameterError(CornerError, ValueError):
    pass


class UsageError(CornerError, ValueError):

    def __init__(self, message: str, token: str = None):
        super().__init__(message)
        self.token = token


class ValidationError(CornerError, ValueError):

    def __init__(self, message: str, index: int = None):
        """
        :param message: Human readable description
        :param index: 1-based index of the first offending entry
        """
        super().__init__(message)
        self.index = index


class DomainError(CornerError, ValueError):

    def __init__(self, message: str, site=None):
        super().__init__(message)
        self.site = site


class CoverageError(CornerError, ValueError):

    def __init__(self, message: str, site=None):
        super().__init__(message)
        self.site = site


class WindowError(CornerError, ValueError):
    pass


class ResourceError(CornerError, MemoryError):

    def __init__(self, message: str, site_count: int = None):
        super().__init__(message)
        self.site_count = site_count


class BoxExhaustedError(CornerError, RuntimeError):

    def __init__(self, message: str, path=None):
        """
        :param path: The partial CompetitionPath computed before the box boundary was reached
        """
        super().__init__(message)
        self.path = path


class HorizonError(CornerError, RuntimeError):

    def __init__(self, message: str, t: float = None, horizon: float = None):
        super().__init__(message)
        self.t = t
        self.horizon = horizon


class CouplingViolationError(CornerError, RuntimeError):
    pass


class RecurrenceError(CornerError, RuntimeError):

    def __init__(self, message: str, residual: float = None):
        super().__init__(message)
        self.residual = residual
