"""
Spherical mode expansion based MIMO antenna design.

"""

__title__ = 'spheremimo'


class BaseSpheremimoException(Exception):
    pass


class DomainError(BaseSpheremimoException, ValueError):
    """Argument outside of the supported domain (mode index, special function range, shapes)."""
    pass


class ProfileError(DomainError):
    """Angular profile that can not be evaluated (e.g. covariance not positive definite)."""
    pass


class NumericalError(BaseSpheremimoException):
    pass


class ConfigError(BaseSpheremimoException):
    """Invalid scenario configuration, pointing to the offending file location when known."""

    def __init__(self, message: str, path=None, lineno: int = None, key: str = None):
        self.message = message
        self.path = path
        self.lineno = lineno
        self.key = key
        super().__init__(self.__str__())

    def __str__(self):
        location = ""
        if self.path:
            location = str(self.path)
            if self.lineno:
                location += ":{n}".format(n=self.lineno)
            location += ": "
        key = "{k}: ".format(k=self.key) if self.key else ""
        return location + key + self.message


class ConvergenceError(BaseSpheremimoException):
    """Sequential optimization did not converge, carries the partial trace."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


from spheremimo._version import __version__
