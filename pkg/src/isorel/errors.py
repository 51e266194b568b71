"""Exception types shared across the package."""


class IsorelError(Exception):
    """Base class for all package errors."""


# states
class VacuumState(IsorelError, ValueError):
    pass


class LightSpeed(IsorelError, ValueError):
    pass


class NonPhysical(IsorelError, ValueError):
    pass


# riemann
class DegenerateBeta(IsorelError, ValueError):
    pass


class OutOfBranch(IsorelError, ValueError):
    pass


class NoConvergence(IsorelError, RuntimeError):
    pass


# scheme
class CflViolation(IsorelError, RuntimeError):
    def __init__(self, message, cell=None, factor=None, step=None):
        super().__init__(message)
        self.cell = cell
        self.factor = factor
        self.step = step


class VacuumUnsupported(IsorelError, RuntimeError):
    pass


class NotTame(IsorelError, ValueError):
    pass


# kernel
class WindowStraddlesOne(IsorelError, ValueError):
    pass


class DomainError(IsorelError, ValueError):
    pass


# verify
class WindowMismatch(IsorelError, ValueError):
    pass


# cli
class ConfigError(IsorelError, ValueError):
    pass
