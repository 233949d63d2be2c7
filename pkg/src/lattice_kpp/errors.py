"""Exception hierarchy shared by all modules."""


class LatticeKPPError(Exception):
    """Base class for every error raised by the package."""


class ParameterError(LatticeKPPError, ValueError):
    pass


class MalformedFieldError(LatticeKPPError):
    pass


class InsufficientGridError(LatticeKPPError):
    pass


class StabilityError(LatticeKPPError):
    """Step size violates the order-preservation bound of the integrator."""


class BlowUpError(LatticeKPPError):
    def __init__(self, message: str, time: float):
        super().__init__(f"{message} (t={time:.6g})")
        self.time = time


class UndershootError(LatticeKPPError):
    def __init__(self, message: str, time: float):
        super().__init__(f"{message} (t={time:.6g})")
        self.time = time


class ResolutionError(LatticeKPPError):
    pass


class ConvergenceError(LatticeKPPError):
    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class SpectralError(LatticeKPPError):
    def __init__(self, message: str, gap_estimate: float | None = None):
        super().__init__(message)
        self.gap_estimate = gap_estimate


class BracketError(LatticeKPPError):
    def __init__(self, message: str, scan=None):
        super().__init__(message)
        self.scan = scan


class MarginError(LatticeKPPError):
    pass


class InadmissibleTiltError(LatticeKPPError):
    pass


class GeometryError(LatticeKPPError):
    def __init__(self, message: str, scanned_b=None):
        super().__init__(message)
        self.scanned_b = list(scanned_b) if scanned_b is not None else []


class IterationIntegrityError(LatticeKPPError):
    pass


class AdmissibilityError(LatticeKPPError):
    pass


class ConstructionError(LatticeKPPError):
    pass


class EnvelopeError(LatticeKPPError):
    def __init__(self, message: str, witness=None):
        super().__init__(message)
        self.witness = witness


class DomainError(LatticeKPPError, ValueError):
    def __init__(self, message: str, time: float | None = None):
        super().__init__(message if time is None else f"{message} (t={time:.6g})")
        self.time = time


class WindowExitError(LatticeKPPError):
    def __init__(self, message: str, last_valid_time: float | None):
        super().__init__(message)
        self.last_valid_time = last_valid_time


class ConfigError(LatticeKPPError):
    pass
