"""Exception hierarchy shared by the simulation, optimisation and CLI layers."""


class FMOError(Exception):
    """Base class for all package errors."""


class UnitError(FMOError):
    """A site network was passed in the wrong unit system."""


class DomainError(FMOError, ValueError):
    """An argument lies outside the domain of an operation (e.g. ``n0 = 0``)."""


class NumericalError(FMOError):
    """The integration produced a non-finite or unphysical state."""

    def __init__(self, message, time=None):
        if time is not None:
            message = f"{message} (t = {time:.6g} ps)"
        super().__init__(message)
        self.time = time


class StepSizeError(NumericalError):
    """Step-doubling check failed: the run is not converged at this step."""


class ConsistencyError(NumericalError):
    """An internal invariant (Hermiticity, trace, positivity) drifted past tolerance."""


class CapacityError(FMOError):
    """Requested Fock sector is larger than the oracle is configured to handle."""


class ConfigError(FMOError):
    """Malformed scenario configuration; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
