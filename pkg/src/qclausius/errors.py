"""Exception hierarchy shared by every module."""


class QClausiusError(Exception):
    """Base class for all package errors."""


class StructuralError(QClausiusError, ValueError):
    """An operator violates a structural invariant (hermiticity, shape, CAR...)."""


class ParameterError(QClausiusError, ValueError):
    """A scalar parameter is outside its admissible range."""


class RangeError(QClausiusError, ArithmeticError):
    """A matrix exponential would overflow double precision."""


class CapacityError(QClausiusError, MemoryError):
    """The requested Fock dimension exceeds the configured cap."""


class ConfigurationError(QClausiusError, ValueError):
    """A model or protocol configuration is inconsistent with the operation."""


class ConsistencyError(QClausiusError, ValueError):
    """Two inputs that must describe the same object disagree."""


class NumericalError(QClausiusError, RuntimeError):
    """Step control or quadrature failed to reach the requested tolerance."""


class CalibrationError(NumericalError):
    """The two heat formulas disagree beyond tolerance."""


class CapabilityError(QClausiusError, NotImplementedError):
    """The selected backend cannot compute the requested quantity."""
