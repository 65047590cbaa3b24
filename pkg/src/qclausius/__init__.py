"""Finite-dimensional laboratory for heat, work and entropy in driven fermionic models."""

from .backends import FockBackend, QuadraticBackend, make_backend
from .errors import (
    CalibrationError,
    CapabilityError,
    CapacityError,
    ConfigurationError,
    ConsistencyError,
    NumericalError,
    ParameterError,
    QClausiusError,
    RangeError,
    StructuralError,
)
from .model import ModelRecipe, ReservoirRecipe
from .processes import convergence_study, run_staircase, run_stepwise, staircase_schedule
from .schedule import DriveSchedule
from .thermo import ThermoLedger, evolve_ledger

__version__ = "0.1.0"

__all__ = [
    "CalibrationError",
    "CapabilityError",
    "CapacityError",
    "ConfigurationError",
    "ConsistencyError",
    "DriveSchedule",
    "FockBackend",
    "ModelRecipe",
    "NumericalError",
    "ParameterError",
    "QClausiusError",
    "QuadraticBackend",
    "RangeError",
    "ReservoirRecipe",
    "StructuralError",
    "ThermoLedger",
    "convergence_study",
    "evolve_ledger",
    "make_backend",
    "run_staircase",
    "run_stepwise",
    "staircase_schedule",
]
