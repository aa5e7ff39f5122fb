"""
M^X/M/c queue with resurrection and catastrophes: analytic resolvents,
equilibrium laws, extinction and catastrophe-time statistics, plus a
simulation oracle.
"""

from mxmc.errors import GateError, ModelValidationError, MxmcError, NumericalError, SimulationError
from mxmc.model import QueueModel, load_model, validate

__all__ = [
    "GateError",
    "ModelValidationError",
    "MxmcError",
    "NumericalError",
    "QueueModel",
    "SimulationError",
    "load_model",
    "validate",
]
