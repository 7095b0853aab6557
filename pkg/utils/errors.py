"""
Exception hierarchy shared by the simulation utilities and services
"""


class EquiSeekError(Exception):
    """Base class for all toolkit errors"""


class ConfigurationError(EquiSeekError):
    """Invalid scenario, channel or controller configuration"""


class InputError(EquiSeekError):
    """Malformed input to a pure computation (e.g. dimension mismatch)"""


class NoUniqueEquilibriumError(EquiSeekError):
    """The game Hessian is singular, so the Nash equilibrium is not unique"""


class InsufficientDataError(EquiSeekError):
    """A series is too short for the requested averaging window or metric"""


class SimulationError(EquiSeekError):
    """The discretized dynamics left their admissible region"""


class ExportError(EquiSeekError):
    """Writing a result artifact failed"""
