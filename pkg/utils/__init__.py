"""
Simulation utilities for the EquiSeek backend
"""
from .errors import (
    ConfigurationError, EquiSeekError, ExportError, InputError,
    InsufficientDataError, NoUniqueEquilibriumError, SimulationError,
)
from .game import QuadraticGame, QuadraticPayoff, duopoly_game, nash_equilibrium
from .pde_channels import build_channel
from .dither import ProbeSpec, select_frequencies

__all__ = [
    'EquiSeekError', 'ConfigurationError', 'InputError', 'NoUniqueEquilibriumError',
    'InsufficientDataError', 'SimulationError', 'ExportError',
    'QuadraticGame', 'QuadraticPayoff', 'duopoly_game', 'nash_equilibrium',
    'build_channel', 'ProbeSpec', 'select_frequencies',
]
