"""
Shared fixtures for the EquiSeek test suite
"""
import numpy as np
import pytest

from schemas import ScenarioConfig, parse_scenario
from services.scenario_service import builtin_scenarios
from utils.game import duopoly_game


@pytest.fixture(scope="session")
def catalog():
    return builtin_scenarios()


@pytest.fixture
def duopoly():
    return duopoly_game(1.0)


@pytest.fixture
def variant(catalog):
    """Copy of a catalog scenario with edits applied to its key-value tree."""

    def build(name: str, edit=None) -> ScenarioConfig:
        data = catalog[name].model_dump()
        if edit is not None:
            edit(data)
        return parse_scenario(data)

    return build


def fit_sinusoid(times, values, omega):
    """Least-squares A·sin + B·cos + C; returns (amplitude, phase, offset)."""
    basis = np.column_stack([np.sin(omega * times), np.cos(omega * times), np.ones_like(times)])
    (A, B, C), *_ = np.linalg.lstsq(basis, values, rcond=None)
    return float(np.hypot(A, B)), float(np.arctan2(B, A)), float(C)
