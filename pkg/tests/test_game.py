"""
Tests for quadratic games, Nash equilibria and the dominance check
"""
import numpy as np
import pytest

from utils.errors import ConfigurationError, InputError, NoUniqueEquilibriumError
from utils.game import (
    QuadraticGame, QuadraticPayoff, assemble_hessian, check_diagonal_dominance,
    duopoly_game, evaluate_payoff, iterate_best_response, market_duopoly_game,
    market_nash, nash_equilibrium, scalar_map_game,
)


@pytest.mark.parametrize("epsilon, expected", [
    (1.0, (43.33, 36.67)),
    (0.75, (35.64, 28.36)),
    (0.5, (30.67, 22.67)),
    (0.25, (27.30, 18.41)),
])
def test_duopoly_nash_over_epsilon(epsilon, expected):
    theta_star = nash_equilibrium(duopoly_game(epsilon))
    assert theta_star == pytest.approx(expected, abs=0.01)


def test_duopoly_payoffs_at_equilibrium(duopoly):
    theta_star = nash_equilibrium(duopoly)
    J = duopoly.evaluate_all(theta_star)
    assert J[0] == pytest.approx(889.0, abs=1.0)
    assert J[1] == pytest.approx(2722.0, abs=1.0)


def test_evaluate_payoff_matches_game(duopoly):
    Theta = np.array([12.0, -3.5])
    values = duopoly.evaluate_all(Theta)
    for i, payoff in enumerate(duopoly.payoffs):
        assert evaluate_payoff(payoff, duopoly.epsilon, Theta) == pytest.approx(values[i])


def test_evaluate_payoff_dimension_mismatch(duopoly):
    with pytest.raises(InputError):
        evaluate_payoff(duopoly.payoffs[0], 1.0, [1.0, 2.0, 3.0])
    with pytest.raises(InputError):
        duopoly.evaluate_all(np.zeros(3))


def test_assembled_hessian_weights_off_diagonals():
    H = assemble_hessian(duopoly_game(0.5))
    assert np.allclose(H, [[-10.0, 2.5], [2.5, -10.0]])


def test_singular_game_has_no_unique_equilibrium():
    H = np.array([[-1.0, 1.0], [1.0, -1.0]])
    game = QuadraticGame(payoffs=(
        QuadraticPayoff(owner=0, H=H, h=np.array([1.0, 0.0])),
        QuadraticPayoff(owner=1, H=H, h=np.array([0.0, 1.0])),
    ))
    with pytest.raises(NoUniqueEquilibriumError):
        nash_equilibrium(game)


def test_payoff_validation():
    with pytest.raises(ConfigurationError):
        QuadraticPayoff(owner=0, H=np.array([[-1.0, 2.0], [0.0, -1.0]]), h=np.zeros(2))
    with pytest.raises(ConfigurationError):
        QuadraticPayoff(owner=1, H=np.array([[-1.0, 0.0], [0.0, 1.0]]), h=np.zeros(2))
    with pytest.raises(InputError):
        QuadraticPayoff(owner=0, H=np.eye(2) * -1.0, h=np.zeros(3))


def test_game_epsilon_range():
    with pytest.raises(ConfigurationError):
        duopoly_game(0.0)
    with pytest.raises(ConfigurationError):
        duopoly_game(1.5)


def test_dominance_report():
    report = check_diagonal_dominance(np.array([[-10.0, 5.0], [5.0, -10.0]]))
    assert report.passed
    assert report.margins == pytest.approx((5.0, 5.0))

    report = check_diagonal_dominance(np.array([[-1.0, 2.0, 0.0], [2.0, -5.0, 1.0], [0.0, 1.0, -3.0]]))
    assert not report.passed
    assert report.failing_rows == (0,)


def test_scalar_map_peak():
    game = scalar_map_game(-2.0, 1.0, y_star=3.0)
    assert nash_equilibrium(game) == pytest.approx([1.0])
    assert game.evaluate_all(np.array([1.0]))[0] == pytest.approx(3.0)
    assert game.evaluate_all(np.array([2.0]))[0] == pytest.approx(2.0)


def test_market_nash_matches_game():
    game = market_duopoly_game(5.0, 5.0, 10.0, 1.0)
    assert nash_equilibrium(game) == pytest.approx(market_nash(5.0, 5.0, 10.0, 1.0))
    assert market_nash(5.0, 5.0, 10.0, 1.0) == pytest.approx([35.0 / 3.0, 25.0 / 3.0])


def test_market_profit_form():
    game = market_duopoly_game(5.0, 4.0, 10.0, 2.0)
    u1, u2 = 14.0, 9.0
    s2 = (u1 - u2) / 2.0
    s1 = 10.0 - s2
    J = game.evaluate_all(np.array([u1, u2]))
    assert J == pytest.approx([s1 * (u1 - 5.0), s2 * (u2 - 4.0)])


def test_best_response_contracts_to_nash():
    trajectory = iterate_best_response([10.0, 7.0], 5.0, 5.0, 10.0, 1.0, iterations=60)
    assert trajectory[-1] == pytest.approx(market_nash(5.0, 5.0, 10.0, 1.0), abs=1e-9)


def _random_dominant_game(rng, n):
    payoffs = []
    own = -rng.uniform(1.0, 3.0, size=n)
    for i in range(n):
        H = rng.uniform(-1.0, 1.0, size=(n, n))
        H = 0.5 * (H + H.T)
        bound = 0.4 * abs(own[i]) / max(n - 1, 1)
        H = np.clip(H, -bound, bound)
        H[i, i] = own[i]
        payoffs.append(QuadraticPayoff(owner=i, H=H, h=rng.uniform(-5.0, 5.0, size=n)))
    return QuadraticGame(payoffs=tuple(payoffs), epsilon=1.0)


@pytest.mark.parametrize("seed", range(10))
def test_nash_against_best_response_grid(seed):
    """Each player's grid best response against the others' Nash actions lands on the Nash action."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    game = _random_dominant_game(rng, n)
    theta_star = nash_equilibrium(game)
    assert np.all(np.abs(theta_star) < 20.0)

    grid = np.arange(-20.0, 20.0 + 1e-9, 0.01)
    for i in range(n):
        profiles = np.tile(theta_star, (grid.size, 1))
        profiles[:, i] = grid
        weighted = game._weighted[i]
        values = 0.5 * np.einsum("jk,nj,nk->n", weighted, profiles, profiles) + profiles @ game.payoffs[i].h
        best = grid[np.argmax(values)]
        assert abs(best - theta_star[i]) <= 0.01 + 1e-9
