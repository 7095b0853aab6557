"""
EquiSeek - Quadratic N-player games
Payoff evaluation, Hessian assembly, closed-form Nash equilibrium and
the diagonal-dominance check the seeking schemes rely on.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from utils.errors import ConfigurationError, InputError, NoUniqueEquilibriumError

logger = logging.getLogger(__name__)

# Reciprocal condition number below which the Hessian counts as singular
SINGULARITY_RCOND = 1e-13


@dataclass(frozen=True)
class QuadraticPayoff:
    """
    Payoff of one player:
    J_i(Θ) = 1/2 ΣΣ ε_jk H_jk Θ_j Θ_k + Σ h_j Θ_j + c
    """
    owner: int
    H: np.ndarray
    h: np.ndarray
    c: float = 0.0

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        h = np.asarray(self.h, dtype=float)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise InputError(f"Payoff {self.owner}: H must be square, got shape {H.shape}")
        if h.shape != (H.shape[0],):
            raise InputError(f"Payoff {self.owner}: h has shape {h.shape}, expected ({H.shape[0]},)")
        if not 0 <= self.owner < H.shape[0]:
            raise InputError(f"Payoff owner {self.owner} outside 0..{H.shape[0] - 1}")
        if not np.allclose(H, H.T, atol=1e-12):
            raise ConfigurationError(f"Payoff {self.owner}: H must be symmetric")
        if H[self.owner, self.owner] >= 0:
            raise ConfigurationError(
                f"Payoff {self.owner}: own curvature H[{self.owner},{self.owner}]="
                f"{H[self.owner, self.owner]} must be negative"
            )
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "c", float(self.c))

    @property
    def size(self) -> int:
        return self.H.shape[0]


def coupling_weights(n: int, epsilon: float) -> np.ndarray:
    """Weight matrix with ones on the diagonal and epsilon elsewhere."""
    weights = np.full((n, n), float(epsilon))
    np.fill_diagonal(weights, 1.0)
    return weights


@dataclass(frozen=True)
class QuadraticGame:
    """N quadratic payoffs sharing one coupling weight epsilon in (0, 1]"""
    payoffs: Tuple[QuadraticPayoff, ...]
    epsilon: float = 1.0
    _weighted: np.ndarray = field(init=False, repr=False, compare=False)
    _linear: np.ndarray = field(init=False, repr=False, compare=False)
    _constants: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        payoffs = tuple(sorted(self.payoffs, key=lambda p: p.owner))
        n = len(payoffs)
        if n == 0:
            raise ConfigurationError("A game needs at least one player")
        if [p.owner for p in payoffs] != list(range(n)):
            raise ConfigurationError("Exactly one payoff per player index is required")
        if any(p.size != n for p in payoffs):
            raise InputError(f"All payoff matrices must be {n}x{n}")
        if not 0.0 < self.epsilon <= 1.0:
            raise ConfigurationError(f"epsilon must lie in (0, 1], got {self.epsilon}")

        object.__setattr__(self, "payoffs", payoffs)
        weights = coupling_weights(n, self.epsilon)
        object.__setattr__(self, "_weighted", np.stack([weights * p.H for p in payoffs]))
        object.__setattr__(self, "_linear", np.stack([p.h for p in payoffs]))
        object.__setattr__(self, "_constants", np.array([p.c for p in payoffs]))

    @property
    def n_players(self) -> int:
        return len(self.payoffs)

    @property
    def own_linear(self) -> np.ndarray:
        """h_i = h^i_i, the linear term each player controls"""
        return np.array([p.h[p.owner] for p in self.payoffs])

    def evaluate_all(self, Theta: np.ndarray) -> np.ndarray:
        """Payoff of every player at one action profile."""
        Theta = np.asarray(Theta, dtype=float)
        if Theta.shape != (self.n_players,):
            raise InputError(f"Action profile has shape {Theta.shape}, expected ({self.n_players},)")
        quadratic = 0.5 * np.einsum("ijk,j,k->i", self._weighted, Theta, Theta)
        return quadratic + self._linear @ Theta + self._constants

    def with_epsilon(self, epsilon: float) -> "QuadraticGame":
        return QuadraticGame(payoffs=self.payoffs, epsilon=epsilon)


def evaluate_payoff(payoff: QuadraticPayoff, epsilon: float, Theta: Sequence[float]) -> float:
    """
    Evaluate one player's payoff at the action profile Theta

    Args:
        payoff: Player's quadratic payoff
        epsilon: Off-diagonal coupling weight
        Theta: Propagated actions of all players

    Returns:
        Payoff value
    """
    Theta = np.asarray(Theta, dtype=float)
    if Theta.shape != (payoff.size,):
        raise InputError(
            f"Action profile has {Theta.size} entries, payoff {payoff.owner} expects {payoff.size}"
        )
    weighted = coupling_weights(payoff.size, epsilon) * payoff.H
    return float(0.5 * Theta @ weighted @ Theta + payoff.h @ Theta + payoff.c)


def assemble_hessian(game: QuadraticGame) -> np.ndarray:
    """Row i holds player i's own row of its curvature, off-diagonals scaled by epsilon."""
    weights = coupling_weights(game.n_players, game.epsilon)
    return np.vstack([weights[p.owner] * p.H[p.owner] for p in game.payoffs])


def nash_equilibrium(game: QuadraticGame) -> np.ndarray:
    """
    Solve H θ* = -h for the unique Nash equilibrium

    Raises:
        NoUniqueEquilibriumError: if the assembled Hessian is singular
    """
    H = assemble_hessian(game)
    h = game.own_linear

    rcond = 1.0 / np.linalg.cond(H) if np.all(np.isfinite(H)) else 0.0
    if not np.isfinite(rcond) or rcond < SINGULARITY_RCOND:
        raise NoUniqueEquilibriumError(
            f"Game Hessian is singular (reciprocal condition {rcond:.3e}); no unique equilibrium"
        )

    try:
        theta_star = lu_solve(lu_factor(H, check_finite=True), -h)
    except ValueError as e:
        raise NoUniqueEquilibriumError(f"Nash equilibrium solve failed: {str(e)}") from e

    residual = np.linalg.norm(H @ theta_star + h)
    logger.debug(f"Nash equilibrium {theta_star} (residual {residual:.2e})")
    return theta_star


@dataclass(frozen=True)
class DominanceReport:
    passed: bool
    margins: Tuple[float, ...]
    failing_rows: Tuple[int, ...]


def check_diagonal_dominance(H: np.ndarray) -> DominanceReport:
    """margin_i = |H_ii| - Σ_{j≠i} |H_ij|; pass iff every margin is positive."""
    H = np.asarray(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise InputError(f"Dominance check needs a square matrix, got shape {H.shape}")
    magnitudes = np.abs(H)
    diagonal = np.diag(magnitudes)
    margins = diagonal - (magnitudes.sum(axis=1) - diagonal)
    failing = tuple(int(i) for i in np.flatnonzero(margins <= 0))
    return DominanceReport(passed=not failing, margins=tuple(float(m) for m in margins), failing_rows=failing)


# ---------------------------------------------------------------------------
# Reference games
# ---------------------------------------------------------------------------

def duopoly_game(epsilon: float = 1.0) -> QuadraticGame:
    """
    Two-firm game used by the heterogeneous transport/heat scenario:
    J1 = -5Θ1² + 5εΘ1Θ2 + 250Θ1 - 150Θ2 - 3000
    J2 = -5Θ2² + 5εΘ1Θ2 - 150Θ1 + 150Θ2 + 2500
    """
    p1 = QuadraticPayoff(
        owner=0,
        H=np.array([[-10.0, 5.0], [5.0, 0.0]]),
        h=np.array([250.0, -150.0]),
        c=-3000.0,
    )
    p2 = QuadraticPayoff(
        owner=1,
        H=np.array([[0.0, 5.0], [5.0, -10.0]]),
        h=np.array([-150.0, 150.0]),
        c=2500.0,
    )
    return QuadraticGame(payoffs=(p1, p2), epsilon=epsilon)


def scalar_map_game(hessian: float, theta_star: float, y_star: float = 0.0) -> QuadraticGame:
    """Single-player map y = y* + (H/2)(Θ - θ*)² as a one-player game."""
    if hessian >= 0:
        raise ConfigurationError(f"Scalar map curvature must be negative, got {hessian}")
    payoff = QuadraticPayoff(
        owner=0,
        H=np.array([[hessian]]),
        h=np.array([-hessian * theta_star]),
        c=y_star + 0.5 * hessian * theta_star ** 2,
    )
    return QuadraticGame(payoffs=(payoff,), epsilon=1.0)


def market_duopoly_game(m1: float, m2: float, total_demand: float, preference: float) -> QuadraticGame:
    """
    Price-setting duopoly with profits J_i = s_i (u_i - m_i), where
    s2 = (u1 - u2)/p and s1 = S_d - s2
    """
    if preference <= 0:
        raise ConfigurationError(f"Consumer preference p must be positive, got {preference}")
    p = preference
    p1 = QuadraticPayoff(
        owner=0,
        H=np.array([[-2.0 / p, 1.0 / p], [1.0 / p, 0.0]]),
        h=np.array([(m1 + total_demand * p) / p, -m1 / p]),
        c=-total_demand * m1,
    )
    p2 = QuadraticPayoff(
        owner=1,
        H=np.array([[0.0, 1.0 / p], [1.0 / p, -2.0 / p]]),
        h=np.array([-m2 / p, m2 / p]),
        c=0.0,
    )
    return QuadraticGame(payoffs=(p1, p2), epsilon=1.0)


def market_nash(m1: float, m2: float, total_demand: float, preference: float) -> np.ndarray:
    """Closed-form prices (u1*, u2*) of the market duopoly."""
    sp = total_demand * preference
    return np.array([(2 * m1 + m2 + 2 * sp) / 3.0, (m1 + 2 * m2 + sp) / 3.0])


def market_best_response(
    prices: Sequence[float], m1: float, m2: float, total_demand: float, preference: float
) -> np.ndarray:
    """One simultaneous best-response update of both firms."""
    u1, u2 = prices
    return np.array([0.5 * (u2 + m1 + total_demand * preference), 0.5 * (u1 + m2)])


def iterate_best_response(
    start: Sequence[float],
    m1: float,
    m2: float,
    total_demand: float,
    preference: float,
    iterations: int = 60,
) -> List[np.ndarray]:
    """Best-response trajectory; contracts to market_nash with factor 1/2 per step."""
    trajectory = [np.asarray(start, dtype=float)]
    for _ in range(iterations):
        trajectory.append(market_best_response(trajectory[-1], m1, m2, total_demand, preference))
    return trajectory
