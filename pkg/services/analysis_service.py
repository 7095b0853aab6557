"""
EquiSeek - Analysis Service
Pre-flight stability checks and post-run convergence metrics.
"""
import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from config import Config
from utils.dither import ProbeSpec, demodulators, probe_value
from utils.errors import InputError, InsufficientDataError
from utils.estimator import frozen_averages
from utils.game import (
    DominanceReport, QuadraticGame, assemble_hessian, check_diagonal_dominance,
)

logger = logging.getLogger(__name__)


@dataclass
class HurwitzResult:
    max_real_part: float
    eigenvalues: List[complex]

    @property
    def passed(self) -> bool:
        return self.max_real_part < 0.0


def hurwitz_check(H: np.ndarray, K: Sequence[float]) -> HurwitzResult:
    """Largest real part of eig(HK) with K = diag(k)."""
    H = np.asarray(H, dtype=float)
    K = np.asarray(K, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1] or K.shape != (H.shape[0],):
        raise InputError(f"Hurwitz check needs a square H and matching gains, got {H.shape} and {K.shape}")
    eigenvalues = np.linalg.eigvals(H @ np.diag(K))
    return HurwitzResult(max_real_part=float(np.max(eigenvalues.real)),
                         eigenvalues=[complex(v) for v in eigenvalues])


@dataclass
class SmallGainReport:
    epsilon: float
    lhs: List[List[float]]
    margins: List[float]
    worst_margin: float
    window_empty: bool
    passed: bool
    epsilon_star: Optional[float] = None


def own_curvature_rows(game: QuadraticGame) -> np.ndarray:
    """Rows H^i_{i·} of every player's own payoff, without the epsilon weighting."""
    return np.vstack([p.H[p.owner] for p in game.payoffs])


def _small_gain_terms(H: np.ndarray, K: np.ndarray, D: np.ndarray, epsilon: float,
                      constants: Dict[str, float]):
    n = H.shape[0]
    gamma_0 = constants["gamma_0"] * epsilon
    gamma_1 = constants["gamma_1"]
    lhs, margins = [], []
    window_empty = False
    for i in range(n):
        own = abs(H[i, i])
        off = [abs(H[i, j]) for j in range(n) if j != i]
        k_H = max(off, default=0.0) * (1.0 + Config.K_H_INFLATION)
        if k_H >= own / epsilon:
            window_empty = True
        spread = sum(D[j] ** 2 for j in range(n) if j != i)
        k_i = K[i]
        sigma = own * k_i
        K0, K1, K2 = 1.0, epsilon * k_i * k_H * spread / math.sqrt(3.0), 0.0
        B0, B1, B2 = 0.0, k_i, 0.0
        gamma_3 = epsilon * own * k_i * k_H * spread / math.sqrt(3.0)
        first = max(gamma_0 * K0, gamma_1 * K1) + K2 / sigma
        second = gamma_3 * max(gamma_0 * B0, gamma_1 * B1) + gamma_3 * B2 / sigma
        lhs.append([first, second])
        margins.append(1.0 - max(first, second))
    return lhs, margins, window_empty


def small_gain_margin(H: np.ndarray, K: Sequence[float], D: Sequence[float], epsilon: float,
                      constants: Dict[str, float] = None) -> SmallGainReport:
    """
    Evaluate both small-gain inequalities per player and bisect for the
    largest epsilon at which they still hold

    Args:
        H: Own-payoff curvature rows H^i_{ij} (unweighted)
        K: Adaptation gains
        D: Channel lengths or delays per player
        epsilon: Coupling weight
        constants: gamma_0 (scaled by epsilon) and gamma_1

    Returns:
        SmallGainReport with per-player left-hand sides and margins
    """
    constants = constants or Config.SMALL_GAIN_CONSTANTS
    H = np.asarray(H, dtype=float)
    K = np.asarray(K, dtype=float)
    D = np.asarray(D, dtype=float)
    if H.shape[0] != K.size or K.size != D.size:
        raise InputError("H, K and D must describe the same number of players")
    if np.any(K <= 0):
        raise InputError("Small-gain check needs positive gains")

    lhs, margins, window_empty = _small_gain_terms(H, K, D, epsilon, constants)
    dominance = check_diagonal_dominance(_weighted(H, epsilon))
    worst = float(min(margins))
    passed = bool(worst > 0 and not window_empty and dominance.passed)

    def holds(eps: float) -> bool:
        _, m, empty = _small_gain_terms(H, K, D, eps, constants)
        return min(m) > 0 and not empty and check_diagonal_dominance(_weighted(H, eps)).passed

    if holds(1.0):
        epsilon_star = 1.0
    elif not holds(1e-12):
        epsilon_star = 0.0
    else:
        lo, hi = 1e-12, 1.0
        while hi - lo > Config.BISECTION_TOL:
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if holds(mid) else (lo, mid)
        epsilon_star = lo

    return SmallGainReport(epsilon=epsilon, lhs=lhs, margins=margins, worst_margin=worst,
                           window_empty=window_empty, passed=passed, epsilon_star=epsilon_star)


def _weighted(H: np.ndarray, epsilon: float) -> np.ndarray:
    weights = np.full(H.shape, epsilon)
    np.fill_diagonal(weights, 1.0)
    return weights * H


@dataclass
class StabilityReport:
    dominance: DominanceReport
    hurwitz: HurwitzResult
    small_gain: SmallGainReport

    @property
    def epsilon_star(self) -> Optional[float]:
        return self.small_gain.epsilon_star

    def to_dict(self) -> dict:
        return {
            "dominance": {"passed": self.dominance.passed, "margins": list(self.dominance.margins),
                          "failing_rows": list(self.dominance.failing_rows)},
            "hurwitz": {"passed": self.hurwitz.passed, "max_real_part": self.hurwitz.max_real_part},
            "small_gain": {"passed": self.small_gain.passed, "epsilon": self.small_gain.epsilon,
                           "lhs": self.small_gain.lhs, "margins": self.small_gain.margins,
                           "worst_margin": self.small_gain.worst_margin,
                           "window_empty": self.small_gain.window_empty},
            "epsilon_star": self.epsilon_star,
        }


@dataclass
class ConvergenceMetrics:
    tail_residual: List[float]
    theta_tail_residual: List[float]
    band_prediction: List[float]
    band_scale: List[float]
    theta_band: List[float]
    periodic_norm: float
    tail_start: float

    def to_dict(self) -> dict:
        return asdict(self)


def convergence_metrics(times: np.ndarray, Theta: np.ndarray, theta: np.ndarray,
                        Theta_star: Sequence[float], a: Sequence[float], omega: Sequence[float],
                        Pi: float, heat_lengths: Sequence[float] = None,
                        theta_star: Sequence[float] = None,
                        tail_fraction: float = None) -> ConvergenceMetrics:
    """
    Tail residuals of Θ and θ over the final part of a run, the predicted
    O(|a| + 1/ω) bands and the RMS deviation over the final averaging period

    Args:
        times: Sample times, shape (n,)
        Theta: Propagated actions, shape (n, N)
        theta: Applied boundary inputs, shape (n, N)
        Theta_star: Target propagated actions
        a: Probe amplitudes
        omega: Probe frequencies
        Pi: Averaging period
        heat_lengths: Domain length per player for heat channels (0 otherwise)
        theta_star: Steady boundary input that yields Theta_star (default Theta_star)
        tail_fraction: Share of the run treated as tail

    Returns:
        ConvergenceMetrics
    """
    tail_fraction = Config.TAIL_FRACTION if tail_fraction is None else tail_fraction
    t = np.asarray(times, dtype=float)
    Theta = np.atleast_2d(np.asarray(Theta, dtype=float).T).T
    theta = np.atleast_2d(np.asarray(theta, dtype=float).T).T
    Theta_star = np.asarray(Theta_star, dtype=float)
    theta_star = Theta_star if theta_star is None else np.asarray(theta_star, dtype=float)
    a = np.abs(np.asarray(a, dtype=float))
    omega = np.asarray(omega, dtype=float)
    heat_lengths = np.zeros_like(a) if heat_lengths is None else np.asarray(heat_lengths, dtype=float)

    duration = t[-1] - t[0]
    needed = Config.MIN_PERIODS_FOR_METRICS * Pi
    if duration < needed * (1 - 1e-9):
        raise InsufficientDataError(
            f"Run covers {duration:.4g} s, convergence metrics need at least {needed:.4g} s (5 averaging periods)"
        )

    tail_start = t[-1] - tail_fraction * duration
    tail = t >= tail_start
    tail_residual = np.max(np.abs(Theta[tail] - Theta_star), axis=0)
    theta_tail = np.max(np.abs(theta[tail] - theta_star), axis=0)
    band = a + 1.0 / omega
    theta_band = a * np.exp(heat_lengths * np.sqrt(omega / 2.0)) + 1.0 / omega

    final = t >= t[-1] - Pi
    squared = np.sum((Theta[final] - Theta_star) ** 2, axis=1)
    if final.sum() > 1:
        periodic = math.sqrt(float(trapezoid(squared, t[final])) / (t[final][-1] - t[final][0]))
    else:
        periodic = math.sqrt(float(squared[-1]))

    return ConvergenceMetrics(
        tail_residual=tail_residual.tolist(),
        theta_tail_residual=theta_tail.tolist(),
        band_prediction=band.tolist(),
        band_scale=(tail_residual / band).tolist(),
        theta_band=theta_band.tolist(),
        periodic_norm=periodic,
        tail_start=float(tail_start),
    )


def default_divergence_threshold(Theta_star: Sequence[float]) -> float:
    scale = float(np.linalg.norm(np.asarray(Theta_star, dtype=float)))
    return Config.DIVERGENCE_FACTOR * max(scale, 1.0)


def divergence_detector(times: Sequence[float], Theta: np.ndarray, threshold: float) -> Optional[float]:
    """Earliest time with |Θ(t)| > threshold (strict), or None."""
    t = np.asarray(times, dtype=float)
    values = np.asarray(Theta, dtype=float)
    norms = np.abs(values) if values.ndim == 1 else np.linalg.norm(values, axis=1)
    exceeded = np.flatnonzero(~(norms <= threshold))
    if exceeded.size == 0:
        return None
    return float(t[exceeded[0]])


def frozen_estimates(game: QuadraticGame, Theta_hat: Sequence[float], probes: Sequence[ProbeSpec],
                     Pi: float, dt: float) -> List[Dict[str, float]]:
    """
    Averaged gradient and Hessian estimates of every player with the actions
    frozen at Theta_hat plus the probes arriving as a·sin(ωt)

    Returns:
        One {'G': ..., 'H': ...} per player
    """
    Theta_hat = np.asarray(Theta_hat, dtype=float)
    arrivals = [ProbeSpec(a=p.a, omega=p.omega) for p in probes]
    results = []
    for i in range(game.n_players):
        def payoff(t: float, i=i) -> float:
            Theta = Theta_hat + np.array([probe_value(q, t) for q in arrivals])
            return float(game.evaluate_all(Theta)[i])

        G_av, H_av = frozen_averages(payoff, lambda t, i=i: demodulators(arrivals[i], t), Pi, dt)
        results.append({"G": G_av, "H": H_av})
    return results


class AnalysisService:
    """
    Pre-flight checks bundled for a game, gains and channel lengths.
    """

    @staticmethod
    def stability_report(game: QuadraticGame, K: Sequence[float], D: Sequence[float],
                         constants: Dict[str, float] = None) -> StabilityReport:
        H = assemble_hessian(game)
        report = StabilityReport(
            dominance=check_diagonal_dominance(H),
            hurwitz=hurwitz_check(H, K),
            small_gain=small_gain_margin(own_curvature_rows(game), K, D, game.epsilon, constants),
        )
        logger.info(
            f"Stability: dominance={'pass' if report.dominance.passed else 'fail'}, "
            f"max Re eig(HK)={report.hurwitz.max_real_part:.4g}, "
            f"small-gain margin={report.small_gain.worst_margin:.4g}, ε*={report.epsilon_star}"
        )
        return report
