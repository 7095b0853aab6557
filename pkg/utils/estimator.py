"""
EquiSeek - Gradient and Hessian estimation
Demodulated estimates, the exact first-order low-pass filter and the
windowed averages used for diagnostics.
"""
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Deque, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from utils.errors import ConfigurationError, InsufficientDataError


def gradient_estimate(y: float, M: float) -> float:
    """G = M·y"""
    return M * y


def hessian_estimate(y: float, N: float) -> float:
    """Ĥ = N·y"""
    return N * y


@dataclass
class LowPassState:
    """
    First-order filter c/(s+c) with exact update for piecewise-constant input.
    c=None is the unfiltered limit: the output equals the input.
    """
    c: Optional[float]
    y: float = 0.0
    _dt: float = field(default=-1.0, init=False, repr=False)
    _decay: float = field(default=0.0, init=False, repr=False)

    def __post_init__(self):
        if self.c is not None and self.c <= 0:
            raise ConfigurationError(f"Filter corner must be positive, got {self.c}")

    def step(self, u: float, dt: float) -> float:
        if self.c is None:
            self.y = u
            return u
        if dt != self._dt:
            self._dt = dt
            self._decay = math.exp(-self.c * dt)
        self.y = self._decay * self.y + (1.0 - self._decay) * u
        return self.y


def lowpass_step(state: LowPassState, u: float, dt: float) -> LowPassState:
    if dt <= 0:
        raise ConfigurationError(f"Filter step needs dt > 0, got {dt}")
    state.step(u, dt)
    return state


class Washout:
    """High-pass y - LPF_h(y), primed with the first sample so the start is quiet"""

    def __init__(self, corner: float):
        self._lowpass = LowPassState(corner)
        self._primed = False

    def step(self, y: float, dt: float) -> float:
        if not self._primed:
            self._lowpass.y = y
            self._primed = True
        out = y - self._lowpass.y
        self._lowpass.step(y, dt)
        return out


def windowed_average(times: Sequence[float], values: Sequence[float], Pi: float,
                     t_end: Optional[float] = None) -> float:
    """
    Trapezoid mean of a sampled signal over exactly [t_end - Π, t_end]

    Args:
        times: Increasing sample times
        values: Samples
        Pi: Window length
        t_end: Right edge, default the last sample time

    Returns:
        Mean value over the window
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if Pi <= 0:
        raise ConfigurationError(f"Averaging window must be positive, got {Pi}")
    if t.size < 2:
        raise InsufficientDataError("Need at least two samples to average")
    t_end = t[-1] if t_end is None else t_end
    t_start = t_end - Pi
    tol = 1e-9 * max(1.0, abs(t_end))
    if t_start < t[0] - tol or t_end > t[-1] + tol:
        raise InsufficientDataError(
            f"Samples span [{t[0]:.6g}, {t[-1]:.6g}], window [{t_start:.6g}, {t_end:.6g}] needs more"
        )

    inside = (t > t_start + tol) & (t < t_end - tol)
    grid = np.concatenate(([t_start], t[inside], [t_end]))
    samples = np.concatenate(([np.interp(t_start, t, v)], v[inside], [np.interp(t_end, t, v)]))
    return float(trapezoid(samples, grid) / Pi)


@dataclass
class EstimatorState:
    """Latest G and Ĥ plus a Π-long window of both for averaged diagnostics"""
    Pi: float
    dt: float
    G: float = 0.0
    Hhat: float = 0.0
    window: Deque[Tuple[float, float, float]] = field(default_factory=deque)

    def record(self, t: float, G: float, Hhat: float) -> None:
        self.G, self.Hhat = G, Hhat
        self.window.append((t, G, Hhat))
        while self.window and self.window[0][0] < t - self.Pi - self.dt * (1 - 1e-9):
            self.window.popleft()

    @property
    def span(self) -> float:
        return self.window[-1][0] - self.window[0][0] if len(self.window) > 1 else 0.0

    def averages(self) -> Tuple[float, float]:
        """(G_av, Ĥ_av) over the last Π."""
        if not self.window:
            raise InsufficientDataError("Estimator window is empty")
        t, G, H = (np.array(col) for col in zip(*self.window))
        return windowed_average(t, G, self.Pi), windowed_average(t, H, self.Pi)


def frozen_averages(payoff: Callable[[float], float],
                    demod: Callable[[float], Tuple[float, float]],
                    Pi: float, dt: float) -> Tuple[float, float]:
    """
    Average G and Ĥ over one Π for a map evaluated along a frozen probe

    Args:
        payoff: y(t) with the actions frozen except for the probe
        demod: t -> (M(t), N(t))
        Pi: Averaging period
        dt: Sampling step (Π/dt should be integral for exact quadrature)

    Returns:
        (G_av, Ĥ_av)
    """
    steps = max(2, int(round(Pi / dt)))
    times = np.linspace(0.0, Pi, steps + 1)
    G = np.empty_like(times)
    H = np.empty_like(times)
    for idx, t in enumerate(times):
        y = payoff(float(t))
        M, N = demod(float(t))
        G[idx] = gradient_estimate(y, M)
        H[idx] = hessian_estimate(y, N)
    return windowed_average(times, G, Pi), windowed_average(times, H, Pi)
