"""
EquiSeek - Actuation channels
Discretized 1-D dynamics between the applied boundary input θ(t) and the
propagated action Θ(t) that reaches the payoff map.
"""
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import solve, solve_banded

from config import Config
from utils.errors import ConfigurationError, SimulationError
from utils.kernels import rad_gamma, rad_xi

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Channel kinds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Direct:
    """No actuation dynamics: Θ = θ"""


@dataclass(frozen=True)
class Transport:
    delay: float

    def __post_init__(self):
        if self.delay <= 0:
            raise ConfigurationError(f"Transport delay must be positive, got {self.delay}")


@dataclass(frozen=True)
class Heat:
    length: float

    def __post_init__(self):
        if self.length <= 0:
            raise ConfigurationError(f"Heat domain length must be positive, got {self.length}")


@dataclass(frozen=True)
class Wave:
    length: float

    def __post_init__(self):
        if self.length <= 0:
            raise ConfigurationError(f"Wave domain length must be positive, got {self.length}")


@dataclass(frozen=True)
class WaveKV:
    length: float
    damping: float

    def __post_init__(self):
        if self.length <= 0:
            raise ConfigurationError(f"Wave domain length must be positive, got {self.length}")
        if self.damping <= 0:
            raise ConfigurationError(f"Kelvin-Voigt damping must be positive, got {self.damping}")


@dataclass(frozen=True)
class RAD:
    eps: float
    b: float
    lam: float
    length: float = 1.0

    def __post_init__(self):
        if self.eps <= 0:
            raise ConfigurationError(f"RAD diffusivity must be positive, got {self.eps}")
        if self.b < 0 or self.lam < 0:
            raise ConfigurationError("RAD advection and reaction coefficients must be non-negative")
        if self.length != 1.0:
            raise ConfigurationError("RAD channels are posed on the unit interval")
        if rad_xi(self.eps, self.b, self.lam) < 0:
            raise ConfigurationError(
                f"RAD channel needs b²/(4ε) - λ ≥ 0, got {rad_xi(self.eps, self.b, self.lam):.4g}"
            )


@dataclass(frozen=True)
class Stefan:
    s0: float
    cap: float = 10.0

    def __post_init__(self):
        if not 0 < self.s0 < self.cap:
            raise ConfigurationError(f"Initial interface {self.s0} must lie in (0, {self.cap})")


@dataclass(frozen=True)
class VariableDelay:
    """D(t) = mean + amplitude·sin(frequency·t)"""
    mean: float
    amplitude: float = 0.0
    frequency: float = 0.0

    def __post_init__(self):
        if self.mean - abs(self.amplitude) <= 0:
            raise ConfigurationError("Variable delay must stay positive")
        if abs(self.amplitude) * abs(self.frequency) >= 1.0:
            raise ConfigurationError(
                "φ(t) = t - D(t) must be strictly increasing: |amplitude·frequency| < 1 required"
            )

    @property
    def d_max(self) -> float:
        return self.mean + abs(self.amplitude)

    def delay_at(self, t: float) -> float:
        return self.mean + self.amplitude * math.sin(self.frequency * t)

    def phi(self, t: float) -> float:
        return t - self.delay_at(t)

    def phi_inverse(self, t: float, tol: float = None) -> float:
        """Solve φ(s) = t for s in [t, t + D_max] by bisection."""
        tol = Config.BISECTION_TOL if tol is None else tol
        lo, hi = t, t + self.d_max
        if self.phi(lo) > t or self.phi(hi) < t:
            raise ConfigurationError(f"φ is not invertible around t={t}")
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if self.phi(mid) < t:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)


@dataclass(frozen=True)
class DistributedDelay:
    """Delay kernel given by a piecewise-linear CDF β on [0, delay]; repeated σ marks a jump."""
    delay: float
    cdf: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        if self.delay <= 0:
            raise ConfigurationError(f"Distributed delay support must be positive, got {self.delay}")
        points = tuple((float(s), float(b)) for s, b in self.cdf)
        if len(points) < 1:
            raise ConfigurationError("Distributed delay needs at least one CDF point")
        sigmas = [s for s, _ in points]
        values = [b for _, b in points]
        if sigmas[0] != 0.0:
            raise ConfigurationError("The CDF must start at σ=0")
        if any(b < a for a, b in zip(sigmas, sigmas[1:])) or any(b < a for a, b in zip(values, values[1:])):
            raise ConfigurationError("CDF points must be nondecreasing in σ and β")
        if sigmas[-1] > self.delay + 1e-12:
            raise ConfigurationError("CDF support exceeds the configured delay")
        if values[0] < 0 or abs(values[-1] - 1.0) > 1e-12:
            raise ConfigurationError("The CDF must rise from β≥0 to exactly 1")
        object.__setattr__(self, "cdf", points)

    def segments(self) -> Iterable[Tuple[float, float, float, float]]:
        """(σa, σb, βa, βb) pieces; σa == σb is a jump. A positive β(0) is an atom at zero."""
        first_sigma, first_value = self.cdf[0]
        if first_value > 0:
            yield (0.0, 0.0, 0.0, first_value)
        for (sa, ba), (sb, bb) in zip(self.cdf, self.cdf[1:]):
            if bb > ba or sa == sb:
                yield (sa, sb, ba, bb)

    def cdf_at(self, sigma) -> np.ndarray:
        """Right-continuous β(σ)."""
        sigma = np.asarray(sigma, dtype=float)
        result = np.zeros_like(sigma)
        for sa, sb, ba, bb in self.segments():
            if sa == sb:
                result = np.where(sigma >= sa, result + (bb - ba), result)
            else:
                frac = np.clip((sigma - sa) / (sb - sa), 0.0, 1.0)
                result = result + (bb - ba) * frac
        return result

    def cdf_integral(self, sigma) -> np.ndarray:
        """B(σ) = ∫₀^σ β(s) ds, exact for the piecewise-linear CDF."""
        sigma = np.asarray(sigma, dtype=float)
        total = np.zeros_like(sigma)
        for sa, sb, ba, bb in self.segments():
            mass = bb - ba
            if sa == sb:
                total = total + mass * np.clip(sigma - sa, 0.0, None)
            else:
                width = sb - sa
                u = np.clip(sigma - sa, 0.0, width)
                # contribution of a linear ramp of height `mass` over [sa, sb], then flat
                total = total + mass * (u * u / (2 * width) + np.clip(sigma - sb, 0.0, None))
        return total

    def transfer(self, omega: float) -> complex:
        """Φ(ω) = ∫ e^{iωξ} dβ(ξ)."""
        total = 0j
        for sa, sb, ba, bb in self.segments():
            mass = bb - ba
            if sa == sb:
                total += mass * np.exp(1j * omega * sa)
            else:
                slope = mass / (sb - sa)
                total += slope * (np.exp(1j * omega * sb) - np.exp(1j * omega * sa)) / (1j * omega)
        return complex(total)


ChannelKind = Union[Direct, Transport, Heat, Wave, WaveKV, RAD, Stefan, VariableDelay, DistributedDelay]

DIFFUSIVE_KINDS = (Heat, RAD)
WAVE_KINDS = (Wave, WaveKV)
DELAY_KINDS = (Transport, VariableDelay, DistributedDelay)


def kind_length(kind: ChannelKind) -> float:
    """Characteristic delay or domain length D of a channel kind."""
    if isinstance(kind, (Transport, DistributedDelay)):
        return kind.delay
    if isinstance(kind, (Heat, Wave, WaveKV, RAD)):
        return kind.length
    if isinstance(kind, VariableDelay):
        return kind.d_max
    if isinstance(kind, Stefan):
        return kind.s0
    return 0.0


# ---------------------------------------------------------------------------
# Time-step selection
# ---------------------------------------------------------------------------

def _as_fraction(value: float) -> Fraction:
    fraction = Fraction(value).limit_denominator(10 ** 6)
    if abs(float(fraction) - value) > 1e-9 * max(1.0, abs(value)):
        raise ConfigurationError(f"Delay {value} is not representable as a rational multiple of a time step")
    return fraction


def snap_time_step(dt_target: float, delays: Sequence[float]) -> float:
    """
    Largest dt ≤ dt_target such that every delay is an integer number of steps

    Args:
        dt_target: Desired step
        delays: Constant delays that must be integral multiples of dt

    Returns:
        Snapped dt
    """
    if dt_target <= 0:
        raise ConfigurationError(f"Time step must be positive, got {dt_target}")
    if not delays:
        return dt_target

    fractions = [_as_fraction(d) for d in delays]
    numerator = 0
    denominator = 1
    for f in fractions:
        numerator = math.gcd(numerator, f.numerator)
        denominator = math.lcm(denominator, f.denominator)
    common = Fraction(numerator, denominator)
    if common == 0:
        raise ConfigurationError("Delays must be positive")

    divisions = math.ceil(float(common) / dt_target - 1e-12)
    dt = float(common / divisions)
    logger.debug(f"Snapped dt {dt_target:.6g} -> {dt:.6g} (common delay unit {float(common):.6g})")
    return dt


def default_time_step(kinds: Sequence[ChannelKind], omega_max: float, grid_cells: int) -> float:
    """min(2π/(40 ω_max), D²/(10 M² κ)) over the diffusive channels, plus a wave accuracy bound."""
    dt = 2 * math.pi / (Config.STEPS_PER_DITHER_PERIOD * omega_max)
    for kind in kinds:
        if isinstance(kind, Heat):
            dt = min(dt, Config.DIFFUSION_NUMBER_TARGET * (kind.length / grid_cells) ** 2)
        elif isinstance(kind, RAD):
            dt = min(dt, Config.DIFFUSION_NUMBER_TARGET * (1.0 / grid_cells) ** 2 / kind.eps)
        elif isinstance(kind, WAVE_KINDS):
            dt = min(dt, kind.length / grid_cells)
        elif isinstance(kind, Stefan):
            dt = min(dt, 0.01)
    return dt


# ---------------------------------------------------------------------------
# Snapshots
# ---------------------------------------------------------------------------

@dataclass
class ChannelSnapshot:
    """Distributed state of a channel on its grid, plus its first-order time derivative."""
    x: np.ndarray
    profile: np.ndarray
    rate: np.ndarray

    def integral(self, weight: Union[np.ndarray, Callable[[np.ndarray], np.ndarray], None] = None,
                 use_rate: bool = True) -> float:
        """Composite trapezoid of w(x)·u(x) with u the rate (default) or the profile."""
        values = self.rate if use_rate else self.profile
        if weight is None:
            w = 1.0
        elif callable(weight):
            w = weight(self.x)
        else:
            w = weight
        return float(trapezoid(w * values, self.x))


# ---------------------------------------------------------------------------
# Channels
# ---------------------------------------------------------------------------

class DelayLine:
    """Fixed-size history of samples, newest last"""

    def __init__(self, size: int):
        if size < 1:
            raise ConfigurationError(f"Delay line needs at least one slot, got {size}")
        self.size = size
        self._buffer = np.zeros(2 * size)
        self._pos = 0

    def fill(self, values: np.ndarray) -> None:
        """Load a full history ordered oldest to newest."""
        values = np.asarray(values, dtype=float)
        if values.shape != (self.size,):
            raise ConfigurationError(f"History needs {self.size} samples, got {values.shape}")
        self._buffer[: self.size] = values
        self._buffer[self.size:] = values
        self._pos = 0

    def push(self, value: float) -> None:
        self._buffer[self._pos] = value
        self._buffer[self._pos + self.size] = value
        self._pos = (self._pos + 1) % self.size

    def lag(self, k: int) -> float:
        """Sample pushed k steps before the newest one."""
        return self._buffer[self._pos + self.size - 1 - k]

    def window(self) -> np.ndarray:
        return self._buffer[self._pos: self._pos + self.size]


class Channel(ABC):
    """One actuation channel driven step by step with the boundary input"""

    kind: ChannelKind

    def __init__(self, kind: ChannelKind, dt: float):
        self.kind = kind
        self.dt = dt
        self.t = 0.0
        self.steps = 0

    @abstractmethod
    def reset(self, value: float = 0.0) -> None:
        """Rest state with every sample equal to value."""

    @abstractmethod
    def warm_start(self, history: Callable[[np.ndarray], np.ndarray],
                   profile: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> None:
        """
        Initialize from a past input history θ(t≤0) (delay channels) or a
        distributed profile α(x, 0) (PDE channels)
        """

    @abstractmethod
    def _advance(self, theta_start: float, theta_end: float) -> None:
        ...

    @property
    @abstractmethod
    def output(self) -> float:
        """Propagated action Θ at the current time."""

    @abstractmethod
    def snapshot(self) -> ChannelSnapshot:
        ...

    def step(self, theta_start: float, theta_end: float) -> float:
        """Advance one dt with the input moving linearly from theta_start to theta_end."""
        self._advance(theta_start, theta_end)
        self.steps += 1
        self.t = self.steps * self.dt
        return self.output


class DirectChannel(Channel):
    def __init__(self, kind: Direct, dt: float):
        super().__init__(kind, dt)
        self._value = 0.0

    def reset(self, value: float = 0.0) -> None:
        self._value = value

    def warm_start(self, history, profile=None) -> None:
        self._value = float(history(np.array([0.0]))[0])

    def _advance(self, theta_start: float, theta_end: float) -> None:
        self._value = theta_end

    @property
    def output(self) -> float:
        return self._value

    def snapshot(self) -> ChannelSnapshot:
        return ChannelSnapshot(x=np.array([0.0]), profile=np.array([self._value]), rate=np.zeros(1))


class TransportChannel(Channel):
    """Exact shift by m = D/dt samples"""

    def __init__(self, kind: Transport, dt: float):
        super().__init__(kind, dt)
        m = round(kind.delay / dt)
        if m < 1 or abs(m * dt - kind.delay) > 1e-9 * kind.delay:
            raise ConfigurationError(f"Delay {kind.delay} is not an integer number of steps dt={dt}")
        self.lag_steps = m
        self._line = DelayLine(m + 1)
        self._previous = np.zeros(m + 1)

    def reset(self, value: float = 0.0) -> None:
        self._line.fill(np.full(self.lag_steps + 1, value))
        self._previous = self._line.window().copy()

    def warm_start(self, history, profile=None) -> None:
        times = -self.dt * np.arange(self.lag_steps, -1, -1)
        self._line.fill(history(times))
        self._previous = self._line.window().copy()

    def _advance(self, theta_start: float, theta_end: float) -> None:
        self._previous = self._line.window().copy()
        self._line.push(theta_end)

    @property
    def output(self) -> float:
        return self._line.lag(self.lag_steps)

    def snapshot(self) -> ChannelSnapshot:
        # x=0 is the output end, x=D holds the newest input
        x = self.dt * np.arange(self.lag_steps + 1)
        profile = self._line.window().copy()
        return ChannelSnapshot(x=x, profile=profile, rate=(profile - self._previous) / self.dt)


class VariableDelayChannel(Channel):
    """Θ(t) = θ(t - D(t)) by linear interpolation of the input history"""

    def __init__(self, kind: VariableDelay, dt: float):
        super().__init__(kind, dt)
        self._slots = int(math.ceil(kind.d_max / dt)) + 2
        self._line = DelayLine(self._slots)

    def reset(self, value: float = 0.0) -> None:
        self._line.fill(np.full(self._slots, value))

    def warm_start(self, history, profile=None) -> None:
        times = -self.dt * np.arange(self._slots - 1, -1, -1)
        self._line.fill(history(times))

    def _advance(self, theta_start: float, theta_end: float) -> None:
        self._line.push(theta_end)

    @property
    def output(self) -> float:
        lag = self.kind.delay_at(self.t) / self.dt
        k = int(math.floor(lag))
        frac = lag - k
        return (1.0 - frac) * self._line.lag(k) + frac * self._line.lag(k + 1)

    def snapshot(self) -> ChannelSnapshot:
        profile = self._line.window().copy()
        x = self.dt * np.arange(self._slots)
        return ChannelSnapshot(x=x, profile=profile, rate=np.zeros_like(profile))


def _hat_primitive(u: np.ndarray) -> np.ndarray:
    """∫_{-∞}^{u} max(0, 1 - |v|) dv"""
    u = np.clip(u, -1.0, 1.0)
    return np.where(u <= 0.0, 0.5 * (u + 1.0) ** 2, 1.0 - 0.5 * (1.0 - u) ** 2)


def distributed_delay_weights(kind: DistributedDelay, dt: float) -> np.ndarray:
    """
    Weights w_k with Θ_n = Σ w_k θ_{n-k}, exact for inputs that are linear
    between samples; w sums to one
    """
    m = round(kind.delay / dt)
    if abs(m * dt - kind.delay) > 1e-9 * kind.delay:
        raise ConfigurationError(f"Distributed delay {kind.delay} is not an integer number of steps dt={dt}")
    centers = np.arange(m + 1)
    weights = np.zeros(m + 1)
    for sa, sb, ba, bb in kind.segments():
        mass = bb - ba
        if sa == sb:
            weights += mass * np.clip(1.0 - np.abs(sa / dt - centers), 0.0, None)
        else:
            slope = mass / (sb - sa)
            weights += slope * dt * (_hat_primitive(sb / dt - centers) - _hat_primitive(sa / dt - centers))
    return weights


class DistributedDelayChannel(Channel):
    """Θ(t) = ∫₀^D θ(t - σ) dβ(σ) over the input history"""

    def __init__(self, kind: DistributedDelay, dt: float):
        super().__init__(kind, dt)
        weights = distributed_delay_weights(kind, dt)
        self.lag_steps = len(weights) - 1
        # oldest-first ordering to match the delay line window
        self._weights = weights[::-1].copy()
        self._line = DelayLine(self.lag_steps + 1)

    def reset(self, value: float = 0.0) -> None:
        self._line.fill(np.full(self.lag_steps + 1, value))

    def warm_start(self, history, profile=None) -> None:
        times = -self.dt * np.arange(self.lag_steps, -1, -1)
        self._line.fill(history(times))

    def _advance(self, theta_start: float, theta_end: float) -> None:
        self._line.push(theta_end)

    @property
    def output(self) -> float:
        return float(self._weights @ self._line.window())

    def snapshot(self) -> ChannelSnapshot:
        x = self.dt * np.arange(self.lag_steps + 1)
        profile = self._line.window().copy()
        return ChannelSnapshot(x=x, profile=profile, rate=np.zeros_like(profile))


class LinearPdeChannel(Channel):
    """
    Method-of-lines channel z' = A z + f(θ, θ̇) advanced with the trapezoidal
    rule through a precomputed propagator. Subclasses build A and the
    boundary column; the output is the field value at x=0.
    """

    def __init__(self, kind: ChannelKind, dt: float, grid_cells: int, length: float):
        super().__init__(kind, dt)
        if grid_cells < 2:
            raise ConfigurationError(f"Grid needs at least 2 cells, got {grid_cells}")
        self.grid_cells = grid_cells
        self.length = length
        self.dx = length / grid_cells
        self.x = np.linspace(0.0, length, grid_cells + 1)
        A, boundary = self._operator()
        n = A.shape[0]
        identity = np.eye(n)
        left = identity - 0.5 * dt * A
        self._propagator = solve(left, identity + 0.5 * dt * A)
        self._boundary_gain = solve(left, 0.5 * dt * boundary)
        self._state = np.zeros(n)
        self._previous = np.zeros(n)
        self._theta = 0.0
        self._theta_previous = 0.0

    @abstractmethod
    def _operator(self) -> Tuple[np.ndarray, np.ndarray]:
        ...

    def _forcing(self, theta_start: float, theta_end: float) -> float:
        return theta_start + theta_end

    def _advance(self, theta_start: float, theta_end: float) -> None:
        self._previous = self._state
        self._state = self._propagator @ self._state + self._boundary_gain * self._forcing(theta_start, theta_end)
        self._theta_previous = self._theta
        self._theta = theta_end

    @property
    def output(self) -> float:
        return float(self._state[0])

    @property
    def field(self) -> np.ndarray:
        """α on the full grid including the actuated boundary."""
        return np.append(self._state[: self.grid_cells], self._theta)

    def reset(self, value: float = 0.0) -> None:
        self._state = np.zeros_like(self._state)
        self._state[: self.grid_cells] = value
        self._previous = self._state.copy()
        self._theta = self._theta_previous = value

    def warm_start(self, history, profile=None) -> None:
        if profile is None:
            self.reset(float(history(np.array([0.0]))[0]))
            return
        values = np.asarray(profile(self.x), dtype=float)
        self._state = np.zeros_like(self._state)
        self._state[: self.grid_cells] = values[: self.grid_cells]
        self._previous = self._state.copy()
        self._theta = self._theta_previous = float(values[-1])

    def snapshot(self) -> ChannelSnapshot:
        profile = self.field
        previous = np.append(self._previous[: self.grid_cells], self._theta_previous)
        return ChannelSnapshot(x=self.x, profile=profile, rate=(profile - previous) / self.dt)


def _neumann_laplacian(cells: int, dx: float) -> np.ndarray:
    """Second difference on x_j = j·dx, j < cells, ghost-node Neumann at 0 and Dirichlet at x_cells."""
    L = (np.diag(np.full(cells - 1, 1.0), -1) - 2.0 * np.eye(cells) + np.diag(np.full(cells - 1, 1.0), 1))
    L[0, 1] = 2.0
    return L / dx ** 2


class HeatChannel(LinearPdeChannel):
    """α_t = α_xx on [0, D], α_x(0) = 0, α(D) = θ, Θ = α(0)"""

    def __init__(self, kind: Heat, dt: float, grid_cells: int):
        dx = kind.length / grid_cells
        number = dt / dx ** 2
        if number > Config.DIFFUSION_NUMBER_MAX:
            raise ConfigurationError(
                f"Heat channel dt={dt:.3g} gives dt/dx²={number:.3g} > {Config.DIFFUSION_NUMBER_MAX}; "
                f"reduce dt below {Config.DIFFUSION_NUMBER_MAX * dx ** 2:.3g} or coarsen the grid"
            )
        super().__init__(kind, dt, grid_cells, kind.length)

    def _operator(self):
        L = _neumann_laplacian(self.grid_cells, self.dx)
        boundary = np.zeros(self.grid_cells)
        boundary[-1] = 1.0 / self.dx ** 2
        return L, boundary


class RadChannel(LinearPdeChannel):
    """α_t = εα_xx + bα_x + λα on [0, 1], α_x(0) = 0, α(1) = θ"""

    def __init__(self, kind: RAD, dt: float, grid_cells: int):
        dx = 1.0 / grid_cells
        number = kind.eps * dt / dx ** 2
        if number > Config.DIFFUSION_NUMBER_MAX:
            raise ConfigurationError(
                f"RAD channel dt={dt:.3g} gives εdt/dx²={number:.3g} > {Config.DIFFUSION_NUMBER_MAX}"
            )
        peclet = kind.b * dx / (2 * kind.eps)
        if peclet >= 1.0:
            raise ConfigurationError(f"RAD cell Peclet number {peclet:.3g} must stay below 1; refine the grid")
        super().__init__(kind, dt, grid_cells, 1.0)

    def _operator(self):
        n, dx = self.grid_cells, self.dx
        eps, b, lam = self.kind.eps, self.kind.b, self.kind.lam
        L = eps * _neumann_laplacian(n, dx) + lam * np.eye(n)
        advection = (np.diag(np.full(n - 1, 1.0), 1) - np.diag(np.full(n - 1, 1.0), -1)) * (b / (2 * dx))
        # ghost node α_{-1} = α_1 cancels the advection term at x=0
        advection[0, :] = 0.0
        L = L + advection
        boundary = np.zeros(n)
        boundary[-1] = eps / dx ** 2 + b / (2 * dx)
        return L, boundary


class WaveChannel(LinearPdeChannel):
    """
    α_tt = (1 + d∂_t) α_xx on [0, D], α_x(0) = 0, α(D) = θ, Θ = α(0);
    state z = [α; α_t], d = 0 gives the undamped string
    """

    def __init__(self, kind: Union[Wave, WaveKV], dt: float, grid_cells: int):
        self.damping = kind.damping if isinstance(kind, WaveKV) else 0.0
        super().__init__(kind, dt, grid_cells, kind.length)
        self._theta_rate = 0.0
        self._theta_rate_previous = 0.0

    def _operator(self):
        n = self.grid_cells
        L = _neumann_laplacian(n, self.dx)
        A = np.block([[np.zeros((n, n)), np.eye(n)], [L, self.damping * L]])
        boundary = np.zeros(2 * n)
        boundary[-1] = 1.0 / self.dx ** 2
        return A, boundary

    def _forcing(self, theta_start: float, theta_end: float) -> float:
        rate = (theta_end - theta_start) / self.dt
        return theta_start + theta_end + 2.0 * self.damping * rate

    def _advance(self, theta_start: float, theta_end: float) -> None:
        super()._advance(theta_start, theta_end)
        self._theta_rate_previous = self._theta_rate
        self._theta_rate = (theta_end - theta_start) / self.dt

    def warm_start(self, history, profile=None, velocity=None) -> None:
        super().warm_start(history, profile)
        if profile is not None and velocity is not None:
            rates = np.asarray(velocity(self.x), dtype=float)
            self._state[self.grid_cells:] = rates[: self.grid_cells]
            self._previous = self._state.copy()
            self._theta_rate = self._theta_rate_previous = float(rates[-1])

    @property
    def velocity(self) -> np.ndarray:
        """α_t on the full grid."""
        return np.append(self._state[self.grid_cells:], self._theta_rate)

    @property
    def previous_velocity(self) -> np.ndarray:
        return np.append(self._previous[self.grid_cells:], self._theta_rate_previous)

    def snapshot(self) -> ChannelSnapshot:
        return ChannelSnapshot(x=self.x, profile=self.field, rate=self.velocity)


class StefanChannel(Channel):
    """
    One-phase Stefan problem with unit coefficients, front-fixed on ξ = x/s(t):
    α_t = α_xx on (0, s), -α_x(0) = θ, α(s) = 0, ṡ = -α_x(s), Θ = s
    """

    def __init__(self, kind: Stefan, dt: float, grid_cells: int = None):
        super().__init__(kind, dt)
        self.grid_cells = grid_cells or Config.STEFAN_GRID_CELLS
        self.dxi = 1.0 / self.grid_cells
        self.xi = np.linspace(0.0, 1.0, self.grid_cells + 1)
        self.s = kind.s0
        self.s_rate = 0.0
        self._alpha = np.zeros(self.grid_cells + 1)
        self._previous = self._alpha.copy()
        self._previous_s = self.s

    def reset(self, value: float = 0.0) -> None:
        self.s = self.kind.s0
        self.s_rate = 0.0
        self._alpha = np.zeros(self.grid_cells + 1)
        self._previous = self._alpha.copy()
        self._previous_s = self.s

    def warm_start(self, history, profile=None) -> None:
        self.reset()
        if profile is not None:
            values = np.asarray(profile(self.xi * self.s), dtype=float)
            values[-1] = 0.0
            self._alpha = values
            self._previous = values.copy()

    def _interface_rate(self) -> float:
        a = self._alpha
        slope = (3.0 * a[-1] - 4.0 * a[-2] + a[-3]) / (2.0 * self.dxi)
        return -slope / self.s

    def _advance(self, theta_start: float, theta_end: float) -> None:
        step_stefan(self, theta_end)

    @property
    def output(self) -> float:
        return self.s

    @property
    def x(self) -> np.ndarray:
        return self.xi * self.s

    @property
    def temperature(self) -> np.ndarray:
        return self._alpha.copy()

    def snapshot(self) -> ChannelSnapshot:
        # the rate is taken at fixed ξ, which is what a moving-grid observer measures
        return ChannelSnapshot(x=self.x, profile=self._alpha.copy(), rate=(self._alpha - self._previous) / self.dt)


def step_stefan(channel: StefanChannel, flux: float) -> float:
    """
    Advance the Stefan channel one step with boundary heat flux q_c = flux

    The interface moves explicitly with the one-sided slope at the front,
    then the temperature is solved implicitly on the rescaled grid.

    Returns:
        Interface position s after the step
    """
    dt, dxi, n = channel.dt, channel.dxi, channel.grid_cells
    s_rate = channel._interface_rate()
    s_new = channel.s + dt * s_rate
    if not 0.0 < s_new < channel.kind.cap:
        raise SimulationError(
            f"Stefan interface left (0, {channel.kind.cap}) at t={channel.t + dt:.4g}: "
            f"s={s_new:.4g}, ds/dt={s_rate:.4g}, boundary flux={flux:.4g}"
        )

    # unknowns α_0..α_{n-1}; α_n = 0 at the melting front
    diffusion = 1.0 / (s_new * s_new * dxi * dxi)
    advection = channel.xi[:n] * s_rate / (s_new * 2.0 * dxi)
    lower = -dt * (diffusion - advection)
    upper = -dt * (diffusion + advection)
    main = np.full(n, 1.0 + 2.0 * dt * diffusion)

    banded = np.zeros((3, n))
    banded[0, 1:] = upper[:-1]
    banded[1, :] = main
    banded[2, :-1] = lower[1:]
    # Neumann ghost α_{-1} = α_1 + 2dξ·s·q at ξ=0
    banded[0, 1] = -2.0 * dt * diffusion
    rhs = channel._alpha[:n].copy()
    rhs[0] += dt * diffusion * 2.0 * dxi * s_new * flux

    channel._previous = channel._alpha
    alpha = np.zeros(n + 1)
    alpha[:n] = solve_banded((1, 1), banded, rhs)
    channel._alpha = alpha
    channel._previous_s = channel.s
    channel.s = s_new
    channel.s_rate = s_rate
    return s_new


def steady_profile(kind: ChannelKind, value: float, x) -> np.ndarray:
    """Equilibrium field of a PDE channel held at boundary input value."""
    x = np.asarray(x, dtype=float)
    if isinstance(kind, RAD):
        r = kind.b / (2 * kind.eps)
        v0 = value * math.exp(r) / float(rad_gamma(1.0, kind.eps, kind.b, kind.lam))
        return np.exp(-r * x) * v0 * rad_gamma(x, kind.eps, kind.b, kind.lam)
    return np.full_like(x, value)


def build_channel(kind: ChannelKind, dt: float, grid_cells: int = None) -> Channel:
    """Instantiate the channel for a kind at step dt."""
    grid_cells = grid_cells or Config.GRID_CELLS
    if isinstance(kind, Direct):
        return DirectChannel(kind, dt)
    if isinstance(kind, Transport):
        return TransportChannel(kind, dt)
    if isinstance(kind, Heat):
        return HeatChannel(kind, dt, grid_cells)
    if isinstance(kind, RAD):
        return RadChannel(kind, dt, grid_cells)
    if isinstance(kind, (Wave, WaveKV)):
        return WaveChannel(kind, dt, grid_cells)
    if isinstance(kind, Stefan):
        return StefanChannel(kind, dt)
    if isinstance(kind, VariableDelay):
        return VariableDelayChannel(kind, dt)
    if isinstance(kind, DistributedDelay):
        return DistributedDelayChannel(kind, dt)
    raise ConfigurationError(f"Unsupported channel kind: {type(kind).__name__}")


def step_channel(channel: Channel, theta_start: float, theta_end: float) -> float:
    """Advance one step and return the propagated action Θ."""
    return channel.step(theta_start, theta_end)


def channel_snapshot(channel: Channel) -> ChannelSnapshot:
    return channel.snapshot()
