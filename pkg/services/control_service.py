"""
EquiSeek - Control Service
Compensating update laws for every channel class, the uncompensated and
static-map baselines, and the per-player law objects the simulation loop
drives.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid

from utils.dither import ProbeSpec, StefanTrajectory, stefan_trajectory
from utils.errors import ConfigurationError
from utils.estimator import LowPassState
from utils.kernels import rad_gamma, rad_weights, wave_kv_weights, wave_rho
from utils.pde_channels import (
    RAD, ChannelSnapshot, DelayLine, Direct, DistributedDelay, Heat, Stefan,
    Transport, VariableDelay, Wave, WaveKV, WaveChannel, build_channel, steady_profile,
)

logger = logging.getLogger(__name__)

GAIN_CONVENTIONS = ("demodulated", "perturbation")


@dataclass
class CompensatorSpec:
    """
    Gain k, filter corner c (None for the unfiltered law), heat-law form and
    the kernel parameter of the wave laws
    """
    k: float
    c: Optional[float] = None
    form: str = "integral"
    kernel_c: float = 1.0

    def __post_init__(self):
        if self.c is not None and self.c <= 0:
            raise ConfigurationError(f"Filter pole must be positive, got {self.c}")
        if self.form not in ("integral", "state"):
            raise ConfigurationError(f"Heat law form must be 'integral' or 'state', got {self.form!r}")


@dataclass
class ControlState:
    spec: CompensatorSpec
    U: float = 0.0
    lowpass: LowPassState = field(default=None)

    def __post_init__(self):
        if self.lowpass is None:
            self.lowpass = LowPassState(self.spec.c)

    def apply(self, bracket: float, dt: float) -> float:
        """Pass the bracket through c/(s+c) and keep the result as U."""
        self.U = self.lowpass.step(bracket, dt)
        return self.U


def effective_gain(k: float, a: float, convention: str) -> float:
    """Gain applied to the (2/a)-normalized estimates; 'perturbation' scales k by a²/2."""
    if convention not in GAIN_CONVENTIONS:
        raise ConfigurationError(f"Unknown gain convention {convention!r}")
    return k * a * a / 2.0 if convention == "perturbation" else k


# ---------------------------------------------------------------------------
# Update laws
# ---------------------------------------------------------------------------

def update_uncompensated(ctrl: ControlState, G: float, dt: float) -> float:
    return ctrl.apply(ctrl.spec.k * G, dt)


def update_delay_predictor(ctrl: ControlState, G: float, Hhat: float,
                           integral_U_over_delay: float, dt: float) -> float:
    """U = c/(s+c){k[G + Ĥ ∫_{t-D}^t U(τ)dτ]}"""
    return ctrl.apply(ctrl.spec.k * (G + Hhat * integral_U_over_delay), dt)


def heat_integral_term(snapshot: ChannelSnapshot, length: float) -> float:
    """∫₀^D (D - τ) u(τ,t) dτ with u the time derivative of the copy profile."""
    return snapshot.integral(length - snapshot.x)


def update_heat_boundary(ctrl: ControlState, G: float, Hhat: float, dt: float, *,
                         length: float = None, snapshot: ChannelSnapshot = None,
                         theta_hat: float = None, Theta: float = None,
                         probe_signal: float = None) -> float:
    """
    Boundary law for a heat channel

    Integral form: k[G + Ĥ ∫₀^D (D-τ)u(τ,t)dτ]
    State form:    k[G + Ĥ(θ̂ - Θ + a sin ωt)]
    """
    if ctrl.spec.form == "integral":
        if snapshot is None or length is None:
            raise ConfigurationError("Integral-form heat law needs the copy snapshot and the domain length")
        compensation = heat_integral_term(snapshot, length)
    else:
        if theta_hat is None or Theta is None or probe_signal is None:
            raise ConfigurationError("State-form heat law needs θ̂, Θ and the probe signal")
        compensation = theta_hat - Theta + probe_signal
    return ctrl.apply(ctrl.spec.k * (G + Hhat * compensation), dt)


def update_duopoly_hetero(ctrl1: ControlState, ctrl2: ControlState,
                          G: Tuple[float, float], Hhat: Tuple[float, float],
                          integral_U1: float, heat_inputs: dict, dt: float) -> Tuple[float, float]:
    """Delay predictor for firm 1 and the heat boundary law for firm 2."""
    U1 = update_delay_predictor(ctrl1, G[0], Hhat[0], integral_U1, dt)
    U2 = update_heat_boundary(ctrl2, G[1], Hhat[1], dt, **heat_inputs)
    return U1, U2


def update_wave_kv(ctrl: ControlState, G: float, Hhat: float, snapshot: ChannelSnapshot,
                   weights: np.ndarray, dt: float) -> float:
    """K[G - Ĥ ∫₀^D cD·I1(√(c(D²-σ²)))/√(c(D²-σ²)) u(σ,t) dσ] with precomputed weights."""
    compensation = snapshot.integral(weights)
    return ctrl.apply(ctrl.spec.k * (G - Hhat * compensation), dt)


def stefan_integral(snapshot: ChannelSnapshot, trajectory: StefanTrajectory, t: float) -> float:
    """∫₀^{s(t)} (α - β)(x,t) dx on the front-fixed grid."""
    u = snapshot.profile - trajectory.profile(snapshot.x, t)
    return float(trapezoid(u, snapshot.x))


def update_stefan(ctrl: ControlState, G: float, Hhat: float, u_integral: float, dt: float) -> float:
    """
    U = c/(s+c){-K[G + Ĥ ∫₀^s u dx]} with K < 0, whose average is
    -K·G_av - K·H·∫u
    """
    if ctrl.spec.k >= 0:
        raise ConfigurationError(f"Stefan compensator gain K must be negative, got {ctrl.spec.k}")
    return ctrl.apply(-ctrl.spec.k * (G + Hhat * u_integral), dt)


def update_rad(ctrl: ControlState, G: float, Hhat: float, snapshot: ChannelSnapshot,
               kind: RAD, dt: float, weights: np.ndarray = None) -> float:
    """k e^{-b/2ε}[γ(1)G + Ĥ ∫₀¹ e^{(b/2ε)σ} m(1-σ) u(σ,t) dσ]"""
    if weights is None:
        weights = rad_weights(snapshot.x, kind.eps, kind.b, kind.lam)
    gamma_1 = float(rad_gamma(1.0, kind.eps, kind.b, kind.lam))
    scale = math.exp(-kind.b / (2 * kind.eps))
    bracket = ctrl.spec.k * scale * (gamma_1 * G + Hhat * snapshot.integral(weights))
    return ctrl.apply(bracket, dt)


def update_variable_delay(ctrl: ControlState, G: float, Hhat: float, integral: float, dt: float) -> float:
    """k[G + Ĥ ∫₀¹ u(σ,t)(φ⁻¹(t) - t)dσ] with the integral evaluated by the caller."""
    return ctrl.apply(ctrl.spec.k * (G + Hhat * integral), dt)


def update_distributed_delay(ctrl: ControlState, G: float, Hhat: float, integral: float, dt: float) -> float:
    """k[G + Ĥ ∫₀^D (1 - β(σ)) u(D-σ,t) dσ]"""
    return ctrl.apply(ctrl.spec.k * (G + Hhat * integral), dt)


def update_wave_neumann(ctrl: ControlState, G: float, Hhat: float, snapshot: ChannelSnapshot,
                        rate_of_u: np.ndarray, length: float, dt: float,
                        rho: np.ndarray = None) -> float:
    """
    c[kĤu(D) - ∂_t u(D)] + ρ(D)G + Ĥ∫₀^D ρ(D-σ)∂_t u(σ,t)dσ, filtered;
    u is the copy's velocity field and its time derivative comes by differencing
    """
    k = ctrl.spec.k
    boundary_gain = ctrl.spec.kernel_c
    if rho is None:
        rho = wave_rho(length - snapshot.x, k)
    # σ=0 entry of the grid holds ρ(D)
    rho_d = float(rho[0])
    u_end = snapshot.rate[-1]
    bracket = (boundary_gain * (k * Hhat * u_end - rate_of_u[-1])
               + rho_d * G
               + Hhat * float(trapezoid(rho * rate_of_u, snapshot.x)))
    return ctrl.apply(bracket, dt)


def baseline_classical_es(y: float, M: float, k: float, dt: float, u_hat: float) -> float:
    """One Euler step of û' = k·M·y on a static map."""
    return u_hat + dt * k * M * y


def baseline_nes_duopoly(y_i: float, mu_i: float, k_i: float, dt: float, u_hat_i: float) -> float:
    """One Euler step of û_i' = k_i·μ_i(t)·J_i(t)."""
    return u_hat_i + dt * k_i * mu_i * y_i


# ---------------------------------------------------------------------------
# Per-player law objects
# ---------------------------------------------------------------------------

@dataclass
class LoopContext:
    """What a law may read at step n"""
    t: float
    dt: float
    theta_hat: float
    Theta: float
    probe_signal: float
    y: float = 0.0
    M: float = 0.0


class PlayerLaw:
    """
    Base law: U = c/(s+c){kG}. Subclasses add their compensation term and
    own whatever copies or histories it needs.
    """

    name = "uncompensated"

    def __init__(self, spec: CompensatorSpec, probe: ProbeSpec):
        self.ctrl = ControlState(spec)
        self.probe = probe

    def update(self, G: float, Hhat: float, ctx: LoopContext) -> float:
        return update_uncompensated(self.ctrl, G, ctx.dt)

    def next_theta_hat(self, theta_hat: float, U: float, ctx: LoopContext) -> float:
        """Integrator θ̂' = U by explicit Euler."""
        return theta_hat + ctx.dt * U

    def advance(self, theta_hat: float, theta_hat_next: float, U: float) -> None:
        """Bookkeeping after the step: copies, histories."""


class DelayPredictorLaw(PlayerLaw):
    name = "delay-predictor"

    def __init__(self, spec, probe, kind: Transport, dt: float):
        super().__init__(spec, probe)
        self.dt = dt
        self.lag_steps = round(kind.delay / dt)
        self._history = DelayLine(self.lag_steps)

    def integral(self) -> float:
        """Left Riemann sum of the last D seconds of U, matching the Euler integrator."""
        return self.dt * float(self._history.window().sum())

    def update(self, G, Hhat, ctx):
        return update_delay_predictor(self.ctrl, G, Hhat, self.integral(), ctx.dt)

    def advance(self, theta_hat, theta_hat_next, U):
        self._history.push(U)


class _CopyLaw(PlayerLaw):
    """Law driven by a noise-free copy of the channel fed with θ̂"""

    def __init__(self, spec, probe, kind, dt: float, grid_cells: int, theta_hat0: float):
        super().__init__(spec, probe)
        self.kind = kind
        self.copy = build_channel(kind, dt, grid_cells)
        self.copy.warm_start(lambda times: np.full_like(times, theta_hat0),
                             lambda x: steady_profile(kind, theta_hat0, x))

    def advance(self, theta_hat, theta_hat_next, U):
        self.copy.step(theta_hat, theta_hat_next)


class HeatBoundaryLaw(_CopyLaw):
    name = "heat-boundary"

    def update(self, G, Hhat, ctx):
        if self.ctrl.spec.form == "state":
            return update_heat_boundary(self.ctrl, G, Hhat, ctx.dt, theta_hat=ctx.theta_hat,
                                        Theta=ctx.Theta, probe_signal=ctx.probe_signal)
        return update_heat_boundary(self.ctrl, G, Hhat, ctx.dt, length=self.kind.length,
                                    snapshot=self.copy.snapshot())

    def advance(self, theta_hat, theta_hat_next, U):
        if self.ctrl.spec.form == "integral":
            self.copy.step(theta_hat, theta_hat_next)


class RadBoundaryLaw(_CopyLaw):
    name = "rad-boundary"

    def __init__(self, spec, probe, kind, dt, grid_cells, theta_hat0):
        super().__init__(spec, probe, kind, dt, grid_cells, theta_hat0)
        self.weights = rad_weights(self.copy.x, kind.eps, kind.b, kind.lam)

    def update(self, G, Hhat, ctx):
        return update_rad(self.ctrl, G, Hhat, self.copy.snapshot(), self.kind, ctx.dt, self.weights)


class WaveKVLaw(_CopyLaw):
    name = "wave-kv-backstepping"

    def __init__(self, spec, probe, kind, dt, grid_cells, theta_hat0):
        super().__init__(spec, probe, kind, dt, grid_cells, theta_hat0)
        self.weights = wave_kv_weights(self.copy.x, kind.length, spec.kernel_c)

    def update(self, G, Hhat, ctx):
        return update_wave_kv(self.ctrl, G, Hhat, self.copy.snapshot(), self.weights, ctx.dt)


class WaveNeumannLaw(_CopyLaw):
    name = "wave-neumann"

    def __init__(self, spec, probe, kind, dt, grid_cells, theta_hat0):
        super().__init__(spec, probe, kind, dt, grid_cells, theta_hat0)
        self.rho = wave_rho(kind.length - self.copy.x, spec.k)

    def update(self, G, Hhat, ctx):
        copy: WaveChannel = self.copy
        rate_of_u = (copy.velocity - copy.previous_velocity) / ctx.dt
        return update_wave_neumann(self.ctrl, G, Hhat, copy.snapshot(), rate_of_u, self.kind.length,
                                   ctx.dt, rho=self.rho)


class VariableDelayLaw(PlayerLaw):
    """
    ∫₀¹ u(σ,t)(φ⁻¹(t) - t)dσ = ∫_t^{φ⁻¹(t)} U(φ(s)) ds, integrated exactly
    for a sample-and-hold U history using ψ_k = φ⁻¹(t_k)
    """

    name = "variable-delay-predictor"

    def __init__(self, spec, probe, kind: VariableDelay, dt: float):
        super().__init__(spec, probe)
        self.kind = kind
        self.dt = dt
        self.slots = int(math.ceil(kind.d_max / dt)) + 2
        self._U = DelayLine(self.slots)
        self._psi = DelayLine(self.slots + 1)
        past = -dt * np.arange(self.slots + 1, 0, -1)
        self._psi.fill(np.array([kind.phi_inverse(float(t)) for t in past]))

    def integral(self, t: float) -> float:
        psi = self._psi.window()
        lengths = np.clip(psi[1:] - np.maximum(psi[:-1], t), 0.0, None)
        return float(self._U.window() @ lengths)

    def update(self, G, Hhat, ctx):
        self._psi.push(self.kind.phi_inverse(ctx.t))
        return update_variable_delay(self.ctrl, G, Hhat, self.integral(ctx.t), ctx.dt)

    def advance(self, theta_hat, theta_hat_next, U):
        self._U.push(U)


class DistributedDelayLaw(PlayerLaw):
    name = "distributed-delay-predictor"

    def __init__(self, spec, probe, kind: DistributedDelay, dt: float):
        super().__init__(spec, probe)
        m = round(kind.delay / dt)
        edges = dt * np.arange(m + 1)
        # w_j = ∫_{(j-1)dt}^{j dt} (1 - β(σ)) dσ for the sample held j steps back
        weights = dt - np.diff(kind.cdf_integral(edges))
        self._weights = weights[::-1].copy()
        self._history = DelayLine(m)

    def integral(self) -> float:
        return float(self._weights @ self._history.window())

    def update(self, G, Hhat, ctx):
        return update_distributed_delay(self.ctrl, G, Hhat, self.integral(), ctx.dt)

    def advance(self, theta_hat, theta_hat_next, U):
        self._history.push(U)


class StefanLaw(PlayerLaw):
    """θ̂ = U directly; the compensation integrates α - β over the liquid phase"""

    name = "stefan-compensator"

    def __init__(self, spec, probe, channel_provider: Callable[[], ChannelSnapshot], compensate: bool = True):
        super().__init__(spec, probe)
        self.trajectory = stefan_trajectory(probe)
        self._snapshot = channel_provider
        self.compensate = compensate

    def update(self, G, Hhat, ctx):
        u_integral = stefan_integral(self._snapshot(), self.trajectory, ctx.t) if self.compensate else 0.0
        return update_stefan(self.ctrl, G, Hhat, u_integral, ctx.dt)

    def next_theta_hat(self, theta_hat, U, ctx):
        return U


class ClassicalEsLaw(PlayerLaw):
    """Static-map gradient ES, û' = k·M·y"""

    name = "classical-es"

    def update(self, G, Hhat, ctx):
        self.ctrl.U = self.ctrl.spec.k * G
        return self.ctrl.U

    def next_theta_hat(self, theta_hat, U, ctx):
        return baseline_classical_es(ctx.y, ctx.M, self.ctrl.spec.k, ctx.dt, theta_hat)


class NesLaw(PlayerLaw):
    """Static-game NES, û_i' = k_i·μ_i(t)·J_i with μ_i = a_i sin(ω_i t)"""

    name = "nes"

    def update(self, G, Hhat, ctx):
        mu = self.probe.a * math.sin(self.probe.omega * ctx.t)
        self.ctrl.U = self.ctrl.spec.k * mu * ctx.y
        return self.ctrl.U

    def next_theta_hat(self, theta_hat, U, ctx):
        mu = self.probe.a * math.sin(self.probe.omega * ctx.t)
        return baseline_nes_duopoly(ctx.y, mu, self.ctrl.spec.k, ctx.dt, theta_hat)


class ControlService:
    """
    Builds the law a player runs from its channel kind and the loop settings.
    """

    @staticmethod
    def build_law(kind, spec: CompensatorSpec, probe: ProbeSpec, dt: float, grid_cells: int,
                  theta_hat0: float, law: str = "auto", compensation: bool = True,
                  snapshot_provider: Callable[[], ChannelSnapshot] = None) -> PlayerLaw:
        """
        Select and construct a player's update law

        Args:
            kind: Channel kind of the player
            spec: Gains and filter settings (gain convention already applied)
            probe: Player's probe specification
            dt: Loop step
            grid_cells: Grid for copy channels
            theta_hat0: Initial estimate, used to warm-start copies
            law: 'auto', 'classical_es' or 'nes'
            compensation: False reduces every compensated law to k·G
            snapshot_provider: Live plant snapshot (Stefan only)

        Returns:
            The player's law object
        """
        if law == "classical_es":
            return ClassicalEsLaw(spec, probe)
        if law == "nes":
            return NesLaw(spec, probe)
        if law != "auto":
            raise ConfigurationError(f"Unknown law {law!r}")

        if isinstance(kind, Stefan):
            if snapshot_provider is None:
                raise ConfigurationError("Stefan law needs access to the plant temperature")
            return StefanLaw(spec, probe, snapshot_provider, compensate=compensation)
        if not compensation or isinstance(kind, Direct):
            return PlayerLaw(spec, probe)
        if isinstance(kind, Transport):
            return DelayPredictorLaw(spec, probe, kind, dt)
        if isinstance(kind, Heat):
            return HeatBoundaryLaw(spec, probe, kind, dt, grid_cells, theta_hat0)
        if isinstance(kind, RAD):
            return RadBoundaryLaw(spec, probe, kind, dt, grid_cells, theta_hat0)
        if isinstance(kind, WaveKV):
            return WaveKVLaw(spec, probe, kind, dt, grid_cells, theta_hat0)
        if isinstance(kind, Wave):
            return WaveNeumannLaw(spec, probe, kind, dt, grid_cells, theta_hat0)
        if isinstance(kind, VariableDelay):
            return VariableDelayLaw(spec, probe, kind, dt)
        if isinstance(kind, DistributedDelay):
            return DistributedDelayLaw(spec, probe, kind, dt)
        raise ConfigurationError(f"No update law for channel kind {type(kind).__name__}")
