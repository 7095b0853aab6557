"""
EquiSeek - Scenario Service
Wires game, channels, probes, estimators and update laws into the closed
loop, keeps the built-in scenario catalog and runs ε-sweeps.
"""
import hashlib
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config import Config
from schemas import (
    ChannelConfig, ControllerConfig, MapConfig, NumericsConfig, PayoffConfig,
    PlayerConfig, ProbeConfig, ScenarioConfig, TrafficConfig, parse_scenario,
)
from services.analysis_service import (
    AnalysisService, ConvergenceMetrics, StabilityReport, convergence_metrics,
    default_divergence_threshold, frozen_estimates,
)
from services.control_service import (
    CompensatorSpec, ControlService, LoopContext, PlayerLaw, effective_gain,
)
from utils.dither import (
    FrequencySet, ProbeSpec, demodulators, probe_history, probe_value,
    reference_profile, reference_velocity, select_frequencies, stefan_trajectory,
    validate_frequencies,
)
from utils.errors import ConfigurationError, EquiSeekError, SimulationError
from utils.estimator import LowPassState, Washout
from utils.game import (
    QuadraticGame, QuadraticPayoff, duopoly_game, market_duopoly_game,
    nash_equilibrium, scalar_map_game,
)
from utils.kernels import rad_static_gain
from utils.pde_channels import (
    DELAY_KINDS, RAD, Channel, ChannelKind, Direct,
    DistributedDelay, Heat, Stefan, Transport, WaveChannel, build_channel,
    default_time_step, kind_length, snap_time_step, steady_profile,
)

logger = logging.getLogger(__name__)

SERIES = ("theta", "Theta", "y", "G", "Hhat", "U", "theta_hat")


# ---------------------------------------------------------------------------
# Traffic linearization
# ---------------------------------------------------------------------------

def traffic_linearize(vf: float, rho_m: float, rho_r: float, L: float) -> Tuple[float, float]:
    """
    Greenshields Q(ρ) = v_f ρ(1 - ρ/ρ_m) linearized at ρ_r

    Args:
        vf: Free-flow speed [m/s]
        rho_m: Jam density [veh/m]
        rho_r: Reference density, must stay below the critical density ρ_m/2
        L: Segment length [m]

    Returns:
        (u, D): characteristic speed Q'(ρ_r) [m/s] and transport delay L/u [s]
    """
    if vf <= 0 or rho_m <= 0 or L <= 0:
        raise ConfigurationError("Free speed, jam density and segment length must be positive")
    critical = rho_m / 2.0
    if not 0.0 <= rho_r < critical:
        raise ConfigurationError(
            f"Reference density {rho_r:.4g} must lie in [0, {critical:.4g}) (free-flow regime)"
        )
    u = vf * (1.0 - 2.0 * rho_r / rho_m)
    return u, L / u


def traffic_targets(traffic: TrafficConfig) -> Tuple[float, float]:
    """(ρ*, q*) of the synthetic outflow map q = q* + (H/2)(ρ - ρ*)²."""
    rho_star = traffic.optimal_density_fraction * traffic.jam_density
    q_star = traffic.free_speed * rho_star * (1.0 - rho_star / traffic.jam_density)
    return rho_star, q_star


def apply_traffic(config: ScenarioConfig) -> ScenarioConfig:
    """Replace the channel and map of a traffic scenario by their linearized values."""
    traffic = config.traffic
    if traffic is None:
        return config
    if len(config.players) != 1:
        raise ConfigurationError("The bottleneck scenario has exactly one metering player")
    _, delay = traffic_linearize(traffic.free_speed, traffic.jam_density, traffic.reference_density, traffic.length)
    rho_star, q_star = traffic_targets(traffic)
    player = config.players[0].model_copy(update={"channel": ChannelConfig(kind="transport", delay=delay)})
    traffic_map = MapConfig(kind="quadratic", hessian=traffic.map_hessian, theta_star=rho_star, y_star=q_star)
    return config.model_copy(update={"players": [player], "map": traffic_map})


# ---------------------------------------------------------------------------
# Setup
# ---------------------------------------------------------------------------

def build_game(map_config: MapConfig, n_players: int) -> QuadraticGame:
    if map_config.kind == "quadratic":
        return scalar_map_game(map_config.hessian, map_config.theta_star, map_config.y_star)
    if map_config.kind == "market":
        return market_duopoly_game(map_config.m1, map_config.m2, map_config.total_demand, map_config.preference)
    if map_config.preset == "duopoly":
        return duopoly_game(map_config.epsilon)
    payoffs = tuple(
        QuadraticPayoff(owner=i, H=np.array(p.hessian), h=np.array(p.linear), c=p.constant)
        for i, p in enumerate(map_config.payoffs)
    )
    if len(payoffs) != n_players:
        raise ConfigurationError(f"{len(payoffs)} payoffs for {n_players} players")
    return QuadraticGame(payoffs=payoffs, epsilon=map_config.epsilon)


@dataclass
class PlayerSetup:
    name: str
    kind: ChannelKind
    probe: ProbeSpec
    spec: CompensatorSpec
    controller: ControllerConfig
    theta_hat0: float


@dataclass
class LoopSetup:
    """Everything resolved from a config before the loop starts"""
    config: ScenarioConfig
    game: QuadraticGame
    Theta_star: np.ndarray
    theta_star_input: np.ndarray
    frequencies: FrequencySet
    dt: float
    n_steps: int
    grid_cells: int
    players: List[PlayerSetup]

    @property
    def gains(self) -> List[float]:
        return [abs(p.spec.k) for p in self.players]

    @property
    def lengths(self) -> List[float]:
        return [kind_length(p.kind) for p in self.players]


def _steady_input(kind: ChannelKind, Theta_star: float) -> float:
    """Boundary input that holds the channel output at Theta_star."""
    if isinstance(kind, RAD):
        return Theta_star / rad_static_gain(kind.eps, kind.b, kind.lam)
    if isinstance(kind, Stefan):
        return 0.0
    return Theta_star


def resolve_time_step(config: ScenarioConfig, kinds: Sequence[ChannelKind],
                      frequencies: FrequencySet, grid_cells: int) -> float:
    """Target dt (configured or derived from the fastest probe and the grids), snapped to the delays."""
    target = config.numerics.dt
    if target is None:
        target = default_time_step(kinds, max(frequencies.omegas), grid_cells)
    delays = [k.delay for k in kinds if isinstance(k, (Transport, DistributedDelay))]
    return snap_time_step(target, delays)


def prepare(config: Union[dict, ScenarioConfig]) -> LoopSetup:
    """
    Validate a scenario and resolve game, frequencies, time step and players

    Args:
        config: Raw key-value tree or validated ScenarioConfig

    Returns:
        LoopSetup ready for the loop
    """
    config = apply_traffic(parse_scenario(config))
    n = len(config.players)

    # 1. Game and targets
    game = build_game(config.map, n)
    Theta_star = nash_equilibrium(game)

    # 2. Channels and probing frequencies
    kinds = [p.channel.to_kind() for p in config.players]
    primes = [p.probe.multiplier() for p in config.players]
    if all(w is not None for w in primes):
        frequencies = validate_frequencies(config.omega_base, primes)
    else:
        frequencies = select_frequencies(n, config.omega_base)

    # 3. Time base
    grid_cells = config.numerics.grid_cells or Config.GRID_CELLS
    dt = resolve_time_step(config, kinds, frequencies, grid_cells)
    n_steps = int(round(config.numerics.t_end / dt))

    # 4. Players
    players = []
    for i, (pc, kind) in enumerate(zip(config.players, kinds)):
        ctrl = pc.controller
        probe = ProbeSpec(a=pc.probe.a, omega=frequencies.omegas[i], kind=kind,
                          series_terms=pc.probe.series_terms, gamma=pc.probe.gamma)
        k = effective_gain(ctrl.k, pc.probe.a, ctrl.gain_convention)
        if isinstance(kind, Stefan):
            k = ctrl.gain_K if ctrl.gain_K is not None else -k
        spec = CompensatorSpec(k=k, c=ctrl.c, form=ctrl.form, kernel_c=ctrl.kernel_c)
        players.append(PlayerSetup(pc.name, kind, probe, spec, ctrl, pc.theta_hat0))

    theta_star_input = np.array([_steady_input(p.kind, Theta_star[i]) for i, p in enumerate(players)])
    return LoopSetup(config=config, game=game, Theta_star=Theta_star, theta_star_input=theta_star_input,
                     frequencies=frequencies, dt=dt, n_steps=n_steps, grid_cells=grid_cells, players=players)


def warm_start_channel(channel: Channel, player: PlayerSetup, enabled: bool = True) -> None:
    """Start delay buffers and PDE fields in the periodic regime of the probe around θ̂(0)."""
    kind, probe, theta_hat0 = player.kind, player.probe, player.theta_hat0
    if not enabled:
        channel.reset(theta_hat0)
        return
    if isinstance(kind, Stefan):
        trajectory = stefan_trajectory(probe)
        channel.warm_start(None, lambda x: trajectory.profile(x, 0.0))
    elif isinstance(kind, DELAY_KINDS) or isinstance(kind, Direct):
        channel.warm_start(lambda times: theta_hat0 + probe_history(probe, times))
    elif isinstance(channel, WaveChannel):
        channel.warm_start(None,
                           lambda x: steady_profile(kind, theta_hat0, x) + reference_profile(probe, x, 0.0),
                           velocity=lambda x: reference_velocity(probe, x, 0.0))
    else:
        channel.warm_start(None, lambda x: steady_profile(kind, theta_hat0, x) + reference_profile(probe, x, 0.0))


def config_hash(config: ScenarioConfig) -> str:
    payload = json.dumps(config.model_dump(mode="json"), sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Closed loop
# ---------------------------------------------------------------------------

@dataclass
class ScenarioResult:
    name: str
    config: ScenarioConfig
    config_hash: str
    dt: float
    n_steps: int
    times: np.ndarray
    series: Dict[str, np.ndarray]
    Theta_star: np.ndarray
    theta_star_input: np.ndarray
    frequencies: FrequencySet
    stability: Optional[StabilityReport]
    metrics: Optional[ConvergenceMetrics]
    divergence_time: Optional[float] = None
    divergence_reason: Optional[str] = None
    wall_time: float = 0.0
    seed: int = 0
    extras: Dict[str, float] = field(default_factory=dict)

    @property
    def diverged(self) -> bool:
        return self.divergence_time is not None

    @property
    def player_names(self) -> List[str]:
        return [p.name for p in self.config.players]

    def tail_residual(self, start: float, end: float = None, signal: str = "Theta",
                      target: Sequence[float] = None) -> np.ndarray:
        """sup over [start, end] of |signal - target| per player."""
        end = self.times[-1] if end is None else end
        target = self.Theta_star if target is None else np.asarray(target, dtype=float)
        window = (self.times >= start - 1e-9) & (self.times <= end + 1e-9)
        return np.max(np.abs(self.series[signal][window] - target), axis=0)


def _probe_phase_signal(probe: ProbeSpec, t: float) -> float:
    """a·sin(ωt) as it arrives at the map, with the delayed phase for variable delays."""
    if probe.a == 0.0:
        return 0.0
    kind = probe.kind
    phase_time = t - kind.delay_at(t) if hasattr(kind, "delay_at") else t
    return probe.a * math.sin(probe.omega * phase_time)


class _Player:
    """Mutable loop state of one player"""

    def __init__(self, setup: PlayerSetup, loop: LoopSetup, compensation: bool):
        self.setup = setup
        self.channel = build_channel(setup.kind, loop.dt, loop.grid_cells)
        warm_start_channel(self.channel, setup, loop.config.numerics.warm_start)
        self.law: PlayerLaw = ControlService.build_law(
            setup.kind, setup.spec, setup.probe, loop.dt, loop.grid_cells, setup.theta_hat0,
            law=setup.controller.law, compensation=compensation,
            snapshot_provider=self.channel.snapshot,
        )
        self.washout = Washout(setup.controller.washout) if setup.controller.washout else None
        self.hessian_filter = (LowPassState(setup.controller.hessian_corner)
                               if setup.controller.hessian_corner else None)
        self.theta_hat = setup.theta_hat0
        self.probe_now = probe_value(setup.probe, 0.0)


def run_scenario(config: Union[dict, ScenarioConfig], *, t_end: float = None, dt: float = None,
                 compensation: bool = None, epsilon: float = None) -> ScenarioResult:
    """
    Integrate the closed loop of a scenario

    Args:
        config: Scenario configuration
        t_end: Horizon override [s]
        dt: Target step override [s]
        compensation: Override of the compensation toggle
        epsilon: Coupling weight override for game maps

    Returns:
        ScenarioResult with uniformly sampled series, metrics and stability report
    """
    config = with_overrides(parse_scenario(config), t_end=t_end, dt=dt,
                            compensation=compensation, epsilon=epsilon)
    started = time.perf_counter()
    loop = prepare(config)
    config = loop.config
    n_players = len(loop.players)
    multi = n_players > 1
    n_steps, step = loop.n_steps, loop.dt
    logger.info(
        f"Running '{config.name}': {n_players} player(s), dt={step:.6g} s, {n_steps} steps, "
        f"Π={loop.frequencies.Pi:.4g} s, compensation={'on' if config.compensation else 'off'}"
    )

    players = [_Player(p, loop, config.compensation) for p in loop.players]
    series = {name: np.zeros((n_steps + 1, n_players)) for name in SERIES}
    threshold = default_divergence_threshold(loop.Theta_star)
    divergence_time, reason = None, None
    last = n_steps

    for n in range(n_steps + 1):
        t = n * step
        Theta = np.array([p.channel.output for p in players])
        payoffs = loop.game.evaluate_all(Theta)

        for i, player in enumerate(players):
            probe = player.setup.probe
            y = player.washout.step(payoffs[i], step) if player.washout else payoffs[i]
            M, N = demodulators(probe, t, game=multi)
            G = M * y
            Hhat = N * y
            if player.hessian_filter is not None:
                Hhat = player.hessian_filter.step(Hhat, step)

            ctx = LoopContext(t=t, dt=step, theta_hat=player.theta_hat, Theta=Theta[i],
                              probe_signal=_probe_phase_signal(probe, t), y=y, M=M)
            U = player.law.update(G, Hhat, ctx)
            theta_hat_next = player.law.next_theta_hat(player.theta_hat, U, ctx)
            theta_now = player.theta_hat + player.probe_now

            for name, value in (("theta", theta_now), ("Theta", Theta[i]), ("y", payoffs[i]), ("G", G),
                                ("Hhat", Hhat), ("U", U), ("theta_hat", player.theta_hat)):
                series[name][n, i] = value

            if n < n_steps:
                probe_next = probe_value(probe, t + step)
                try:
                    player.channel.step(theta_now, theta_hat_next + probe_next)
                except SimulationError as exc:
                    divergence_time, reason = t, str(exc)
                player.law.advance(player.theta_hat, theta_hat_next, U)
                player.theta_hat = theta_hat_next
                player.probe_now = probe_next

        row = np.concatenate([series[name][n] for name in SERIES])
        if divergence_time is None and not np.all(np.isfinite(row)):
            divergence_time, reason = t, "non-finite state"
        if divergence_time is None and np.linalg.norm(Theta) > threshold:
            divergence_time, reason = t, f"|Θ| exceeded {threshold:.4g}"
        if divergence_time is not None:
            last = n
            logger.warning(f"'{config.name}' diverged at t={divergence_time:.4g} s ({reason}); run truncated")
            break

    times = step * np.arange(last + 1)
    series = {name: values[: last + 1] for name, values in series.items()}

    # Analysis
    stability = _stability(loop)
    metrics = None
    if divergence_time is None:
        try:
            metrics = convergence_metrics(
                times, series["Theta"], series["theta"], loop.Theta_star,
                a=[p.probe.a for p in loop.players], omega=[p.probe.omega for p in loop.players],
                Pi=loop.frequencies.Pi,
                heat_lengths=[p.kind.length if isinstance(p.kind, Heat) else 0.0 for p in loop.players],
                theta_star=loop.theta_star_input,
            )
        except EquiSeekError as exc:
            logger.info(f"No convergence metrics for '{config.name}': {exc}")

    wall = time.perf_counter() - started
    logger.info(f"Finished '{config.name}' in {wall:.2f} s ({last} steps)")
    return ScenarioResult(
        name=config.name, config=config, config_hash=config_hash(config), dt=step, n_steps=last,
        times=times, series=series, Theta_star=loop.Theta_star, theta_star_input=loop.theta_star_input,
        frequencies=loop.frequencies, stability=stability, metrics=metrics,
        divergence_time=divergence_time, divergence_reason=reason, wall_time=wall,
        extras=_traffic_extras(config),
    )


def _stability(loop: LoopSetup) -> Optional[StabilityReport]:
    try:
        return AnalysisService.stability_report(loop.game, loop.gains, loop.lengths)
    except EquiSeekError as exc:
        logger.info(f"Stability report unavailable: {exc}")
        return None


def _traffic_extras(config: ScenarioConfig) -> Dict[str, float]:
    traffic = config.traffic
    if traffic is None:
        return {}
    u, delay = traffic_linearize(traffic.free_speed, traffic.jam_density, traffic.reference_density, traffic.length)
    rho_star, q_star = traffic_targets(traffic)
    return {"speed": u, "delay": delay, "rho_star": rho_star, "q_star": q_star}


def with_overrides(config: ScenarioConfig, *, t_end: float = None, dt: float = None,
                   compensation: bool = None, epsilon: float = None) -> ScenarioConfig:
    numerics_update = {key: value for key, value in (("t_end", t_end), ("dt", dt)) if value is not None}
    update = {}
    if numerics_update:
        update["numerics"] = config.numerics.model_copy(update=numerics_update)
    if compensation is not None:
        update["compensation"] = compensation
    if epsilon is not None:
        if config.map.kind != "game":
            raise ConfigurationError(f"Scenario '{config.name}' has no coupling weight to override")
        update["map"] = config.map.model_copy(update={"epsilon": epsilon})
    if not update:
        return config
    # re-validate so overrides go through the same checks as files
    return parse_scenario(config.model_copy(update=update).model_dump())


def check_scenario(config: Union[dict, ScenarioConfig]) -> dict:
    """
    Pre-flight report: stability, resolved step, frequencies and the frozen
    estimator averages at the equilibrium
    """
    loop = prepare(config)
    stability = _stability(loop)
    averages = frozen_estimates(loop.game, loop.Theta_star, [p.probe for p in loop.players],
                                loop.frequencies.Pi, loop.dt)
    return {
        "name": loop.config.name,
        "dt": loop.dt,
        "steps": loop.n_steps,
        "Pi": loop.frequencies.Pi,
        "omegas": list(loop.frequencies.omegas),
        "theta_star": loop.Theta_star.tolist(),
        "stability": stability.to_dict() if stability else None,
        "frozen_averages": averages,
    }


def sweep(config: Union[dict, ScenarioConfig], param: str, values: Sequence[float],
          workers: int = None, **overrides) -> List[ScenarioResult]:
    """
    Run one scenario per parameter value concurrently

    Returns:
        Results in the order of values
    """
    if param != "epsilon":
        raise ConfigurationError(f"Sweeps over {param!r} are not supported; use 'epsilon'")
    config = parse_scenario(config)
    workers = workers or Config.SWEEP_WORKERS
    logger.info(f"Sweeping '{config.name}' over {param} = {list(values)} with {workers} workers")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_scenario, config, epsilon=float(v), **overrides) for v in values]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# Built-in catalog
# ---------------------------------------------------------------------------

def equilibrium_game_payoffs(own: float, cross: float, epsilon: float,
                             theta_star: Sequence[float]) -> List[PayoffConfig]:
    """
    Payoffs with every Hessian entry equal to cross off the diagonal and own
    on it, and linear terms placing the Nash equilibrium at theta_star
    """
    theta_star = np.asarray(theta_star, dtype=float)
    n = theta_star.size
    H = np.full((n, n), float(cross))
    np.fill_diagonal(H, float(own))
    weighted_row_sum = own * theta_star + epsilon * cross * (theta_star.sum() - theta_star)
    payoffs = []
    for i in range(n):
        linear = np.zeros(n)
        linear[i] = -weighted_row_sum[i]
        payoffs.append(PayoffConfig(hessian=H.tolist(), linear=linear.tolist()))
    return payoffs


def _scalar_player(channel: ChannelConfig, *, a: float = 0.1, k: float = 0.15, c: Optional[float] = 50.0,
                   theta_hat0: float = 1.2, **controller) -> PlayerConfig:
    return PlayerConfig(name="player", channel=channel, probe=ProbeConfig(a=a),
                        controller=ControllerConfig(k=k, c=c, **controller), theta_hat0=theta_hat0)


def _scalar_scenario(name: str, description: str, channel: ChannelConfig, *, omega: float = 20.0,
                     t_end: float = 40.0, dt: float = None, grid_cells: int = None, **player) -> ScenarioConfig:
    return ScenarioConfig(
        name=name, description=description, omega_base=omega,
        players=[_scalar_player(channel, **player)],
        map=MapConfig(kind="quadratic", hessian=-2.0, theta_star=1.0),
        numerics=NumericsConfig(t_end=t_end, dt=dt, grid_cells=grid_cells),
    )


def _duopoly_players(firm_1: ControllerConfig, firm_2: ControllerConfig) -> List[PlayerConfig]:
    return [
        PlayerConfig(name="firm-1", channel=ChannelConfig(kind="transport", delay=30.0),
                     probe=ProbeConfig(a=0.075, omega_prime="107/4"), controller=firm_1, theta_hat0=50.0),
        PlayerConfig(name="firm-2", channel=ChannelConfig(kind="heat", length=3.0),
                     probe=ProbeConfig(a=0.05, omega_prime="22"), controller=firm_2, theta_hat0=110.0 / 3.0),
    ]


def _duopoly(name: str, description: str, firm_1: ControllerConfig, firm_2: ControllerConfig) -> ScenarioConfig:
    return ScenarioConfig(
        name=name, description=description, omega_base=1.0,
        players=_duopoly_players(firm_1, firm_2),
        map=MapConfig(kind="game", preset="duopoly", epsilon=1.0),
        numerics=NumericsConfig(dt=0.0056, t_end=500.0, grid_cells=40),
    )


def _duopoly_hetero() -> ScenarioConfig:
    # firm 2's uncompensated heat loop gain 10·k sits past the cosh phase-crossover bound (≈1.26)
    return _duopoly(
        "duopoly-hetero",
        "Two firms, a 30 s transport delay and a heat channel of length 3 (desk-scale gains)",
        ControllerConfig(k=0.005625, c=100.0, washout=10.0, hessian_corner=0.02),
        ControllerConfig(k=0.3, c=100.0, washout=5.0, hessian_corner=0.1),
    )


def _duopoly_hetero_literal() -> ScenarioConfig:
    return _duopoly(
        "duopoly-hetero-literal",
        "Duopoly with k=(2, 5) read as demodulated gains, no washout or Hessian smoothing; "
        "the profit offsets swamp the loop and it diverges with or without compensation",
        ControllerConfig(k=2.0, c=100.0),
        ControllerConfig(k=5.0, c=100.0),
    )


def _nplayer(name: str, description: str, channels: List[ChannelConfig], theta_star: Sequence[float], *,
             k: float, omega_base: float, t_end: float, dt: float = None, grid_cells: int = None,
             c: float = 50.0) -> ScenarioConfig:
    epsilon = 0.5
    theta_star = list(theta_star)
    return ScenarioConfig(
        name=name, description=description, omega_base=omega_base,
        players=[
            PlayerConfig(name=f"player-{i + 1}", channel=channel, probe=ProbeConfig(a=0.1),
                         controller=ControllerConfig(k=k, c=c, washout=1.0), theta_hat0=theta_star[i] + 0.2)
            for i, channel in enumerate(channels)
        ],
        map=MapConfig(kind="game", epsilon=epsilon,
                      payoffs=equilibrium_game_payoffs(-4.0, 1.0, epsilon, theta_star)),
        numerics=NumericsConfig(t_end=t_end, dt=dt, grid_cells=grid_cells),
    )


def _traffic_bottleneck() -> ScenarioConfig:
    traffic = TrafficConfig(free_speed=30.0, jam_density=0.16, reference_density=0.04, length=600.0)
    rho_star, _ = traffic_targets(traffic)
    scenario = ScenarioConfig(
        name="traffic-bottleneck",
        description="Ramp metering upstream of a bottleneck, delay from the linearized LWR speed",
        omega_base=0.5,
        players=[PlayerConfig(
            name="ramp", channel=ChannelConfig(kind="direct"), probe=ProbeConfig(a=0.003),
            controller=ControllerConfig(k=4.0, c=1.0, washout=0.05, hessian_corner=0.02),
            theta_hat0=0.5 * rho_star,
        )],
        map=MapConfig(kind="quadratic", hessian=traffic.map_hessian, theta_star=rho_star),
        numerics=NumericsConfig(t_end=1500.0),
        traffic=traffic,
    )
    return apply_traffic(scenario)


def builtin_scenarios() -> Dict[str, ScenarioConfig]:
    """Named, fully parameterized scenarios"""
    scenarios = [
        _duopoly_hetero(),
        _duopoly_hetero_literal(),
        _nplayer("nplayer-heat", "Two players behind heat channels of unit length",
                 [ChannelConfig(kind="heat", length=1.0)] * 2, (1.0, 2.0),
                 k=0.125, omega_base=10.0, t_end=30.0, dt=0.002, grid_cells=15),
        _nplayer("nplayer-delay", "Three players with transport delays 1, 1.5 and 2 s",
                 [ChannelConfig(kind="transport", delay=d) for d in (1.0, 1.5, 2.0)], (1.0, 2.0, 1.5),
                 k=0.075, omega_base=20.0, t_end=60.0),
        _scalar_scenario("scalar-delay", "Scalar ES through a 2 s transport delay",
                         ChannelConfig(kind="transport", delay=2.0)),
        _scalar_scenario("scalar-heat", "Scalar ES through a heat channel of unit length",
                         ChannelConfig(kind="heat", length=1.0), dt=0.005, grid_cells=10),
        _scalar_scenario("scalar-rad", "Scalar ES through a reaction-advection-diffusion channel",
                         ChannelConfig(kind="rad", eps=1.0, b=1.0, lam=0.1), omega=10.0,
                         dt=0.005, grid_cells=10),
        _scalar_scenario("scalar-wave", "Scalar ES through an undamped string (Neumann-actuated law)",
                         ChannelConfig(kind="wave", length=1.0), omega=6.0, grid_cells=50),
        _scalar_scenario("wave-kv-source-seek", "Source seeking through a Kelvin-Voigt damped cable",
                         ChannelConfig(kind="wave_kv", length=1.0, damping=0.2), omega=4.0),
        _scalar_scenario("scalar-variable-delay", "Scalar ES with delay 1 + 0.2 sin(0.5t)",
                         ChannelConfig(kind="variable_delay", mean=1.0, amplitude=0.2, frequency=0.5)),
        _scalar_scenario("scalar-distributed-delay", "Scalar ES with a half-uniform, half-point delay kernel",
                         ChannelConfig(kind="distributed_delay", delay=2.0,
                                       cdf=[(0.0, 0.0), (1.0, 0.5), (1.0, 1.0), (2.0, 1.0)])),
        _scalar_scenario("stefan-es", "Interface position seeking through a one-phase Stefan problem",
                         ChannelConfig(kind="stefan", s0=0.8), a=0.05, omega=2.0, k=0.1, c=20.0,
                         theta_hat0=0.0, dt=0.01, t_end=60.0),
        _traffic_bottleneck(),
        _scalar_scenario("baseline-es", "Classical ES on a static quadratic map",
                         ChannelConfig(kind="direct"), omega=50.0, k=1.0, c=None, theta_hat0=1.5,
                         t_end=20.0, law="classical_es"),
        ScenarioConfig(
            name="baseline-duopoly",
            description="Two firms setting prices by NES in a static market",
            omega_base=10.0,
            players=[
                PlayerConfig(name=f"firm-{i + 1}", probe=ProbeConfig(a=0.2, omega_prime=prime),
                             controller=ControllerConfig(k=5.0, law="nes"), theta_hat0=start)
                for i, (prime, start) in enumerate((("25", 10.0), ("19", 7.0)))
            ],
            map=MapConfig(kind="market", m1=5.0, m2=5.0, total_demand=10.0, preference=1.0),
            numerics=NumericsConfig(t_end=60.0),
        ),
    ]
    return {s.name: s for s in scenarios}


def load_scenario(reference: str) -> ScenarioConfig:
    """A built-in name or the path of a JSON scenario file."""
    catalog = builtin_scenarios()
    if reference in catalog:
        return catalog[reference]
    path = Path(reference)
    if not path.is_file():
        raise ConfigurationError(
            f"'{reference}' is neither a built-in scenario ({', '.join(sorted(catalog))}) nor a file"
        )
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"Could not read scenario file {path}: {exc}") from exc
    return parse_scenario(data)
