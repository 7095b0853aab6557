"""
EquiSeek - Scenario and API schemas
Pydantic models for the scenario key-value tree and the HTTP payloads.
All times are in seconds, frequencies in rad/s and lengths in the channel's
own spatial unit.
"""
from fractions import Fraction
from typing import Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from utils.errors import ConfigurationError
from utils.pde_channels import (
    RAD, ChannelKind, Direct, DistributedDelay, Heat, Stefan, Transport,
    VariableDelay, Wave, WaveKV,
)

ChannelKindName = Literal[
    "direct", "transport", "heat", "wave", "wave_kv", "rad", "stefan",
    "variable_delay", "distributed_delay",
]

_REQUIRED_FIELDS = {
    "direct": (),
    "transport": ("delay",),
    "heat": ("length",),
    "wave": ("length",),
    "wave_kv": ("length", "damping"),
    "rad": ("eps", "b", "lam"),
    "stefan": ("s0",),
    "variable_delay": ("mean",),
    "distributed_delay": ("delay", "cdf"),
}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ChannelConfig(_Strict):
    """Actuation channel between θ_i and Θ_i"""
    kind: ChannelKindName = "direct"
    delay: Optional[float] = Field(None, description="Transport or distributed-delay support D [s]")
    length: Optional[float] = Field(None, description="Domain length D of heat/wave channels")
    damping: Optional[float] = Field(None, description="Kelvin-Voigt damping d")
    eps: Optional[float] = Field(None, description="RAD diffusivity ε")
    b: Optional[float] = Field(None, description="RAD advection b")
    lam: Optional[float] = Field(None, description="RAD reaction λ")
    s0: Optional[float] = Field(None, description="Stefan initial interface position")
    cap: float = Field(10.0, description="Stefan wall position")
    mean: Optional[float] = Field(None, description="Variable delay mean [s]")
    amplitude: float = Field(0.0, description="Variable delay oscillation amplitude [s]")
    frequency: float = Field(0.0, description="Variable delay oscillation frequency [rad/s]")
    cdf: Optional[List[Tuple[float, float]]] = Field(None, description="Piecewise-linear CDF points (σ, β)")

    @model_validator(mode="after")
    def _check_required(self) -> "ChannelConfig":
        missing = [name for name in _REQUIRED_FIELDS[self.kind] if getattr(self, name) is None]
        if missing:
            raise ValueError(f"channel kind '{self.kind}' needs {', '.join(missing)}")
        return self

    def to_kind(self) -> ChannelKind:
        if self.kind == "direct":
            return Direct()
        if self.kind == "transport":
            return Transport(self.delay)
        if self.kind == "heat":
            return Heat(self.length)
        if self.kind == "wave":
            return Wave(self.length)
        if self.kind == "wave_kv":
            return WaveKV(self.length, self.damping)
        if self.kind == "rad":
            return RAD(self.eps, self.b, self.lam)
        if self.kind == "stefan":
            return Stefan(self.s0, self.cap)
        if self.kind == "variable_delay":
            return VariableDelay(self.mean, self.amplitude, self.frequency)
        return DistributedDelay(self.delay, tuple(tuple(p) for p in self.cdf))


class ProbeConfig(_Strict):
    """Probe a_i sin(ω_i t) delivered at the map input, ω_i = ω·ω'_i"""
    a: float = Field(..., ge=0.0, description="Probe amplitude at the map input")
    omega_prime: Optional[str] = Field(None, description="Rational frequency multiplier, e.g. '107/4'")
    series_terms: Optional[int] = Field(None, ge=1)
    gamma: Optional[float] = Field(None, gt=0.0, description="Distributed-delay probe normalization")

    @field_validator("omega_prime", mode="before")
    @classmethod
    def _as_fraction_text(cls, value):
        if value is None:
            return None
        try:
            fraction = Fraction(str(value)) if not isinstance(value, float) else \
                Fraction(value).limit_denominator(10 ** 4)
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"omega_prime {value!r} is not a rational number") from exc
        if fraction <= 0:
            raise ValueError("omega_prime must be positive")
        return str(fraction)

    def multiplier(self) -> Optional[Fraction]:
        return None if self.omega_prime is None else Fraction(self.omega_prime)


class ControllerConfig(_Strict):
    k: float = Field(..., gt=0.0, description="Adaptation gain")
    c: Optional[float] = Field(None, gt=0.0, description="Low-pass pole of the compensator [rad/s]")
    form: Literal["integral", "state"] = "integral"
    gain_convention: Literal["demodulated", "perturbation"] = "demodulated"
    washout: Optional[float] = Field(None, gt=0.0, description="High-pass corner on y [rad/s]")
    hessian_corner: Optional[float] = Field(None, gt=0.0, description="Low-pass corner on Ĥ [rad/s]")
    kernel_c: float = Field(1.0, description="Backstepping kernel parameter of the wave laws")
    law: Literal["auto", "classical_es", "nes"] = "auto"
    gain_K: Optional[float] = Field(None, lt=0.0, description="Stefan law gain K (< 0); defaults to -k")


class PlayerConfig(_Strict):
    name: str
    channel: ChannelConfig = Field(default_factory=ChannelConfig)
    probe: ProbeConfig
    controller: ControllerConfig
    theta_hat0: float


class PayoffConfig(_Strict):
    """J_i = ½ΘᵀH^iΘ + h^iᵀΘ + c^i before the ε-weighting"""
    hessian: List[List[float]]
    linear: List[float]
    constant: float = 0.0


class MapConfig(_Strict):
    kind: Literal["game", "quadratic", "market"] = "game"
    preset: Optional[Literal["duopoly"]] = None
    payoffs: Optional[List[PayoffConfig]] = None
    epsilon: float = Field(1.0, ge=0.0, le=1.0)
    # scalar map y = y* + (H/2)(Θ-θ*)²
    hessian: Optional[float] = None
    theta_star: Optional[float] = None
    y_star: float = 0.0
    # two-firm market
    m1: Optional[float] = None
    m2: Optional[float] = None
    total_demand: Optional[float] = None
    preference: Optional[float] = None

    @model_validator(mode="after")
    def _check_kind(self) -> "MapConfig":
        if self.kind == "game" and self.preset is None and not self.payoffs:
            raise ValueError("game maps need a preset or explicit payoffs")
        if self.kind == "quadratic" and (self.hessian is None or self.theta_star is None):
            raise ValueError("quadratic maps need hessian and theta_star")
        if self.kind == "market" and None in (self.m1, self.m2, self.total_demand, self.preference):
            raise ValueError("market maps need m1, m2, total_demand and preference")
        return self


class NumericsConfig(_Strict):
    dt: Optional[float] = Field(None, gt=0.0, description="Target loop step before snapping [s]")
    t_end: float = Field(..., gt=0.0, description="Horizon [s]")
    grid_cells: Optional[int] = Field(None, ge=4)
    warm_start: bool = True
    sample_every: Optional[int] = Field(None, ge=1, description="Export every n-th loop step")


class TrafficConfig(_Strict):
    """Greenshields bottleneck: free speed, jam density, reference density, segment length"""
    free_speed: float = Field(..., gt=0.0, description="v_f [m/s]")
    jam_density: float = Field(..., gt=0.0, description="ρ_m [veh/m]")
    reference_density: float = Field(..., ge=0.0, description="ρ_r [veh/m]")
    length: float = Field(..., gt=0.0, description="L [m]")
    map_hessian: float = Field(-0.005, lt=0.0)
    optimal_density_fraction: float = Field(0.2, gt=0.0, lt=1.0)


class ScenarioConfig(_Strict):
    name: str
    description: str = ""
    omega_base: float = Field(..., gt=0.0, description="Base frequency ω [rad/s]")
    players: List[PlayerConfig] = Field(..., min_length=1)
    map: MapConfig
    numerics: NumericsConfig
    compensation: bool = True
    traffic: Optional[TrafficConfig] = None

    @model_validator(mode="after")
    def _check_players(self) -> "ScenarioConfig":
        n = len(self.players)
        if self.map.kind in ("quadratic",) and n != 1:
            raise ValueError("quadratic maps have exactly one player")
        if self.map.kind == "market" and n != 2:
            raise ValueError("market maps have exactly two players")
        if self.map.payoffs is not None and len(self.map.payoffs) != n:
            raise ValueError(f"{len(self.map.payoffs)} payoffs for {n} players")
        primes = [p.probe.omega_prime for p in self.players]
        if any(w is None for w in primes) and not all(w is None for w in primes):
            raise ValueError("either every player fixes omega_prime or none does")
        return self


def parse_scenario(data: Union[dict, ScenarioConfig]) -> ScenarioConfig:
    """Validate a raw key-value tree; pydantic failures become ConfigurationError."""
    if isinstance(data, ScenarioConfig):
        return data
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError(f"Invalid scenario configuration: {exc}") from exc


# ---------------------------------------------------------------------------
# HTTP payloads
# ---------------------------------------------------------------------------

class HealthResponse(BaseModel):
    """Health check response model"""
    status: str
    timestamp: str
    scenarios: int


class ErrorResponse(BaseModel):
    """Error response model"""
    success: bool
    error: str
    detail: Optional[str] = None
    timestamp: str


class ScenarioSummary(BaseModel):
    name: str
    description: str
    players: int


class RunRequest(BaseModel):
    t_end: Optional[float] = Field(None, gt=0.0)
    dt: Optional[float] = Field(None, gt=0.0)
    compensation: Optional[bool] = None
    epsilon: Optional[float] = Field(None, ge=0.0, le=1.0)


class RunResponse(BaseModel):
    success: bool
    name: str
    dt: float
    steps: int
    wall_time: float
    config_hash: str
    divergence_time: Optional[float] = None
    theta_star: List[float]
    final_Theta: List[float]
    metrics: Optional[Dict] = None
    stability: Dict
    series: Dict[str, List]
    timestamp: str


class NashRequest(BaseModel):
    payoffs: List[PayoffConfig] = Field(..., min_length=1)
    epsilon: float = Field(1.0, ge=0.0, le=1.0)


class NashResponse(BaseModel):
    theta_star: List[float]
    payoffs_at_equilibrium: List[float]
    dominance_passed: bool
