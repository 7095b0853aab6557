"""
EquiSeek - Probe signals and demodulation
Additive dithers that pre-compensate each channel class so that the map
input oscillates as a·sin(ωt), the demodulators M and N, and the choice of
probing frequencies with their common averaging period.
"""
import cmath
import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from config import Config
from utils.errors import ConfigurationError
from utils.pde_channels import (
    ChannelKind, Direct, DistributedDelay, Heat, RAD, Stefan, Transport,
    VariableDelay, Wave, WaveKV,
)

logger = logging.getLogger(__name__)


@dataclass
class ProbeSpec:
    """
    Per-player probe. An amplitude of zero switches probing off, in which
    case every demodulator is identically zero.
    """
    a: float
    omega: float
    kind: ChannelKind = field(default_factory=Direct)
    series_terms: Optional[int] = None
    gamma: Optional[float] = None
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.a < 0:
            raise ConfigurationError(f"Probe amplitude must be non-negative, got {self.a}")
        if self.omega <= 0:
            raise ConfigurationError(f"Probe frequency must be positive, got {self.omega}")
        if self.series_terms is not None and self.series_terms < 1:
            raise ConfigurationError(f"series_terms must be ≥ 1, got {self.series_terms}")


# ---------------------------------------------------------------------------
# Harmonic shapes: the profile is Im[a·shape(x)·e^{iωt}]
# ---------------------------------------------------------------------------

def _kappa(kind: ChannelKind, omega: float) -> complex:
    if isinstance(kind, Heat):
        return cmath.sqrt(1j * omega)
    if isinstance(kind, WaveKV):
        return 1j * omega / cmath.sqrt(1.0 + 1j * omega * kind.damping)
    if isinstance(kind, Wave):
        return 1j * omega
    raise ConfigurationError(f"No cosh-type trajectory for {type(kind).__name__}")


def harmonic_shape(spec: ProbeSpec, x) -> np.ndarray:
    """cosh(κx) for heat and wave channels."""
    return np.cosh(_kappa(spec.kind, spec.omega) * np.asarray(x, dtype=float))


def _rad_series_coefficients(spec: ProbeSpec) -> np.ndarray:
    """Complex factors a·μ^{2k} with μ² = (ξ + iω)/ε, k = 0..terms-1."""
    key = "rad"
    if key not in spec._cache:
        kind = spec.kind
        terms = spec.series_terms or Config.RAD_SERIES_TERMS
        xi = kind.b ** 2 / (4 * kind.eps) - kind.lam
        if xi < 0:
            raise ConfigurationError(f"RAD trajectory needs ξ = b²/(4ε) - λ ≥ 0, got {xi:.4g}")
        mu_sq = (xi + 1j * spec.omega) / kind.eps
        powers = spec.a * mu_sq ** np.arange(terms)
        r = kind.b / (2 * kind.eps)
        # tail estimate from the first dropped term of the cosh part
        tail = abs(spec.a * mu_sq ** terms) / math.factorial(2 * terms) * (1.0 + r / (2 * terms + 1))
        logger.debug(f"RAD probe truncated at {terms} terms, tail bound {tail:.3e}")
        spec._cache[key] = powers
        spec._cache["rad_tail"] = tail
    return spec._cache[key]


def rad_profile(spec: ProbeSpec, x, t: float) -> np.ndarray:
    """α_r(x,t) = e^{-bx/2ε} Σ_k Im[a μ^{2k} e^{iωt}] (x^{2k}/(2k)! + (b/2ε) x^{2k+1}/(2k+1)!)"""
    kind = spec.kind
    powers = _rad_series_coefficients(spec)
    x = np.asarray(x, dtype=float)
    r = kind.b / (2 * kind.eps)
    a2k = np.imag(powers * cmath.exp(1j * spec.omega * t))
    total = np.zeros_like(x)
    for k, coefficient in enumerate(a2k):
        total = total + coefficient * (
            x ** (2 * k) / math.factorial(2 * k) + r * x ** (2 * k + 1) / math.factorial(2 * k + 1)
        )
    return np.exp(-r * x) * total


# ---------------------------------------------------------------------------
# Stefan trajectory: β(x,t) = Σ_{n≥1} (1/(2n)!) ∂ⁿ_t [(x - s_r(t))^{2n}]
# with s_r(t) = s0 + a sin(ωt)
# ---------------------------------------------------------------------------

class StefanTrajectory:
    """
    Polynomial-in-x form β(x,t) = Σ_j g_j(t) x^j of the Stefan reference,
    with every g_j a trigonometric polynomial stored by its Fourier coefficients
    """

    def __init__(self, a: float, omega: float, s0: float, terms: int = None):
        self.a = a
        self.omega = omega
        self.s0 = s0
        self.terms = terms or Config.STEFAN_SERIES_TERMS
        self.max_harmonic = 2 * self.terms
        self.harmonics = np.arange(-self.max_harmonic, self.max_harmonic + 1)
        self.coefficients = self._build()

    def _laurent_power(self, base: np.ndarray, power: int) -> np.ndarray:
        result = np.zeros(2 * self.max_harmonic + 1, dtype=complex)
        poly = np.array([1.0 + 0j])
        for _ in range(power):
            poly = np.convolve(poly, base)
        offset = self.max_harmonic - (len(poly) - 1) // 2
        result[offset: offset + len(poly)] = poly
        return result

    def _build(self) -> np.ndarray:
        # -s_r(t) as a Laurent polynomial in z = e^{iωt}: coefficients of z^{-1}, z^0, z^1
        base = np.array([self.a / 2j, -self.s0, -self.a / 2j], dtype=complex)
        derivative = 1j * self.harmonics * self.omega
        degree = 2 * self.terms
        coefficients = np.zeros((degree + 1, len(self.harmonics)), dtype=complex)
        for n in range(1, self.terms + 1):
            dn = derivative ** n
            for j in range(0, 2 * n + 1):
                p = 2 * n - j
                coefficients[j] += dn * self._laurent_power(base, p) / (math.factorial(j) * math.factorial(p))
        return coefficients

    def _phases(self, t: float) -> np.ndarray:
        return np.exp(1j * self.harmonics * self.omega * t)

    def polynomial(self, t: float) -> np.ndarray:
        """g_j(t), j = 0..2·terms"""
        return np.real(self.coefficients @ self._phases(t))

    def profile(self, x, t: float) -> np.ndarray:
        g = self.polynomial(t)
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), g)

    def flux(self, t: float) -> float:
        """S(t) = -∂_x β(0,t) = -g_1(t)"""
        return -float(self.polynomial(t)[1])

    def interface(self, t: float) -> float:
        return self.s0 + self.a * math.sin(self.omega * t)


def stefan_trajectory(spec: ProbeSpec) -> StefanTrajectory:
    if "stefan" not in spec._cache:
        spec._cache["stefan"] = StefanTrajectory(spec.a, spec.omega, spec.kind.s0, spec.series_terms)
    return spec._cache["stefan"]


def distributed_gamma(spec: ProbeSpec) -> Tuple[complex, float]:
    """Φ(ω) and the normalizer γ (default |Φ|², which puts amplitude a at the map input)."""
    phi = spec.kind.transfer(spec.omega)
    if abs(phi) < 1e-12:
        raise ConfigurationError(
            f"Delay kernel has no response at ω={spec.omega}; pick another probing frequency"
        )
    gamma = spec.gamma if spec.gamma is not None else abs(phi) ** 2
    return phi, gamma


# ---------------------------------------------------------------------------
# Probe values
# ---------------------------------------------------------------------------

def probe_value(spec: ProbeSpec, t: float) -> float:
    """
    Additive dither S(t) applied at the actuated boundary

    Args:
        spec: Probe specification, including the channel it pre-compensates
        t: Time in seconds

    Returns:
        S(t)
    """
    kind, a, omega = spec.kind, spec.a, spec.omega
    if a == 0.0:
        return 0.0
    if isinstance(kind, (Direct, VariableDelay)):
        return a * math.sin(omega * t)
    if isinstance(kind, Transport):
        return a * math.sin(omega * (t + kind.delay))
    if isinstance(kind, (Heat, WaveKV, Wave)):
        key = "shape_end"
        if key not in spec._cache:
            spec._cache[key] = complex(harmonic_shape(spec, kind.length))
        return (a * spec._cache[key] * cmath.exp(1j * omega * t)).imag
    if isinstance(kind, RAD):
        return float(rad_profile(spec, 1.0, t))
    if isinstance(kind, Stefan):
        return stefan_trajectory(spec).flux(t)
    if isinstance(kind, DistributedDelay):
        phi, gamma = distributed_gamma(spec)
        return (a / gamma) * (phi * cmath.exp(1j * omega * t)).imag
    raise ConfigurationError(f"No probe for channel kind {type(kind).__name__}")


def probe_history(spec: ProbeSpec, times: np.ndarray) -> np.ndarray:
    return np.array([probe_value(spec, float(t)) for t in np.atleast_1d(times)])


def reference_profile(spec: ProbeSpec, x, t: float) -> np.ndarray:
    """Distributed state of the channel that carries the periodic probe response."""
    kind = spec.kind
    x = np.asarray(x, dtype=float)
    if spec.a == 0.0:
        return np.zeros_like(x)
    if isinstance(kind, (Heat, WaveKV, Wave)):
        return np.imag(spec.a * harmonic_shape(spec, x) * cmath.exp(1j * spec.omega * t))
    if isinstance(kind, RAD):
        return rad_profile(spec, x, t)
    if isinstance(kind, Stefan):
        return stefan_trajectory(spec).profile(x, t)
    raise ConfigurationError(f"{type(kind).__name__} channels have no distributed reference profile")


def reference_velocity(spec: ProbeSpec, x, t: float) -> np.ndarray:
    """∂_t of the cosh-type reference profile (wave channels)."""
    x = np.asarray(x, dtype=float)
    if spec.a == 0.0:
        return np.zeros_like(x)
    shape = harmonic_shape(spec, x)
    return np.imag(1j * spec.omega * spec.a * shape * cmath.exp(1j * spec.omega * t))


def heat_probe_envelope(a: float, omega: float, length: float) -> float:
    """(a/2)(e^{D√(ω/2)} + e^{-D√(ω/2)}), the peak of the heat dither."""
    r = length * math.sqrt(omega / 2.0)
    return 0.5 * a * (math.exp(r) + math.exp(-r))


# ---------------------------------------------------------------------------
# Demodulation
# ---------------------------------------------------------------------------

def demod_M(a: float, omega: float, t: float) -> float:
    if a == 0.0:
        return 0.0
    return (2.0 / a) * math.sin(omega * t)


def demod_N_game(a: float, omega: float, t: float) -> float:
    if a == 0.0:
        return 0.0
    s = math.sin(omega * t)
    return (16.0 / (a * a)) * (s * s - 0.5)


def demod_N_scalar(a: float, omega: float, t: float) -> float:
    if a == 0.0:
        return 0.0
    return -(8.0 / (a * a)) * math.cos(2.0 * omega * t)


def demod_variable_delay(a: float, omega: float, t: float,
                         delay: Callable[[float], float]) -> Tuple[float, float]:
    """Demodulators evaluated at the delayed phase t - D(t)."""
    shifted = t - delay(t)
    return demod_M(a, omega, shifted), demod_N_scalar(a, omega, shifted)


def demodulators(spec: ProbeSpec, t: float, game: bool = True) -> Tuple[float, float]:
    """(M, N) for the probe's channel class."""
    if isinstance(spec.kind, VariableDelay):
        return demod_variable_delay(spec.a, spec.omega, t, spec.kind.delay_at)
    N = demod_N_game(spec.a, spec.omega, t) if game else demod_N_scalar(spec.a, spec.omega, t)
    return demod_M(spec.a, spec.omega, t), N


# ---------------------------------------------------------------------------
# Frequency selection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrequencySet:
    omega_base: float
    omega_primes: Tuple[Fraction, ...]
    Pi: float

    @property
    def omegas(self) -> Tuple[float, ...]:
        return tuple(self.omega_base * float(w) for w in self.omega_primes)


def _forbidden_for(index: int, primes: Sequence[Fraction]) -> set:
    others = [w for j, w in enumerate(primes) if j != index]
    forbidden = set(others)
    for wj, wk in itertools.permutations(others, 2):
        forbidden.add((wj + wk) / 2)
        forbidden.add(wj + 2 * wk)
    for wj, wk, wl in itertools.permutations(others, 3):
        forbidden.add(wj + wk + wl)
        forbidden.add(wj + wk - wl)
    return forbidden


def frequency_violations(primes: Sequence[Fraction]) -> list:
    """Indices whose multiplier collides with a combination of the others."""
    primes = [Fraction(w) for w in primes]
    return [i for i, w in enumerate(primes) if w <= 0 or w in _forbidden_for(i, primes)]


def averaging_period(omega_base: float, primes: Sequence[Fraction]) -> float:
    """Π = 2π·LCM{1/ω_i}, with the rational LCM lcm(numerators)/gcd(denominators)."""
    if omega_base <= 0:
        raise ConfigurationError(f"Base frequency must be positive, got {omega_base}")
    periods = [1 / Fraction(w) for w in primes]
    numerator = 1
    denominator = 0
    for p in periods:
        numerator = math.lcm(numerator, p.numerator)
        denominator = math.gcd(denominator, p.denominator)
    return 2.0 * math.pi * (numerator / denominator) / omega_base


def validate_frequencies(omega_base: float, primes: Sequence) -> FrequencySet:
    fractions = tuple(Fraction(w).limit_denominator(10 ** 4) if isinstance(w, float) else Fraction(w)
                      for w in primes)
    bad = frequency_violations(fractions)
    if bad:
        raise ConfigurationError(
            f"Probing multipliers {[str(w) for w in fractions]} collide at players {bad}; "
            "frequencies must avoid ω_j, (ω_j+ω_k)/2, ω_j+2ω_k and ω_j+ω_k±ω_l"
        )
    return FrequencySet(omega_base=omega_base, omega_primes=fractions,
                        Pi=averaging_period(omega_base, fractions))


def select_frequencies(n: int, omega_base: float) -> FrequencySet:
    """
    Greedy pick over the ladder 1, 5/4, 6/4, ... of the first multipliers
    that keep the set free of collisions
    """
    if n < 1:
        raise ConfigurationError(f"Player count must be ≥ 1, got {n}")
    denominator = Config.FREQUENCY_LADDER_DENOMINATOR
    chosen: list = []
    for k in range(denominator, denominator * Config.FREQUENCY_LADDER_SIZE):
        candidate = Fraction(k, denominator)
        if not frequency_violations(chosen + [candidate]):
            chosen.append(candidate)
            if len(chosen) == n:
                break
    if len(chosen) < n:
        raise ConfigurationError(f"Could not find {n} non-colliding probing frequencies")
    logger.info(f"Selected probing multipliers {[str(w) for w in chosen]} for base ω={omega_base}")
    return validate_frequencies(omega_base, chosen)
