"""
EquiSeek - Control kernels
Special functions and integral weights used by the boundary compensators.
"""
import math

import numpy as np
from scipy.linalg import expm

from config import Config
from utils.errors import ConfigurationError


def bessel_i1(z, rel_tol: float = None) -> np.ndarray:
    """
    Modified Bessel function of the first kind, order one, by power series
    I1(z) = Σ (z/2)^(2m+1) / (m! (m+1)!)

    Args:
        z: Scalar or array argument
        rel_tol: Stop once every new term is below rel_tol times the partial sum

    Returns:
        I1(z) with the shape of z
    """
    rel_tol = Config.BESSEL_REL_TOL if rel_tol is None else rel_tol
    z = np.asarray(z, dtype=float)
    half = 0.5 * z
    term = half.copy()
    total = term.copy()
    half_sq = half * half
    m = 0
    while True:
        m += 1
        term = term * half_sq / (m * (m + 1))
        total = total + term
        if np.all(np.abs(term) <= rel_tol * np.abs(total)) or m > 500:
            break
    return total if total.ndim else float(total)


def i1_over_z(z) -> np.ndarray:
    """I1(z)/z with the removable singularity at z=0 filled by 1/2."""
    z = np.asarray(z, dtype=float)
    safe = np.where(z == 0.0, 1.0, z)
    values = np.asarray(bessel_i1(safe)) / safe
    return np.where(z == 0.0, 0.5, values)


def wave_kv_weights(sigma: np.ndarray, length: float, kernel_c: float) -> np.ndarray:
    """Weight cD·I1(√(c(D²-σ²)))/√(c(D²-σ²)) of the damped-wave compensator on the grid sigma."""
    if kernel_c <= 0:
        raise ConfigurationError(f"Wave kernel parameter must be positive, got {kernel_c}")
    sigma = np.asarray(sigma, dtype=float)
    arg = np.sqrt(np.clip(kernel_c * (length ** 2 - sigma ** 2), 0.0, None))
    return kernel_c * length * i1_over_z(arg)


def rad_xi(eps: float, b: float, lam: float) -> float:
    """ξ = b²/(4ε) - λ; the RAD kernels need ξ ≥ 0."""
    return b * b / (4.0 * eps) - lam


def rad_gamma(x, eps: float, b: float, lam: float) -> np.ndarray:
    """γ(x) = cosh(√(ξ/ε)x) + (b/2ε)√(ε/ξ) sinh(√(ξ/ε)x), with the ξ→0 limit 1 + (b/2ε)x."""
    xi = rad_xi(eps, b, lam)
    if xi < 0:
        raise ConfigurationError(f"RAD kernel needs b²/(4ε) - λ ≥ 0, got {xi:.4g}")
    x = np.asarray(x, dtype=float)
    if xi == 0.0:
        return 1.0 + (b / (2 * eps)) * x
    r = math.sqrt(xi / eps)
    return np.cosh(r * x) + (b / (2 * eps)) * np.sinh(r * x) / r


def rad_m(x, eps: float, b: float, lam: float) -> np.ndarray:
    """m(x) = (1/ε)√(ε/ξ) sinh(√(ξ/ε)x), with the ξ→0 limit x/ε."""
    xi = rad_xi(eps, b, lam)
    if xi < 0:
        raise ConfigurationError(f"RAD kernel needs b²/(4ε) - λ ≥ 0, got {xi:.4g}")
    x = np.asarray(x, dtype=float)
    if xi == 0.0:
        return x / eps
    r = math.sqrt(xi / eps)
    return np.sinh(r * x) / (eps * r)


def rad_weights(sigma: np.ndarray, eps: float, b: float, lam: float) -> np.ndarray:
    """Integrand weight e^{(b/2ε)σ} m(1-σ) of the RAD compensator on [0, 1]."""
    sigma = np.asarray(sigma, dtype=float)
    return np.exp((b / (2 * eps)) * sigma) * rad_m(1.0 - sigma, eps, b, lam)


def rad_static_gain(eps: float, b: float, lam: float) -> float:
    """Steady-state gain from α(1) to α(0) of the RAD channel."""
    return math.exp(b / (2 * eps)) / float(rad_gamma(1.0, eps, b, lam))


def wave_rho(s, gain: float) -> np.ndarray:
    """
    ρ(s) = k [0 1] e^{As} [0 1]ᵀ with A = [[0, 0], [1, 0]] for the
    Neumann-actuated wave compensator
    """
    A = np.array([[0.0, 0.0], [1.0, 0.0]])
    selector = np.array([0.0, 1.0])
    s = np.atleast_1d(np.asarray(s, dtype=float))
    values = np.array([gain * selector @ expm(A * si) @ selector for si in s])
    return values
