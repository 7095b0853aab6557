"""
Tests for the stability checks, convergence metrics and frozen estimates
"""
import math
from fractions import Fraction

import numpy as np
import pytest

from services.analysis_service import (
    AnalysisService, convergence_metrics, default_divergence_threshold, divergence_detector,
    frozen_estimates, hurwitz_check, own_curvature_rows, small_gain_margin,
)
from utils.dither import ProbeSpec, select_frequencies, validate_frequencies
from utils.errors import InputError, InsufficientDataError
from utils.game import QuadraticGame, QuadraticPayoff, assemble_hessian, nash_equilibrium


class TestHurwitz:
    def test_duopoly_with_positive_gains(self, duopoly):
        H = assemble_hessian(duopoly)
        result = hurwitz_check(H, [2.0, 5.0])
        assert result.passed
        # characteristic polynomial of HK = [[-20, 25], [10, -50]]
        expected = max(np.roots([1.0, 70.0, 750.0]).real)
        assert result.max_real_part == pytest.approx(expected)

    def test_zero_gain_is_not_hurwitz(self, duopoly):
        result = hurwitz_check(assemble_hessian(duopoly), [0.0, 5.0])
        assert not result.passed

    def test_shape_mismatch(self, duopoly):
        with pytest.raises(InputError):
            hurwitz_check(assemble_hessian(duopoly), [1.0, 2.0, 3.0])


class TestSmallGain:
    H = np.array([[-4.0, 1.0, 0.5], [1.0, -3.0, 0.5], [0.5, 0.5, -5.0]])
    K = [0.2, 0.3, 0.1]
    D = [1.0, 1.5, 2.0]

    def test_margin_decreases_with_epsilon(self):
        margins = [small_gain_margin(self.H, self.K, self.D, eps).worst_margin
                   for eps in np.linspace(0.05, 1.0, 20)]
        assert all(b < a for a, b in zip(margins, margins[1:]))

    def test_margin_tends_to_one_without_coupling(self):
        assert small_gain_margin(self.H, self.K, self.D, 1e-9).worst_margin > 0.999

    def test_longer_channels_never_help(self):
        short = small_gain_margin(self.H, self.K, self.D, 0.5).margins
        long = small_gain_margin(self.H, self.K, [2 * d for d in self.D], 0.5).margins
        assert all(l <= s for s, l in zip(short, long))

    def test_empty_window(self):
        report = small_gain_margin(np.array([[-1.0, 2.0], [2.0, -1.0]]), [1.0, 1.0], [1.0, 1.0], 1.0)
        assert report.window_empty
        assert not report.passed

    def test_epsilon_star_lies_where_check_flips(self):
        report = small_gain_margin(self.H, [1.0, 1.0, 1.0], self.D, 1.0)
        eps_star = report.epsilon_star
        assert 0.0 < eps_star < 1.0
        assert small_gain_margin(self.H, [1.0, 1.0, 1.0], self.D, 0.9 * eps_star).passed
        assert not small_gain_margin(self.H, [1.0, 1.0, 1.0], self.D, min(1.0, 1.1 * eps_star)).passed

    def test_gains_must_be_positive(self):
        with pytest.raises(InputError):
            small_gain_margin(self.H, [0.0, 1.0, 1.0], self.D, 0.5)

    def test_report_for_duopoly(self, duopoly):
        report = AnalysisService.stability_report(duopoly, [2.0, 5.0], [30.0, 3.0])
        assert report.dominance.passed
        assert report.hurwitz.passed
        assert len(report.small_gain.lhs) == 2
        data = report.to_dict()
        assert set(data) == {"dominance", "hurwitz", "small_gain", "epsilon_star"}
        assert isinstance(data["small_gain"]["passed"], bool)

    def test_own_rows_are_unweighted(self, duopoly):
        rows = own_curvature_rows(duopoly.with_epsilon(0.5))
        assert np.allclose(rows, [[-10.0, 5.0], [5.0, -10.0]])


class TestConvergenceMetrics:
    def test_probe_only_residual(self):
        a, omega = 0.1, 10.0
        times = np.arange(0.0, 10.0 + 1e-9, 1e-3)
        Theta = (2.0 + a * np.sin(omega * times))[:, None]
        metrics = convergence_metrics(times, Theta, Theta, [2.0], [a], [omega], Pi=2 * math.pi / omega)
        assert metrics.tail_residual[0] == pytest.approx(a, rel=1e-3)
        assert metrics.band_prediction[0] == pytest.approx(a + 1.0 / omega)
        assert metrics.periodic_norm == pytest.approx(a / math.sqrt(2.0), rel=5e-3)

    def test_decaying_residual(self):
        times = np.arange(0.0, 20.0 + 1e-9, 0.01)
        Theta = (1.0 + np.exp(-times))[:, None]
        metrics = convergence_metrics(times, Theta, Theta, [1.0], [0.0], [5.0], Pi=2 * math.pi / 5.0)
        assert metrics.tail_start == pytest.approx(16.0)
        assert metrics.tail_residual[0] <= math.exp(-metrics.tail_start) * (1 + 1e-12)

    def test_heat_theta_band_grows_with_length(self):
        times = np.arange(0.0, 10.0 + 1e-9, 0.01)
        Theta = np.ones((times.size, 1))
        metrics = convergence_metrics(times, Theta, Theta, [1.0], [0.05], [22.0], Pi=0.5, heat_lengths=[3.0])
        assert metrics.theta_band[0] == pytest.approx(0.05 * math.exp(3.0 * math.sqrt(11.0)) + 1 / 22.0)

    def test_short_run_is_insufficient(self):
        times = np.linspace(0.0, 1.0, 101)
        Theta = np.ones((101, 1))
        with pytest.raises(InsufficientDataError):
            convergence_metrics(times, Theta, Theta, [1.0], [0.1], [1.0], Pi=1.0)


class TestDivergence:
    def test_bounded_run(self):
        times = np.linspace(0.0, 1.0, 11)
        assert divergence_detector(times, np.ones((11, 2)), 10.0) is None

    def test_threshold_is_strict(self):
        times = np.linspace(0.0, 1.0, 11)
        assert divergence_detector(times, np.full(11, 10.0), 10.0) is None

    def test_first_exceedance(self):
        times = np.linspace(0.0, 1.0, 11)
        values = np.where(times > 0.45, 100.0, 1.0)
        assert divergence_detector(times, values, 10.0) == pytest.approx(0.5)

    def test_nan_counts_as_divergence(self):
        times = np.linspace(0.0, 1.0, 11)
        values = np.ones(11)
        values[3] = np.nan
        assert divergence_detector(times, values, 10.0) == pytest.approx(0.3)

    def test_default_threshold(self):
        assert default_divergence_threshold([3.0, 4.0]) == pytest.approx(5000.0)
        assert default_divergence_threshold([0.0]) == pytest.approx(1000.0)


def _random_game(rng, n):
    payoffs = []
    for i in range(n):
        H = rng.uniform(-0.3, 0.3, size=(n, n))
        H = 0.5 * (H + H.T)
        H[i, i] = -rng.uniform(1.0, 3.0)
        payoffs.append(QuadraticPayoff(owner=i, H=H, h=rng.uniform(-2.0, 2.0, size=n)))
    return QuadraticGame(payoffs=tuple(payoffs), epsilon=float(rng.uniform(0.3, 1.0)))


class TestFrozenEstimates:
    def test_duopoly_hessian_and_zero_gradient_at_equilibrium(self, duopoly):
        frequencies = validate_frequencies(1.0, [Fraction(107, 4), Fraction(22)])
        probes = [ProbeSpec(a=0.075, omega=frequencies.omegas[0]), ProbeSpec(a=0.05, omega=frequencies.omegas[1])]
        Theta_star = nash_equilibrium(duopoly)
        estimates = frozen_estimates(duopoly, Theta_star, probes, frequencies.Pi, frequencies.Pi / 8000)
        for estimate in estimates:
            assert estimate["H"] == pytest.approx(-10.0, rel=0.05)
            assert abs(estimate["G"]) < 0.05

    def test_duopoly_gradient_away_from_equilibrium(self, duopoly):
        frequencies = validate_frequencies(1.0, [Fraction(107, 4), Fraction(22)])
        probes = [ProbeSpec(a=0.075, omega=frequencies.omegas[0]), ProbeSpec(a=0.05, omega=frequencies.omegas[1])]
        estimates = frozen_estimates(duopoly, [45.0, 30.0], probes, frequencies.Pi, frequencies.Pi / 8000)
        # ∂J1/∂Θ1 = -10Θ1 + 5Θ2 + 250 and ∂J2/∂Θ2 = -10Θ2 + 5Θ1 + 150
        assert estimates[0]["G"] == pytest.approx(-50.0, rel=0.01)
        assert estimates[1]["G"] == pytest.approx(75.0, rel=0.01)

    @pytest.mark.parametrize("seed", range(4))
    def test_random_games(self, seed):
        rng = np.random.default_rng(100 + seed)
        n = int(rng.integers(2, 5))
        game = _random_game(rng, n)
        frequencies = select_frequencies(n, 10.0)
        probes = [ProbeSpec(a=0.1, omega=w) for w in frequencies.omegas]
        Theta_star = nash_equilibrium(game)
        estimates = frozen_estimates(game, Theta_star, probes, frequencies.Pi, frequencies.Pi / 4000)
        for i, estimate in enumerate(estimates):
            own = game.payoffs[i].H[i, i]
            assert estimate["H"] == pytest.approx(own, rel=0.05)
            assert abs(estimate["G"]) < 0.05 * abs(own)
