"""
Tests for probe signals, demodulators and frequency selection
"""
import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.integrate import trapezoid

from utils.dither import (
    ProbeSpec, StefanTrajectory, averaging_period, demod_M, demod_N_game, demod_N_scalar,
    demod_variable_delay, demodulators, distributed_gamma, frequency_violations, heat_probe_envelope,
    probe_value, reference_profile, select_frequencies, validate_frequencies,
)
from utils.errors import ConfigurationError
from utils.pde_channels import DistributedDelay, Heat, Stefan, Transport, VariableDelay


def test_game_and_scalar_hessian_demodulators_coincide():
    for t in np.linspace(0.0, 3.0, 31):
        assert demod_N_game(0.2, 7.0, t) == pytest.approx(demod_N_scalar(0.2, 7.0, t), abs=1e-9)


def test_demodulators_average_to_zero():
    omega = 3.0
    times = np.linspace(0.0, 2 * math.pi / omega, 4001)
    M = np.array([demod_M(1.0, omega, t) for t in times])
    N = np.array([demod_N_game(1.0, omega, t) for t in times])
    assert abs(trapezoid(M, times)) / times[-1] <= 1e-12
    assert abs(trapezoid(N, times)) / times[-1] <= 1e-12


def test_zero_amplitude_switches_probing_off():
    probe = ProbeSpec(a=0.0, omega=5.0, kind=Transport(1.0))
    assert demodulators(probe, 0.4) == (0.0, 0.0)
    assert probe_value(probe, 0.4) == 0.0


def test_probe_rejects_negative_amplitude():
    with pytest.raises(ConfigurationError):
        ProbeSpec(a=-0.1, omega=1.0)


def test_variable_delay_demodulates_at_delayed_phase():
    kind = VariableDelay(1.0, 0.2, 0.5)
    probe = ProbeSpec(a=0.1, omega=10.0, kind=kind)
    t = 2.3
    M, N = demodulators(probe, t)
    shifted = t - kind.delay_at(t)
    assert M == pytest.approx(20.0 * math.sin(10.0 * shifted))
    assert N == pytest.approx(-800.0 * math.cos(20.0 * shifted))


class TestFrequencies:
    def test_ladder_pick_for_two_players(self):
        frequencies = select_frequencies(2, 1.0)
        assert frequencies.omega_primes == (Fraction(1), Fraction(5, 4))

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_selected_sets_are_collision_free(self, n):
        frequencies = select_frequencies(n, 10.0)
        assert len(frequencies.omegas) == n
        assert frequency_violations(frequencies.omega_primes) == []

    def test_duopoly_averaging_period(self):
        frequencies = validate_frequencies(1.0, [Fraction(107, 4), Fraction(22)])
        assert frequencies.Pi == pytest.approx(8 * math.pi)

    def test_averaging_period_is_common_multiple(self):
        Pi = averaging_period(2.0, [Fraction(1), Fraction(5, 4)])
        for w in (1.0, 1.25):
            cycles = Pi * 2.0 * w / (2 * math.pi)
            assert cycles == pytest.approx(round(cycles))

    @pytest.mark.parametrize("primes", [[1, 1], [1, Fraction(3, 2), 2], [1, 2, 5]])
    def test_colliding_sets_rejected(self, primes):
        with pytest.raises(ConfigurationError):
            validate_frequencies(1.0, primes)

    def test_octave_pair_is_allowed(self):
        assert frequency_violations([Fraction(1), Fraction(2)]) == []
        assert validate_frequencies(1.0, [1, 2]).omega_primes == (Fraction(1), Fraction(2))


def test_distributed_probe_reaches_map_with_amplitude_a():
    kind = DistributedDelay(2.0, ((0.0, 0.0), (1.0, 0.5), (1.0, 1.0), (2.0, 1.0)))
    probe = ProbeSpec(a=0.1, omega=2.0, kind=kind)
    phi, gamma = distributed_gamma(probe)
    assert gamma == pytest.approx(abs(phi) ** 2)
    xi = np.linspace(0.0, 1.0, 4001)
    for t in (3.0, 4.1, 5.7):
        spread = trapezoid([probe_value(probe, t - s) for s in xi], xi)
        arrived = 0.5 * spread + 0.5 * probe_value(probe, t - 1.0)
        assert arrived == pytest.approx(0.1 * math.sin(2.0 * t), abs=1e-6)


def test_heat_probe_stays_within_envelope():
    probe = ProbeSpec(a=0.05, omega=22.0, kind=Heat(3.0))
    envelope = heat_probe_envelope(0.05, 22.0, 3.0)
    peak = max(abs(probe_value(probe, t)) for t in np.linspace(0.0, 2 * math.pi / 22.0, 400))
    assert peak <= envelope * (1 + 1e-12)
    assert peak > 0.5 * envelope


def test_heat_reference_at_origin_is_plain_sinusoid():
    probe = ProbeSpec(a=0.05, omega=22.0, kind=Heat(3.0))
    for t in (0.0, 0.05, 0.2):
        assert float(reference_profile(probe, 0.0, t)) == pytest.approx(0.05 * math.sin(22.0 * t), abs=1e-12)


class TestStefanTrajectory:
    def test_vanishes_at_reference_interface(self):
        trajectory = StefanTrajectory(a=0.05, omega=2.0, s0=0.8)
        for t in (0.0, 0.7, 2.2):
            assert trajectory.profile(trajectory.interface(t), t) == pytest.approx(0.0, abs=1e-12)

    def test_flux_is_negative_slope_at_origin(self):
        trajectory = StefanTrajectory(a=0.05, omega=2.0, s0=0.8)
        t, h = 0.9, 1e-6
        slope = (trajectory.profile(h, t) - trajectory.profile(-h, t)) / (2 * h)
        assert trajectory.flux(t) == pytest.approx(-slope, rel=1e-6, abs=1e-9)

    def test_probe_uses_trajectory_flux(self):
        probe = ProbeSpec(a=0.05, omega=2.0, kind=Stefan(0.8))
        trajectory = StefanTrajectory(a=0.05, omega=2.0, s0=0.8)
        assert probe_value(probe, 1.3) == pytest.approx(trajectory.flux(1.3))

    def test_series_truncation_converges(self):
        trajectory = StefanTrajectory(0.05, 1.0, 0.8)
        longer = StefanTrajectory(0.05, 1.0, 0.8, terms=trajectory.terms + 2)
        x = np.linspace(0.0, 0.8, 9)
        for t in np.linspace(0.0, 2 * math.pi, 33):
            assert abs(longer.flux(t) - trajectory.flux(t)) < 1e-6
            assert np.max(np.abs(longer.profile(x, t) - trajectory.profile(x, t))) < 1e-6


def test_constant_delay_shifts_demodulator_phase():
    M, N = demod_variable_delay(0.1, 4.0, 1.0, lambda t: 0.5)
    assert M == pytest.approx(demod_M(0.1, 4.0, 0.5))
    assert N == pytest.approx(demod_N_scalar(0.1, 4.0, 0.5))
