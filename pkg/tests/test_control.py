"""
Tests for the update laws and the law factory
"""
import numpy as np
import pytest
from scipy import special

from services.control_service import (
    ClassicalEsLaw, CompensatorSpec, ControlService, ControlState, DelayPredictorLaw,
    DistributedDelayLaw, HeatBoundaryLaw, LoopContext, NesLaw, PlayerLaw, StefanLaw,
    VariableDelayLaw, WaveKVLaw, baseline_classical_es, baseline_nes_duopoly, effective_gain,
    heat_integral_term, update_delay_predictor, update_distributed_delay, update_duopoly_hetero,
    update_heat_boundary, update_rad, update_stefan, update_uncompensated, update_variable_delay,
    update_wave_kv,
)
from utils.dither import ProbeSpec
from utils.errors import ConfigurationError
from utils.kernels import bessel_i1, i1_over_z, rad_gamma, wave_kv_weights
from utils.pde_channels import (
    RAD, ChannelSnapshot, Direct, DistributedDelay, Heat, Stefan, Transport, VariableDelay, WaveKV,
)


def _ctx(t=0.0, dt=0.01, theta_hat=0.0, Theta=0.0, probe_signal=0.0, y=0.0, M=0.0):
    return LoopContext(t=t, dt=dt, theta_hat=theta_hat, Theta=Theta, probe_signal=probe_signal, y=y, M=M)


class TestGains:
    def test_perturbation_convention_scales_by_half_a_squared(self):
        assert effective_gain(2.0, 0.1, "perturbation") == pytest.approx(0.01)

    def test_demodulated_convention_keeps_k(self):
        assert effective_gain(2.0, 0.1, "demodulated") == 2.0

    def test_unknown_convention(self):
        with pytest.raises(ConfigurationError):
            effective_gain(1.0, 0.1, "other")

    def test_spec_validation(self):
        with pytest.raises(ConfigurationError):
            CompensatorSpec(k=1.0, c=-1.0)
        with pytest.raises(ConfigurationError):
            CompensatorSpec(k=1.0, form="mixed")


class TestUpdateLaws:
    def test_uncompensated_is_filtered_gradient(self):
        ctrl = ControlState(CompensatorSpec(k=3.0))
        assert update_uncompensated(ctrl, 0.5, 0.01) == pytest.approx(1.5)

    def test_delay_predictor_bracket(self):
        ctrl = ControlState(CompensatorSpec(k=2.0))
        assert update_delay_predictor(ctrl, 0.5, -4.0, 0.25, 0.01) == pytest.approx(2.0 * (0.5 - 1.0))

    def test_heat_integral_term_of_uniform_rate(self):
        x = np.linspace(0.0, 2.0, 21)
        snapshot = ChannelSnapshot(x=x, profile=np.zeros_like(x), rate=np.ones_like(x))
        assert heat_integral_term(snapshot, 2.0) == pytest.approx(2.0)

    def test_heat_state_form(self):
        ctrl = ControlState(CompensatorSpec(k=0.5, form="state"))
        U = update_heat_boundary(ctrl, 1.0, -2.0, 0.01, theta_hat=1.5, Theta=1.2, probe_signal=0.1)
        assert U == pytest.approx(0.5 * (1.0 - 2.0 * (1.5 - 1.2 + 0.1)))

    def test_heat_state_form_needs_inputs(self):
        ctrl = ControlState(CompensatorSpec(k=0.5, form="state"))
        with pytest.raises(ConfigurationError):
            update_heat_boundary(ctrl, 1.0, -2.0, 0.01, theta_hat=1.0)

    def test_stefan_gain_sign(self):
        with pytest.raises(ConfigurationError):
            update_stefan(ControlState(CompensatorSpec(k=0.1)), 1.0, -2.0, 0.0, 0.01)
        ctrl = ControlState(CompensatorSpec(k=-0.1))
        assert update_stefan(ctrl, 1.0, -2.0, 0.5, 0.01) == pytest.approx(0.1 * (1.0 - 1.0))

    def test_duopoly_hetero_pairs_predictor_and_heat_law(self):
        x = np.linspace(0.0, 2.0, 21)
        snapshot = ChannelSnapshot(x=x, profile=np.zeros_like(x), rate=np.ones_like(x))
        U1, U2 = update_duopoly_hetero(
            ControlState(CompensatorSpec(k=2.0)), ControlState(CompensatorSpec(k=0.5)),
            (0.5, 1.0), (-4.0, -2.0), 0.25, {"length": 2.0, "snapshot": snapshot}, 0.01,
        )
        assert U1 == pytest.approx(2.0 * (0.5 - 4.0 * 0.25))
        assert U2 == pytest.approx(0.5 * (1.0 - 2.0 * 2.0))

    def test_wave_kv_subtracts_weighted_integral(self):
        x = np.linspace(0.0, 1.0, 11)
        snapshot = ChannelSnapshot(x=x, profile=np.zeros_like(x), rate=np.ones_like(x))
        U = update_wave_kv(ControlState(CompensatorSpec(k=2.0)), 1.0, -3.0, snapshot, np.ones_like(x), 0.01)
        assert U == pytest.approx(2.0 * (1.0 + 3.0))

    def test_rad_scales_gradient_by_gamma(self):
        kind = RAD(1.0, 1.0, 0.1)
        x = np.linspace(0.0, 1.0, 11)
        snapshot = ChannelSnapshot(x=x, profile=np.zeros_like(x), rate=np.full_like(x, 2.0))
        U = update_rad(ControlState(CompensatorSpec(k=1.0)), 0.3, -1.0, snapshot, kind, 0.01,
                       weights=np.ones_like(x))
        gamma_1 = float(rad_gamma(1.0, 1.0, 1.0, 0.1))
        assert U == pytest.approx(np.exp(-0.5) * (gamma_1 * 0.3 - 2.0))

    def test_delay_family_brackets(self):
        for update in (update_variable_delay, update_distributed_delay):
            assert update(ControlState(CompensatorSpec(k=1.5)), 0.4, -2.0, 0.1, 0.01) == pytest.approx(1.5 * 0.2)

    def test_baseline_steps(self):
        assert baseline_classical_es(2.0, 3.0, 0.5, 0.1, 1.0) == pytest.approx(1.3)
        assert baseline_nes_duopoly(2.0, 0.2, 5.0, 0.01, 10.0) == pytest.approx(10.02)


class TestKernels:
    def test_bessel_series(self):
        # I1(1) = 0.565159103992485...
        assert bessel_i1(1.0) == pytest.approx(0.5651591039924851, rel=1e-13)
        assert i1_over_z(0.0) == pytest.approx(0.5)

    @pytest.mark.parametrize("z", [0.1, 1.5, 4.0, 9.0])
    def test_bessel_matches_scipy(self, z):
        assert bessel_i1(z) == pytest.approx(special.i1(z), rel=1e-12)
        assert i1_over_z(z) == pytest.approx(special.i1(z) / z, rel=1e-12)

    def test_wave_kv_weight_at_far_end(self):
        weights = wave_kv_weights(np.array([0.0, 1.0]), 1.0, 2.0)
        assert weights[1] == pytest.approx(2.0 * 1.0 * 0.5)
        assert weights[0] > weights[1]


class TestLawObjects:
    def test_delay_predictor_integrates_last_delay_of_U(self):
        probe = ProbeSpec(a=0.1, omega=10.0, kind=Transport(0.5))
        law = DelayPredictorLaw(CompensatorSpec(k=1.0), probe, Transport(0.5), 0.01)
        for _ in range(50):
            law.advance(0.0, 0.0, 1.0)
        assert law.integral() == pytest.approx(0.5)
        for _ in range(25):
            law.advance(0.0, 0.0, 0.0)
        assert law.integral() == pytest.approx(0.25)

    def test_constant_variable_delay_matches_transport_predictor(self):
        dt = 0.01
        spec = CompensatorSpec(k=1.0)
        fixed = DelayPredictorLaw(spec, ProbeSpec(a=0.1, omega=10.0), Transport(0.5), dt)
        variable = VariableDelayLaw(spec, ProbeSpec(a=0.1, omega=10.0), VariableDelay(0.5), dt)
        rng = np.random.default_rng(3)
        for n in range(120):
            t = n * dt
            variable.update(0.0, 0.0, _ctx(t=t, dt=dt))
            assert variable.integral(t) == pytest.approx(fixed.integral(), abs=1e-7)
            U = float(rng.normal())
            fixed.advance(0.0, 0.0, U)
            variable.advance(0.0, 0.0, U)

    def test_point_mass_distributed_delay_matches_transport_predictor(self):
        dt = 0.01
        spec = CompensatorSpec(k=1.0)
        kind = DistributedDelay(0.5, ((0.0, 0.0), (0.5, 0.0), (0.5, 1.0)))
        fixed = DelayPredictorLaw(spec, ProbeSpec(a=0.1, omega=10.0), Transport(0.5), dt)
        distributed = DistributedDelayLaw(spec, ProbeSpec(a=0.1, omega=10.0), kind, dt)
        rng = np.random.default_rng(5)
        for _ in range(80):
            U = float(rng.normal())
            fixed.advance(0.0, 0.0, U)
            distributed.advance(0.0, 0.0, U)
            assert distributed.integral() == pytest.approx(fixed.integral(), abs=1e-12)

    def test_heat_copy_at_rest_adds_no_compensation(self):
        probe = ProbeSpec(a=0.1, omega=20.0, kind=Heat(1.0))
        law = HeatBoundaryLaw(CompensatorSpec(k=0.5), probe, Heat(1.0), 0.005, 10, theta_hat0=1.2)
        for _ in range(20):
            U = law.update(0.4, -7.0, _ctx(dt=0.005, theta_hat=1.2))
            assert U == pytest.approx(0.5 * 0.4, abs=1e-9)
            law.advance(1.2, 1.2, U)

    def test_classical_es_euler_step(self):
        law = ClassicalEsLaw(CompensatorSpec(k=2.0), ProbeSpec(a=0.1, omega=50.0))
        ctx = _ctx(dt=0.01, y=3.0, M=4.0)
        assert law.next_theta_hat(1.0, 0.0, ctx) == pytest.approx(1.0 + 0.01 * 2.0 * 4.0 * 3.0)

    def test_nes_uses_unnormalized_probe(self):
        probe = ProbeSpec(a=0.2, omega=10.0)
        law = NesLaw(CompensatorSpec(k=5.0), probe)
        ctx = _ctx(t=0.1, dt=0.001, y=2.0)
        expected = 1.0 + 0.001 * 5.0 * 0.2 * np.sin(1.0) * 2.0
        assert law.next_theta_hat(1.0, 0.0, ctx) == pytest.approx(expected)


class TestFactory:
    SPEC = CompensatorSpec(k=1.0, c=10.0)

    def _build(self, kind, **kwargs):
        probe = ProbeSpec(a=0.1, omega=10.0, kind=kind)
        return ControlService.build_law(kind, self.SPEC, probe, 0.01, 10, 1.0, **kwargs)

    def test_dispatch_by_channel(self):
        assert isinstance(self._build(Transport(1.0)), DelayPredictorLaw)
        assert isinstance(self._build(VariableDelay(1.0, 0.2, 0.5)), VariableDelayLaw)
        assert isinstance(self._build(WaveKV(1.0, 0.2)), WaveKVLaw)
        assert type(self._build(Direct())) is PlayerLaw

    def test_compensation_off_gives_plain_law(self):
        assert type(self._build(Transport(1.0), compensation=False)) is PlayerLaw

    def test_baseline_laws(self):
        assert isinstance(self._build(Direct(), law="classical_es"), ClassicalEsLaw)
        assert isinstance(self._build(Direct(), law="nes"), NesLaw)
        with pytest.raises(ConfigurationError):
            self._build(Direct(), law="gradient")

    def test_stefan_needs_plant_access(self):
        with pytest.raises(ConfigurationError):
            self._build(Stefan(0.8))
        law = ControlService.build_law(Stefan(0.8), CompensatorSpec(k=-0.1), ProbeSpec(a=0.05, omega=2.0,
                                       kind=Stefan(0.8)), 0.01, 10, 0.0, snapshot_provider=lambda: None)
        assert isinstance(law, StefanLaw)
