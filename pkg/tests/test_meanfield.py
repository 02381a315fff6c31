import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maser_receiver.errors import DomainError, StepSizeError
from maser_receiver.meanfield import (
    MeanFieldState,
    conserved_quantities,
    drive_waveform,
    integrate_batch,
    integrate_meanfield,
    linear_growth_rate,
    meanfield_derivative,
    threshold_ratio,
    trace_conserved_quantities,
)
from maser_receiver.model import TWO_PI, DriveParams

from helpers import W0, make_config

class TestDerivative:
    def test_decoupled_channels(self):
        cfg = make_config(g_eff=0.0, q=1000.0, gamma_par=2e4, gamma_perp=3e6, delta_c=1e5, delta_s=2e5)
        st_ = MeanFieldState(0.3 + 0.2j, [0.1 - 0.05j], [0.7])
        d = meanfield_derivative(st_, cfg, 0.0)
        kappa = cfg.cavity.kappa_c
        assert d.a == pytest.approx(-(kappa / 2 + 1j * 1e5) * st_.a)
        assert d.s_minus[0] == pytest.approx(-(3e6 + 2e5j) * st_.s_minus[0])
        assert d.s_z[0] == pytest.approx(-2e4 * 0.7)

    def test_fixed_point(self):
        cfg = make_config()
        d = meanfield_derivative(MeanFieldState(0, [0], [0.81]), cfg, 0.0)
        assert d.a == 0 and d.s_minus[0] == 0 and d.s_z[0] == 0

    def test_hand_evaluated_coupling(self):
        cfg = make_config()
        d = meanfield_derivative(MeanFieldState(1.0, [0], [1.0]), cfg, 0.0)
        assert d.s_minus[0] == pytest.approx(1j * cfg.spins.g_eff)
        assert d.a == 0 and d.s_z[0] == 0

    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            meanfield_derivative(MeanFieldState(0, [0, 0], [1, 1]), make_config(), 0.0)

    @settings(max_examples=50, deadline=None)
    @given(
        st.complex_numbers(max_magnitude=10),
        st.complex_numbers(max_magnitude=0.5),
        st.floats(-1, 1),
        st.floats(-5e6, 5e6),
    )
    def test_lossless_flow_conserves_invariants(self, a, s, z, delta):
        cfg = make_config(delta_c=delta, delta_s=-delta)
        n = cfg.spins.n_spins
        state = MeanFieldState(a, [s], [z])
        d = meanfield_derivative(state, cfg, 0.0)
        d_exc = 2 * (np.conj(a) * d.a).real + 0.5 * n * d.s_z[0]
        d_len = 2 * z * d.s_z[0] + 8 / n * (np.conj(s) * d.s_minus[0]).real
        scale = cfg.spins.g_eff * (abs(a) ** 2 + 1)
        assert abs(d_exc) <= 1e-9 * scale
        assert abs(d_len) <= 1e-9 * scale


class TestConserved:
    def test_full_inversion(self):
        e, l = conserved_quantities(MeanFieldState(0, [0], [1.0]), [100])
        assert e == 50 and l[0] == 1

    def test_empty_spins(self):
        e, l = conserved_quantities(MeanFieldState(2.0, [0], [0.0]), [10])
        assert e == 4 and l[0] == 0

    def test_lossless_run_drift(self):
        cfg = make_config(seed=1e-3, t_end=1e-5, dt=1e-9)
        tr = integrate_meanfield(cfg)
        exc, length = trace_conserved_quantities(tr)
        assert len(tr) == 10_001
        assert np.max(np.abs(exc - exc[0])) / abs(exc[0]) < 1e-6
        assert np.max(np.abs(length - length[0])) / length[0] < 1e-6
        # the seed actually triggers an exchange of energy
        assert tr.photon_number.max() > 1.0


class TestIntegration:
    def test_decoupled_sz_decay(self):
        g_par = 2e4
        cfg = make_config(g_eff=0.0, gamma_par=g_par, sz=0.81, t_end=5 / g_par, dt=1e-3 / g_par)
        tr = integrate_meanfield(cfg)
        expect = 0.81 * np.exp(-g_par * tr.t)
        assert np.max(np.abs(tr.s_z[:, 0] / expect - 1)) < 1e-8

    def test_rk4_order(self):
        cfg = make_config(q=2000.0, gamma_perp=1e6, amp=1e7, t_end=1e-6)
        finals = []
        for dt in (4e-9, 2e-9, 1e-9):
            finals.append(integrate_meanfield(cfg.with_sim(dt=dt)).a[-1])
        ratio = abs(finals[0] - finals[1]) / abs(finals[1] - finals[2])
        assert ratio == pytest.approx(16, abs=3)

    def test_photon_number_matches_field(self, base_config):
        tr = integrate_meanfield(base_config.with_sim(t_end=2e-6))
        np.testing.assert_array_equal(tr.photon_number, np.abs(tr.a) ** 2)
        assert np.all(np.diff(tr.t) > 0)
        assert np.all(np.abs(tr.s_z) <= 1 + 1e-6)
        assert tr.state(3).a == tr.a[3]

    def test_coarse_step_is_rejected(self, base_config):
        with pytest.raises(StepSizeError) as exc:
            integrate_meanfield(base_config.with_sim(dt=1e-7, output_dt=1e-7))
        assert exc.value.violations[0][0] == "sim.dt"

    def test_adaptive_matches_fixed(self):
        cfg = make_config(q=2000.0, gamma_perp=1e6, amp=1e7, t_end=1e-6, output_dt=1e-8)
        fixed = integrate_meanfield(cfg)
        adaptive = integrate_meanfield(cfg.with_sim(adaptive=True, tolerance=1e-10))
        np.testing.assert_allclose(adaptive.t, fixed.t)
        np.testing.assert_allclose(adaptive.photon_number, fixed.photon_number, rtol=1e-6)

    def test_batch_matches_single_runs(self, base_config):
        short = base_config.with_sim(t_end=1e-6)
        cfgs = [short.with_drive(omega_in=short.cavity.omega_c + TWO_PI * d) for d in (-1e6, 0.0, 2e6)]
        batch = integrate_batch(cfgs)
        threaded = integrate_batch(cfgs, threads=2)
        for c, b, t in zip(cfgs, batch, threaded):
            single = integrate_meanfield(c)
            np.testing.assert_allclose(b.a, single.a, rtol=1e-12, atol=1e-12)
            np.testing.assert_array_equal(b.a, t.a)

    def test_batch_needs_shared_grid(self, base_config):
        with pytest.raises(DomainError):
            integrate_batch([base_config, base_config.with_sim(t_end=1e-6)])


class TestDrive:
    def test_waveform(self):
        d = DriveParams(W0, amplitude=3.0, pulse_start=1e-6, pulse_duration=5e-6)
        assert drive_waveform(d, 0.5e-6) == 0
        assert drive_waveform(d, 3e-6) == 3.0
        assert drive_waveform(d, 7e-6) == 0

    def test_empty_pulse(self):
        d = DriveParams(W0, amplitude=3.0, pulse_start=0.0, pulse_duration=0.0)
        assert np.all(drive_waveform(d, np.linspace(0, 1e-5, 50)) == 0)

    def test_empty_cavity_steady_state(self):
        # a = 2 eta / kappa on resonance without spins
        cfg = make_config(g_eff=0.0, q=1e3, amp=1e6, t_end=5e-6, dt=1e-10)
        tr = integrate_meanfield(cfg)
        assert abs(tr.a[-1]) == pytest.approx(2e6 / cfg.cavity.kappa_c, rel=1e-6)


class TestThreshold:
    @pytest.mark.parametrize("margin", [0.9, 1.1])
    def test_bracket(self, margin):
        half_kappa = gamma = 1e7
        z0 = 0.81
        g = math.sqrt(margin * half_kappa * gamma / z0)
        cfg = make_config(g_eff=g, n=1e12, q=W0 / (2 * half_kappa), gamma_perp=gamma, sz=z0,
                          seed=1e-6, t_end=2e-5, dt=2e-9, output_dt=1e-7)
        assert threshold_ratio(cfg) == pytest.approx(margin)
        tr = integrate_meanfield(cfg)
        n = tr.photon_number
        grows = n[-1] > n[len(n) // 2]
        assert grows == (margin > 1)
        assert (linear_growth_rate(cfg) > 0) == (margin > 1)


class TestSymmetries:
    def test_drive_phase_covariance(self):
        cfg = make_config(q=2000.0, gamma_perp=1e6, amp=1e7, delta_c=2e6, delta_s=-1e6, t_end=5e-7)
        phi = 0.7
        ref = integrate_meanfield(cfg)
        rot = integrate_meanfield(cfg.with_drive(phase=phi))
        np.testing.assert_allclose(rot.a, ref.a * np.exp(1j * phi), rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(rot.s_minus, ref.s_minus * np.exp(1j * phi), rtol=1e-10, atol=1e-14)
        np.testing.assert_allclose(rot.s_z, ref.s_z, rtol=1e-12)

    def test_uncoupled_decay_rates(self):
        cfg = make_config(g_eff=0.0, q=1e4, gamma_perp=3e5, t_end=4e-6, dt=1e-9)
        kappa = cfg.cavity.kappa_c
        tr = integrate_meanfield(cfg, MeanFieldState(1.0 + 0.5j, [0.2j], [0.81]))
        np.testing.assert_allclose(tr.a, (1.0 + 0.5j) * np.exp(-0.5 * kappa * tr.t), rtol=1e-6)
        np.testing.assert_allclose(tr.s_minus[:, 0], 0.2j * np.exp(-3e5 * tr.t), rtol=1e-6)
