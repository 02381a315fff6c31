import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from maser_receiver.errors import ConfigError, DomainError
from maser_receiver.model import (
    MU0,
    TWO_PI,
    CavityParams,
    DriveParams,
    PhysicalConstants,
    SpinEnsembleParams,
    build_spin_ensemble,
    config_violations,
    default_config,
    derived_quantities,
    drive_amplitude_from_power,
    drive_power_from_amplitude,
    kappa_from_q,
    skewed_gaussian_lineshape,
    validate_config,
)


def _paths(config):
    return {p for p, _ in config_violations(config)}


class TestKappa:
    def test_maser_cavity_linewidth(self):
        kappa = kappa_from_q(TWO_PI * 1.4492e9, 1857)
        assert kappa / TWO_PI == pytest.approx(780.4e3, abs=0.1e3)

    def test_epr_cavity_linewidth(self):
        kappa = kappa_from_q(TWO_PI * 1.4494e9, 1706)
        assert kappa / TWO_PI == pytest.approx(849.6e3, abs=0.1e3)

    def test_doubling_q_halves_kappa(self):
        w = TWO_PI * 1.4492e9
        assert kappa_from_q(w, 2 * 1857) == kappa_from_q(w, 1857) / 2

    @pytest.mark.parametrize("omega,q", [(0.0, 10.0), (1.0, 0.0), (-1.0, 5.0), (1.0, -2.0)])
    def test_nonpositive_inputs(self, omega, q):
        with pytest.raises(DomainError):
            kappa_from_q(omega, q)

    def test_cavity_params_derive_kappa(self):
        cav = CavityParams(TWO_PI * 1.4492e9, 1857.0, 5.4e-7)
        assert cav.kappa_c == cav.omega_c / cav.q_loaded
        assert cav.retuned(2 * cav.omega_c).kappa_c == pytest.approx(2 * cav.kappa_c)


class TestEnsemble:
    def _spins(self, lineshape, n=1e14):
        return SpinEnsembleParams(1e10, n, 0.1, 0.0, 0.0, 0.5, lineshape)

    def test_single_entry(self):
        (sub,) = build_spin_ensemble(self._spins(((0.0, 1.0),)))
        assert sub.n_spins == 1e14
        assert sub.g_eff == pytest.approx(0.1 * math.sqrt(1e14))

    def test_even_split(self):
        subs = build_spin_ensemble(self._spins(((-TWO_PI * 1e6, 0.5), (TWO_PI * 1e6, 0.5))))
        assert [s.n_spins for s in subs] == [5e13, 5e13]

    def test_five_point_table_conserves_count(self):
        w = (0.1, 0.2, 0.4, 0.2, 0.1)
        table = tuple((TWO_PI * 1e6 * (i - 2), x) for i, x in enumerate(w))
        subs = build_spin_ensemble(self._spins(table))
        assert abs(sum(s.n_spins for s in subs) - 1e14) <= 1.0

    def test_g_eff_is_derived(self):
        s = self._spins(((0.0, 1.0),), n=400.0)
        assert s.g_eff == pytest.approx(0.1 * 20.0)
        assert "g_eff" not in {f for f in s.__dataclass_fields__}

    def test_empty_lineshape(self):
        with pytest.raises(DomainError):
            build_spin_ensemble(self._spins(()))

    def test_default_lineshape_is_normalised_and_skewed(self):
        table = skewed_gaussian_lineshape()
        w = np.array([x[1] for x in table])
        off = np.array([x[0] for x in table])
        assert abs(w.sum() - 1) < 1e-12
        assert off[np.argmax(w)] == 0.0
        # more weight in the high-frequency tail than the low one
        assert w[off > 0].sum() > w[off < 0].sum()


class TestValidation:
    def test_default_is_valid(self, base_config):
        assert validate_config(base_config) is base_config
        assert base_config.cavity.q_loaded == 1857
        assert base_config.cavity.omega_c == pytest.approx(TWO_PI * 1.4492e9)
        assert base_config.constants.gamma_e == -28.0

    def test_zero_dt_names_field(self, base_config):
        with pytest.raises(ConfigError) as exc:
            validate_config(base_config.with_sim(dt=0.0))
        assert "sim.dt" in {p for p, _ in exc.value.violations}

    def test_bad_weights_name_lineshape(self, base_config):
        cfg = base_config.with_spins(lineshape=((0.0, 0.5), (1.0, 0.4)))
        assert "spins.lineshape" in _paths(cfg)

    def test_all_violations_reported(self, base_config):
        cfg = base_config.with_sim(dt=0.0).with_spins(gamma_perp=-1.0, initial_sz=1.5)
        assert {"sim.dt", "spins.gamma_perp", "spins.initial_sz"} <= _paths(cfg)

    def test_mu0_is_fixed(self, base_config):
        cfg = replace(base_config, constants=PhysicalConstants(mu0=1.0))
        assert "constants.mu0" in _paths(cfg)
        assert MU0 == pytest.approx(4e-7 * math.pi)

    def test_gamma_e_must_be_negative(self, base_config):
        cfg = replace(base_config, constants=PhysicalConstants(gamma_e=28.0))
        assert "constants.gamma_e" in _paths(cfg)

    @pytest.mark.parametrize(
        "section,change,path",
        [
            ("cavity", {"q_loaded": -1.0}, "cavity.q_loaded"),
            ("cavity", {"coupling_fraction": 1.5}, "cavity.coupling_fraction"),
            ("spins", {"n_spins": 0.5}, "spins.n_spins"),
            ("drive", {"pulse_duration": -1e-6}, "drive.pulse_duration"),
        ],
    )
    def test_field_invariants(self, base_config, section, change, path):
        if section == "cavity":
            cfg = base_config.with_cavity(**change)
        elif section == "spins":
            cfg = base_config.with_spins(**change)
        else:
            cfg = base_config.with_drive(**change)
        assert path in _paths(cfg)

    def test_adaptive_needs_tolerance(self, base_config):
        cfg = base_config.with_sim(adaptive=True, tolerance=0.0)
        assert "sim.tolerance" in _paths(cfg)

    def test_derived_quantities(self, base_config):
        d = derived_quantities(base_config)
        assert d["kappa_c_per_s"] == base_config.cavity.kappa_c
        assert d["g_eff_per_s"] == pytest.approx(base_config.spins.g_eff)
        assert d["C_theory_mT_per_sqrtW"] > 0


class TestDrive:
    def test_power_is_authoritative_by_default(self, base_config):
        d = base_config.drive
        assert d.source == "power" and d.derived_field == "amplitude"
        assert d.amplitude == pytest.approx(
            drive_amplitude_from_power(d.power_in, base_config.kappa_port, d.omega_in)
        )

    def test_amplitude_override_flips_source(self, base_config):
        cfg = base_config.with_drive(amplitude=1e6)
        assert cfg.drive.source == "amplitude"
        assert cfg.drive.power_in == pytest.approx(
            drive_power_from_amplitude(1e6, cfg.kappa_port, cfg.drive.omega_in)
        )

    def test_retuning_cavity_recomputes_amplitude(self, base_config):
        cfg = base_config.with_cavity(q_loaded=2 * base_config.cavity.q_loaded)
        assert cfg.drive.power_in == base_config.drive.power_in
        assert cfg.drive.amplitude == pytest.approx(base_config.drive.amplitude / math.sqrt(2))

    def test_pulse_end(self):
        d = DriveParams(1.0, amplitude=1.0, pulse_start=1e-6, pulse_duration=5e-6)
        assert d.pulse_end == pytest.approx(6e-6)

    @given(st.floats(1e-18, 1.0), st.floats(1e3, 1e8), st.floats(1e8, 1e11))
    def test_power_amplitude_roundtrip(self, p, kappa, omega):
        eta = drive_amplitude_from_power(p, kappa, omega)
        assert drive_power_from_amplitude(eta, kappa, omega) == pytest.approx(p, rel=1e-12)


def test_default_config_builds_fresh_objects():
    assert default_config() == default_config()
