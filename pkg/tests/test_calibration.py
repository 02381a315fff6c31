import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from maser_receiver.calibration import (
    ConversionFactor,
    RabiDataset,
    b1_power_convert,
    conversion_factor_theory,
    dbm_to_watt,
    fit_rabi_slope,
    rabi_frequency,
    rescale_conversion_factor,
    watt_to_dbm,
)
from maser_receiver.errors import DomainError, FitError
from maser_receiver.model import MU0, TWO_PI

GAMMA_E = -28.0
W_EPR = TWO_PI * 1.4494e9
W_MASER = TWO_PI * 1.4492e9


class TestTheory:
    def test_epr_cavity_value(self):
        c = conversion_factor_theory(1706, 5.4e-7, W_EPR, MU0)
        assert c.c_value == pytest.approx(0.94, abs=0.01)
        assert c.source == "theory"

    def test_quadrupling_q_doubles(self):
        a = conversion_factor_theory(1706, 5.4e-7, W_EPR)
        b = conversion_factor_theory(4 * 1706, 5.4e-7, W_EPR)
        assert b.c_value == pytest.approx(2 * a.c_value, rel=1e-15)

    def test_quadrupling_volume_halves(self):
        a = conversion_factor_theory(1706, 5.4e-7, W_EPR)
        b = conversion_factor_theory(1706, 4 * 5.4e-7, W_EPR)
        assert b.c_value == pytest.approx(a.c_value / 2, rel=1e-15)

    @pytest.mark.parametrize("args", [(0, 5.4e-7, W_EPR), (1706, -1.0, W_EPR), (1706, 5.4e-7, 0.0)])
    def test_rejects_nonpositive(self, args):
        with pytest.raises(DomainError):
            conversion_factor_theory(*args)


class TestRescale:
    def test_maser_cavity_value(self):
        c0 = ConversionFactor(1.05, "rabi_fit", 0.03)
        c1 = rescale_conversion_factor(c0, 1706, W_EPR, 1857, W_MASER)
        assert c1.c_value == pytest.approx(1.10, abs=0.005)
        assert c1.source == "rescaled"

    def test_identity(self):
        c0 = ConversionFactor(1.05, "rabi_fit")
        assert rescale_conversion_factor(c0, 1706, W_EPR, 1706, W_EPR).c_value == 1.05

    def test_four_times_q(self):
        c0 = ConversionFactor(1.05, "rabi_fit")
        assert rescale_conversion_factor(c0, 100, W_EPR, 400, W_EPR).c_value == pytest.approx(2.1)


class TestRabiFit:
    def test_quoted_slope_gives_c(self):
        x = np.sqrt(dbm_to_watt(np.linspace(-14.98, 6.67, 8)))
        fit = fit_rabi_slope(RabiDataset(x, 20.86 * x), GAMMA_E)
        assert fit.slope == pytest.approx(20.86, rel=1e-12)
        assert fit.conversion.c_value == pytest.approx(1.054, abs=5e-4)
        assert fit.conversion.c_value == pytest.approx(1.05, rel=0.01)
        assert fit.r_squared == pytest.approx(1.0)

    def test_two_points_exact(self):
        fit = fit_rabi_slope(RabiDataset.from_points([(1, 20.86), (2, 41.72)]), GAMMA_E)
        assert fit.slope == pytest.approx(20.86, rel=1e-14)

    def test_noisy_points_within_three_sigma(self):
        rng = np.random.default_rng(7)
        x = np.linspace(0.05, 1.5, 10)
        sig = np.full_like(x, 0.5)
        hits = 0
        for _ in range(1000):
            y = 20.86 * x + rng.normal(0, 0.5, x.size)
            fit = fit_rabi_slope(RabiDataset(x, y, sig), GAMMA_E)
            hits += abs(fit.slope - 20.86) < 3 * fit.slope_uncertainty
        assert hits / 1000 > 0.98

    def test_needs_distinct_powers(self):
        with pytest.raises(FitError):
            fit_rabi_slope(RabiDataset([1.0, 1.0], [2.0, 2.0]), GAMMA_E)

    def test_zero_sigma_rejected(self):
        with pytest.raises(FitError):
            fit_rabi_slope(RabiDataset([1.0, 2.0], [1.0, 2.0], [0.1, 0.0]), GAMMA_E)

    def test_csv_roundtrip(self, tmp_path):
        d = RabiDataset([0.1, 0.2, 0.3], [2.086, 4.172, 6.258], [0.01, 0.02, 0.03])
        p = tmp_path / "rabi.csv"
        d.write_csv(p)
        assert p.read_text().splitlines()[0] == "sqrt_power_sqrtW,rabi_MHz,sigma_MHz"
        back = RabiDataset.read_csv(p)
        np.testing.assert_allclose(back.rabi_freq, d.rabi_freq)
        np.testing.assert_allclose(back.sigma, d.sigma)

    def test_negative_power_rejected(self):
        with pytest.raises(DomainError):
            RabiDataset([-0.1, 0.2], [1.0, 2.0])


class TestConversion:
    def test_test_field_power(self):
        p = b1_power_convert(ConversionFactor(1.10, "rescaled"), 2.47e-6, "field_to_power")
        assert p == pytest.approx(5.04e-12, rel=1e-3)

    def test_zero_power(self):
        assert b1_power_convert(ConversionFactor(1.10, "rescaled"), 0.0) == 0.0

    def test_one_watt(self):
        b = b1_power_convert(ConversionFactor(1.05, "rabi_fit"), 1.0)
        assert b == pytest.approx(1.05)
        assert rabi_frequency(b, GAMMA_E) == pytest.approx(20.79, abs=0.005)

    def test_bad_direction(self):
        with pytest.raises(DomainError):
            b1_power_convert(ConversionFactor(1.0, "theory"), 1.0, "sideways")

    def test_bad_factor(self):
        with pytest.raises(DomainError):
            ConversionFactor(0.0, "theory")
        with pytest.raises(DomainError):
            ConversionFactor(1.0, "guess")

    @given(st.floats(0.01, 10.0), st.floats(0.0, 10.0))
    def test_roundtrip(self, c, p):
        cf = ConversionFactor(c, "theory")
        b = b1_power_convert(cf, p)
        assert b1_power_convert(cf, b, "field_to_power") == pytest.approx(p, rel=1e-12, abs=1e-300)

    @given(st.floats(-60, 30))
    def test_dbm_roundtrip(self, dbm):
        assert float(watt_to_dbm(dbm_to_watt(dbm))) == pytest.approx(dbm, abs=1e-9)


def test_rabi_slope_matches_theory_factor():
    # |gamma_e| * C / sqrt(2) for the theoretical EPR-cavity value
    c = conversion_factor_theory(1706, 5.4e-7, W_EPR).c_value
    assert rabi_frequency(c, GAMMA_E) == pytest.approx(28 * c / math.sqrt(2))
