"""Microwave power to B1 field conversion and Rabi-frequency calibration.

Units at this boundary: power in W, field in mT, Rabi frequency in MHz,
gyromagnetic ratio in MHz/mT.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FitError
from .model import MU0


@dataclass(frozen=True)
class ConversionFactor:
    c_value: float  # mT / sqrt(W)
    source: str  # "theory" | "rabi_fit" | "rescaled"
    uncertainty: float = 0.0

    def __post_init__(self):
        if not self.c_value > 0:
            raise DomainError(f"conversion factor must be positive, got {self.c_value}")
        if not self.uncertainty >= 0:
            raise DomainError("uncertainty must be >= 0")
        if self.source not in ("theory", "rabi_fit", "rescaled"):
            raise DomainError(f"unknown conversion factor source {self.source!r}")


@dataclass(frozen=True)
class RabiDataset:
    sqrt_power: np.ndarray  # sqrt(W)
    rabi_freq: np.ndarray  # MHz
    sigma: np.ndarray | None = None  # MHz

    def __post_init__(self):
        x = np.asarray(self.sqrt_power, dtype=float)
        y = np.asarray(self.rabi_freq, dtype=float)
        if x.shape != y.shape:
            raise DomainError("sqrt_power and rabi_freq lengths differ")
        if np.any(x < 0):
            raise DomainError("sqrt_power must be >= 0")
        object.__setattr__(self, "sqrt_power", x)
        object.__setattr__(self, "rabi_freq", y)
        if self.sigma is not None:
            s = np.asarray(self.sigma, dtype=float)
            if s.shape != x.shape or np.any(s < 0):
                raise DomainError("sigma must match the data and be >= 0")
            object.__setattr__(self, "sigma", s)

    @classmethod
    def from_points(cls, points):
        pts = list(points)
        x = [p[0] for p in pts]
        y = [p[1] for p in pts]
        s = [p[2] for p in pts] if pts and len(pts[0]) > 2 else None
        return cls(x, y, s)

    @classmethod
    def read_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        x = [float(r["sqrt_power_sqrtW"]) for r in rows]
        y = [float(r["rabi_MHz"]) for r in rows]
        s = [float(r["sigma_MHz"]) for r in rows] if rows and "sigma_MHz" in rows[0] else None
        return cls(x, y, s)

    def write_csv(self, path):
        sig = self.sigma if self.sigma is not None else np.zeros_like(self.sqrt_power)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["sqrt_power_sqrtW", "rabi_MHz", "sigma_MHz"])
            for row in zip(self.sqrt_power, self.rabi_freq, sig):
                w.writerow([f"{v:.9g}" for v in row])


def conversion_factor_theory(q_loaded, v_m, omega0, mu0=MU0) -> ConversionFactor:
    """C = sqrt(2 mu0 Q_L / (V_m omega0)), returned in mT/sqrt(W)."""
    for name, val in (("q_loaded", q_loaded), ("v_m", v_m), ("omega0", omega0), ("mu0", mu0)):
        if not val > 0:
            raise DomainError(f"{name} must be positive, got {val}")
    c_tesla = math.sqrt(2.0 * mu0 * q_loaded / (v_m * omega0))
    return ConversionFactor(c_tesla * 1e3, "theory", 0.0)


def rescale_conversion_factor(c0: ConversionFactor, q0, omega0, q1, omega1) -> ConversionFactor:
    """Carry C to a new loaded Q and frequency using C ~ sqrt(Q_L / omega)."""
    for name, val in (("q0", q0), ("omega0", omega0), ("q1", q1), ("omega1", omega1)):
        if not val > 0:
            raise DomainError(f"{name} must be positive, got {val}")
    factor = math.sqrt((q1 / q0) * (omega0 / omega1))
    return ConversionFactor(c0.c_value * factor, "rescaled", c0.uncertainty * factor)


@dataclass(frozen=True)
class RabiFit:
    slope: float  # MHz / sqrt(W)
    slope_uncertainty: float
    conversion: ConversionFactor
    r_squared: float


def fit_rabi_slope(data: RabiDataset, gamma_e) -> RabiFit:
    """Weighted least-squares line through the origin of Rabi frequency
    against sqrt(power).

    With per-point sigmas the slope uncertainty comes from the inverse-variance
    weights; without them the residual scatter sets it.
    """
    if gamma_e == 0:
        raise DomainError("gamma_e must be nonzero")
    x, y = data.sqrt_power, data.rabi_freq
    if np.unique(x).size < 2:
        raise FitError("need at least two distinct sqrt_power values")
    have_sigma = data.sigma is not None and np.any(data.sigma > 0)
    if have_sigma:
        if np.any(data.sigma == 0):
            raise FitError("zero sigma gives an infinite weight")
        w = 1.0 / data.sigma**2
    else:
        w = np.ones_like(x)
    sxx = np.sum(w * x * x)
    if sxx == 0:
        raise FitError("all weights vanish")
    slope = np.sum(w * x * y) / sxx
    resid = y - slope * x
    dof = max(len(x) - 1, 1)
    if have_sigma:
        var = 1.0 / sxx
    else:
        var = np.sum(resid**2) / dof / sxx
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    scale = math.sqrt(2.0) / abs(gamma_e)
    sd = math.sqrt(max(var, 0.0))
    conv = ConversionFactor(slope * scale, "rabi_fit", sd * scale)
    return RabiFit(float(slope), sd, conv, float(r2))


def b1_power_convert(c: ConversionFactor, value, direction="power_to_field"):
    """``power_to_field``: W -> mT.  ``field_to_power``: mT -> W."""
    v = np.asarray(value, dtype=float)
    if np.any(v < 0):
        raise DomainError("value must be >= 0")
    if direction == "power_to_field":
        out = c.c_value * np.sqrt(v)
    elif direction == "field_to_power":
        out = (v / c.c_value) ** 2
    else:
        raise DomainError(f"unknown direction {direction!r}")
    return float(out) if out.ndim == 0 else out


def rabi_frequency(b1_mt, gamma_e) -> float:
    """Rabi frequency in MHz for a B1 field in mT: |gamma_e| B1 / sqrt(2)."""
    return abs(gamma_e) * np.asarray(b1_mt) / math.sqrt(2.0)


def dbm_to_watt(dbm):
    return 1e-3 * 10 ** (np.asarray(dbm, dtype=float) / 10.0)


def watt_to_dbm(w):
    return 10.0 * np.log10(np.asarray(w, dtype=float) / 1e-3)
