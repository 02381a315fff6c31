"""Physical parameter types, unit conventions and configuration validation.

All angular frequencies and rates are stored in rad/s or 1/s.  Config files
and CSV outputs carry frequencies in Hz; conversion happens in
:mod:`maser_receiver.configfile` and nowhere else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DomainError

TWO_PI = 2.0 * math.pi
MU0 = 4.0e-7 * math.pi
HBAR = 1.054571817e-34

# T_X : T_Y : T_Z after intersystem crossing; only the X/Z pair forms the
# inverted two-level system.
TRIPLET_POPULATIONS = (0.76, 0.16, 0.08)
DEFAULT_INITIAL_SZ = (TRIPLET_POPULATIONS[0] - TRIPLET_POPULATIONS[2]) / (
    TRIPLET_POPULATIONS[0] + TRIPLET_POPULATIONS[2]
)


@dataclass(frozen=True)
class PhysicalConstants:
    mu0: float = MU0
    hbar: float = HBAR
    gamma_e: float = -28.0  # MHz/mT

    @property
    def gamma_e_hz_per_tesla(self) -> float:
        return self.gamma_e * 1e6 * 1e3


@dataclass(frozen=True)
class CavityParams:
    omega_c: float
    q_loaded: float
    v_m: float
    coupling_fraction: float = 0.5
    kappa_c: float = field(init=False)

    def __post_init__(self):
        kappa = self.omega_c / self.q_loaded if self.q_loaded > 0 else math.nan
        object.__setattr__(self, "kappa_c", kappa)

    @property
    def bandwidth_hz(self) -> float:
        """Full width at half maximum of the cavity resonance in Hz."""
        return self.kappa_c / TWO_PI

    def retuned(self, omega_c: float) -> CavityParams:
        return replace(self, omega_c=omega_c)


class Subensemble(NamedTuple):
    detuning: float  # offset from omega_s_center, rad/s
    n_spins: float
    g_eff: float  # rad/s


@dataclass(frozen=True)
class SpinEnsembleParams:
    omega_s_center: float
    n_spins: float
    g_single: float
    gamma_par: float
    gamma_perp: float
    initial_sz: float = DEFAULT_INITIAL_SZ
    lineshape: tuple[tuple[float, float], ...] = ((0.0, 1.0),)

    def __post_init__(self):
        object.__setattr__(
            self, "lineshape", tuple((float(d), float(w)) for d, w in self.lineshape)
        )

    @property
    def g_eff(self) -> float:
        return self.g_single * math.sqrt(self.n_spins)


@dataclass(frozen=True)
class DriveParams:
    """Input microwave pulse.

    Exactly one of ``amplitude`` (rad/s in the field equation) and
    ``power_in`` (W) is authoritative, named by ``source``; the other is
    filled in when the drive is attached to a :class:`ReceiverConfig`.
    """

    omega_in: float
    amplitude: float | None = None
    power_in: float | None = None
    pulse_start: float = 0.0
    pulse_duration: float = 0.0
    phase: float = 0.0
    seed_s_minus: float = 0.0
    source: str = ""

    def __post_init__(self):
        if not self.source:
            src = "power" if self.power_in is not None else "amplitude"
            object.__setattr__(self, "source", src)

    @property
    def derived_field(self) -> str:
        return "amplitude" if self.source == "power" else "power_in"

    @property
    def pulse_end(self) -> float:
        return self.pulse_start + self.pulse_duration


@dataclass(frozen=True)
class SimSettings:
    t_end: float
    dt: float
    output_dt: float | None = None
    adaptive: bool = False
    tolerance: float = 1e-9

    @property
    def stride(self) -> int:
        if self.output_dt is None:
            return 1
        return max(1, int(round(self.output_dt / self.dt)))


@dataclass(frozen=True)
class NoiseSettings:
    sigma: float = 0.0  # detector units (mV)
    seed: int = 0


@dataclass(frozen=True)
class DetectorSettings:
    slope_mv_per_db: float = 22.0
    reference_dbm: float = -70.0
    floor_dbm: float = -70.0  # noise-equivalent input power of the detector


def drive_amplitude_from_power(power, kappa_port, omega_in, hbar=HBAR):
    """Field-equation drive amplitude for ``power`` watts entering the port."""
    return math.sqrt(kappa_port * power / (hbar * omega_in))


def drive_power_from_amplitude(amplitude, kappa_port, omega_in, hbar=HBAR):
    if kappa_port <= 0:
        return math.inf if amplitude else 0.0
    return amplitude**2 * hbar * omega_in / kappa_port


def _resolve_drive(drive: DriveParams, cavity: CavityParams, constants: PhysicalConstants):
    kappa_port = cavity.coupling_fraction * cavity.kappa_c
    try:
        if drive.source == "power" and drive.power_in is not None and drive.power_in >= 0:
            amp = drive_amplitude_from_power(
                drive.power_in, kappa_port, drive.omega_in, constants.hbar
            )
            return replace(drive, amplitude=amp)
        if drive.source == "amplitude" and drive.amplitude is not None:
            p = drive_power_from_amplitude(
                drive.amplitude, kappa_port, drive.omega_in, constants.hbar
            )
            return replace(drive, power_in=p)
    except (ValueError, ZeroDivisionError):
        pass
    return drive


@dataclass(frozen=True)
class ReceiverConfig:
    cavity: CavityParams
    spins: SpinEnsembleParams
    drive: DriveParams
    sim: SimSettings
    constants: PhysicalConstants = PhysicalConstants()
    noise: NoiseSettings = NoiseSettings()
    detector: DetectorSettings = DetectorSettings()

    def __post_init__(self):
        object.__setattr__(
            self, "drive", _resolve_drive(self.drive, self.cavity, self.constants)
        )

    def with_drive(self, **changes) -> ReceiverConfig:
        """Copy with drive fields changed; passing ``power_in`` or
        ``amplitude`` makes that field authoritative."""
        if "power_in" in changes:
            changes.setdefault("source", "power")
            changes.setdefault("amplitude", None)
        elif "amplitude" in changes:
            changes.setdefault("source", "amplitude")
            changes.setdefault("power_in", None)
        return replace(self, drive=replace(self.drive, **changes))

    def with_spins(self, **changes) -> ReceiverConfig:
        return replace(self, spins=replace(self.spins, **changes))

    def with_cavity(self, **changes) -> ReceiverConfig:
        # the derived drive field is recomputed from its source on replace
        return replace(self, cavity=replace(self.cavity, **changes))

    def with_sim(self, **changes) -> ReceiverConfig:
        return replace(self, sim=replace(self.sim, **changes))

    @property
    def kappa_port(self) -> float:
        return self.cavity.coupling_fraction * self.cavity.kappa_c


def kappa_from_q(omega_c: float, q_loaded: float) -> float:
    """Total cavity energy decay rate; divide by 2*pi for the FWHM in Hz."""
    if not omega_c > 0 or not q_loaded > 0:
        raise DomainError(f"omega_c and q_loaded must be positive, got {omega_c}, {q_loaded}")
    return omega_c / q_loaded


def build_spin_ensemble(params: SpinEnsembleParams) -> list[Subensemble]:
    if len(params.lineshape) == 0:
        raise DomainError("lineshape is empty")
    out = []
    for offset, weight in params.lineshape:
        n_k = weight * params.n_spins
        out.append(Subensemble(offset, n_k, params.g_single * math.sqrt(n_k)))
    return out


def single_spin_coupling(cavity: CavityParams, constants: PhysicalConstants = PhysicalConstants()):
    """Single-spin coupling implied by the mode volume.

    Chosen so that a steady resonant drive of P watts produces a spin Rabi
    frequency |gamma_e| * C * sqrt(P) / sqrt(2), with C the theoretical
    conversion factor of the same cavity.
    """
    b_per_photon = math.sqrt(
        constants.mu0 * constants.hbar * cavity.omega_c / (2.0 * cavity.coupling_fraction * cavity.v_m)
    )
    return math.pi * abs(constants.gamma_e_hz_per_tesla) * b_per_photon / math.sqrt(2.0)


def skewed_gaussian_lineshape(
    n_points: int = 21,
    span: float = TWO_PI * 10e6,
    sigma_low: float = TWO_PI * 2e6,
    sigma_high: float = TWO_PI * 3e6,
) -> tuple[tuple[float, float], ...]:
    """Split-Gaussian table peaked at zero offset with the long tail on the
    high-frequency side."""
    # built on a Hz grid so the table prints cleanly in config files
    offsets = TWO_PI * np.linspace(-span / TWO_PI, span / TWO_PI, n_points)
    sig = np.where(offsets < 0, sigma_low, sigma_high)
    w = np.exp(-0.5 * (offsets / sig) ** 2)
    w /= w.sum()
    return tuple((float(o), float(x)) for o, x in zip(offsets, w))


# Illustrative ensemble size; not reported for the physical crystal.  Chosen
# to keep the default lineshape just below the self-oscillation threshold
# for every cavity tuning across the line (about 15 dB peak gain at 5 us).
DEFAULT_N_SPINS = 4.4e15


def default_config() -> ReceiverConfig:
    """Hardware values of the maser-amplifier configuration."""
    constants = PhysicalConstants()
    cavity = CavityParams(omega_c=TWO_PI * 1.4492e9, q_loaded=1857.0, v_m=5.4e-7)
    spins = SpinEnsembleParams(
        omega_s_center=cavity.omega_c,
        n_spins=DEFAULT_N_SPINS,
        g_single=single_spin_coupling(cavity, constants),
        gamma_par=2.0e4,
        gamma_perp=3.0e6,
        initial_sz=DEFAULT_INITIAL_SZ,
        lineshape=skewed_gaussian_lineshape(),
    )
    drive = DriveParams(
        omega_in=cavity.omega_c,
        power_in=10 ** (-56.8 / 10) * 1e-3,
        pulse_start=0.5e-6,
        pulse_duration=5e-6,
    )
    sim = SimSettings(t_end=8e-6, dt=5e-10, output_dt=1e-8)
    return ReceiverConfig(
        cavity=cavity,
        spins=spins,
        drive=drive,
        sim=sim,
        constants=constants,
        noise=NoiseSettings(sigma=5.0, seed=1234),
        detector=DetectorSettings(),
    )


def _finite(x):
    return x is not None and isinstance(x, (int, float)) and math.isfinite(x)


def config_violations(config: ReceiverConfig) -> list[tuple[str, str]]:
    """Every invariant violation in ``config`` as ``(field_path, reason)``."""
    v = []

    def need(ok, path, reason):
        if not ok:
            v.append((path, reason))

    c = config.constants
    need(c.mu0 == MU0, "constants.mu0", "vacuum permeability is fixed at 4*pi*1e-7 H/m")
    need(_finite(c.hbar) and c.hbar > 0, "constants.hbar", "must be positive")
    need(_finite(c.gamma_e) and c.gamma_e < 0, "constants.gamma_e", "must be negative")

    cav = config.cavity
    need(_finite(cav.omega_c) and cav.omega_c > 0, "cavity.omega_c", "must be positive")
    # q_loaded = inf is the lossless cavity
    need(
        isinstance(cav.q_loaded, (int, float)) and cav.q_loaded > 0,
        "cavity.q_loaded",
        "must be positive",
    )
    need(_finite(cav.v_m) and cav.v_m > 0, "cavity.v_m", "must be positive")
    need(
        _finite(cav.coupling_fraction) and 0.0 <= cav.coupling_fraction <= 1.0,
        "cavity.coupling_fraction",
        "must lie in [0, 1]",
    )

    s = config.spins
    need(_finite(s.omega_s_center) and s.omega_s_center > 0, "spins.omega_s_center", "must be positive")
    need(_finite(s.n_spins) and s.n_spins >= 1, "spins.n_spins", "must be >= 1")
    need(_finite(s.g_single) and s.g_single >= 0, "spins.g_single", "must be >= 0")
    need(_finite(s.gamma_par) and s.gamma_par >= 0, "spins.gamma_par", "must be >= 0")
    need(_finite(s.gamma_perp) and s.gamma_perp >= 0, "spins.gamma_perp", "must be >= 0")
    need(_finite(s.initial_sz) and abs(s.initial_sz) <= 1, "spins.initial_sz", "must satisfy |initial_sz| <= 1")
    if len(s.lineshape) == 0:
        v.append(("spins.lineshape", "is empty"))
    else:
        w = np.array([x[1] for x in s.lineshape])
        d = np.array([x[0] for x in s.lineshape])
        if not np.all(np.isfinite(d)):
            v.append(("spins.lineshape", "offsets must be finite"))
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            v.append(("spins.lineshape", "weights must be nonnegative"))
        elif abs(w.sum() - 1.0) > 1e-12:
            v.append(("spins.lineshape", f"weights sum to {w.sum():.15g}, not 1"))

    d = config.drive
    need(_finite(d.omega_in) and d.omega_in > 0, "drive.omega_in", "must be positive")
    need(d.source in ("power", "amplitude"), "drive.source", "must be 'power' or 'amplitude'")
    if d.source == "power":
        need(_finite(d.power_in) and d.power_in >= 0, "drive.power_in", "must be >= 0")
    else:
        need(_finite(d.amplitude) and d.amplitude >= 0, "drive.amplitude", "must be >= 0")
    need(_finite(d.pulse_start), "drive.pulse_start", "must be finite")
    need(_finite(d.pulse_duration) and d.pulse_duration >= 0, "drive.pulse_duration", "must be >= 0")
    need(_finite(d.phase), "drive.phase", "must be finite")
    need(_finite(d.seed_s_minus), "drive.seed_s_minus", "must be finite")

    sim = config.sim
    need(_finite(sim.dt) and sim.dt > 0, "sim.dt", "must be positive")
    need(
        _finite(sim.t_end) and _finite(sim.dt) and sim.t_end > sim.dt,
        "sim.t_end",
        "must exceed sim.dt",
    )
    if sim.output_dt is not None:
        need(
            _finite(sim.output_dt) and _finite(sim.dt) and sim.output_dt >= sim.dt,
            "sim.output_dt",
            "must be >= sim.dt",
        )
    if sim.adaptive:
        need(_finite(sim.tolerance) and sim.tolerance > 0, "sim.tolerance", "must be positive when adaptive")

    n = config.noise
    need(_finite(n.sigma) and n.sigma >= 0, "noise.sigma", "must be >= 0")
    need(isinstance(n.seed, (int, np.integer)), "noise.seed", "must be an integer")

    det = config.detector
    need(_finite(det.slope_mv_per_db) and det.slope_mv_per_db > 0, "detector.slope_mv_per_db", "must be positive")
    need(_finite(det.reference_dbm), "detector.reference_dbm", "must be finite")
    need(_finite(det.floor_dbm), "detector.floor_dbm", "must be finite")
    return v


def validate_config(config: ReceiverConfig) -> ReceiverConfig:
    """Return ``config`` unchanged, or raise :class:`ConfigError` listing
    every violated invariant."""
    violations = config_violations(config)
    if violations:
        raise ConfigError(violations)
    return config


def derived_quantities(config: ReceiverConfig) -> dict:
    """Engineering quantities for inspection output."""
    from .calibration import conversion_factor_theory

    cav = config.cavity
    c_theory = conversion_factor_theory(cav.q_loaded, cav.v_m, cav.omega_c, config.constants.mu0)
    g = config.spins.g_eff
    return {
        "kappa_c_per_s": cav.kappa_c,
        "cavity_fwhm_Hz": cav.bandwidth_hz,
        "g_eff_per_s": g,
        "g_eff_Hz": g / TWO_PI,
        "C_theory_mT_per_sqrtW": c_theory.c_value,
        "drive_amplitude_per_s": config.drive.amplitude,
        "drive_power_W": config.drive.power_in,
        "drive_derived_field": config.drive.derived_field,
        "initial_sz": config.spins.initial_sz,
    }
