"""End-to-end experiments built from the model, solver and analysis layers.

Every scenario returns a :class:`ScenarioResult` whose tables are plain
column dictionaries, ready for CSV output, and whose ``config_echo`` is the
exact configuration that produced them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .analysis import (
    ResponseCurve,
    beat_frequency,
    detector_chain,
    enhancement_merit,
    fft_spectrum,
    fit_saturation,
    gain_db,
    normalized_log_envelope,
    output_power,
    pulse_stretch,
    sensitivity_estimate,
    snr_estimate,
    spectral_peak,
)
from .calibration import (
    ConversionFactor,
    RabiDataset,
    b1_power_convert,
    conversion_factor_theory,
    fit_rabi_slope,
    rabi_frequency,
    watt_to_dbm,
)
from .errors import DomainError, FitError, ScenarioError
from .lindblad import MAX_SPINS, evolve_with_adaptive_cutoff, polarized_state
from .meanfield import integrate_batch, integrate_meanfield, linear_growth_rate
from .model import (
    TWO_PI,
    CavityParams,
    ReceiverConfig,
    SimSettings,
    single_spin_coupling,
)

MAX_DETUNING = TWO_PI * 10e6  # rad/s, half-width of the lineshape table
BEAT_RESOLVABLE_HZ = 200e3
DEFAULT_RABI_POWERS_DBM = tuple(np.linspace(-14.98, 6.67, 8))
DEFAULT_GAIN_B1_NT = 49.23
DEFAULT_DELTA_F = 500e6  # detector bandwidth, Hz


@dataclass(frozen=True)
class ScenarioResult:
    name: str
    tables: dict  # table name -> {column name -> 1-D array}
    summary: dict
    config_echo: ReceiverConfig
    warnings: tuple = field(default=())

    def __post_init__(self):
        if not self.tables:
            raise DomainError(f"scenario {self.name!r} produced no tables")
        for tname, cols in self.tables.items():
            if not cols:
                raise DomainError(f"table {tname!r} has no columns")
            lengths = {len(np.atleast_1d(c)) for c in cols.values()}
            if len(lengths) != 1:
                raise DomainError(f"table {tname!r} has ragged columns")
            if lengths.pop() == 0:
                raise DomainError(f"table {tname!r} is empty")


def _pulse_mask(t, config):
    d = config.drive
    return (t >= d.pulse_start) & (t < d.pulse_end)


def _conversion(config, conversion):
    if conversion is not None:
        return conversion
    cav = config.cavity
    return conversion_factor_theory(cav.q_loaded, cav.v_m, cav.omega_c, config.constants.mu0)


def power_for_field(b1_nt, conversion: ConversionFactor):
    """Input power (W) that produces ``b1_nt`` nanotesla in the cavity."""
    return b1_power_convert(conversion, np.asarray(b1_nt, dtype=float) * 1e-6, "field_to_power")


def check_below_threshold(config: ReceiverConfig, label="configuration"):
    """Raise :class:`ScenarioError` if the undriven system self-oscillates."""
    rate = linear_growth_rate(config)
    if rate > 0:
        raise ScenarioError(
            f"{label} self-oscillates without input (small-signal growth rate "
            f"{rate:.3g} /s); lower cavity.q_loaded or the coupling "
            "(spins.n_spins, spins.g_single) to stay below the maser threshold"
        )


# ---------------------------------------------------------------- Rabi


def rabi_config(base: ReceiverConfig | None = None, q_loaded=1706.0, f_c=1.4494e9) -> ReceiverConfig:
    """Pulsed-EPR setting for the nutation calibration.

    A weakly coupled, narrow spin packet sits on resonance with the cavity so
    the microwave field is not loaded by the spins and the nutation of
    <S_z> reads the bare B1 field.  The drive is on for the whole run.
    """
    from .model import default_config

    base = base or default_config()
    omega = TWO_PI * f_c
    cavity = CavityParams(omega, q_loaded, base.cavity.v_m, base.cavity.coupling_fraction)
    spins = replace(
        base.spins,
        omega_s_center=omega,
        n_spins=1.0,
        g_single=single_spin_coupling(cavity, base.constants),
        gamma_par=0.0,
        gamma_perp=1e4,
        lineshape=((0.0, 1.0),),
    )
    drive = replace(base.drive, omega_in=omega, pulse_start=0.0, pulse_duration=30e-6)
    sim = SimSettings(t_end=30e-6, dt=5e-9, output_dt=2e-8)
    return replace(base, cavity=cavity, spins=spins, drive=drive, sim=sim)


def run_rabi_calibration(config: ReceiverConfig, powers_w, threads=1) -> ScenarioResult:
    """Nutation frequency of <S_z> against sqrt(P), and the fitted C."""
    powers = np.asarray(powers_w, dtype=float)
    if powers.size < 3:
        raise DomainError("need at least three powers")
    if np.any(powers <= 0):
        raise DomainError("powers must be positive")
    configs = [config.with_drive(power_in=float(p)) for p in powers]
    traces = integrate_batch(configs, threads=threads)

    # skip the cavity ring-up before reading the nutation
    settle = config.drive.pulse_start + 10.0 / config.cavity.kappa_c
    freqs, found, warnings = [], [], []
    for p, tr in zip(powers, traces):
        m = tr.t >= settle
        f, _, _, ok = spectral_peak(tr.s_z[m, 0], tr.sample_rate, min_freq=2 * tr.sample_rate / m.sum())
        freqs.append(f / 1e6 if ok else math.nan)
        found.append(ok)
        if not ok:
            warnings.append(f"no nutation peak at {p:.4g} W; point excluded from the fit")
    freqs = np.array(freqs)
    found = np.array(found)
    if found.sum() < 2:
        raise FitError("fewer than two detectable nutation frequencies", math.nan)

    gamma_e = config.constants.gamma_e
    fit = fit_rabi_slope(RabiDataset(np.sqrt(powers[found]), freqs[found]), gamma_e)
    c_th = _conversion(config, None)
    table = {
        "power_W": powers,
        "power_dBm": watt_to_dbm(powers),
        "sqrt_power_sqrtW": np.sqrt(powers),
        "rabi_MHz": freqs,
        "rabi_theory_MHz": rabi_frequency(c_th.c_value * np.sqrt(powers), gamma_e),
        "found": found.astype(int),
    }
    summary = {
        "slope_MHz_per_sqrtW": fit.slope,
        "slope_uncertainty": fit.slope_uncertainty,
        "C_fit_mT_per_sqrtW": fit.conversion.c_value,
        "C_fit_uncertainty": fit.conversion.uncertainty,
        "C_theory_mT_per_sqrtW": c_th.c_value,
        "r_squared": fit.r_squared,
        "n_used": int(found.sum()),
    }
    return ScenarioResult("rabi_calibration", {"rabi": table}, summary, config, tuple(warnings))


# ------------------------------------------------------- response / gain


def _peak_out_power(trace, config):
    m = _pulse_mask(trace.t, config)
    return float(np.max(output_power(trace, config)[m]))


def run_response_and_gain(config: ReceiverConfig, b1_nt, freqs_hz, gain_b1_nt=DEFAULT_GAIN_B1_NT,
                          conversion: ConversionFactor | None = None, delta_f=DEFAULT_DELTA_F,
                          threads=1) -> ScenarioResult:
    """Detector response S(B1) with its saturation fit, and the gain profile
    G(omega_in) with the cavity retuned onto each input frequency."""
    b1 = np.asarray(b1_nt, dtype=float)
    freqs = np.asarray(freqs_hz, dtype=float)
    if b1.size == 0 or freqs.size == 0:
        raise DomainError("b1 and frequency lists must be nonempty")
    conv = _conversion(config, conversion)
    check_below_threshold(config)

    # response curve at the configured input frequency
    p_resp = np.atleast_1d(power_for_field(b1, conv))
    resp_cfgs = [config.with_drive(power_in=float(p)) for p in p_resp]
    # gain profile, cavity following the input
    p_gain = float(power_for_field(gain_b1_nt, conv))
    gain_cfgs = []
    for f in freqs:
        w = TWO_PI * f
        c = config.with_cavity(omega_c=w).with_drive(omega_in=w, power_in=p_gain)
        check_below_threshold(c, f"cavity retuned to {f:.6g} Hz")
        gain_cfgs.append(c)
    traces = integrate_batch(resp_cfgs + gain_cfgs, threads=threads)
    resp_tr, gain_tr = traces[: b1.size], traces[b1.size :]

    s_peak = np.array(
        [detector_chain(tr, c).voltage_raw[_pulse_mask(tr.t, c)].max() for tr, c in zip(resp_tr, resp_cfgs)]
    )
    tables = {}
    summary = {"conversion_mT_per_sqrtW": conv.c_value, "conversion_source": conv.source}
    resp_table = {"b1_nT": b1, "power_W": p_resp, "S_mV": s_peak}
    if b1.size >= 4 and np.all(np.diff(b1) > 0):
        sigma = np.full(b1.size, config.noise.sigma) if config.noise.sigma > 0 else None
        curve = ResponseCurve(b1, s_peak, sigma)
        fit = fit_saturation(curve)
        m_s = fit.responsivity(b1)
        resp_table["S_fit_mV"] = fit(b1)
        resp_table["m_s_mV_per_nT"] = m_s
        if config.noise.sigma > 0:
            root = math.sqrt(2.0 * delta_f)
            resp_table["eta_fT_per_sqrtHz"] = config.noise.sigma / (m_s * root) * 1e6
        summary.update(
            fit_amplitude_mV=fit.amplitude,
            fit_b_sat_nT=fit.b_sat,
            fit_offset_mV=fit.offset,
            fit_asymptote_mV=fit.asymptote,
            fit_residual_mV=fit.residual,
        )
    tables["response"] = resp_table

    p_out = np.array([_peak_out_power(tr, c) for tr, c in zip(gain_tr, gain_cfgs)])
    gains = np.array([gain_db(po, p_gain) for po in p_out])
    offsets = freqs - config.spins.omega_s_center / TWO_PI
    tables["gain"] = {
        "freq_Hz": freqs,
        "offset_Hz": offsets,
        "gain_dB": gains,
        "pulse_stretch": np.array([pulse_stretch(tr, c) for tr, c in zip(gain_tr, gain_cfgs)]),
    }
    i = int(np.argmax(gains))
    summary.update(
        gain_b1_nT=gain_b1_nt,
        gain_input_power_W=p_gain,
        peak_gain_dB=float(gains[i]),
        peak_gain_freq_Hz=float(freqs[i]),
        min_gain_dB=float(gains.min()),
    )
    return ScenarioResult("response_and_gain", tables, summary, config)


# ----------------------------------------------------------- heterodyne


def _line_fit(x, y):
    if x.size < 2:
        return math.nan, math.nan
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


def run_heterodyne_sweep(config: ReceiverConfig, detunings_hz, scale="amplitude", threads=1,
                         envelope_count=3) -> ScenarioResult:
    """Beat frequency and enhancement figure of merit across input detunings.

    Detuning is omega_in - omega_c with the cavity held fixed.  Each point
    is run with the inverted ensemble and again with initial_sz = 0 (pump
    off).  Every run sees the same drive and the same detector noise record,
    seeded from ``noise.seed``, so on/off ratios and the comparison of
    opposite detunings are not dominated by independent noise draws.
    """
    det = np.asarray(detunings_hz, dtype=float)
    if det.size == 0:
        raise DomainError("detuning list is empty")
    if np.any(np.abs(det) * TWO_PI > MAX_DETUNING * (1 + 1e-12)):
        raise DomainError("detunings must lie within +/-10 MHz")
    check_below_threshold(config)
    on = [config.with_drive(omega_in=config.cavity.omega_c + TWO_PI * d) for d in det]
    off = [c.with_spins(initial_sz=0.0) for c in on]
    traces = integrate_batch(on + off, threads=threads)
    n = det.size

    f_beat, amp, found, eps, on_amp, off_amp = [], [], [], [], [], []
    for i, d in enumerate(det):
        tr_on, tr_off = traces[i], traces[n + i]
        b = beat_frequency(tr_on)
        found.append(b.found)
        f_beat.append(b.f_beat if b.found else math.nan)
        amp.append(b.amplitude)
        m = _pulse_mask(tr_on.t, on[i])
        v_on = detector_chain(tr_on, on[i]).voltage[m]
        v_off = detector_chain(tr_off, off[i]).voltage[m]
        s_on = fft_spectrum(v_on, t=tr_on.t[m], window="hann")
        s_off = fft_spectrum(v_off, t=tr_on.t[m], window="hann")
        eps.append(enhancement_merit(s_on, s_off, d, scale=scale))
        on_amp.append(s_on.value_at(d))
        off_amp.append(s_off.value_at(d))
    f_beat = np.array(f_beat)
    found = np.array(found)
    eps = np.array(eps)

    tables = {
        "beats": {
            "detuning_Hz": det,
            "f_beat_Hz": f_beat,
            "found": found.astype(int),
            "beat_amplitude": np.array(amp),
            "epsilon_dB": eps,
            "fft_on_mV": np.array(on_amp),
            "fft_off_mV": np.array(off_amp),
        }
    }
    if envelope_count > 0:
        order = np.argsort(det)
        pick = sorted(set(order[np.linspace(0, n - 1, min(envelope_count, n)).astype(int)].tolist()))
        env = {"t_s": traces[0].t}
        for j in pick:
            env[f"lg_env_{det[j]:+.0f}Hz"] = normalized_log_envelope(traces[j].photon_number)
        tables["envelopes"] = env

    slope, intercept = _line_fit(det[found], f_beat[found])
    pos, neg = det > 0, det < 0
    summary = {
        "n_points": int(n),
        "n_found": int(found.sum()),
        "not_found_Hz": [float(x) for x in det[~found]],
        "beat_slope": slope,
        "beat_intercept_Hz": intercept,
        "epsilon_scale": scale,
        "epsilon_mean_pos_dB": float(eps[pos].mean()) if pos.any() else math.nan,
        "epsilon_mean_neg_dB": float(eps[neg].mean()) if neg.any() else math.nan,
        "epsilon_zero_dB": float(eps[det == 0][0]) if np.any(det == 0) else math.nan,
    }
    unresolved = det[~found & (np.abs(det) >= BEAT_RESOLVABLE_HZ)]
    warnings = tuple(f"no beat found at {d:+.6g} Hz" for d in unresolved)
    return ScenarioResult("heterodyne_sweep", tables, summary, config, warnings)


def heterodyne_detunings(max_hz=4e6, step_hz=100e3, min_hz=0.0):
    """Symmetric detuning grid; with ``min_hz`` > 0 the centre is omitted."""
    k = int(round(max_hz / step_hz))
    grid = np.arange(-k, k + 1) * step_hz
    return grid[np.abs(grid) >= min_hz - 1e-9]


# ---------------------------------------------------------------- oracle


def vacuum_rabi_period(config: ReceiverConfig) -> float:
    """Period of the single-excitation photon-number oscillation, pi/g_eff."""
    g = config.spins.g_eff
    return math.pi / g if g > 0 else math.inf


def oracle_config(n_spins=1, g_eff=TWO_PI * 1e6, drive_ratio=0.01, q_loaded=2000.0, f_c=1e9,
                  initial_sz=-1.0, periods=1.0, dt=1e-9) -> ReceiverConfig:
    """Small resonant system for mean-field versus master-equation checks:
    weak drive, fixed g_eff, gamma_par = 0."""
    from .model import DriveParams, SpinEnsembleParams

    omega = TWO_PI * f_c
    cav = CavityParams(omega, q_loaded, 1e-6)
    spins = SpinEnsembleParams(omega, float(n_spins), g_eff / math.sqrt(n_spins), 0.0, 0.0, initial_sz)
    t_end = periods * math.pi / g_eff
    drive = DriveParams(omega, amplitude=drive_ratio * g_eff, pulse_start=0.0, pulse_duration=t_end)
    sim = SimSettings(t_end=t_end, dt=dt)
    return ReceiverConfig(cav, spins, drive, sim)


def _rel(num, den):
    num = np.abs(num)
    den = np.abs(den)
    out = np.zeros_like(num, dtype=float)
    np.divide(num, den, out=out, where=den > 0)
    out[(den == 0) & (num > 0)] = np.inf
    return out


def run_oracle_comparison(config: ReceiverConfig, window_s=None, dim_fock=4) -> ScenarioResult:
    """Mean-field against the exact master equation on identical parameters.

    The comparison window defaults to the first vacuum-Rabi period (or the
    whole run, if shorter).  Reports the time-resolved relative errors of
    |<a>|^2 and <S_z>, their maxima and the time-averaged photon error
    sum|dn| / sum|n| over the window.
    """
    s = config.spins
    n = int(round(s.n_spins))
    if abs(s.n_spins - n) > 1e-9 or not 1 <= n <= MAX_SPINS:
        raise DomainError(f"oracle comparison needs an integer n_spins in 1..{MAX_SPINS}")
    if s.gamma_par != 0:
        raise DomainError("oracle comparison requires gamma_par = 0")
    if len(s.lineshape) != 1:
        raise DomainError("oracle comparison requires a single-entry lineshape")
    if config.drive.seed_s_minus != 0:
        raise DomainError("oracle comparison starts from zero spin coherence")

    sim = config.sim
    mf = integrate_meanfield(config)
    lt = evolve_with_adaptive_cutoff(
        lambda d: polarized_state(d, n, s.initial_sz), n, config, sim.t_end, sim.dt, sim.stride, dim_fock=dim_fock
    )
    if lt.t.shape != mf.t.shape:
        raise DomainError("mean-field and oracle sampling grids differ")

    window = window_s if window_s is not None else min(vacuum_rabi_period(config), sim.t_end)
    w = mf.t <= window * (1 + 1e-12)
    m_n, l_n = mf.photon_number, lt.coherent_photon_number
    m_z, l_z = mf.s_z[:, 0], lt.s_z
    rel_n = _rel(m_n - l_n, l_n)
    rel_z = _rel(m_z - l_z, l_z)
    tot = np.sum(np.abs(l_n[w]))
    mean_rel = float(np.sum(np.abs(m_n - l_n)[w]) / tot) if tot > 0 else float(np.max(np.abs(m_n - l_n)[w]))

    table = {
        "t_s": mf.t,
        "mf_photon": m_n,
        "oracle_coherent_photon": l_n,
        "oracle_photon_number": lt.photon_number,
        "rel_error_photon": rel_n,
        "mf_sz": m_z,
        "oracle_sz": l_z,
        "rel_error_sz": rel_z,
        "fock_tail": lt.fock_tail,
        "in_window": w.astype(int),
    }
    summary = {
        "n_spins": n,
        "dim_fock": lt.dim_fock,
        "window_s": float(window),
        "mean_rel_error_photon": mean_rel,
        "max_rel_error_photon": float(np.max(rel_n[w])),
        "max_rel_error_sz": float(np.max(rel_z[w])),
        "max_abs_error_sz": float(np.max(np.abs(m_z - l_z)[w])),
        "max_fock_tail": float(np.max(lt.fock_tail)),
    }
    return ScenarioResult("oracle_comparison", {"comparison": table}, summary, config)


# ----------------------------------------------------------- sensitivity


def run_sensitivity(config: ReceiverConfig, b_test_nt=2.47, delta_f=DEFAULT_DELTA_F,
                    conversion: ConversionFactor | None = None, step=0.1) -> ScenarioResult:
    """Minimum detectable field at a weak test input, by both routes.

    SNR route: the noisy detector record of one shot; noise from the
    pre-pulse baseline, signal from the samples above half of the peak
    excursion.  Responsivity route: the noise standard deviation over the
    local slope dS/dB1 from runs at (1 +/- step) * b_test.
    """
    if not b_test_nt > 0:
        raise DomainError("b_test must be positive")
    conv = _conversion(config, conversion)
    check_below_threshold(config)
    b = b_test_nt * np.array([1.0, 1.0 - step, 1.0 + step])
    cfgs = [config.with_drive(power_in=float(power_for_field(x, conv))) for x in b]
    traces = integrate_batch(cfgs)
    tr, c = traces[0], cfgs[0]
    det = detector_chain(tr, c)
    noise_w = tr.t < c.drive.pulse_start
    if noise_w.sum() < 8:
        raise DomainError("need at least 8 pre-pulse samples for the noise estimate")
    raw = det.voltage_raw - det.voltage_raw[noise_w].mean()
    signal_w = (raw >= 0.5 * raw.max()) & ~noise_w
    snr_p, snr_b = snr_estimate(det.voltage, noise_w, signal_w)
    sigma_s = float(np.std(det.voltage[noise_w]))
    s_peak = [detector_chain(t_, c_).voltage_raw[_pulse_mask(t_.t, c_)].max() for t_, c_ in zip(traces, cfgs)]
    m_s = (s_peak[2] - s_peak[1]) / (b[2] - b[1])

    rep_snr = sensitivity_estimate("snr", b_test=b_test_nt, snr_b=snr_b, delta_f=delta_f)
    rep_resp = sensitivity_estimate("responsivity", sigma_s=sigma_s, m_s=m_s, delta_f=delta_f)
    table = {
        "t_s": tr.t,
        "voltage_mV": det.voltage,
        "voltage_raw_mV": det.voltage_raw,
        "noise_window": noise_w.astype(int),
        "signal_window": signal_w.astype(int),
    }
    summary = {
        "b_test_nT": b_test_nt,
        "input_power_W": float(c.drive.power_in),
        "snr_p": snr_p,
        "snr_b": snr_b,
        "sigma_s_mV": sigma_s,
        "m_s_mV_per_nT": float(m_s),
        "delta_f_Hz": delta_f,
        "eta_snr_fT_per_sqrtHz": rep_snr.eta,
        "eta_responsivity_fT_per_sqrtHz": rep_resp.eta,
    }
    return ScenarioResult("sensitivity", {"trace": table}, summary, config)
