"""Detector model and derived metrics: gain, spectra, beats, SNR,
responsivity, sensitivity and the heterodyne enhancement figure of merit."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from .errors import DomainError, FitError


@dataclass(frozen=True)
class Spectrum:
    """One-sided magnitude spectrum.

    Normalisation: a unit-amplitude sinusoid on a bin centre reads 1.0 (the
    raw FFT peak is 0.5*length times the window mean).  The DC and Nyquist
    bins are not doubled, so for an unwindowed record
    ``mean(x**2) == A[0]**2 + A[nyq]**2 + 0.5*sum(A[interior]**2)``.
    """

    freq: np.ndarray  # Hz
    amplitude: np.ndarray
    resolution: float  # Hz
    n_samples: int = 0

    def value_at(self, f_hz) -> float:
        i = int(round(abs(f_hz) / self.resolution))
        if i >= len(self.freq):
            raise DomainError(f"{f_hz} Hz lies beyond the spectrum")
        return float(self.amplitude[i])

    def mean_square(self) -> float:
        """Time-domain mean square implied by Parseval (unwindowed records)."""
        a = self.amplitude
        if self.n_samples % 2 == 0 and len(a) > 1:
            return float(a[0] ** 2 + a[-1] ** 2 + 0.5 * np.sum(a[1:-1] ** 2))
        return float(a[0] ** 2 + 0.5 * np.sum(a[1:] ** 2))


@dataclass(frozen=True)
class DetectorTrace:
    t: np.ndarray
    power: np.ndarray  # W at the output port
    voltage_raw: np.ndarray  # mV, DC coupled, noiseless
    voltage: np.ndarray  # mV, AC coupled, with noise


@dataclass(frozen=True)
class SaturationFit:
    """S(B1) = amplitude * (1 - exp(-B1 / b_sat)) + offset."""

    amplitude: float
    b_sat: float
    offset: float
    residual: float

    def __call__(self, b1):
        return self.amplitude * (1.0 - np.exp(-np.asarray(b1) / self.b_sat)) + self.offset

    def responsivity(self, b1):
        return self.amplitude / self.b_sat * np.exp(-np.asarray(b1) / self.b_sat)

    @property
    def asymptote(self) -> float:
        return self.amplitude + self.offset


@dataclass(frozen=True)
class ResponseCurve:
    b1: np.ndarray  # nT
    response: np.ndarray  # detector units
    sigma: np.ndarray | None = None
    fit: SaturationFit | None = None

    def __post_init__(self):
        b = np.asarray(self.b1, dtype=float)
        s = np.asarray(self.response, dtype=float)
        if b.shape != s.shape:
            raise DomainError("b1 and response lengths differ")
        if b.size < 4:
            raise DomainError("need at least 4 points")
        if np.any(np.diff(b) <= 0):
            raise DomainError("b1 must be strictly increasing")
        object.__setattr__(self, "b1", b)
        object.__setattr__(self, "response", s)
        if self.sigma is not None:
            object.__setattr__(self, "sigma", np.asarray(self.sigma, dtype=float))


@dataclass(frozen=True)
class SensitivityReport:
    eta: float  # fT / sqrt(Hz)
    method: str  # "responsivity" | "snr"
    inputs: dict = field(default_factory=dict)

    def to_dict(self):
        return {"eta_fT_per_sqrtHz": self.eta, "method": self.method, "inputs": dict(self.inputs)}


@dataclass(frozen=True)
class BeatResult:
    f_beat: float | None  # Hz, signed when the complex field is available
    amplitude: float
    found: bool
    floor: float


def output_power(trace, config=None):
    """Power leaving the port: coupling_fraction * kappa_c * hbar*omega * |a|^2."""
    cfg = config if config is not None else trace.meta
    return cfg.kappa_port * cfg.constants.hbar * cfg.drive.omega_in * trace.photon_number


def detector_chain(trace, config=None, rng=None) -> DetectorTrace:
    """Log-detector voltage for a mean-field trace.

    The detector reads P + P_floor, so zero power maps to ``floor_dbm`` and
    signals near the floor are compressed.  Gaussian noise of
    ``noise.sigma`` mV is added after AC coupling; the generator is seeded
    from ``noise.seed`` unless ``rng`` is given.
    """
    if len(trace.t) == 0:
        raise DomainError("empty trace")
    cfg = config if config is not None else trace.meta
    det = cfg.detector
    p = output_power(trace, cfg)
    floor_w = 1e-3 * 10 ** (det.floor_dbm / 10.0)
    dbm = 10.0 * np.log10((p + floor_w) / 1e-3)
    raw = det.slope_mv_per_db * (dbm - det.reference_dbm)
    v = raw - raw.mean()
    if cfg.noise.sigma > 0:
        if rng is None:
            rng = np.random.default_rng(cfg.noise.seed)
        v = v + rng.normal(0.0, cfg.noise.sigma, size=v.shape)
    return DetectorTrace(np.asarray(trace.t), p, raw, v)


def gain_db(p_out, p_in) -> float:
    if not (p_out > 0 and p_in > 0):
        raise DomainError("powers must be positive")
    return 10.0 * math.log10(p_out / p_in)


def _check_uniform(t):
    t = np.asarray(t, dtype=float)
    d = np.diff(t)
    if d.size == 0 or np.any(d <= 0):
        raise DomainError("time grid must be strictly increasing")
    if np.max(np.abs(d - d.mean())) > 1e-6 * d.mean():
        raise DomainError("time grid is not uniform")
    return 1.0 / d.mean()


def _window(n, kind):
    if kind in (None, "none"):
        return np.ones(n)
    if kind == "hann":
        return np.hanning(n)
    raise DomainError(f"unknown window {kind!r}")


def fft_spectrum(values, sample_rate=None, window="none", t=None) -> Spectrum:
    x = np.asarray(values)
    if x.ndim != 1 or x.size < 16:
        raise DomainError("need a 1-D record of at least 16 samples")
    if t is not None:
        sample_rate = _check_uniform(t)
    if not sample_rate or sample_rate <= 0:
        raise DomainError("sample_rate must be positive")
    n = x.size
    w = _window(n, window)
    amp = np.abs(np.fft.rfft(x * w)) / np.sum(w)
    amp[1:] *= 2.0
    if n % 2 == 0:
        amp[-1] /= 2.0
    freq = np.fft.rfftfreq(n, d=1.0 / sample_rate)
    return Spectrum(freq, amp, sample_rate / n, n)


def _masing_window(t, config):
    d = config.drive
    if d.pulse_duration > 0:
        return (t >= d.pulse_start) & (t < d.pulse_end)
    return np.ones_like(t, dtype=bool)


def _refine_peak(amp, i):
    """Sub-bin peak position by parabolic interpolation of log magnitude."""
    if i <= 0 or i >= len(amp) - 1:
        return float(i)
    y0, y1, y2 = np.log(np.maximum(amp[i - 1 : i + 2], 1e-300))
    den = y0 - 2 * y1 + y2
    if den >= 0:
        return float(i)
    return i + 0.5 * (y0 - y2) / den


def spectral_peak(values, sample_rate, window="hann", min_freq=None, peak_factor=3.0, zero_pad=8):
    """Strongest non-DC line of a real record, refined between bins.

    Returns ``(freq_Hz, amplitude, floor, found)``.  The line must be a local
    maximum above ``min_freq`` (default: one bin) and exceed ``peak_factor``
    times the median spectral level; otherwise ``found`` is False and
    ``freq_Hz`` is None.
    """
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < 16:
        raise DomainError("need at least 16 samples")
    if min_freq is None:
        min_freq = sample_rate / n
    x = x - x.mean()
    w = _window(n, window)
    n_fft = n * zero_pad
    amp = np.abs(np.fft.rfft(x * w, n_fft)) * 2.0 / np.sum(w)
    freq = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    band = freq >= min_freq
    if not np.any(band):
        return None, 0.0, 0.0, False
    # floor from the unpadded grid so padding does not bias the median
    floor = float(np.median(amp[band][::zero_pad]))
    idx = np.flatnonzero(band)
    i = idx[np.argmax(amp[band])]
    peak = float(amp[i])
    # leakage from a slow rise decays monotonically away from DC; a genuine
    # line must be a local maximum inside the band
    interior = idx[0] < i < len(amp) - 1 and amp[i - 1] < peak and amp[i + 1] < peak
    if not interior or peak < peak_factor * floor or peak == 0:
        return None, peak, floor, False
    return float(_refine_peak(amp, i) * sample_rate / n_fft), peak, floor, True


def beat_frequency(trace, config=None, window="hann", min_freq=None, peak_factor=3.0, zero_pad=8) -> BeatResult:
    """Dominant non-DC modulation of the output envelope inside the pulse.

    ``trace`` is a mean-field :class:`TimeTrace` (the envelope is |a|^2) or a
    :class:`DetectorTrace`.  For a TimeTrace the sign comes from the complex
    field: positive when the input lies above the cavity frequency, matching
    detuning = omega_in - omega_c.  A peak below ``peak_factor`` times the
    median spectral level gives ``found=False``.
    """
    cfg = config if config is not None else getattr(trace, "meta", None)
    t = np.asarray(trace.t)
    mask = _masing_window(t, cfg) if cfg is not None else np.ones_like(t, dtype=bool)
    rate = _check_uniform(t[mask])
    if isinstance(trace, DetectorTrace):
        env = trace.voltage[mask]
        field_ = None
    else:
        env = trace.photon_number[mask]
        field_ = trace.a[mask]
    if env.size < 16:
        raise DomainError("masing window holds fewer than 16 samples")
    f, peak, floor, found = spectral_peak(env, rate, window, min_freq, peak_factor, zero_pad)
    if not found:
        return BeatResult(None, peak, False, floor)
    if field_ is not None:
        n_fft = env.size * zero_pad
        w = _window(env.size, window)
        fa = np.abs(np.fft.fft((field_ - field_.mean()) * w, n_fft))
        ff = np.fft.fftfreq(n_fft, d=1.0 / rate)
        near = np.abs(np.abs(ff) - f) < 2 * rate / env.size
        j = np.flatnonzero(near)[np.argmax(fa[near])]
        if ff[j] < 0:
            f = -f
    return BeatResult(float(f), peak, True, floor)


def _as_mask(window, n):
    if isinstance(window, slice):
        m = np.zeros(n, dtype=bool)
        m[window] = True
        return m
    w = np.asarray(window)
    if w.dtype == bool:
        if w.size != n:
            raise DomainError("mask length does not match the trace")
        return w
    if w.size == 2:
        m = np.zeros(n, dtype=bool)
        m[int(w[0]) : int(w[1])] = True
        return m
    raise DomainError("window must be a slice, (start, stop) pair or boolean mask")


def snr_estimate(values, noise_window, signal_window, baseline=True):
    """Power SNR and field SNR of an amplitude-domain record.

    The noise-window mean is removed first (``baseline``).  Signal power is
    the mean square over ``signal_window``, which should bracket the
    envelope peak; noise power is the mean square over ``noise_window``.
    Returns ``(snr_p, snr_b)`` with ``snr_b = sqrt(snr_p)``.
    """
    x = np.asarray(values, dtype=float)
    nm = _as_mask(noise_window, x.size)
    sm = _as_mask(signal_window, x.size)
    if not nm.any() or not sm.any():
        raise DomainError("windows must be nonempty")
    if np.any(nm & sm):
        raise DomainError("noise and signal windows overlap")
    if baseline:
        x = x - x[nm].mean()
    p_noise = np.mean(x[nm] ** 2)
    if p_noise == 0:
        raise DomainError("zero noise power")
    snr_p = float(np.mean(x[sm] ** 2) / p_noise)
    return snr_p, math.sqrt(snr_p)


def snr_field_from_power(snr_p) -> float:
    if snr_p < 0:
        raise DomainError("power SNR must be >= 0")
    return math.sqrt(snr_p)


def _saturation(b, amp, b_sat, off):
    return amp * (1.0 - np.exp(-b / b_sat)) + off


def fit_saturation(data: ResponseCurve, max_iter=2000) -> SaturationFit:
    b, s = data.b1, data.response
    span = s.max() - s.min()
    p0 = (span if span > 0 else 1.0, max(np.median(b), 1e-12), s.min())
    sigma = data.sigma if data.sigma is not None and np.all(data.sigma > 0) else None
    try:
        popt, _ = curve_fit(
            _saturation,
            b,
            s,
            p0=p0,
            sigma=sigma,
            absolute_sigma=sigma is not None,
            bounds=([-np.inf, 1e-12 * max(b.max(), 1e-30), -np.inf], np.inf),
            maxfev=max_iter,
        )
    except RuntimeError as exc:
        res = float(np.linalg.norm(s - _saturation(b, *p0)))
        raise FitError(f"saturation fit did not converge: {exc}", res) from exc
    res = float(np.linalg.norm(s - _saturation(b, *popt)))
    return SaturationFit(float(popt[0]), float(popt[1]), float(popt[2]), res)


def responsivity_curve(data: ResponseCurve, max_iter=2000):
    """Fit the saturation model and return (m_s at each b1, fit)."""
    fit = data.fit if data.fit is not None else fit_saturation(data, max_iter)
    return fit.responsivity(data.b1), fit


def sensitivity_estimate(mode, **inputs) -> SensitivityReport:
    """Minimum detectable field per root bandwidth, in fT/sqrt(Hz).

    mode="responsivity": sigma_s (detector units), m_s (detector units per
    nT), delta_f (Hz).  mode="snr": b_test (nT), snr_b, delta_f (Hz); snr_p
    may be given instead of snr_b.
    """
    if mode == "responsivity":
        names = ("sigma_s", "m_s", "delta_f")
    elif mode == "snr":
        if "snr_b" not in inputs and "snr_p" in inputs:
            inputs["snr_b"] = snr_field_from_power(inputs["snr_p"])
        names = ("b_test", "snr_b", "delta_f")
    else:
        raise DomainError(f"unknown sensitivity mode {mode!r}")
    for name in names:
        if name not in inputs:
            raise DomainError(f"missing input {name}")
        if not inputs[name] > 0:
            raise DomainError(f"{name} must be positive, got {inputs[name]}")
    root = math.sqrt(2.0 * inputs["delta_f"])
    if mode == "responsivity":
        eta_nt = inputs["sigma_s"] / (inputs["m_s"] * root)
    else:
        eta_nt = inputs["b_test"] / (inputs["snr_b"] * root)
    return SensitivityReport(eta_nt * 1e6, mode, {k: float(v) for k, v in inputs.items()})


def enhancement_merit(spectrum_on: Spectrum, spectrum_off: Spectrum, delta_omega, scale="amplitude", floor=1e-12) -> float:
    """Ratio of on/off FFT amplitudes at the detuning, in dB.

    ``scale="amplitude"`` uses 20*log10 (amplitude ratio); ``"power"`` uses
    10*log10 for comparison.
    """
    if spectrum_on.freq.shape != spectrum_off.freq.shape or not np.allclose(
        spectrum_on.freq, spectrum_off.freq
    ):
        raise DomainError("spectra must share a frequency grid")
    on = spectrum_on.value_at(delta_omega)
    off = spectrum_off.value_at(delta_omega)
    if off <= floor:
        raise DomainError("off-state amplitude below the spectral floor")
    factor = {"amplitude": 20.0, "power": 10.0}.get(scale)
    if factor is None:
        raise DomainError(f"unknown scale {scale!r}")
    return factor * math.log10(max(on, 1e-300) / off)


def normalized_log_envelope(photon_number):
    """lg<a+a> scaled to [0, 1] by its extrema."""
    lg = np.log10(np.maximum(np.asarray(photon_number), 1e-300))
    lo, hi = lg.min(), lg.max()
    return np.zeros_like(lg) if hi == lo else (lg - lo) / (hi - lo)


def pulse_stretch(trace, config=None) -> float:
    """Output envelope FWHM divided by the input pulse length."""
    cfg = config if config is not None else trace.meta
    p = trace.photon_number
    if cfg.drive.pulse_duration <= 0 or p.max() <= 0:
        return float("nan")
    above = np.flatnonzero(p >= 0.5 * p.max())
    dt = trace.t[1] - trace.t[0]
    return float((above[-1] - above[0] + 1) * dt / cfg.drive.pulse_duration)
