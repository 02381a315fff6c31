"""Mean-field dynamics of a cavity mode coupled to spin subensembles.

Each lineshape bin is a subensemble k with N_k spins and collective coupling
g_k = g * sqrt(N_k).  In the frame rotating at the input frequency:

    da/dt    = -(kappa/2 + i Dc) a - i sum_k g_k s_k + eta(t)
    ds_k/dt  = -(gamma_perp + i Ds_k) s_k + i g_k z_k a
    dz_k/dt  = -gamma_par z_k + (2 i g_k / N_k) (s_k a* - s_k* a)

The spin coherence equation carries no 1/N factor: with s = S_-/sqrt(N) and
z = S_z/N this is the form that follows from the Hamiltonian, and the only
one that conserves the excitation number and spin length in the lossless
limit.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, StepSizeError
from .integrators import integrate_adaptive, integrate_fixed
from .model import ReceiverConfig, build_spin_ensemble, validate_config

MAX_DT_SCALE = 0.1


@dataclass(frozen=True)
class MeanFieldState:
    a: complex
    s_minus: np.ndarray
    s_z: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.s_minus, dtype=complex).reshape(-1)
        z = np.asarray(self.s_z, dtype=float).reshape(-1)
        if s.shape != z.shape:
            raise DomainError("s_minus and s_z must have equal length")
        object.__setattr__(self, "a", complex(self.a))
        object.__setattr__(self, "s_minus", s)
        object.__setattr__(self, "s_z", z)

    @property
    def n_sub(self) -> int:
        return self.s_z.size

    def pack(self) -> np.ndarray:
        return np.concatenate([[self.a], self.s_minus, self.s_z.astype(complex)])

    @classmethod
    def unpack(cls, y) -> MeanFieldState:
        k = (len(y) - 1) // 2
        return cls(y[0], y[1 : 1 + k], y[1 + k :].real)


@dataclass(frozen=True)
class TimeTrace:
    """Uniformly sampled mean-field trajectory.

    Stored column-wise; ``states`` rebuilds per-sample :class:`MeanFieldState`
    objects on demand.
    """

    t: np.ndarray
    a: np.ndarray
    s_minus: np.ndarray  # (n_samples, n_sub)
    s_z: np.ndarray  # (n_samples, n_sub)
    meta: ReceiverConfig

    @property
    def photon_number(self) -> np.ndarray:
        return np.abs(self.a) ** 2

    @property
    def states(self) -> list[MeanFieldState]:
        return [self.state(i) for i in range(len(self.t))]

    def state(self, i) -> MeanFieldState:
        return MeanFieldState(self.a[i], self.s_minus[i], self.s_z[i])

    @property
    def sample_rate(self) -> float:
        return 1.0 / (self.t[1] - self.t[0])

    def __len__(self):
        return len(self.t)


def drive_waveform(drive, t):
    """Complex drive value at time ``t`` (scalar or array)."""
    t = np.asarray(t, dtype=float)
    amp = (drive.amplitude or 0.0) * np.exp(1j * drive.phase)
    inside = (t >= drive.pulse_start) & (t < drive.pulse_start + drive.pulse_duration)
    out = np.where(inside, amp, 0.0 + 0.0j)
    return complex(out) if out.ndim == 0 else out


class _Coefficients:
    """Per-run coefficient arrays, batched along axis 0."""

    def __init__(self, configs):
        ens = [build_spin_ensemble(c.spins) for c in configs]
        k = len(ens[0])
        if any(len(e) != k for e in ens):
            raise DomainError("batched configs must share the number of subensembles")
        self.n_sub = k
        self.kappa = np.array([c.cavity.kappa_c for c in configs])
        self.delta_c = np.array([c.cavity.omega_c - c.drive.omega_in for c in configs])
        self.g = np.array([[s.g_eff for s in e] for e in ens])
        self.n = np.array([[s.n_spins for s in e] for e in ens])
        self.delta_s = np.array(
            [
                [c.spins.omega_s_center + s.detuning - c.drive.omega_in for s in e]
                for c, e in zip(configs, ens)
            ]
        )
        self.g_over_n = np.divide(self.g, self.n, out=np.zeros_like(self.g), where=self.n > 0)
        self.gamma_perp = np.array([c.spins.gamma_perp for c in configs])
        self.gamma_par = np.array([c.spins.gamma_par for c in configs])
        self.eta = np.array(
            [(c.drive.amplitude or 0.0) * np.exp(1j * c.drive.phase) for c in configs]
        )
        self.t_on = np.array([c.drive.pulse_start for c in configs])
        self.t_off = np.array([c.drive.pulse_end for c in configs])
        self.cav_damp = 0.5 * self.kappa + 1j * self.delta_c
        self.spin_damp = self.gamma_perp[:, None] + 1j * self.delta_s
        self._held_eta = None

    def begin_step(self, t, dt):
        # the pulse envelope is held at its mid-step value, so a step ending
        # on a pulse edge does not see the edge at its last stage
        self._held_eta = self.drive_at(t + 0.5 * dt)

    def drive_at(self, t):
        return np.where((t >= self.t_on) & (t < self.t_off), self.eta, 0.0)

    def __call__(self, t, y):
        k = self.n_sub
        a = y[:, 0]
        s = y[:, 1 : 1 + k]
        z = y[:, 1 + k :].real
        eta = self._held_eta if self._held_eta is not None else self.drive_at(t)
        out = np.empty_like(y)
        out[:, 0] = -self.cav_damp * a - 1j * np.sum(self.g * s, axis=1) + eta
        out[:, 1 : 1 + k] = -self.spin_damp * s + 1j * self.g * z * a[:, None]
        x = s * np.conj(a)[:, None]
        out[:, 1 + k :] = -self.gamma_par[:, None] * z - 4.0 * self.g_over_n * x.imag
        return out


def meanfield_derivative(state: MeanFieldState, config: ReceiverConfig, t: float) -> MeanFieldState:
    """Right-hand side of the mean-field equations, returned as a state-shaped
    derivative."""
    coeffs = _Coefficients([config])
    if state.n_sub != coeffs.n_sub:
        raise DomainError(
            f"state has {state.n_sub} subensembles, config has {coeffs.n_sub}"
        )
    d = coeffs(t, state.pack()[None, :])[0]
    return MeanFieldState.unpack(d)


def conserved_quantities(state: MeanFieldState, n_spins) -> tuple[float, np.ndarray]:
    """Excitation number E and per-subensemble spin length L_k.

    Both are constants of motion when kappa = gamma = eta = 0.
    """
    n = np.asarray(n_spins, dtype=float).reshape(-1)
    if n.size != state.n_sub:
        raise DomainError("n_spins length does not match the state")
    excitation = abs(state.a) ** 2 + float(np.sum(0.5 * n * state.s_z))
    length = state.s_z**2 + np.divide(
        4.0 * np.abs(state.s_minus) ** 2, n, out=np.zeros_like(n), where=n > 0
    )
    return excitation, length


def trace_conserved_quantities(trace: TimeTrace):
    """Excitation (n_samples,) and spin length (n_samples, n_sub) along a trace."""
    n = np.array([s.n_spins for s in build_spin_ensemble(trace.meta.spins)])
    exc = trace.photon_number + np.sum(0.5 * n * trace.s_z, axis=1)
    length = trace.s_z**2 + np.divide(
        4.0 * np.abs(trace.s_minus) ** 2, n, out=np.zeros_like(trace.s_z), where=n > 0
    )
    return exc, length


def initial_state(config: ReceiverConfig) -> MeanFieldState:
    """Cavity empty, spins polarised to ``initial_sz`` by the (instantaneous)
    pump pulse at t = 0, optional small coherence seed."""
    k = len(config.spins.lineshape)
    return MeanFieldState(
        0.0,
        np.full(k, config.drive.seed_s_minus, dtype=complex),
        np.full(k, config.spins.initial_sz),
    )


def fastest_scale(config: ReceiverConfig) -> tuple[str, float]:
    """Largest rate the step must resolve, with a name for error messages."""
    ens = build_spin_ensemble(config.spins)
    cands = [
        ("cavity detuning |Delta_c|", abs(config.cavity.omega_c - config.drive.omega_in)),
        ("kappa_c", config.cavity.kappa_c),
    ]
    spin_det = [
        abs(config.spins.omega_s_center + s.detuning - config.drive.omega_in)
        for s in ens
        if s.n_spins > 0
    ]
    if spin_det:
        cands.append(("spin detuning |Delta_s|", max(spin_det)))
    cands.append(("g_eff", max(s.g_eff for s in ens)))
    return max(cands, key=lambda x: x[1])


def check_step(config: ReceiverConfig):
    name, rate = fastest_scale(config)
    if config.sim.dt * rate >= MAX_DT_SCALE:
        raise StepSizeError(
            "sim.dt",
            f"dt={config.sim.dt:.3g} s does not resolve {name}={rate:.4g} rad/s "
            f"(need dt*rate < {MAX_DT_SCALE}, i.e. dt < {MAX_DT_SCALE / rate:.3g} s)",
        )


def _sample_times(sim):
    n_steps = int(round(sim.t_end / sim.dt))
    stride = sim.stride
    idx = list(range(0, n_steps + 1, stride))
    if idx[-1] != n_steps:
        idx.append(n_steps)
    return np.array(idx) * sim.dt


def integrate_meanfield(config: ReceiverConfig, initial: MeanFieldState | None = None) -> TimeTrace:
    """Integrate one run over [0, t_end]."""
    validate_config(config)
    check_step(config)
    if initial is None:
        initial = initial_state(config)
    if initial.n_sub != len(config.spins.lineshape):
        raise DomainError("initial state does not match the ensemble size")
    if not config.sim.adaptive:
        return integrate_batch([config], [initial])[0]

    coeffs = _Coefficients([config])
    sample_times = _sample_times(config.sim)
    d = config.drive
    t, ys = integrate_adaptive(
        coeffs,
        initial.pack()[None, :],
        sample_times[-1],
        config.sim.dt,
        config.sim.tolerance,
        sample_times,
        breakpoints=(d.pulse_start, d.pulse_end),
    )
    return _to_trace(t, ys[:, 0, :], config)


def _to_trace(t, ys, config):
    k = (ys.shape[1] - 1) // 2
    return TimeTrace(
        t=np.asarray(t),
        a=ys[:, 0].copy(),
        s_minus=ys[:, 1 : 1 + k].copy(),
        s_z=ys[:, 1 + k :].real.copy(),
        meta=config,
    )


def _integrate_chunk(configs, initials):
    coeffs = _Coefficients(configs)
    sim = configs[0].sim
    y0 = np.stack([s.pack() for s in initials])
    t, ys = integrate_fixed(coeffs, y0, sim.t_end, sim.dt, sim.stride)
    return [_to_trace(t, ys[:, i, :], c) for i, c in enumerate(configs)]


def integrate_batch(configs, initials=None, threads: int = 1) -> list[TimeTrace]:
    """Fixed-step RK4 for many configs sharing one time grid.

    All configs must have identical ``sim`` settings and ensemble sizes; the
    runs are advanced together as one vectorised system.  With
    ``threads > 1`` the batch is split into chunks integrated concurrently;
    results keep input order.
    """
    configs = list(configs)
    if not configs:
        return []
    sim = configs[0].sim
    for c in configs:
        validate_config(c)
        check_step(c)
        if c.sim != sim:
            raise DomainError("batched configs must share sim settings")
    if initials is None:
        initials = [initial_state(c) for c in configs]
    initials = list(initials)
    if threads <= 1 or len(configs) < 2:
        return _integrate_chunk(configs, initials)
    n = min(threads, len(configs))
    bounds = np.linspace(0, len(configs), n + 1).astype(int)
    with ThreadPoolExecutor(max_workers=n) as pool:
        parts = list(
            pool.map(
                _integrate_chunk,
                [configs[a:b] for a, b in zip(bounds[:-1], bounds[1:])],
                [initials[a:b] for a, b in zip(bounds[:-1], bounds[1:])],
            )
        )
    return [tr for part in parts for tr in part]


def threshold_ratio(config: ReceiverConfig) -> float:
    """g_eff^2 * z0 / ((kappa/2) * gamma_perp) for a resonant single ensemble.

    Values above 1 self-oscillate from an arbitrarily small seed.
    """
    g = config.spins.g_eff
    denom = 0.5 * config.cavity.kappa_c * config.spins.gamma_perp
    return math.inf if denom == 0 else g * g * config.spins.initial_sz / denom


def linear_growth_rate(config: ReceiverConfig) -> float:
    """Largest real part of the eigenvalues of the linearised cavity-coherence
    system about the zero-field state, spins frozen at ``initial_sz``."""
    coeffs = _Coefficients([config])
    k = coeffs.n_sub
    m = np.zeros((k + 1, k + 1), dtype=complex)
    m[0, 0] = -coeffs.cav_damp[0]
    m[0, 1:] = -1j * coeffs.g[0]
    z0 = config.spins.initial_sz
    m[1:, 0] = 1j * coeffs.g[0] * z0
    m[1:, 1:] = np.diag(-coeffs.spin_damp[0])
    return float(np.max(np.linalg.eigvals(m).real))
