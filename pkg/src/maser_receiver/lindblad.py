"""Exact master-equation evolution for a few spins and a truncated cavity.

Brute-force reference for the mean-field module.  Basis ordering is Fock
index major, spin bitmask minor: ``index = n * 2**n_spins + mask`` with bit j
of ``mask`` set when spin j is excited (sigma_z = +1).

The Hamiltonian is handled in units of hbar (rad/s).  Dissipators:

    kappa  (a rho a+ - {a+a, rho}/2)
    gamma_par  sum_j (sz_j rho sz_j - rho)
    gamma_perp sum_j (2 sm_j rho sp_j - sp_j sm_j rho - rho sp_j sm_j)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, ResourceError, StepSizeError, TruncationError
from .integrators import integrate_fixed
from .meanfield import drive_waveform
from .model import ReceiverConfig

MAX_SPINS = 4
DEFAULT_MEMORY_CAP = 256 * 2**20  # bytes for one dense density matrix
TAIL_LIMIT = 1e-8
TRACE_LIMIT = 1e-6


@dataclass(frozen=True)
class DensityMatrix:
    dim_fock: int
    n_spins: int
    data: np.ndarray

    def __post_init__(self):
        d = self.dim_fock * 2**self.n_spins
        m = np.asarray(self.data, dtype=complex)
        if m.shape != (d, d):
            raise DomainError(f"density matrix must be {d}x{d}, got {m.shape}")
        object.__setattr__(self, "data", m)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def violations(self, herm_tol=1e-10, trace_tol=1e-10, pos_tol=1e-8):
        out = []
        m = self.data
        if np.max(np.abs(m - m.conj().T)) > herm_tol:
            out.append("not Hermitian")
        if abs(np.trace(m) - 1.0) > trace_tol:
            out.append(f"trace {np.trace(m).real:.12g} != 1")
        ev = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
        if ev.min() < -pos_tol:
            out.append(f"negative eigenvalue {ev.min():.3g}")
        return out

    def fock_tail(self) -> float:
        """Population of the highest retained Fock level."""
        s = 2**self.n_spins
        return float(np.real(np.trace(self.data[-s:, -s:])))


def product_state(dim_fock, n_spins, fock=0, excited=False) -> DensityMatrix:
    """|fock> (x) spins, each spin excited or ground (bool or per-spin list)."""
    if np.isscalar(excited):
        excited = [bool(excited)] * n_spins
    mask = sum(1 << j for j, e in enumerate(excited) if e)
    idx = fock * 2**n_spins + mask
    d = dim_fock * 2**n_spins
    m = np.zeros((d, d), dtype=complex)
    m[idx, idx] = 1.0
    return DensityMatrix(dim_fock, n_spins, m)


def polarized_state(dim_fock, n_spins, s_z, fock=0) -> DensityMatrix:
    """Empty-coherence product state with every spin at <sigma_z> = s_z,
    i.e. a diagonal mixture of ground and excited; cavity in |fock>."""
    if not -1.0 <= s_z <= 1.0:
        raise DomainError("s_z must lie in [-1, 1]")
    one = np.diag([0.5 * (1.0 - s_z), 0.5 * (1.0 + s_z)]).astype(complex)
    spins = np.ones((1, 1), dtype=complex)
    for _ in range(n_spins):
        spins = np.kron(one, spins)
    cav = np.zeros((dim_fock, dim_fock), dtype=complex)
    cav[fock, fock] = 1.0
    return DensityMatrix(dim_fock, n_spins, np.kron(cav, spins))


def coherent_state(dim_fock, n_spins, alpha, excited=False) -> DensityMatrix:
    """Truncated (renormalised) coherent cavity state times a spin product."""
    n = np.arange(dim_fock)
    amp = np.exp(-0.5 * abs(alpha) ** 2) * np.array(
        [alpha**k / math.sqrt(math.factorial(k)) for k in n], dtype=complex
    )
    amp /= np.linalg.norm(amp)
    spin = product_state(1, n_spins, 0, excited).data
    psi_f = np.outer(amp, amp.conj())
    return DensityMatrix(dim_fock, n_spins, np.kron(psi_f, spin))


@dataclass
class Operators:
    dim_fock: int
    n_spins: int
    h0: sp.csr_matrix  # static part of H / hbar
    a: sp.csr_matrix
    adag: sp.csr_matrix
    num: sp.csr_matrix
    sz: list
    sp: list
    sm: list

    def hamiltonian(self, eta=0.0):
        """H / hbar including the drive term i(eta a+ - eta* a)."""
        if eta == 0:
            return self.h0
        return (self.h0 + 1j * (eta * self.adag - np.conj(eta) * self.a)).tocsr()


def _spin_ops(n_spins):
    s = 2**n_spins
    masks = np.arange(s)
    sz, sm = [], []
    for j in range(n_spins):
        bit = (masks >> j) & 1
        sz.append(sp.diags(np.where(bit == 1, 1.0, -1.0)).astype(complex))
        rows = masks[bit == 1] ^ (1 << j)
        cols = masks[bit == 1]
        sm.append(sp.csr_matrix((np.ones(len(rows), dtype=complex), (rows, cols)), shape=(s, s)))
    return sz, sm


def build_operators(dim_fock, n_spins, config: ReceiverConfig, memory_cap=DEFAULT_MEMORY_CAP) -> Operators:
    """Sparse operator set for the driven Tavis-Cummings model.

    Every spin couples with ``g_single`` and sits at ``omega_s_center`` plus
    the (single) lineshape offset.
    """
    if dim_fock < 2:
        raise DomainError("dim_fock must be >= 2")
    if not 1 <= n_spins <= MAX_SPINS:
        raise DomainError(f"n_spins must be in 1..{MAX_SPINS}")
    d = dim_fock * 2**n_spins
    if d * d * 16 > memory_cap:
        raise ResourceError(
            f"density matrix of dimension {d} needs {d * d * 16 / 2**20:.1f} MiB "
            f"> cap {memory_cap / 2**20:.1f} MiB"
        )
    if len(config.spins.lineshape) != 1:
        raise DomainError("the oracle needs a single-entry lineshape")
    s = 2**n_spins
    fock_a = sp.diags(np.sqrt(np.arange(1, dim_fock)), 1).astype(complex)
    eye_s = sp.identity(s, dtype=complex, format="csr")
    eye_f = sp.identity(dim_fock, dtype=complex, format="csr")
    a = sp.kron(fock_a, eye_s, format="csr")
    adag = a.conj().T.tocsr()
    num = (adag @ a).tocsr()
    sz_s, sm_s = _spin_ops(n_spins)
    sz = [sp.kron(eye_f, m, format="csr") for m in sz_s]
    sm = [sp.kron(eye_f, m, format="csr") for m in sm_s]
    spl = [m.conj().T.tocsr() for m in sm]

    delta_c = config.cavity.omega_c - config.drive.omega_in
    delta_s = config.spins.omega_s_center + config.spins.lineshape[0][0] - config.drive.omega_in
    g = config.spins.g_single
    h0 = delta_c * num + 0.5 * delta_s * sum(sz)
    h0 = h0 + g * sum(m @ adag + p @ a for m, p in zip(sm, spl))
    return Operators(dim_fock, n_spins, sp.csr_matrix(h0), a, adag, num, sz, spl, sm)


def _rhs_matrix(rho, ops: Operators, kappa, gamma_par, gamma_perp, h):
    out = -1j * (h @ rho - rho @ h)
    if kappa:
        n_rho = ops.num @ rho
        out += kappa * (ops.a @ rho @ ops.adag - 0.5 * (n_rho + rho @ ops.num))
    if gamma_par:
        for z in ops.sz:
            out += gamma_par * (z @ rho @ z - rho)
    if gamma_perp:
        for m, p in zip(ops.sm, ops.sp):
            pm = p @ m
            out += gamma_perp * (2.0 * (m @ rho @ p) - pm @ rho - rho @ pm)
    return out


def lindblad_rhs(rho: DensityMatrix, operators: Operators, kappa, gamma_par, gamma_perp, eta=0.0) -> np.ndarray:
    """d rho / dt for the master equation; returns the matrix."""
    h = operators.hamiltonian(eta)
    return _rhs_matrix(rho.data, operators, kappa, gamma_par, gamma_perp, h)


@dataclass(frozen=True)
class LindbladTrace:
    t: np.ndarray
    a: np.ndarray  # <a>
    photon_number: np.ndarray  # <a+a>
    s_minus: np.ndarray  # <S_->, collective, 1/sqrt(N) normalisation
    s_z: np.ndarray  # <S_z>, collective, 1/N normalisation
    excitation: np.ndarray  # <a+a + sum sp sm>
    fock_tail: np.ndarray
    trace: np.ndarray
    dim_fock: int
    n_spins: int

    @property
    def coherent_photon_number(self) -> np.ndarray:
        return np.abs(self.a) ** 2


def evolve_lindblad(rho0: DensityMatrix, config: ReceiverConfig, t_end, dt, stride=1,
                    operators: Operators | None = None, tail_limit=TAIL_LIMIT,
                    trace_limit=TRACE_LIMIT) -> LindbladTrace:
    """RK4 evolution of the master equation with expectation-value sampling.

    Raises :class:`TruncationError` when the top Fock level holds more than
    ``tail_limit`` population at any sample and :class:`StepSizeError` when
    the trace drifts by more than ``trace_limit``.
    """
    if abs(np.trace(rho0.data) - 1.0) > 1e-10:
        raise DomainError("initial state must have unit trace")
    ops = operators or build_operators(rho0.dim_fock, rho0.n_spins, config)
    n = ops.n_spins
    kappa = config.cavity.kappa_c
    gpar, gperp = config.spins.gamma_par, config.spins.gamma_perp
    drive = config.drive
    h_cache = {}
    held = {}

    def hamiltonian(eta):
        h = h_cache.get(eta)
        if h is None:
            h = h_cache[eta] = ops.hamiltonian(eta)
        return h

    def f(t, rho):
        h = held.get("h")
        if h is None:
            h = hamiltonian(drive_waveform(drive, t))
        return _rhs_matrix(rho, ops, kappa, gpar, gperp, h)

    def begin_step(t, step):
        # same mid-step pulse convention as the mean-field integrator
        held["h"] = hamiltonian(drive_waveform(drive, t + 0.5 * step))

    f.begin_step = begin_step

    s_dim = 2**n
    sm_sum = sum(ops.sm)
    sz_sum = sum(ops.sz)
    exc_op = ops.num + sum(p @ m for p, m in zip(ops.sp, ops.sm))

    def expect(op, rho):
        return complex(np.sum(op.multiply(rho.T)))

    def observe(t, rho):
        tr = np.trace(rho).real
        tail = float(np.trace(rho[-s_dim:, -s_dim:]).real)
        if tail > tail_limit:
            raise TruncationError(
                f"Fock tail population {tail:.3g} at t={t:.4g} s exceeds {tail_limit:g}; "
                f"increase dim_fock (now {ops.dim_fock})",
                ops.dim_fock,
                tail,
            )
        if abs(tr - 1.0) > trace_limit:
            raise StepSizeError("dt", f"trace drifted to {tr:.10g} at t={t:.4g} s; reduce dt")
        return (
            expect(ops.a, rho),
            expect(ops.num, rho).real,
            expect(sm_sum, rho) / math.sqrt(n),
            expect(sz_sum, rho).real / n,
            expect(exc_op, rho).real,
            tail,
            tr,
        )

    t, obs = integrate_fixed(f, rho0.data, t_end, dt, stride, observe=observe)
    cols = list(zip(*obs))
    return LindbladTrace(
        t=t,
        a=np.array(cols[0]),
        photon_number=np.array(cols[1]),
        s_minus=np.array(cols[2]),
        s_z=np.array(cols[3]),
        excitation=np.array(cols[4]),
        fock_tail=np.array(cols[5]),
        trace=np.array(cols[6]),
        dim_fock=ops.dim_fock,
        n_spins=n,
    )


def evolve_with_adaptive_cutoff(make_state, n_spins, config, t_end, dt, stride=1,
                                dim_fock=4, max_dim_fock=64, memory_cap=DEFAULT_MEMORY_CAP):
    """Double ``dim_fock`` until the Fock tail stays below the limit.

    ``make_state(dim_fock)`` builds the initial :class:`DensityMatrix`.
    """
    while True:
        ops = build_operators(dim_fock, n_spins, config, memory_cap)
        try:
            return evolve_lindblad(make_state(dim_fock), config, t_end, dt, stride, ops)
        except TruncationError:
            if dim_fock * 2 > max_dim_fock:
                raise
            dim_fock *= 2
