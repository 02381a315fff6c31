"""Small hand-built configurations shared by the tests."""

import math

from maser_receiver.model import (
    TWO_PI,
    CavityParams,
    DriveParams,
    ReceiverConfig,
    SimSettings,
    SpinEnsembleParams,
)

W0 = TWO_PI * 1e9


def make_config(g_eff=TWO_PI * 1e6, n=100.0, q=math.inf, gamma_par=0.0, gamma_perp=0.0, sz=0.81,
                amp=0.0, seed=0.0, delta_c=0.0, delta_s=0.0, t_end=1e-6, dt=1e-9, **sim):
    # delta_c and delta_s are the cavity and spin detunings from the drive
    cav = CavityParams(W0, q, 1e-6)
    spins = SpinEnsembleParams(W0 - delta_c + delta_s, n, g_eff / math.sqrt(n), gamma_par, gamma_perp, sz)
    drive = DriveParams(W0 - delta_c, amplitude=amp, pulse_start=0.0, pulse_duration=t_end, seed_s_minus=seed)
    return ReceiverConfig(cav.retuned(W0), spins, drive, SimSettings(t_end=t_end, dt=dt, **sim))
