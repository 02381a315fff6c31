"""Classical fourth-order Runge-Kutta, fixed step and step doubling.

Both the mean-field equations and the density-matrix evolution run through
these routines so their step-size behaviour is directly comparable.
"""

import numpy as np

from .errors import NumericalBlowupError


def rk4_step(f, t, y, dt):
    """One RK4 step.  If ``f`` has a ``begin_step(t, dt)`` method it is called
    first, letting piecewise-constant inputs be held over the whole step."""
    begin = getattr(f, "begin_step", None)
    if begin is not None:
        begin(t, dt)
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _check_finite(y, t_prev):
    if not np.all(np.isfinite(y)):
        raise NumericalBlowupError("non-finite state during integration", t_prev)


def integrate_fixed(f, y0, t_end, dt, stride=1, observe=None):
    """Integrate ``y' = f(t, y)`` from 0 to ``t_end`` with constant ``dt``.

    Returns ``(t, ys)`` sampled every ``stride`` steps, including t = 0 and
    the final step.  With ``observe``, ``observe(t, y)`` is stored instead of
    the state; it may raise to abort the run.
    """
    n_steps = int(round(t_end / dt))
    y = np.array(y0, copy=True)
    record = observe if observe is not None else (lambda t, y: y.copy())
    ts = [0.0]
    ys = [record(0.0, y)]
    last_good = 0.0
    for i in range(1, n_steps + 1):
        t0 = (i - 1) * dt
        y = rk4_step(f, t0, y, dt)
        if i % stride == 0 or i == n_steps:
            t = i * dt
            _check_finite(y, last_good)
            last_good = t
            ts.append(t)
            ys.append(record(t, y))
    _check_finite(y, last_good)
    return np.array(ts), ys if observe is not None else np.array(ys)


def integrate_adaptive(f, y0, t_end, dt0, tolerance, sample_times, breakpoints=(), dt_min=None):
    """Step-doubling RK4 with local error control on the max-norm.

    Every entry of ``sample_times`` and ``breakpoints`` is hit exactly so
    that discontinuities in ``f`` (pulse edges) fall on step boundaries.
    """
    stops = np.unique(np.concatenate([np.asarray(sample_times, float), np.asarray(breakpoints, float)]))
    stops = stops[(stops > 0) & (stops <= t_end)]
    sample_set = set(np.asarray(sample_times, float).tolist())
    dt_min = dt_min if dt_min is not None else dt0 * 1e-6

    y = np.array(y0, copy=True)
    t = 0.0
    dt = dt0
    ts = [0.0]
    ys = [y.copy()]
    n_accept = 0
    for stop in stops:
        while t < stop:
            h = min(dt, stop - t)
            full = rk4_step(f, t, y, h)
            half = rk4_step(f, t, y, 0.5 * h)
            two = rk4_step(f, t + 0.5 * h, half, 0.5 * h)
            scale = max(np.max(np.abs(two)), 1e-300)
            err = np.max(np.abs(two - full)) / scale
            if not np.isfinite(err):
                raise NumericalBlowupError("non-finite state during integration", t)
            if err <= tolerance or h <= dt_min:
                # local extrapolation: two + (two - full)/15 is fifth order
                y = two + (two - full) / 15.0
                t = stop if stop - t - h < 1e-15 * max(stop, 1.0) else t + h
                n_accept += 1
                grow = 2.0 if err == 0 else min(2.0, 0.9 * (tolerance / err) ** 0.2)
                if h == dt:
                    dt = h * max(grow, 0.2)
            else:
                dt = h * max(0.2, 0.9 * (tolerance / err) ** 0.2)
        if stop in sample_set:
            ts.append(t)
            ys.append(y.copy())
    return np.array(ts), np.array(ys)
