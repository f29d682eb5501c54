"""A time-inhomogeneous approximation whose error is not uniform in time.

The true process is ``dX = -X dt + dW``; the approximation adds a unit drift
on ``[1/delta, 1/delta + 1]``.  With one shared Brownian path the difference
``D = X^delta - X`` solves the deterministic ODE ``dD = (-D + 1_window) dt``,
so its peak sits at ``t = 1/delta + 1`` whatever ``delta`` is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from uitlab.errors import InvalidArgument
from uitlab.metrics import ErrorCurve
from uitlab.stochastic import TimeGrid, make_stream

H_DEFAULT = 0.01


@dataclass(frozen=True)
class AppendixModel:
    delta: float
    h: float = H_DEFAULT

    def __post_init__(self):
        if not self.delta > 0 or not self.h > 0:
            raise InvalidArgument("delta and h must be positive")
        for edge in (1 / self.delta, 1 / self.delta + 1):
            k = edge / self.h
            if abs(k - round(k)) > 1e-9 * max(1.0, k):
                raise InvalidArgument(f"window edge {edge} is not on the grid of step {self.h}")

    @property
    def window(self):
        return 1.0 / self.delta, 1.0 / self.delta + 1.0


def analytic_error(t, delta):
    """Reference closed form for ``X^delta_t - X_t``.

    It reads ``0``, then ``t - 1/delta`` on the window, then
    ``exp(-(t - 1/delta - 1))``.  The middle branch omits the ``-D``
    damping, so it overstates the true difference (see :func:`exact_difference`).
    """
    t = np.asarray(t, dtype=float)
    start = 1.0 / delta
    end = start + 1.0
    out = np.where(t <= start, 0.0, np.where(t <= end, t - start, np.exp(-(t - end))))
    return out if out.ndim else float(out)


def exact_difference(t, delta):
    """Solution of ``dD = (-D + 1_{[1/delta, 1/delta + 1]}) dt`` with ``D_0 = 0``."""
    t = np.asarray(t, dtype=float)
    start = 1.0 / delta
    end = start + 1.0
    peak = -math.expm1(-1.0)
    inside = -np.expm1(-(np.clip(t, start, end) - start))
    out = np.where(t <= start, 0.0, np.where(t <= end, inside, peak * np.exp(-(t - end))))
    return out if out.ndim else float(out)


def _indicator(m, k):
    # left-point rule over [t_k, t_{k+1}); exact because the edges are grid points
    lo, hi = m.window
    lo_k, hi_k = round(lo / m.h), round(hi / m.h)
    return 1.0 if lo_k <= k < hi_k else 0.0


def simulate_counterexample(m, horizon, seed, x0=0.0):
    """``|X^delta_t - X_t|`` from Euler paths of both SDEs on one Brownian path.

    The difference ODE is also integrated directly; the largest gap between
    the two routes is stored in ``meta["ode_gap"]``.
    """
    lo, hi = m.window
    if horizon < hi + 2:
        raise InvalidArgument(f"horizon must be at least 1/delta + 3 = {hi + 2}")
    grid = TimeGrid.covering(horizon, m.h)
    if abs(grid.dt - m.h) > 1e-12 * m.h:
        raise InvalidArgument(f"horizon {horizon} is not a multiple of h = {m.h}")
    dW = make_stream(seed, ("counterexample", m.delta, 0)).standard_normal(grid.n_steps)
    dW *= math.sqrt(grid.dt)
    h = grid.dt
    x = np.empty(grid.n_steps + 1)
    xd = np.empty(grid.n_steps + 1)
    d = np.empty(grid.n_steps + 1)
    x[0] = xd[0] = x0
    d[0] = 0.0
    for k in range(grid.n_steps):
        ind = _indicator(m, k)
        x[k + 1] = x[k] - x[k] * h + dW[k]
        xd[k + 1] = xd[k] + (-xd[k] + ind) * h + dW[k]
        d[k + 1] = d[k] + (-d[k] + ind) * h
    diff = np.abs(xd - x)
    meta = {
        "delta": m.delta, "h": h, "replicas": 1, "seed": seed,
        "ode_gap": float(np.max(np.abs(diff - d))), "flags": [],
    }
    return ErrorCurve(grid.times, diff, np.zeros_like(diff), meta)
