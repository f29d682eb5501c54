"""Slow-fast averaging for the cosine/sine example.

The coupled system is

    dX = (-X - r cos Y) dt + sqrt(2) dW
    dY = (-Y + r sin X) / delta dt + sqrt(2 / delta) dB

and its averaged limit is ``dXbar = averaged_drift(Xbar, r) dt + sqrt(2) dW``.
Strong-error experiments drive ``X`` and ``Xbar`` with the same ``W``
increments; ``B`` comes from an independent stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from uitlab.errors import InvalidArgument
from uitlab.metrics import ErrorCurve, column_mean_se, fit_exp_decay
from uitlab.stochastic import (
    TimeGrid,
    check_finite,
    make_stream,
    output_indices,
    run_blocks,
)

H_BASE = 1e-3
STIFFNESS_RATIO = 20
FLOOR_FACTOR = 5.0
FLOOR_REPS = 200
#: steps whose noise is drawn in one call
CHUNK = 2048

SQRT2 = math.sqrt(2.0)
E_HALF = math.exp(-0.5)


@dataclass(frozen=True)
class SlowFastModel:
    r: float
    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise InvalidArgument("delta must be positive")

    @property
    def contractive(self):
        return self.r <= math.sqrt(math.e)


@dataclass(frozen=True)
class AveragedModel:
    r: float

    @property
    def lipschitz_bound(self):
        return 1.0 + abs(self.r) * E_HALF

    @property
    def contraction_rate(self):
        """Rate ``1 - r e^{-1/2}`` from the synchronous-coupling estimate."""
        return 1.0 - self.r * E_HALF

    def drift(self, x):
        return averaged_drift(x, self.r)


def averaged_drift(x, r):
    """Drift of the averaged slow equation.

    The frozen fast process has invariant law N(r sin x, 1) and
    ``E cos Z = e^{-1/2} cos m`` for ``Z ~ N(m, 1)``.
    """
    return -x - r * E_HALF * np.cos(r * np.sin(x))


def integration_step(delta, h_base=H_BASE):
    return min(h_base, delta / STIFFNESS_RATIO)


def _sf_update(x, y, h, r, delta, dW, dB):
    return (
        x + (-x - r * np.cos(y)) * h + SQRT2 * dW,
        y + (-y + r * np.sin(x)) * (h / delta) + math.sqrt(2.0 / delta) * dB,
    )


def _folded(dt, r, delta):
    # (1 - h, r h, 1 - h/delta, r h/delta, r e^{-1/2} h) for the in-loop updates
    return (1.0 - dt, r * dt, 1.0 - dt / delta, r * dt / delta, r * E_HALF * dt)


def _avg_update(x, h, r, dW):
    return x + averaged_drift(x, r) * h + SQRT2 * dW


def slowfast_step(m, state, h, dW, dB):
    """One Euler step of the coupled pair."""
    if not h > 0:
        raise InvalidArgument("step must be positive")
    if h > m.delta / STIFFNESS_RATIO * (1 + 1e-9):
        raise InvalidArgument(
            f"step {h} exceeds delta/{STIFFNESS_RATIO} = {m.delta / STIFFNESS_RATIO}"
        )
    x, y = state
    x, y = _sf_update(np.asarray(x, float), np.asarray(y, float), h, m.r, m.delta, dW, dB)
    check_finite(x, 0, "slow state")
    check_finite(y, 0, "fast state")
    return x, y


@dataclass
class SlowFastPaths:
    """Per-replica samples at the output times."""

    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    xbar: np.ndarray
    h: float
    meta: dict


def simulate_paths(m, horizon, n_reps, seed, x0=0.0, y0=0.0, h=None, threads=None,
                   tag="averaging"):
    """Simulate ``(X, Y)`` and ``Xbar`` on a shared ``W`` and record them."""
    if not horizon > 0:
        raise InvalidArgument("horizon must be positive")
    grid = TimeGrid.covering(horizon, h if h is not None else integration_step(m.delta))
    rec = output_indices(grid.n_steps)
    dt, r, delta = grid.dt, m.r, m.delta
    ax, cx, ay, cy, cb = _folded(dt, r, delta)
    nw, nb = SQRT2 * math.sqrt(dt), math.sqrt(2.0 * dt / delta)

    def block(b, first, size):
        sw = make_stream(seed, (tag, b, 0))
        sb = make_stream(seed, (tag, b, 1))
        x = np.full(size, float(x0))
        y = np.full(size, float(y0))
        xb = x.copy()
        out = np.empty((3, size, len(rec)))
        j = 0
        if rec[0] == 0:
            out[:, :, 0] = x, y, xb
            j = 1
        k = 0
        while k < grid.n_steps:
            n = min(CHUNK, grid.n_steps - k)
            # pre-scaled noise: sqrt(2) dW and sqrt(2/delta) dB
            zw = sw.standard_normal((n, size))
            zw *= nw
            zb = sb.standard_normal((n, size))
            zb *= nb
            for i in range(n):
                x, y = ax * x - cx * np.cos(y) + zw[i], ay * y + cy * np.sin(x) + zb[i]
                xb = ax * xb - cb * np.cos(r * np.sin(xb)) + zw[i]
                k += 1
                if j < len(rec) and rec[j] == k:
                    out[:, :, j] = x, y, xb
                    j += 1
            check_finite(x, k, "slow state", first)
            check_finite(y, k, "fast state", first)
            check_finite(xb, k, "averaged state", first)
        return out.transpose(1, 0, 2)

    data = run_blocks(block, n_reps, threads)
    meta = {"delta": m.delta, "r": m.r, "replicas": n_reps, "seed": seed, "h": dt}
    return SlowFastPaths(grid.t0 + rec * dt, data[:, 0], data[:, 1], data[:, 2], dt, meta)


def _curve(times, samples, meta):
    mean, se = column_mean_se(samples)
    return ErrorCurve(times, mean, se, dict(meta))


def strong_error_curve(paths):
    return _curve(paths.times, (paths.x - paths.xbar) ** 2, paths.meta)


def self_discretisation_error(m, horizon, n_reps, seed, x0=0.0, y0=0.0, h=None,
                              threads=None):
    """``E|X_h - X_{h/2}|^2 + E|Xbar_h - Xbar_{h/2}|^2`` over time.

    Both resolutions see the same Brownian path: the coarse run uses pairwise
    sums of the fine increments.
    """
    grid = TimeGrid.covering(horizon, h if h is not None else integration_step(m.delta))
    dt, r, delta = grid.dt, m.r, m.delta
    rec = output_indices(grid.n_steps)
    coarse = _folded(dt, r, delta)
    fine = _folded(dt / 2, r, delta)
    nw, nb = math.sqrt(dt), math.sqrt(dt / delta)  # sqrt(2 * dt/2), sqrt(2/delta * dt/2)

    def advance(c, x, y, xb, w, v):
        ax, cx, ay, cy, cb = c
        return (ax * x - cx * np.cos(y) + w, ay * y + cy * np.sin(x) + v,
                ax * xb - cb * np.cos(r * np.sin(xb)) + w)

    def block(b, first, size):
        sw = make_stream(seed, ("averaging-floor", b, 0))
        sb = make_stream(seed, ("averaging-floor", b, 1))
        xc = np.full(size, float(x0))
        yc = np.full(size, float(y0))
        ac = xc.copy()
        xf, yf, af = xc.copy(), yc.copy(), xc.copy()
        out = np.zeros((size, len(rec)))
        j = 1 if rec[0] == 0 else 0
        k = 0
        while k < grid.n_steps:
            n = min(CHUNK // 2, grid.n_steps - k)
            zw = sw.standard_normal((n, 2, size))
            zw *= nw
            zb = sb.standard_normal((n, 2, size))
            zb *= nb
            cw = zw.sum(axis=1)
            cb = zb.sum(axis=1)
            for i in range(n):
                xf, yf, af = advance(fine, xf, yf, af, zw[i, 0], zb[i, 0])
                xf, yf, af = advance(fine, xf, yf, af, zw[i, 1], zb[i, 1])
                xc, yc, ac = advance(coarse, xc, yc, ac, cw[i], cb[i])
                k += 1
                if j < len(rec) and rec[j] == k:
                    out[:, j] = (xc - xf) ** 2 + (ac - af) ** 2
                    j += 1
            check_finite(xf, k, "slow state", first)
        return out

    data = run_blocks(block, n_reps, threads)
    meta = {"delta": m.delta, "r": m.r, "replicas": n_reps, "seed": seed, "h": dt}
    return _curve(grid.t0 + rec * dt, data, meta)


def simulate_strong_error(m, horizon, n_reps, seed, x0=0.0, y0=0.0, threads=None,
                          check_floor=True, floor_reps=None):
    """``E|X_t^delta - Xbar_t|^2`` under synchronous coupling in ``W``.

    When ``check_floor`` is set the run is flagged ``discretisation_floor``
    unless its sup exceeds five times the integrator's own h-vs-h/2 error.
    """
    if n_reps < 100:
        raise InvalidArgument("n_reps must be at least 100")
    paths = simulate_paths(m, horizon, n_reps, seed, x0, y0, threads=threads)
    curve = strong_error_curve(paths)
    if check_floor:
        nf = floor_reps or min(n_reps, FLOOR_REPS)
        floor = self_discretisation_error(m, horizon, nf, seed, x0, y0, threads=threads)
        floor = float(floor.values.max())
        curve.meta["floor"] = floor
        if not curve.values.max() > FLOOR_FACTOR * floor:
            curve.flags.append("discretisation_floor")
    return curve


WEAK_TEST_FUNCTIONS = {
    "tanh": np.tanh,
    "cos": np.cos,
    "inv_quad": lambda x: 1.0 / (1.0 + x * x),
}


def weak_error_curve(paths, f):
    if isinstance(f, str):
        try:
            f = WEAK_TEST_FUNCTIONS[f]
        except KeyError:
            raise InvalidArgument(
                f"unknown test function {f!r}; choose from {sorted(WEAK_TEST_FUNCTIONS)}"
            ) from None
    diff = np.broadcast_to(f(paths.x) - f(paths.xbar), paths.x.shape)
    mean, se = column_mean_se(diff)
    return ErrorCurve(paths.times, np.abs(mean), se, dict(paths.meta))


def simulate_weak_error(m, f, horizon, n_reps, seed, x0=0.0, y0=0.0, threads=None):
    """``|E f(X_t^delta) - E f(Xbar_t)|`` estimated from coupled samples."""
    paths = simulate_paths(m, horizon, n_reps, seed, x0, y0, threads=threads)
    return weak_error_curve(paths, f)


def moment_curves(paths):
    return _curve(paths.times, paths.x**2, paths.meta), _curve(paths.times, paths.y**2, paths.meta)


def moment_trace(m, horizon, n_reps, seed, x0=0.0, y0=0.0, threads=None):
    """Second-moment traces ``(E|X_t|^2, E|Y_t|^2)`` of the coupled system."""
    return moment_curves(simulate_paths(m, horizon, n_reps, seed, x0, y0, threads=threads))


def moment_bounds(t, r, delta, x0_sq=0.0, y0_sq=0.0):
    """Gronwall bounds on ``E|X_t|^2`` and ``E|Y_t|^2``."""
    t = np.asarray(t, dtype=float)
    return np.exp(-t) * x0_sq + r * r + 1, np.exp(-t / delta) * y0_sq + r * r + 1


def contraction_curve(model, x0, x0p, horizon, n_reps, seed, h=H_BASE, threads=None):
    """``E|X^1_t - X^2_t|^2`` for two averaged copies on a shared ``W``."""
    if x0 == x0p:
        raise InvalidArgument("initial points must differ")
    grid = TimeGrid.covering(horizon, h)
    rec = output_indices(grid.n_steps)
    dt, r = grid.dt, model.r
    sdt = math.sqrt(dt)

    def block(b, first, size):
        sw = make_stream(seed, ("contraction", b, 0))
        a = np.full(size, float(x0))
        c = np.full(size, float(x0p))
        out = np.empty((size, len(rec)))
        j = 0
        if rec[0] == 0:
            out[:, 0] = (a - c) ** 2
            j = 1
        k = 0
        while k < grid.n_steps:
            n = min(CHUNK, grid.n_steps - k)
            dW = sw.standard_normal((n, size)) * sdt
            for i in range(n):
                a = _avg_update(a, dt, r, dW[i])
                c = _avg_update(c, dt, r, dW[i])
                k += 1
                if j < len(rec) and rec[j] == k:
                    out[:, j] = (a - c) ** 2
                    j += 1
            check_finite(a, k, "averaged state", first)
        return out

    data = run_blocks(block, n_reps, threads)
    mean, se = column_mean_se(data)
    meta = {"r": r, "replicas": n_reps, "seed": seed, "x0": x0, "x0p": x0p}
    return ErrorCurve(grid.t0 + rec * dt, mean, se, meta)


def contraction_rate_from_curve(curve, window=None):
    window = window or (0.0, float(curve.times[-1]))
    fit = fit_exp_decay(curve, window)
    # squared distances decay at twice the rate
    return type(fit)(fit.exponent / 2.0, fit.intercept, fit.r_squared, fit.n_points)


def estimate_contraction(model, x0, x0p, horizon, n_reps, seed, threads=None):
    """Fitted contraction rate of the averaged SDE under synchronous coupling."""
    curve = contraction_curve(model, x0, x0p, horizon, n_reps, seed, threads=threads)
    return contraction_rate_from_curve(curve)
