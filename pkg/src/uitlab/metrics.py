"""Distances, Monte Carlo summaries and rate fitting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from uitlab.errors import FitFailure, InvalidArgument


@dataclass
class ErrorCurve:
    """Time-indexed Monte Carlo estimate with its standard errors.

    ``meta`` carries the sweep value (``delta`` or ``N``), replica count,
    seed and any quality flags raised while producing the curve.
    """

    times: np.ndarray
    values: np.ndarray
    std_errors: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self.std_errors = np.asarray(self.std_errors, dtype=float)
        if not (len(self.times) == len(self.values) == len(self.std_errors)):
            raise InvalidArgument("times, values and std_errors must have equal length")

    def __len__(self):
        return len(self.times)

    @property
    def flags(self):
        return self.meta.setdefault("flags", [])

    def window(self, lo, hi):
        mask = (self.times >= lo - 1e-12) & (self.times <= hi + 1e-12)
        return self.times[mask], self.values[mask], self.std_errors[mask]

    def sup(self, lo=-math.inf, hi=math.inf):
        """``(max value, its standard error)`` over ``[lo, hi]``."""
        _, v, se = self.window(lo, hi)
        if len(v) == 0:
            raise InvalidArgument(f"no curve points in window [{lo}, {hi}]")
        i = int(np.argmax(v))
        return float(v[i]), float(se[i])

    def value_at(self, t):
        i = int(np.argmin(np.abs(self.times - t)))
        return float(self.values[i]), float(self.std_errors[i])


@dataclass(frozen=True)
class RateFit:
    exponent: float
    intercept: float
    r_squared: float
    n_points: int


def mean_and_se(samples):
    """Sample mean and standard error ``s / sqrt(n)`` with compensated sums."""
    xs = [float(s) for s in samples]
    n = len(xs)
    if n < 2:
        raise InvalidArgument("mean_and_se needs at least two samples")
    mean = math.fsum(xs) / n
    var = math.fsum((x - mean) ** 2 for x in xs) / (n - 1)
    return mean, math.sqrt(var / n)


def column_mean_se(samples):
    """Column-wise mean and standard error of an ``(n, m)`` sample array."""
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[0]
    if n < 2:
        raise InvalidArgument("need at least two samples per column")
    mean = samples.mean(axis=0)
    var = ((samples - mean) ** 2).sum(axis=0) / (n - 1)
    return mean, np.sqrt(var / n)


def w2_empirical_1d(a, b):
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if len(a) != len(b):
        raise InvalidArgument(f"sample sizes differ: {len(a)} vs {len(b)}")
    if len(a) == 0:
        raise InvalidArgument("empty samples")
    return float(np.sqrt(np.mean((a - b) ** 2)))


def w2_gaussian(m1, v1, m2, v2):
    if v1 < 0 or v2 < 0:
        raise InvalidArgument("variances must be non-negative")
    return math.hypot(m1 - m2, math.sqrt(v1) - math.sqrt(v2))


def _linear_fit(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.ptp(x) == 0:
        raise FitFailure("all abscissae are equal")
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    ss_tot = float(np.sum((y - ym) ** 2))
    ss_res = float(np.sum((y - intercept - slope * x) ** 2))
    r2 = 1.0 if ss_tot == 0 else max(0.0, 1.0 - ss_res / ss_tot)
    return slope, intercept, r2


def fit_power_law(points):
    """Least-squares slope of ``log value`` against ``log scale``."""
    points = list(points)
    if len(points) < 2:
        raise InvalidArgument("need at least two points")
    scale = np.array([p[0] for p in points], dtype=float)
    value = np.array([p[1] for p in points], dtype=float)
    if np.any(scale <= 0) or np.any(value <= 0):
        raise InvalidArgument("scales and values must be positive")
    slope, intercept, r2 = _linear_fit(np.log(scale), np.log(value))
    return RateFit(slope, intercept, r2, len(points))


def fit_exp_decay(curve, window):
    """Rate ``-slope`` of ``log value`` against ``t`` inside ``window``.

    Only points whose value exceeds ten standard errors are used.  Curves of
    squared distances give twice the contraction rate; halving is left to the
    caller.
    """
    t, v, se = curve.window(*window)
    usable = (v > 0) & (v > 10 * se)
    if usable.sum() < 3:
        raise FitFailure(
            f"only {int(usable.sum())} usable points above the noise floor in {window}"
        )
    slope, intercept, r2 = _linear_fit(t[usable], np.log(v[usable]))
    return RateFit(-slope, intercept, r2, int(usable.sum()))


def plateau_stat(curve, early, late):
    """Late-window maximum over early-window maximum."""
    _, ve, _ = curve.window(*early)
    _, vl, _ = curve.window(*late)
    if len(ve) == 0 or len(vl) == 0:
        raise InvalidArgument(f"empty window: early={early}, late={late}")
    e, l = float(np.max(ve)), float(np.max(vl))
    if e == 0:
        return 1.0 if l == 0 else math.inf
    return l / e
