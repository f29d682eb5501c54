import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uitlab.errors import FitFailure, InvalidArgument
from uitlab.metrics import (
    ErrorCurve,
    fit_exp_decay,
    fit_power_law,
    mean_and_se,
    plateau_stat,
    w2_empirical_1d,
    w2_gaussian,
)

samples = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=8)


def brute_force_w2(a, b):
    n = len(a)
    return min(
        math.sqrt(sum((a[i] - b[p]) ** 2 for i, p in enumerate(perm)) / n)
        for perm in itertools.permutations(range(n))
    )


@pytest.mark.parametrize("a,b,expected", [
    ([0, 1], [0, 1], 0.0),
    ([0], [1], 1.0),
    ([0, 2], [1, 3], 1.0),
])
def test_w2_empirical_examples(a, b, expected):
    assert w2_empirical_1d(a, b) == pytest.approx(expected, abs=1e-15)
    assert w2_empirical_1d(a, b) == pytest.approx(brute_force_w2(a, b), abs=1e-15)


def test_w2_empirical_matches_exhaustive_matching():
    rng = np.random.default_rng(0)
    for trial in range(100):
        n = 1 + trial % 6
        a, b = rng.standard_normal(n), rng.standard_normal(n)
        assert w2_empirical_1d(a, b) == pytest.approx(brute_force_w2(a, b), abs=1e-12)


def test_w2_empirical_size_mismatch():
    with pytest.raises(InvalidArgument):
        w2_empirical_1d([0, 1], [0])


@given(st.integers(1, 8).flatmap(lambda n: st.tuples(*[st.lists(
    st.floats(-100, 100, allow_nan=False), min_size=n, max_size=n)] * 3)))
def test_w2_empirical_is_a_pseudometric(triple):
    a, b, c = triple
    assert w2_empirical_1d(a, b) == w2_empirical_1d(b, a)
    assert w2_empirical_1d(a, a) == 0.0
    assert w2_empirical_1d(a, c) <= w2_empirical_1d(a, b) + w2_empirical_1d(b, c) + 1e-12


@pytest.mark.parametrize("args,expected", [
    ((0, 1, 0, 1), 0.0),
    ((0, 1, 1, 1), 1.0),
    ((0, 1, 0, 4), 1.0),
])
def test_w2_gaussian_examples(args, expected):
    assert w2_gaussian(*args) == pytest.approx(expected, abs=1e-15)


def test_w2_gaussian_agrees_with_empirical_estimator():
    rng = np.random.default_rng(1)
    a = rng.standard_normal(10**6)
    b = 2.0 * rng.standard_normal(10**6)
    assert abs(w2_empirical_1d(a, b) - w2_gaussian(0, 1, 0, 4)) <= 0.01


def test_fit_power_law_exact_lines():
    fit = fit_power_law([(0.1, 0.1), (0.01, 0.01)])
    assert fit.exponent == pytest.approx(1.0, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit_power_law([(0.1, 0.01), (0.01, 0.0001)]).exponent == pytest.approx(2.0, abs=1e-12)


def test_fit_power_law_three_points():
    pts = [(0.1, 0.012), (0.05, 0.0031), (0.025, 0.0008)]
    # hand least squares on the log pairs
    x, y = np.log([p[0] for p in pts]), np.log([p[1] for p in pts])
    slope = np.sum((x - x.mean()) * (y - y.mean())) / np.sum((x - x.mean()) ** 2)
    fit = fit_power_law(pts)
    assert fit.exponent == pytest.approx(slope, abs=1e-12)
    assert abs(fit.exponent - 1.95) <= 0.1


def test_fit_power_law_rejects_non_positive():
    with pytest.raises(InvalidArgument):
        fit_power_law([(0.1, 0.0), (0.01, 0.01)])
    with pytest.raises(FitFailure):
        fit_power_law([(0.1, 0.1), (0.1, 0.2)])


@given(st.floats(1e-3, 1e3), st.floats(0.2, 3.0))
def test_fit_power_law_is_scale_equivariant(c, alpha):
    pts = [(d, d**alpha * (1 + 0.1 * math.sin(7 * d))) for d in (0.2, 0.1, 0.05, 0.025)]
    base = fit_power_law(pts)
    scaled = fit_power_law([(d, c * v) for d, v in pts])
    assert scaled.exponent == pytest.approx(base.exponent, abs=1e-12)
    assert scaled.intercept == pytest.approx(base.intercept + math.log(c), abs=1e-9)


def curve(t, v, se=None):
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    return ErrorCurve(t, v, np.zeros_like(v) if se is None else se)


def test_fit_exp_decay_examples():
    t = np.array([1.0, 2.0, 3.0])
    fit = fit_exp_decay(curve(t, np.exp(-t)), (0, 4))
    assert fit.exponent == pytest.approx(1.0, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit_exp_decay(curve(t, np.full(3, 0.7)), (0, 4)).exponent == pytest.approx(0.0, abs=1e-12)


def test_fit_exp_decay_with_noise():
    t = np.arange(1.0, 11.0)
    rng = np.random.default_rng(2)
    v = 2 * np.exp(-0.4 * t) + 1e-6 * rng.standard_normal(t.size)
    assert 0.39 <= fit_exp_decay(curve(t, v), (1, 10)).exponent <= 0.41


def test_fit_exp_decay_needs_points_above_noise():
    t = np.arange(5.0)
    with pytest.raises(FitFailure):
        fit_exp_decay(curve(t, np.full(5, 1e-3), np.full(5, 1.0)), (0, 5))


def test_plateau_stat_examples():
    t = np.linspace(0, 20, 201)
    assert plateau_stat(curve(t, np.ones_like(t)), (2, 5), (10, 20)) == 1.0
    assert plateau_stat(curve(t, np.exp(-t)), (2, 5), (10, 20)) < 1.0
    eps = 1e-6
    bump = np.where((t > 10) & (t <= 11), t - 10, np.where(t > 11, np.exp(-(t - 11)), 0.0)) + eps
    assert plateau_stat(curve(t, bump), (2, 5), (10, 20)) == pytest.approx(1 / eps, rel=1e-5)


@given(st.floats(1e-6, 1e6))
def test_plateau_stat_is_scale_invariant(c):
    t = np.linspace(0, 20, 101)
    v = 1 + np.sin(t) ** 2
    assert plateau_stat(curve(t, c * v), (2, 5), (10, 20)) == pytest.approx(
        plateau_stat(curve(t, v), (2, 5), (10, 20)), rel=1e-12)


def test_mean_and_se_examples():
    assert mean_and_se([1, 1, 1]) == (1.0, 0.0)
    m, se = mean_and_se([0, 2])
    assert (m, se) == pytest.approx((1.0, 1.0))
    m, _ = mean_and_se(np.random.default_rng(3).standard_normal(10**6))
    assert abs(m) <= 0.004
    with pytest.raises(InvalidArgument):
        mean_and_se([1.0])


def test_error_curve_window_and_sup():
    c = curve([0, 1, 2, 3], [0.1, 0.5, 0.2, 0.4], np.array([0.0, 0.05, 0.0, 0.0]))
    assert c.sup(0.5, 2.5) == (0.5, 0.05)
    assert c.value_at(2.9) == (0.4, 0.0)
    with pytest.raises(InvalidArgument):
        c.sup(10, 11)
