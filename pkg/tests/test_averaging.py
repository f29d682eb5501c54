import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.polynomial.hermite_e import hermegauss
from scipy.optimize import fsolve

from uitlab.averaging import (
    AveragedModel,
    SlowFastModel,
    averaged_drift,
    contraction_rate_from_curve,
    estimate_contraction,
    contraction_curve,
    integration_step,
    moment_bounds,
    moment_curves,
    self_discretisation_error,
    simulate_paths,
    simulate_strong_error,
    simulate_weak_error,
    slowfast_step,
    strong_error_curve,
    weak_error_curve,
)
from uitlab.errors import InvalidArgument

E_HALF = math.exp(-0.5)


def frozen_mean_of_cos(x, r, nodes=40):
    """E cos(Y) for Y ~ N(r sin x, 1) by Gauss-Hermite quadrature."""
    z, w = hermegauss(nodes)
    return float(np.sum(w * np.cos(r * np.sin(x) + z)) / math.sqrt(2 * math.pi))


def test_decoupled_step_is_ou_euler():
    m = SlowFastModel(0.0, 0.1)
    x, _ = slowfast_step(m, (0.8, 3.0), 0.001, 0.02, -0.01)
    assert x == pytest.approx(0.8 - 0.8 * 0.001 + math.sqrt(2) * 0.02, abs=1e-15)


def test_zero_noise_step_from_origin():
    x, y = slowfast_step(SlowFastModel(1.0, 0.1), (0.0, 0.0), 0.001, 0.0, 0.0)
    assert x == pytest.approx(-0.001, abs=1e-15)
    assert y == pytest.approx(0.0, abs=1e-15)


def test_fixed_point_of_the_drift_stays_put():
    r = 1.0
    x, y = fsolve(lambda z: [z[0] + r * math.cos(z[1]), z[1] - r * math.sin(z[0])], [-0.8, 0.7],
                  xtol=1e-14)
    assert abs(x + r * math.cos(y)) < 1e-10 and abs(y - r * math.sin(x)) < 1e-10
    x1, y1 = slowfast_step(SlowFastModel(r, 0.1), (x, y), 0.001, 0.0, 0.0)
    assert abs(x1 - x) < 1e-10 and abs(y1 - y) < 1e-10


def test_stiffness_guard():
    with pytest.raises(InvalidArgument):
        slowfast_step(SlowFastModel(1.0, 0.01), (0.0, 0.0), 0.001, 0.0, 0.0)
    assert integration_step(0.01) == pytest.approx(0.0005)
    assert integration_step(0.5) == 0.001


def test_averaged_drift_examples():
    assert averaged_drift(0.0, 1.0) == pytest.approx(-E_HALF, abs=1e-15)
    assert averaged_drift(0.0, 2.0) == pytest.approx(-1.21306, abs=1e-5)
    assert averaged_drift(1.7, 0.0) == -1.7


@pytest.mark.parametrize("r", [0.0, 0.5, 1.0, 2.0])
@pytest.mark.parametrize("x", [-3, -2, -1, 0, 1, 2, 3])
def test_averaged_drift_matches_quadrature(x, r):
    assert averaged_drift(x, r) == pytest.approx(-x - r * frozen_mean_of_cos(x, r), abs=1e-10)


def test_decoupled_strong_error_vanishes():
    c = simulate_strong_error(SlowFastModel(0.0, 0.05), 2.0, 100, 0, check_floor=False)
    h = integration_step(0.05)
    assert np.all(c.values <= 10 * h * h * c.times + 1e-300)


def test_strong_error_needs_enough_replicas():
    with pytest.raises(InvalidArgument):
        simulate_strong_error(SlowFastModel(1.0, 0.05), 1.0, 50, 0)


def test_floor_is_reported_in_metadata():
    c = simulate_strong_error(SlowFastModel(1.0, 0.05), 3.0, 200, 0, floor_reps=100)
    assert 0 < c.meta["floor"] < c.values.max() / 5
    assert "discretisation_floor" not in c.flags


def test_weak_error_of_constant_is_zero():
    paths = simulate_paths(SlowFastModel(1.0, 0.05), 1.0, 100, 0)
    c = weak_error_curve(paths, lambda x: np.full_like(x, 3.0))
    assert np.all(c.values == 0.0)


def test_decoupled_weak_error_vanishes():
    c = simulate_weak_error(SlowFastModel(0.0, 0.05), "tanh", 2.0, 100, 1)
    assert np.all(c.values == 0.0)


def test_unknown_weak_test_function():
    paths = simulate_paths(SlowFastModel(1.0, 0.05), 0.1, 100, 0)
    with pytest.raises(InvalidArgument):
        weak_error_curve(paths, "sinc")


def test_moments_start_from_initial_condition():
    paths = simulate_paths(SlowFastModel(1.0, 0.05), 1.0, 100, 0, x0=0.5, y0=-0.2)
    mx, my = moment_curves(paths)
    assert mx.values[0] == 0.25 and my.values[0] == pytest.approx(0.04)


def test_decoupled_stationary_second_moment():
    paths = simulate_paths(SlowFastModel(0.0, 0.1), 10.0, 4000, 2)
    mx, _ = moment_curves(paths)
    h = paths.h
    assert abs(mx.values[-1] - 1.0 / (1 - h / 2)) <= 3 * mx.std_errors[-1]
    assert abs(mx.values[-1] - 1.0) <= 3 * mx.std_errors[-1] + h


def test_moment_bounds_hold_at_every_time():
    m = SlowFastModel(1.0, 0.05)
    paths = simulate_paths(m, 5.0, 1000, 3, x0=1.5, y0=-2.0)
    mx, my = moment_curves(paths)
    bx, by = moment_bounds(mx.times, 1.0, 0.05, 1.5**2, 2.0**2)
    assert np.all(mx.values <= bx + 3 * mx.std_errors)
    assert np.all(my.values <= by + 3 * my.std_errors)


def test_same_seed_same_paths_across_threads():
    m = SlowFastModel(1.0, 0.05)
    a = simulate_paths(m, 0.5, 2100, 5, threads=1)
    b = simulate_paths(m, 0.5, 2100, 5, threads=4)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.xbar, b.xbar)


def test_self_discretisation_error_shrinks_with_step():
    m = SlowFastModel(1.0, 0.1)
    coarse = self_discretisation_error(m, 2.0, 200, 0, h=0.004).values.max()
    fine = self_discretisation_error(m, 2.0, 200, 0, h=0.002).values.max()
    assert 0 < fine < coarse


def test_contraction_without_coupling_is_exact_decay():
    fit = estimate_contraction(AveragedModel(0.0), 0.0, 2.0, 5.0, 200, 0)
    # Euler on dD = -D dt decays at -log(1 - h)/h per unit time
    assert fit.exponent == pytest.approx(-math.log1p(-1e-3) / 1e-3, abs=1e-9)
    assert abs(fit.exponent - 1.0) <= 1e-3


@pytest.mark.parametrize("r", [0.5, 1.0, 1.5])
def test_contraction_rate_respects_lower_bound(r):
    curve = contraction_curve(AveragedModel(r), 0.0, 2.0, 5.0, 1000, 1)
    lam = contraction_rate_from_curve(curve).exponent
    bound = AveragedModel(r).contraction_rate
    assert lam >= 0.9 * bound
    if r == 1.0:
        assert lam >= 0.35
    if r == 1.5:
        assert bound == pytest.approx(0.0902, abs=1e-4)


def test_contraction_needs_distinct_starts():
    with pytest.raises(InvalidArgument):
        contraction_curve(AveragedModel(1.0), 1.0, 1.0, 1.0, 100, 0)


@given(st.floats(-10, 10), st.floats(0, 1.6))
def test_averaged_drift_is_one_sided_lipschitz(x, r):
    # one-sided bound: (b(x) - b(x')) (x - x') <= -(1 - r^2 e^{-1/2}) |x - x'|^2
    xp = x + 0.37
    lhs = (averaged_drift(x, r) - averaged_drift(xp, r)) * (x - xp)
    assert lhs <= -(1 - r * r * E_HALF) * (x - xp) ** 2 + 1e-12
