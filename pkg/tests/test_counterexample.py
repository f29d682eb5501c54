import math

import numpy as np
import pytest

from uitlab.counterexample import (
    AppendixModel,
    analytic_error,
    exact_difference,
    simulate_counterexample,
)
from uitlab.errors import InvalidArgument
from uitlab.metrics import plateau_stat


@pytest.mark.parametrize("delta", [0.2, 0.1, 0.05])
def test_closed_form_branches(delta):
    assert analytic_error(1 / delta, delta) == 0.0
    assert analytic_error(1 / delta + 1, delta) == pytest.approx(1.0, abs=1e-12)
    assert analytic_error(1 / delta + 2, delta) == pytest.approx(math.exp(-1), abs=1e-12)
    assert analytic_error(1 / delta + 2, delta) == pytest.approx(0.36788, abs=1e-5)


def test_exact_difference_solves_the_ode():
    delta = 0.1
    t = np.linspace(0, 14, 14001)
    d = exact_difference(t, delta)
    ind = ((t >= 10) & (t <= 11)).astype(float)
    dd = np.gradient(d, t)
    interior = (np.abs(t - 10) > 2e-3) & (np.abs(t - 11) > 2e-3)
    interior[[0, -1]] = False  # one-sided differences at the ends
    np.testing.assert_allclose(dd[interior], (-d + ind)[interior], atol=1e-5)
    assert d.max() == pytest.approx(1 - math.exp(-1), abs=1e-12)


def test_pre_window_values_vanish():
    m = AppendixModel(0.1, 0.01)
    c = simulate_counterexample(m, 13.0, 0)
    _, v, _ = c.window(0, 10 - 1e-9)
    assert np.all(v < 1e-12)


def test_direct_ode_and_coupled_sdes_agree():
    c = simulate_counterexample(AppendixModel(0.2, 0.01), 8.0, 1)
    assert c.meta["ode_gap"] < 1e-12
    assert np.all(c.std_errors == 0.0)


def test_grid_alignment_is_enforced():
    with pytest.raises(InvalidArgument):
        AppendixModel(0.3, 0.01)
    with pytest.raises(InvalidArgument):
        simulate_counterexample(AppendixModel(0.1, 0.01), 12.0, 0)


@pytest.mark.parametrize("delta", [0.2, 0.1, 0.05])
def test_error_is_first_order_in_h(delta):
    devs = []
    for h in (0.02, 0.01):
        c = simulate_counterexample(AppendixModel(delta, h), 1 / delta + 3, 0)
        devs.append(np.max(np.abs(c.values - exact_difference(c.times, delta))))
    assert 1.5 <= devs[0] / devs[1] <= 3


@pytest.mark.parametrize("delta", [0.2, 0.1, 0.05])
def test_error_peak_does_not_shrink_with_delta(delta):
    c = simulate_counterexample(AppendixModel(delta, 0.01), 1 / delta + 3, 0)
    peak = c.values.max()
    assert peak == pytest.approx(1 - math.exp(-1), abs=0.01)
    assert abs(c.value_at(1 / delta + 1)[0] - peak) < 1e-12
    start = 1 / delta
    assert plateau_stat(c, (0, start - 1), (start, start + 2)) > 1e3
