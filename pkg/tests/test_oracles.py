import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sclkin.kinetic import XiGrid, reconstruct_u
from sclkin.oracles import (HeavisideMixture, burgers_characteristics, burgers_periodic_step, burgers_riemann,
                            collapse_exact, collapse_measure, collapse_numeric, erased_interval_example)

F0 = HeavisideMixture((0.25, 0.75), (-1.0, 1.0))


def test_mixture_basics():
    assert F0.u0 == pytest.approx(0.5)
    assert F0.value(0.0) == pytest.approx(0.75)
    assert F0.M0(-2.0) == 0.0
    # M0(xi) = 0.25 (min(xi, .5) + 1) - 0.75 (min(xi, 1) - min(xi, .5)) ... at xi = 0.5
    assert F0.M0(0.5) == pytest.approx(0.25 * 1.5)
    assert F0.M0(5.0) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        HeavisideMixture((0.5, 0.6), (0.0, 1.0))


def test_collapse_exact_conserves_and_relaxes():
    xg = XiGrid.covering(-1.0, 1.0, m=64)
    for t in (0.0, 0.3, 2.0):
        f = collapse_exact(F0, t, xg)
        assert f.is_valid()
        assert float(reconstruct_u(f)[0]) == pytest.approx(0.5, abs=1e-12)
    far = collapse_exact(F0, 40.0, xg)
    ind = np.clip((0.5 - xg.edges[:-1]) / xg.width, 0, 1)
    np.testing.assert_allclose(far.values[0], ind, atol=1e-15)


def test_collapse_numeric_first_order():
    xg = XiGrid.covering(-1.0, 1.0, m=64)
    ex = collapse_exact(F0, 1.0, xg).values
    errs = [np.max(np.abs(collapse_numeric(F0, 1.0, dt, xg).values - ex)) for dt in (0.1, 0.05, 0.025)]
    assert errs[0] > errs[1] > errs[2]
    assert math.log2(errs[1] / errs[2]) == pytest.approx(1.0, abs=0.1)
    with pytest.raises(ValueError):
        collapse_numeric(F0, 1.0, 0.3, xg)


def test_collapse_measure_closed_form_and_grid():
    xg = XiGrid(0.125, -16, 32)
    xi = np.linspace(-1.5, 1.5, 13)
    np.testing.assert_allclose(collapse_measure(F0, 0.7, xi), math.exp(-0.7) * F0.M0(xi), atol=1e-15)
    edges = xg.edges[(xg.edges > -1.5) & (xg.edges < 1.5)]
    np.testing.assert_allclose(collapse_measure(F0, 0.7, edges, xg), math.exp(-0.7) * F0.M0(edges), atol=1e-12)
    assert np.all(collapse_measure(F0, 0.7, xi) >= 0)


@given(st.lists(st.floats(-1, 1), min_size=2, max_size=4), st.floats(0, 5))
def test_collapse_mass_conservation(levels, t):
    w = tuple([1.0 / len(levels)] * len(levels))
    w = w[:-1] + (1.0 - sum(w[:-1]),)
    f0 = HeavisideMixture(w, tuple(levels))
    xg = XiGrid.covering(-1, 1, m=40)
    assert float(reconstruct_u(collapse_exact(f0, t, xg))[0]) == pytest.approx(f0.u0, abs=1e-12)


def test_erased_interval_structure():
    ex = erased_interval_example(F0, 0.4, 0.9, T=1.5, n_t_bins=15)
    assert ex.snapshots.shape == (16, 1, ex.xi_grid.m)
    np.testing.assert_allclose(ex.at(0.6).values, collapse_exact(F0, 1.1, ex.xi_grid).values)
    tm = ex.measure.t_marginal()
    jb = int(np.argmax(tm))
    assert ex.measure.t_edges[jb] <= 0.4 < ex.measure.t_edges[jb + 1]
    total = float(np.sum(F0.M0_bin_integral(ex.xi_grid)))
    # smooth part over [0, T] of e^-tau plus the atom equals the full collapse from 0 to T + t2 - t1
    assert ex.measure.total_mass == pytest.approx(total * (1 - math.exp(-2.0)), rel=1e-12)
    with pytest.raises(ValueError):
        erased_interval_example(F0, 0.9, 0.4)


def test_burgers_riemann():
    x = np.array([-1.0, 0.0, 0.2, 0.49, 0.51, 1.0])
    np.testing.assert_array_equal(burgers_riemann(1.0, 0.0, x, 1.0), [1, 1, 1, 1, 0, 0])
    np.testing.assert_allclose(burgers_riemann(0.0, 1.0, x, 1.0), [0, 0, 0.2, 0.49, 0.51, 1.0])
    np.testing.assert_array_equal(burgers_riemann(1.0, 0.0, x, 0.0), [1, 0, 0, 0, 0, 0])


def test_burgers_periodic_step():
    x = np.array([0.05, 0.2, 0.5, 0.69, 0.71, 0.9])
    u = burgers_periodic_step(x, 0.4, 1.0, 0.0, 0.5)
    # rarefaction fan at 0 covers [0, 0.4]; shock at 0.5 moves to 0.7
    np.testing.assert_allclose(u, [0.125, 0.5, 1.0, 1.0, 0.0, 0.0])
    assert np.mean(burgers_periodic_step(np.arange(1000) / 1000, 0.4)) == pytest.approx(0.5, abs=2e-3)
    with pytest.raises(ValueError):
        burgers_periodic_step(x, 2.0)


def test_burgers_characteristics():
    u0 = lambda y: 0.5 + 0.25 * np.sin(2 * np.pi * y)
    t = 0.3
    y = np.linspace(0, 1, 11)
    np.testing.assert_allclose(burgers_characteristics(u0, y + t * u0(y), t), u0(y), atol=1e-12)
    assert burgers_characteristics(u0, [0.3], 0.0)[0] == pytest.approx(u0(0.3))
