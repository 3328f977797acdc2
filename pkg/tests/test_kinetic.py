import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sclkin.flux import make_entropy
from sclkin.grid import GridField, TorusGrid
from sclkin.kinetic import (EmpiricalYoungMeasure, KineticFunction, KineticMeasure, SeparableTest, SpatialTest,
                            TimeTest, XiGrid, XiTest, accumulate_kinetic_measure, chi, detect_time_atoms,
                            entropy_dissipation, entropy_residual, kinetic_function, kinetic_function_averaged,
                            kinetic_weak_residual, measure_tail, reconstruct_u, weak_convergence_check,
                            young_moment)
from sclkin.oracles import HeavisideMixture, erased_interval_example
from sclkin.solver import config_from_dict, run_path, weak_residual


def path_cfg(**kw):
    d = {"eta": 0.02, "t_end": 0.2, "grid": {"dim": 1, "n": 64}, "flux": {"name": "burgers"},
         "initial": {"kind": "trig", "terms": [[1, 0.0, 1.0]]}, "snapshots": [0.2], "store_trajectory": True}
    d.update(kw)
    return config_from_dict(d)


def test_xi_grid_alignment():
    xg = XiGrid.covering(-1.0, 1.0, m=40)
    assert xg.xi_min <= -1.0 and xg.xi_max >= 1.0
    assert np.any(np.isclose(xg.edges, 0.0, atol=1e-15))
    new, pad = xg.widened(-3.0, 0.0)
    assert new.width == xg.width and new.xi_min <= -3.0
    np.testing.assert_allclose(new.edges[pad:pad + xg.m + 1], xg.edges)


def test_kinetic_function_and_chi():
    xg = XiGrid(0.25, -4, 8)
    f = kinetic_function(np.array([0.3, -0.6]), xg)
    assert f.is_valid()
    np.testing.assert_array_equal(f.values[0], (0.3 > xg.centers).astype(float))
    c = chi(f)
    assert set(np.unique(c)) <= {-1.0, 0.0, 1.0}
    assert np.all(c[0] >= 0) and np.all(c[1] <= 0)


@given(st.lists(st.floats(-0.95, 0.95), min_size=1, max_size=20))
def test_reconstruct_roundtrip(us):
    u = np.array(us)
    xg = XiGrid.covering(-1.0, 1.0, m=50)
    assert np.max(np.abs(reconstruct_u(kinetic_function(u, xg)) - u)) <= xg.width / 2 + 1e-12
    np.testing.assert_allclose(reconstruct_u(kinetic_function_averaged(u, xg)), u, atol=1e-12)


def test_reconstruct_tail_conventions():
    u = np.array([2.3, 0.5])
    xg = XiGrid(0.1, 5, 10)          # covers [0.5, 1.5): u = 2.3 above, 0.5 on the lower edge
    np.testing.assert_allclose(reconstruct_u(kinetic_function_averaged(u, xg)), [1.5, 0.5], atol=1e-12)


def test_arcsine_second_moment():
    g = TorusGrid(1, 256)
    u = GridField(g, np.sin(2 * np.pi * g.coordinates()[0]))
    assert young_moment(u, 2) == pytest.approx(0.5, abs=1e-12)
    s = np.sin(2 * np.pi * (np.arange(4096) + 0.5) / 4096)
    nu = EmpiricalYoungMeasure.from_samples(s, 1)
    assert young_moment(nu, 2) == pytest.approx(0.5, abs=1e-12)
    xg = XiGrid.covering(-1, 1, m=200)
    hist = young_moment(kinetic_function(u.values, xg), 2)
    assert hist == pytest.approx(0.5, abs=2 * xg.width)


def test_young_measure_kinetic_matches_field():
    u = np.array([0.2, -0.4, 0.9])
    xg = XiGrid.covering(-1, 1, m=30)
    np.testing.assert_array_equal(EmpiricalYoungMeasure.from_field(u).kinetic(xg).values,
                                  kinetic_function(u, xg).values)
    with pytest.raises(ValueError):
        EmpiricalYoungMeasure(np.zeros((2, 2)), np.array([[0.5, 0.6], [0.5, 0.5]]))


def test_measure_mass_matches_dissipation():
    c = path_cfg(noise={"kind": "additive", "K": 2, "amplitude": 0.3})
    r = run_path(c, 4)
    dx = 1 / 64
    total = 0.0
    for u in r.trajectory[:-1]:
        d = (np.roll(u, -1) - np.roll(u, 1)) / (2 * dx)
        total += c.eta * np.sum(d * d) * r.dt_used * dx
    assert r.kinetic_measure.total_mass == pytest.approx(total, rel=1e-10)
    # the energy ledger records 2 eta |grad u|^2 (balance of ||u||^2)
    assert 2 * r.kinetic_measure.total_mass == pytest.approx(float(np.sum(r.energy_ledger["dissipation"])), rel=1e-10)
    m2 = accumulate_kinetic_measure(r.trajectory[:-1], r.kinetic_measure.xi_grid, c.grid, c.eta, r.dt_used,
                                    c.t_end, r.kinetic_measure.n_t_bins)
    np.testing.assert_allclose(m2.weights, r.kinetic_measure.weights, rtol=1e-10, atol=1e-18)


def test_measure_tail_and_widening():
    xg = XiGrid(0.5, -2, 4)
    m = KineticMeasure.empty(3, 1.0, 2, xg)
    m.deposit(0.1, np.array([-0.9, 0.2, 0.7]), np.array([1.0, 2.0, 3.0]))
    assert m.total_mass == 6.0
    assert measure_tail(m, 0.5) == pytest.approx(4.0)
    tail, mom = measure_tail(m, 0.0, p=2)
    assert tail == 6.0 and mom == pytest.approx(1.0 * 0.75 ** 2 + 2 * 0.25 ** 2 + 3 * 0.75 ** 2)
    with pytest.warns(RuntimeWarning):
        m.deposit(0.9, np.array([3.0, 0.0, 0.0]), np.ones(3))
    assert m.total_mass == 9.0 and m.xi_grid.xi_max > 3.0
    assert np.allclose(m.t_marginal(), [6.0, 3.0])


def test_kinetic_residual_xi_independent_equals_pde_residual():
    c = path_cfg(noise={"kind": "multiplicative", "K": 2, "amplitude": 0.3, "shape_s": "sin"})
    r = run_path(c, 2)
    al, be = SpatialTest("cos", (1,)), TimeTest("cos")
    k = kinetic_weak_residual(r, SeparableTest(al, be, XiTest("one")))
    w = weak_residual(r, al, be)
    assert k == pytest.approx(w, abs=1e-13)


def test_kinetic_residual_first_order_zero_noise():
    res = []
    for n in (32, 64, 128):
        c = path_cfg(eta=1e-3, t_end=0.25, grid={"dim": 1, "n": n}, flux={"name": "linear", "c": 1.0},
                     initial={"kind": "trig", "mean": 0.5, "terms": [[1, 0.0, 0.3]]}, snapshots=[0.25])
        r = run_path(c, 0)
        phi = SeparableTest(SpatialTest("cos", (1,)), TimeTest("cos"), XiTest("bump", 0.5, 0.4))
        res.append(abs(kinetic_weak_residual(r, phi)))
    assert res[0] > res[1] > res[2]
    assert math.log2(res[1] / res[2]) > 0.8


def test_histogram_pairing_close_to_pointwise():
    c = path_cfg()
    r = run_path(c, 0)
    phi = SeparableTest(SpatialTest("cos", (1,), 0.5, 1.0), TimeTest("poly"), XiTest("bump", 0.0, 0.8))
    a = kinetic_weak_residual(r, phi)
    b = kinetic_weak_residual(r, phi, use_histogram=True)
    assert abs(a - b) < 0.05 * max(abs(a), 1e-3) + 5e-3


def test_entropy_residual_signs():
    c = path_cfg(eta=0.005, t_end=0.25, grid={"dim": 1, "n": 128},
                 initial={"kind": "riemann", "uL": 1.0, "uR": 0.0}, snapshots=[0.25])
    r = run_path(c, 0)
    th = SpatialTest("const")
    lin = entropy_residual(r, make_entropy("linear"), th, 0.0, 0.25)
    assert abs(lin) < 1e-13
    sq = entropy_residual(r, make_entropy("square"), th, 0.0, 0.25)
    diss = entropy_dissipation(r, make_entropy("square"), th, 0.0, 0.25)
    assert sq < 0 and diss > 0
    assert -sq >= diss * 0.9
    with pytest.raises(ValueError):
        entropy_residual(r, make_entropy("square"), SpatialTest("cos", (1,)), 0.0, 0.1)


def test_weak_convergence_of_oscillations():
    n = 512
    x = np.arange(n) / n
    xg = XiGrid.covering(-1, 1, m=128)
    s = (np.arange(256) + 0.5) / 256
    base = 0.5 * np.cos(2 * np.pi * x)
    limit = EmpiricalYoungMeasure(base[:, None] + 0.4 * np.sin(2 * np.pi * s)[None, :]).kinetic(xg)
    seq = [kinetic_function(base + 0.4 * np.sin(2 * np.pi * k * x), xg) for k in (1, 4, 16, 64)]
    tests = [(np.ones(n), XiTest("bump", 0.2, 0.5)), (np.cos(2 * np.pi * x), XiTest("bump", 0.3, 0.5))]
    rep = weak_convergence_check(seq, tests, limit)
    assert rep.gaps.shape == (4, 2)
    assert np.max(np.abs(rep.gaps[0])) > 1e-3
    assert np.max(np.abs(rep.gaps[1:])) < 2e-4


def test_erased_interval_single_atom():
    f0 = HeavisideMixture((0.5, 0.5), (-1.0, 1.0))
    ex = erased_interval_example(f0, t1=0.5, t2=1.0, T=1.5, n_t_bins=30)
    atoms = detect_time_atoms(ex.measure, ex.snapshots)
    assert len(atoms) == 1
    a = atoms[0]
    assert a.t_lo <= 0.5 < a.t_hi
    assert a.defect < 1e-3 * a.jump_size
    assert ex.atom_mass == pytest.approx((math.exp(-0.5) - math.exp(-1.0)) * 0.5, rel=1e-12)


def test_no_atoms_without_erasure():
    f0 = HeavisideMixture((0.5, 0.5), (-1.0, 1.0))
    ex = erased_interval_example(f0, t1=0.5, t2=0.5, T=1.5, n_t_bins=30)
    assert detect_time_atoms(ex.measure, ex.snapshots) == []
