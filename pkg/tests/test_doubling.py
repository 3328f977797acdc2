import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from sclkin.doubling import (I_psi_estimate, I_rho_estimate, bound_sweep, build_psi, contraction_functional,
                             doubled_integral, geometric_ladder, remainder_ladder, upsilon, upsilon_check)
from sclkin.flux import build_flux
from sclkin.grid import Mollifier, TorusGrid
from sclkin.kinetic import KineticFunction, XiGrid, kinetic_function_averaged
from sclkin.noise import build_noise_model

from quadrature import pair_brute as _pair_brute

# Upsilon(1, 0) for burgers with delta = 0.1, from an independent scipy dblquad
UPSILON_REF = 0.06671666655


def test_psi_pair_values():
    for d in (0.05, 0.3, 1.0):
        assert build_psi(d).psi2(0.0) == pytest.approx(d / 6, rel=1e-14)
    p = build_psi(1.0)
    assert p.psi2(0.5) == pytest.approx(0.5 + 0.125 / 6, rel=1e-14)
    assert p.psi1(-1.0) == 0.0 and p.psi1(1.0) == 1.0 and p.psi1(0.0) == pytest.approx(0.5)
    assert p.C_psi == pytest.approx(0.25)
    assert p.psi2(3.0) == pytest.approx(3.0) and p.psi2(-3.0) == 0.0
    mass, _ = integrate.quad(lambda r: float(build_psi(0.2).psi(r)), -0.2, 0.2, points=[0.0])
    assert mass == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        build_psi(0.0)


def test_doubled_integral_brute_force():
    rng = np.random.default_rng(3)
    g = TorusGrid(1, 4)
    xg = XiGrid(0.25, -3, 8)
    v1 = np.sort(rng.uniform(size=(4, 8)), axis=1)[:, ::-1]
    v2 = np.sort(rng.uniform(size=(4, 8)), axis=1)[:, ::-1]
    f1, f2 = KineticFunction(xg, v1), KineticFunction(xg, v2)
    w = np.array([2.0, 1.0, 0.0, 1.0])
    w = w / (w.sum() * g.cell_volume)
    psi = build_psi(0.5)
    got = doubled_integral(f1, f2, w, psi, g)
    ref = 0.0
    for i in range(4):
        for k in range(4):
            if w[k]:
                ref += g.cell_volume ** 2 * w[k] * _pair_brute(v1[i], v2[(i - k) % 4], xg, psi)
    assert got == pytest.approx(ref, abs=1e-10)


@given(st.integers(-6, 6), st.integers(-6, 6), st.sampled_from([0.1, 0.25, 0.6]))
def test_doubled_integral_indicators(i1, i2, delta):
    xg = XiGrid(0.125, -8, 16)
    u1, u2 = i1 * 0.125, i2 * 0.125
    f1 = kinetic_function_averaged(np.array([u1]), xg)
    f2 = kinetic_function_averaged(np.array([u2]), xg)
    psi = build_psi(delta)
    assert doubled_integral(f1, f2, None, psi) == pytest.approx(float(psi.psi2(u1 - u2)), abs=1e-13)


def test_doubled_integral_rejects():
    a = KineticFunction(XiGrid(0.1, 0, 4), np.ones((1, 4)))
    b = KineticFunction(XiGrid(0.1, 1, 4), np.ones((1, 4)))
    with pytest.raises(ValueError):
        doubled_integral(a, b, None, build_psi(0.1))


def test_contraction_functional():
    a = [np.array([1.0, -1.0, 0.5, 0.0]), np.array([0.0, 0.0, 0.0, 0.0])]
    b = [np.zeros(4), np.array([-1.0, 1.0, 0.0, 0.0])]
    mean, se = contraction_functional(a, b)
    assert mean == pytest.approx((1.5 / 4 + 1 / 4) / 2)
    assert se == pytest.approx(np.std([1.5 / 4, 1 / 4], ddof=1) / math.sqrt(2))


def test_upsilon_frozen_and_zero():
    burgers = build_flux({"name": "burgers"})
    assert upsilon(1.0, 0.0, build_psi(0.1), burgers) == pytest.approx(UPSILON_REF, abs=1e-8)
    # xi far below zeta: the supports do not meet
    assert upsilon(-1.0, 0.0, build_psi(0.1), burgers) == 0.0


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.01, 1.0), st.sampled_from(["burgers", "cubic"]))
def test_upsilon_bound_property(xi, zeta, delta, name):
    chk = upsilon_check(xi, zeta, build_psi(delta), build_flux({"name": name}))
    assert chk.value >= 0.0
    assert not chk.flagged


def _fields(n=64):
    g = TorusGrid(1, n)
    x = g.coordinates()[0]
    return g, np.sin(2 * np.pi * x), 0.5 * np.cos(2 * np.pi * x)


def test_I_psi_additive_constant_mode_vanishes():
    g, u1, u2 = _fields()
    noise = build_noise_model({"kind": "additive", "K": 1, "k0": 0})
    est = I_psi_estimate(u1, u2, Mollifier("triangular", 0.1), build_psi(0.1), noise, g)
    assert est.value == pytest.approx(0.0, abs=1e-15)
    assert est.passed


def test_I_rho_vanishes_for_linear_flux():
    g, u1, u2 = _fields()
    est = I_rho_estimate(u1, u2, Mollifier("triangular", 0.1), build_psi(0.1),
                         build_flux({"name": "linear", "c": 1.0}), g)
    assert est.value < 1e-14


def test_bound_sweep_25_points():
    g, u1, u2 = _fields()
    eps = geometric_ladder(0.05, 0.5, per_decade=5)[:5]
    deltas = geometric_ladder(0.01, 0.1, per_decade=5)[:5]
    assert len(eps) == 5 and len(deltas) == 5
    for spec in ({"kind": "additive", "K": 4, "amplitude": 0.5},
                 {"kind": "multiplicative", "K": 4, "amplitude": 0.5, "shape_s": "sin"}):
        rows = bound_sweep(u1, u2, g, build_flux({"name": "burgers"}), build_noise_model(spec), eps, deltas)
        assert len(rows) == 50
        assert all(r["pass"] for r in rows)
        assert any(r["value"] > 0 for r in rows if r["term"] == "I_psi")


def test_remainder_ladder_decreases():
    g, u1, u2 = _fields(128)
    noise = build_noise_model({"kind": "additive", "K": 4, "amplitude": 0.5})
    rows = remainder_ladder(u1, u2, g, build_flux({"name": "burgers"}), noise, [0.4, 0.2, 0.1, 0.05])
    rem = [r["remainder"] for r in rows]
    assert all(a > b for a, b in zip(rem, rem[1:]))
    assert all(r["value"] <= r["remainder"] for r in rows)
    assert rows[1]["delta"] == pytest.approx(0.2 ** (4 / 3))
