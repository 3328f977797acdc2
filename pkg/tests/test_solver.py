import math
import warnings

import numpy as np
import pytest

from sclkin.oracles import burgers_characteristics
from sclkin.solver import (PathRun, SolverDivergence, config_from_dict, config_hash, energy_check,
                           energy_margins, moment_check, run_path, run_paths, stable_dt, step)


def cfg(**kw):
    d = {"eta": 0.02, "t_end": 0.25, "grid": {"dim": 1, "n": 64}, "flux": {"name": "burgers"},
         "initial": {"kind": "trig", "terms": [[1, 0.0, 1.0]]}, "snapshots": [0.0, 0.125, 0.25]}
    d.update(kw)
    return config_from_dict(d)


def test_stable_dt_limits():
    c = cfg(eta=1e-14)
    assert stable_dt(c, 1.0) == pytest.approx(c.cfl_safety / 64, rel=1e-9)
    d = cfg(eta=0.1, flux={"name": "linear", "c": 0.0})
    assert stable_dt(d, 1.0) == pytest.approx(d.cfl_safety * (1 / 64) ** 2 / (2 * 0.1))
    d2 = cfg(eta=0.1, flux={"name": "linear", "c": 0.0}, grid={"dim": 1, "n": 128})
    assert stable_dt(d2, 1.0) == pytest.approx(stable_dt(d, 1.0) / 4)


def test_stable_dt_never_exceeds_either_limit():
    c = cfg(eta=0.05)
    dx = 1 / 64
    dt = stable_dt(c, 2.0)
    assert dt <= c.cfl_safety * min(dx / 2.0, dx * dx / 0.1)


def test_step_heat_factor():
    n, eta = 32, 0.05
    c = cfg(eta=eta, flux={"name": "linear", "c": 0.0}, grid={"dim": 1, "n": n})
    x = c.grid.coordinates()[0]
    u = np.sin(2 * np.pi * x)
    dt = stable_dt(c, 1.0)
    dx = 1 / n
    factor = 1 - eta * dt * (2 - 2 * np.cos(2 * np.pi * dx)) / dx ** 2
    np.testing.assert_allclose(step(u, dt, np.zeros(0), c), factor * u, atol=1e-14)


def test_uniform_additive_exact():
    c = cfg(noise={"kind": "additive", "K": 1, "amplitude": 0.7, "k0": 0},
            initial={"kind": "constant", "value": 0.3}, snapshots=[0.25])
    r = run_path(c, 5)
    beta = r.increments[:, 0].sum()
    assert np.ptp(r.final) == 0.0
    assert r.final[0] == pytest.approx(0.3 + 0.7 * beta, abs=1e-12)


def test_burgers_characteristics_first_order():
    errs = []
    for n in (64, 128, 256):
        c = cfg(eta=1e-12, t_end=0.3, grid={"dim": 1, "n": n},
                initial={"kind": "trig", "mean": 0.5, "terms": [[1, 0.0, 0.25]]}, snapshots=[0.3])
        r = run_path(c, 0)
        x = c.grid.coordinates()[0]
        ex = burgers_characteristics(lambda y: 0.5 + 0.25 * np.sin(2 * np.pi * y), x, 0.3)
        errs.append(np.sum(np.abs(r.final - ex)) / n)
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 2.0 * (1 / 256)          # O(dx) with a modest constant
    assert math.log2(errs[1] / errs[2]) > 0.7


def test_run_path_deterministic_and_ledger():
    c = cfg(noise={"kind": "additive", "K": 3, "amplitude": 0.4})
    a, b = run_path(c, 11), run_path(c, 11)
    assert np.array_equal(a.final, b.final)
    assert all(np.array_equal(a.energy_ledger[k], b.energy_ledger[k]) for k in a.energy_ledger)
    assert np.array_equal(a.kinetic_measure.weights, b.kinetic_measure.weights)
    assert len(a.energy_ledger["l2sq"]) == a.step_count
    assert np.all(a.energy_ledger["dissipation"] >= 0)
    assert all(np.all(np.isfinite(v)) for v in a.energy_ledger.values())


def test_batch_equals_single_path():
    for noise in ({"kind": "additive", "K": 4}, {"kind": "multiplicative", "K": 2, "shape_s": "rational"}):
        c = cfg(noise=noise)
        batch = run_paths(c, [3, 4, 5])
        one = run_path(c, 4)
        assert np.array_equal(batch[1].final, one.final)
        assert np.array_equal(batch[1].kinetic_measure.weights, one.kinetic_measure.weights)
        for k in one.energy_ledger:
            assert np.array_equal(batch[1].energy_ledger[k], one.energy_ledger[k])


def test_zero_noise_matches_deterministic_stepping():
    c = cfg()
    r = run_path(c, 99)
    u = c.initial_field()
    for _ in range(r.step_count):
        u = step(u, r.dt_used, np.zeros(0), c)
    np.testing.assert_allclose(r.final, u, atol=1e-13)
    assert run_path(c, 1).final.tolist() == r.final.tolist()


def test_conservation_and_max_principle():
    c = cfg(eta=0.01, initial={"kind": "riemann", "uL": 1.0, "uR": -0.5}, store_trajectory=True)
    r = run_path(c, 0)
    mass = r.trajectory.sum(axis=1) / c.grid.n
    assert np.max(np.abs(np.diff(mass))) < 1e-12
    assert r.trajectory.max() <= 1.0 + 1e-14 and r.trajectory.min() >= -0.5 - 1e-14


def test_noise_mean_conservation():
    c = cfg(noise={"kind": "additive", "K": 4, "amplitude": 0.5}, snapshots=[0.25])
    runs = run_paths(c, list(range(32)))
    m0 = c.initial_field().mean()
    dm = np.array([r.final.mean() - m0 for r in runs])
    assert abs(dm.mean()) <= 4 * dm.std(ddof=1) / math.sqrt(len(dm)) + 1e-15


def test_energy_zero_noise_and_t0():
    r = run_path(cfg(), 0)
    t, m = energy_margins(r)
    assert m[0] == 0.0
    assert np.all(m <= r.dt_used)


def test_energy_uniform_additive_balance():
    c = cfg(noise={"kind": "additive", "K": 1, "amplitude": 0.5, "k0": 0},
            initial={"kind": "constant", "value": 0.2}, snapshots=[0.0, 0.25])
    rep = energy_check(run_paths(c, list(range(200))))
    assert abs(rep.mean[-1]) <= 4 * rep.stderr[-1]


def test_moments_zero_noise_and_gronwall():
    r = run_path(cfg(), 0)
    mr = moment_check(r, 4)
    assert mr.per_path_sup[0] <= r.energy_ledger["lp4"][0] * (1 + 1e-12)
    assert moment_check(r, 2).sup_moment == pytest.approx(float(np.max(r.energy_ledger["lp2"])))
    c = cfg(noise={"kind": "additive", "K": 4, "amplitude": 0.5})
    runs = run_paths(c, list(range(32)))
    l2 = np.array([r.energy_ledger["lp2"] for r in runs]).mean(axis=0)
    t = np.arange(len(l2)) * runs[0].dt_used
    D0 = c.noise.D0
    assert np.all(l2 <= l2[0] + t * D0 * (1 + l2.max()) + 1e-12)


def test_checkpoint_roundtrip(tmp_path):
    c = cfg(noise={"kind": "additive", "K": 2})
    r = run_path(c, 8)
    r.save(tmp_path / "p.json")
    s = PathRun.load(tmp_path / "p.json")
    assert np.array_equal(s.final, r.final)
    assert np.array_equal(s.kinetic_measure.weights, r.kinetic_measure.weights)
    assert [t for t, _ in s.snapshots] == [t for t, _ in r.snapshots]
    assert config_hash(s.config) == config_hash(r.config)


def test_divergence_and_peclet_warning():
    c = cfg(initial={"kind": "constant", "value": 0.0})
    with pytest.raises(SolverDivergence):
        run_path(c, 3, u0=np.full(64, np.nan))
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        run_path(cfg(eta=1e-4, t_end=0.01, snapshots=[0.01]), 0)
    assert any("Peclet" in str(x.message) for x in w)
