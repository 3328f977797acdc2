import hashlib
import json
import os

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sclkin.harness import (ExperimentConfig, Partial, load_scenario, monte_carlo_reduce, parse_config, path_seed,
                            run_contraction_experiment, run_energy_experiment, run_ensemble,
                            run_ensemble_batched)
from sclkin.harness.cli import main
from sclkin.harness.config import dump_config, read_csv
from sclkin.harness.experiments import SCHEMAS, _run
from sclkin.harness.montecarlo import mean_se

SCENARIOS = ["contraction_additive", "contraction_multiplicative", "contraction_deterministic",
             "viscosity", "regularity", "energy"]


def test_path_seed_definition():
    h = hashlib.blake2b(b"7:3", digest_size=8).digest()
    assert path_seed(7, 3) == int.from_bytes(h, "little")
    assert len({path_seed(0, i) for i in range(1000)}) == 1000


@pytest.mark.parametrize("name", SCENARIOS)
def test_scenarios_roundtrip(name, tmp_path):
    cfg = load_scenario(name)
    assert cfg.scenario == name
    dump_config(cfg, tmp_path / "c.json")
    back = parse_config(str(tmp_path / "c.json"))
    assert back == cfg and back.hash() == cfg.hash()


def test_hash_ignores_threads_and_output():
    cfg = load_scenario("energy")
    d = cfg.to_dict()
    d.update(threads=8, output_dir="elsewhere")
    assert parse_config(d).hash() == cfg.hash()
    d["master_seed"] = 999
    assert parse_config(d).hash() != cfg.hash()
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"scenario": "x"})


@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=30), st.integers(1, 29))
def test_partial_merge_matches_numpy(xs, cut):
    cut = min(cut, len(xs) - 1)
    a = monte_carlo_reduce({"x": Partial.of(v)} for v in xs[:cut])["x"]
    b = monte_carlo_reduce({"x": Partial.of(v)} for v in xs[cut:])["x"]
    m = a.merge(b)
    assert m.count == len(xs)
    assert float(m.mean) == pytest.approx(np.mean(xs), abs=1e-9)
    assert float(m.variance) == pytest.approx(np.var(xs, ddof=1), rel=1e-6, abs=1e-6)


def test_mean_se_arrays():
    x = np.random.default_rng(0).normal(size=(50, 3))
    m, se = mean_se(x)
    np.testing.assert_allclose(m, x.mean(axis=0))
    np.testing.assert_allclose(se, x.std(axis=0, ddof=1) / np.sqrt(50))


def test_ensembles_thread_invariant():
    task = lambda i, s: (i, s % 1000)
    assert run_ensemble(task, 20, 5, threads=1) == run_ensemble(task, 20, 5, threads=4)
    btask = lambda idx, seeds: [(i, s % 997) for i, s in zip(idx, seeds)]
    ref = run_ensemble_batched(btask, 37, 5, threads=1)
    assert ref == run_ensemble_batched(btask, 37, 5, threads=3)
    assert [r[0] for r in ref] == list(range(37))


def test_manifest_written_first_and_marked_failed(tmp_path):
    cfg = load_scenario("energy")
    cfg.output_dir = str(tmp_path)
    seen = {}

    def body():
        with open(tmp_path / "energy" / "manifest.json") as fh:
            seen.update(json.load(fh))
        raise RuntimeError("boom")

    with pytest.raises(RuntimeError):
        _run(cfg, "energy", body)
    assert seen["status"] == "running"
    for key in ("scenario", "config_hash", "master_seed", "code_version", "path_seeds", "started"):
        assert key in seen
    assert seen["path_seeds"][0] == path_seed(cfg.master_seed, 0)
    with open(tmp_path / "energy" / "manifest.json") as fh:
        assert json.load(fh)["status"] == "failed"


def test_contraction_outputs(tmp_path):
    cfg = load_scenario("contraction_deterministic")
    cfg.output_dir = str(tmp_path)
    res = run_contraction_experiment(cfg)
    assert res.passed
    header, rows = read_csv(tmp_path / "contraction_deterministic" / "contraction.csv")
    assert header == SCHEMAS["contraction"]
    assert len(rows) == len(res.rows)
    with open(tmp_path / "contraction_deterministic" / "manifest.json") as fh:
        man = json.load(fh)
    assert man["status"] == "complete" and man["summary"]["passed"]


def test_energy_outputs_small(tmp_path):
    cfg = load_scenario("energy")
    cfg.output_dir = str(tmp_path)
    cfg.ensemble_size = 8
    res = run_energy_experiment(cfg)
    header, _ = read_csv(tmp_path / "energy" / "energy.csv")
    assert header == SCHEMAS["energy"]
    assert set(res.checks)


def test_cli_smoke(tmp_path, capsys):
    assert main(["oracle", "riemann", "n=16", "t=0.2", "--out", str(tmp_path)]) == 0
    header, rows = read_csv(tmp_path / "oracle_riemann.csv")
    assert header == ["x", "u"] and len(rows) == 16
    assert main(["oracle", "collapse", "t=0.5", "m=20"]) == 0
    assert main(["check", "psipair"]) == 0
    cfgp = tmp_path / "sim.json"
    cfgp.write_text(json.dumps({"eta": 0.05, "t_end": 0.05, "grid": {"dim": 1, "n": 32},
                                "noise": {"kind": "additive", "K": 2}, "snapshots": [0.0, 0.05]}))
    assert main(["simulate", str(cfgp), "--out", str(tmp_path / "sim")]) == 0
    header, rows = read_csv(tmp_path / "sim" / "snapshots.csv")
    assert header == ["t", "x_index", "x", "u"] and len(rows) == 64
    assert read_csv(tmp_path / "sim" / "kinetic_measure.csv")[0] == ["x_cell", "t_bin", "xi_bin", "weight"]
    assert os.path.exists(tmp_path / "sim" / "path.json")
