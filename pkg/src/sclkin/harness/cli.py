"""Command line entry point ``sclkin``.

Exit status is 0 iff every pass criterion of the invoked command holds.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .config import emit_csv, parse_config, path_seed
from . import experiments as ex

_EXPERIMENTS = {
    "contraction": ex.run_contraction_experiment,
    "viscosity": ex.run_viscosity_convergence,
    "regularity": ex.run_regularity_experiment,
    "energy": ex.run_energy_experiment,
}


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _params(items) -> dict:
    """``key=value`` pairs; values parsed as JSON when possible."""
    out = {}
    for it in items:
        if "=" not in it:
            raise SystemExit(f"expected key=value, got {it!r}")
        k, v = it.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


def cmd_simulate(args) -> int:
    from ..solver import config_from_dict, run_path
    d = _load_json(args.config)
    block = d.get("solver", d)
    cfg = config_from_dict(block)
    seed = path_seed(args.seed, 0)
    run = run_path(cfg, seed)
    os.makedirs(args.out, exist_ok=True)
    run.save(os.path.join(args.out, "path.json"))
    x = cfg.grid.coordinates()[0].ravel()
    rows = [{"t": t, "x_index": i, "x": float(x[i % x.size]), "u": float(v)}
            for t, f in run.snapshots for i, v in enumerate(f.values.ravel())]
    emit_csv(rows, os.path.join(args.out, "snapshots.csv"), ["t", "x_index", "x", "u"])
    run.kinetic_measure.to_csv(os.path.join(args.out, "kinetic_measure.csv"))
    print(f"steps={run.step_count} dt={run.dt_used:.6g} seed={seed} mass={run.kinetic_measure.total_mass:.6g}")
    return 0


def cmd_experiment(args) -> int:
    d = _load_json(args.config)
    if args.seed is not None:
        d["master_seed"] = args.seed
    if args.paths is not None:
        d["ensemble_size"] = args.paths
    if args.threads is not None:
        d["threads"] = args.threads
    d["output_dir"] = args.out
    cfg = parse_config(d)
    res = _EXPERIMENTS[args.name](cfg)
    for k, v in res.checks.items():
        print(f"{k}: {'pass' if v else 'FAIL'}")
    print(f"{args.name}: {'PASS' if res.passed else 'FAIL'}")
    return 0 if res.passed else 1


def cmd_check(args) -> int:
    from ..flux import build_flux, check_gamma
    from ..noise import build_noise_model, d1_lattice, verify_D0, verify_D1
    from ..doubling import build_psi
    d = _load_json(args.config) if args.config else {}
    block = d.get("solver", d)
    dim = int(block.get("grid", {}).get("dim", 1))
    ok = True
    if args.what == "d0d1":
        model = build_noise_model(block.get("noise") or {"kind": "none"}, dim)
        r0 = verify_D0(model, dim=dim)
        r1 = verify_D1(model, d1_lattice(model, dim))
        ok = r0.passed and r1.passed
        print(f"D0={model.D0:.6g} max_ratio={r0.max_ratio:.6g} {'pass' if r0.passed else 'FAIL'}")
        print(f"D1={model.D1:.6g} max_ratio={r1.max_ratio:.6g} {'pass' if r1.passed else 'FAIL'}")
    elif args.what == "gamma":
        rep = check_gamma(build_flux(block.get("flux"), dim))
        ok = rep.passed
        print(f"gamma max_ratio={rep.max_ratio:.6g} pairs={rep.n_pairs} {'pass' if ok else 'FAIL'}")
    else:
        delta = float(d.get("delta", 0.1))
        psi = build_psi(delta, d.get("base", "triangular"))
        r = np.linspace(-3 * delta, 3 * delta, 6001)
        mass = float(np.trapezoid(psi.psi(r), r))
        checks = {
            "mass": abs(mass - 1.0) < 1e-6,
            "psi1_bounds": bool(np.all((psi.psi1(r) >= 0) & (psi.psi1(r) <= 1)) and np.all(np.diff(psi.psi1(r)) >= -1e-15)),
            "psi2_convex": bool(np.all(np.diff(psi.psi2(r), 2) >= -1e-12)),
            "psi2_zero": psi.base != "triangular" or math.isclose(float(psi.psi2(0.0)), delta / 6, rel_tol=1e-12),
        }
        for k, v in checks.items():
            print(f"{k}: {'pass' if v else 'FAIL'}")
        print(f"C_psi={psi.C_psi:.6g}")
        ok = all(checks.values())
    return 0 if ok else 1


def cmd_oracle(args) -> int:
    from .. import oracles as orc
    from ..kinetic import XiGrid
    p = _params(args.params)
    rows, cols = [], []
    if args.what == "riemann":
        uL, uR, t = float(p.get("uL", 1.0)), float(p.get("uR", 0.0)), float(p.get("t", 0.5))
        n = int(p.get("n", 128))
        x = np.arange(n) / n
        if p.get("periodic", True):
            u = orc.burgers_periodic_step(x, t, uL, uR, float(p.get("x0", 0.5)))
        else:
            u = orc.burgers_riemann(uL, uR, x - float(p.get("x0", 0.5)), t)
        cols = ["x", "u"]
        rows = [{"x": float(a), "u": float(b)} for a, b in zip(x, u)]
    else:
        f0 = orc.HeavisideMixture(tuple(p.get("weights", [0.5, 0.5])), tuple(p.get("levels", [-1.0, 1.0])))
        xg = XiGrid.covering(min(f0.levels), max(f0.levels), m=int(p.get("m", 80)))
        t = float(p.get("t", 1.0))
        f = orc.collapse_exact(f0, t, xg)
        m = orc.collapse_measure(f0, t, xg.centers)
        cols = ["xi", "f", "m"]
        rows = [{"xi": float(c), "f": float(a), "m": float(b)} for c, a, b in zip(xg.centers, f.values[0], m)]
        if np.min(m) < -1e-12:
            print("collapse measure negative", file=sys.stderr)
            return 1
    if args.out:
        emit_csv(rows, os.path.join(args.out, f"oracle_{args.what}.csv"), cols)
    else:
        print(",".join(cols))
        for r in rows:
            print(",".join(repr(r[c]) for c in cols))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sclkin", description="Stochastic conservation law kinetic lab")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one path and write checkpoint and CSVs")
    s.add_argument("config")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="out")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("experiment", help="run a headline experiment")
    e.add_argument("name", choices=sorted(_EXPERIMENTS))
    e.add_argument("config")
    e.add_argument("--seed", type=int)
    e.add_argument("--paths", type=int)
    e.add_argument("--threads", type=int)
    e.add_argument("--out", default="out")
    e.set_defaults(func=cmd_experiment)

    c = sub.add_parser("check", help="verify structural hypotheses")
    c.add_argument("what", choices=["d0d1", "gamma", "psipair"])
    c.add_argument("config", nargs="?")
    c.set_defaults(func=cmd_check)

    o = sub.add_parser("oracle", help="evaluate a closed-form oracle")
    o.add_argument("what", choices=["collapse", "riemann"])
    o.add_argument("params", nargs="*", help="key=value pairs")
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return int(args.func(args))


if __name__ == "__main__":
    sys.exit(main())
