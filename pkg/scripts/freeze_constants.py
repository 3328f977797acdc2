"""Regenerate ``src/sclkin/data/frozen_constants.json`` from reference runs.

The reference ensembles use ``master_seed + 1000`` so that the acceptance
runs (which use the scenario seed) are checked against independent data.
Usage: python3 scripts/freeze_constants.py [--paths 64]
"""
import argparse
import json
import os

from sclkin.harness import load_scenario
from sclkin.harness import experiments as ex

OUT = os.path.join(os.path.dirname(__file__), "..", "src", "sclkin", "data", "frozen_constants.json")


def reference(name, paths):
    cfg = load_scenario(name)
    cfg.master_seed += 1000
    cfg.ensemble_size = paths
    cfg.output_dir = None
    cfg.params = {k: v for k, v in cfg.params.items() if k != "refine_n"}
    return cfg


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=64)
    args = ap.parse_args()
    out = {}
    for name in ("contraction_additive", "contraction_multiplicative"):
        r = ex.run_contraction_experiment(reference(name, args.paths))
        out[name] = {"slack_C": r.summary["slack_C_fit"]}
    r = ex.run_regularity_experiment(reference("regularity", args.paths))
    out["regularity"] = {"C": r.summary["C"]}
    r = ex.run_energy_experiment(reference("energy", args.paths))
    out["energy"] = {"margin_C": r.summary["margin_C_fit"],
                     **{k: r.summary[k] for k in ("p4_sup", "p4_diss", "m_mass", "xi2", "xi2_sq")}}
    with open(OUT, "w") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
