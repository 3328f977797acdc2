"""Experiment configuration, run manifests and CSV output."""
from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field
from importlib import metadata

import numpy as np


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def path_seed(master_seed: int, i: int) -> int:
    """Seed of path ``i``: first 8 bytes (little endian) of blake2b("master:i")."""
    h = hashlib.blake2b(f"{int(master_seed)}:{int(i)}".encode(), digest_size=8).digest()
    return int.from_bytes(h, "little")


@dataclass
class ExperimentConfig:
    """One experiment scenario.

    ``solver`` is a JSON block understood by :func:`sclkin.solver.config_from_dict`;
    ``params`` carries experiment-specific extras (second initial datum,
    snapshot count, refinement grids, slack constants ...).
    """

    scenario: str
    solver: dict
    ensemble_size: int = 64
    master_seed: int = 0
    eta_ladder: list = field(default_factory=lambda: [8.0, 4.0, 2.0, 1.0])
    eta0: float | None = None
    alpha: float | None = None
    sigma: float | None = None
    output_dir: str = "out"
    threads: int = 1
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        if "scenario" not in known or "solver" not in known:
            raise ValueError("experiment config needs 'scenario' and 'solver' blocks")
        return cls(**known)

    def hash(self) -> str:
        d = self.to_dict()
        d.pop("output_dir", None)
        d.pop("threads", None)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def parse_config(path_or_dict) -> ExperimentConfig:
    if isinstance(path_or_dict, dict):
        return ExperimentConfig.from_dict(path_or_dict)
    with open(path_or_dict) as fh:
        return ExperimentConfig.from_dict(json.load(fh))


def load_scenario(name: str) -> ExperimentConfig:
    """Bundled scenario ``name`` from ``sclkin/data/scenarios``."""
    from importlib import resources
    text = resources.files("sclkin.data").joinpath("scenarios", f"{name}.json").read_text()
    return ExperimentConfig.from_dict(json.loads(text))


def dump_config(cfg: ExperimentConfig, path):
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)


@dataclass
class RunManifest:
    scenario: str
    config_hash: str
    master_seed: int
    code_version: str
    path_seeds: list
    started: float
    finished: float | None = None
    status: str = "running"
    outputs: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def new_manifest(cfg: ExperimentConfig, n_paths: int) -> RunManifest:
    return RunManifest(cfg.scenario, cfg.hash(), int(cfg.master_seed), code_version(),
                       [path_seed(cfg.master_seed, i) for i in range(n_paths)], time.time())


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


def write_manifest(run: RunManifest, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        json.dump(asdict(run), fh, indent=2, default=_jsonable)


def emit_csv(rows, path, columns=None):
    """Write dict rows; ``columns`` fixes the header order (defaults to the first row's keys)."""
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(columns)
        for r in rows:
            wr.writerow([_fmt(r[c]) for c in columns])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_csv(path) -> tuple:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        return header, [row for row in rd]
