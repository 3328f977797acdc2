"""Configuration, Monte Carlo orchestration, experiments and the command line."""
from .config import (ExperimentConfig, RunManifest, emit_csv, load_scenario, parse_config, path_seed,
                     write_manifest)
from .montecarlo import Partial, monte_carlo_reduce, run_ensemble, run_ensemble_batched
from .experiments import (ExperimentResult, run_contraction_experiment, run_viscosity_convergence,
                          run_regularity_experiment, run_energy_experiment, regularity_sigma)
