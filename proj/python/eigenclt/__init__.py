"""Simulation lab for fluctuation limits of eigenvalue particle systems."""

import json as _json

from ._core import (
    Error,
    ModelSpec,
    StepControl,
    Trajectory,
    build_model,
    eval_drift,
    evolve_moments,
    jacobi_eigenvalues,
    ks_normal,
    ks_two_sample,
    mp_moments,
    point_moments,
    sample_scaled_goe,
    sample_scaled_laguerre,
    semicircle_moments,
    simulate,
    simulate_from_zero,
    simulate_matrix,
)
from ._core import run_experiment as _run_experiment

__version__ = "0.1.0"


def run_experiment(config, threads=0, out_dir="", write_outputs=False):
    """Run an experiment and return the report as a dict."""
    return _json.loads(_run_experiment(config, threads, out_dir, write_outputs))
