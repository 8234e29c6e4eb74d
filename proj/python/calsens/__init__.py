"""Doubly robust bounds and confidence intervals for average treatment
effects under the marginal sensitivity model."""

import csv
import io
import json

import numpy as np

from ._calsens import (
    ANALYSIS_SCHEMA,
    InputError,
    SensitivityLevel,
    SolverError,
    dual_bound,
    generate,
    population_bound,
    primal_bound,
    sharp_bounds,
)
from . import _calsens

__all__ = [
    "ANALYSIS_SCHEMA",
    "InputError",
    "SensitivityLevel",
    "SolverError",
    "analyze",
    "analyze_arrays",
    "dual_bound",
    "generate",
    "population_bound",
    "primal_bound",
    "sharp_bounds",
    "simulate",
    "verify",
]


def analyze(path, **options):
    """Analysis of a CSV file; returns the report as a dict."""
    return json.loads(_calsens.analyze_file(str(path), options))


def analyze_arrays(y, t, x, names=None, **options):
    """Analysis of in-memory arrays. Covariate columns are named x1..xp unless given."""
    y = np.asarray(y, dtype=float).ravel()
    t = np.asarray(t, dtype=float).ravel()
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if names is None:
        names = [f"x{j + 1}" for j in range(x.shape[1])]
    if len(names) != x.shape[1]:
        raise InputError("one name per covariate column is required")
    buf = io.StringIO()
    np.savetxt(buf, np.column_stack([y, t, x]), delimiter=",", fmt="%.17g",
               header=",".join(["y", "t", *names]), comments="")
    return json.loads(_calsens.analyze_csv(buf.getvalue(), "arrays", options))


def _read_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


def simulate(config="C1", n=800, p=10, reps=1, methods=("rcal-relaxed", "rml"),
             lambdas=(1.0, 1.5, 2.0), **kwargs):
    """Monte Carlo replications; returns (coverage rows, replicate rows, failed cells)."""
    coverage, replicates, failures = _calsens.simulate(
        config, n, p, reps, list(methods), list(lambdas), **kwargs)
    return _read_csv(coverage), _read_csv(replicates), failures


def verify(only=(), **kwargs):
    """Certification checks; returns one dict per check."""
    return _calsens.verify(list(only), **kwargs)
