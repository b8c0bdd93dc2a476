"""Empirical Bayes regularization strength for ridge, lasso and group lasso."""

import json as _json

from ._ebard import (
    ArdVerdict,
    ConvergenceError,
    Dataset,
    DomainError,
    Error,
    IngestionError,
    PreconditionError,
    QuasiconcavityViolation,
    SingularityError,
    StructureError,
    UnsupportedError,
    WhitenedProblem,
    ard_gate,
    d_log_z,
    erfcx,
    estimate_lambda,
    evidence_curve,
    load_dataset,
    log_erfcx,
    log_grid,
    log_z,
    mc_curve,
    mc_log_z,
    quad_log_z,
    reduce,
    ridge_log_z_exact,
    whiten,
)
from ._ebard import verify as _verify


def verify(quick=True, inject_fault=""):
    """Run the verification suites and return the parsed report."""
    return _json.loads(_verify(quick, inject_fault))
