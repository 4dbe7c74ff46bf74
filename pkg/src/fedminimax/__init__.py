"""Federated smoothed GDA for nonconvex minimax problems, with a simulated federation and diagnostics."""

from .core import DimensionError, NonFiniteError, RngStream, RunConfig, TraceRecord, derive_stream, vec_axpy
from .diagnostics import (InnerSolverConfig, PotentialReport, StationarityReport, estimate_delta, f_stationarity,
                          inner_max_y, moreau_stationarity, phi_stationarity, potential,
                          translate_to_phi_stationary)
from .federation import (DriftStats, FederationConfig, ParticipationSample, aggregate_drift_diagnostics,
                         sample_participants)
from .geometry import ConstraintSet, diameter, gradient_mapping, project
from .optim import (HyperParams, LocalUpdateResult, ParamState, fessgda_round, local_updates, ncc_regularize,
                    preset_hyperparams, run_fessgda, run_fsgda, run_local_sgda_baseline, run_smoothed_gda)
from .problems import (KnownConstants, ProblemSpec, full_gradient, make_plpl_testbed, make_pointwise_max,
                       make_quadratic_minimax, make_wgan1d, measure_heterogeneity)

__version__ = "0.1.0"

__all__ = [
    "DimensionError", "NonFiniteError", "RngStream", "RunConfig", "TraceRecord", "derive_stream", "vec_axpy",
    "InnerSolverConfig", "PotentialReport", "StationarityReport", "estimate_delta", "f_stationarity",
    "inner_max_y", "moreau_stationarity", "phi_stationarity", "potential", "translate_to_phi_stationary",
    "DriftStats", "FederationConfig", "ParticipationSample", "aggregate_drift_diagnostics",
    "sample_participants", "ConstraintSet", "diameter", "gradient_mapping", "project", "HyperParams",
    "LocalUpdateResult", "ParamState", "fessgda_round", "local_updates", "ncc_regularize",
    "preset_hyperparams", "run_fessgda", "run_fsgda", "run_local_sgda_baseline", "run_smoothed_gda",
    "KnownConstants", "ProblemSpec", "full_gradient", "make_plpl_testbed", "make_pointwise_max",
    "make_quadratic_minimax", "make_wgan1d", "measure_heterogeneity",
]
