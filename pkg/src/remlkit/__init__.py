"""REML variance-component estimation through sparse mixed-model equations.

The restricted log-likelihood, its scores and the average-information matrix
are all computed from one sparse LDL^T factorization of the mixed-model
coefficient matrix per parameter value.
"""
from .errors import (BoundaryError, DataError, DenseThresholdError, NotPositiveDefiniteError,
                     RankDeficientError, RemlkitError)
from .mme import (MixedModelEquations, MmeSystem, apply_p, assemble_c, evaluate, solve_mme,
                  trace_p_hdot)
from .model import (KAPPA_MIN, ModelSpec, RandomFactor, Theta, build_model, h_matvec, hdot_matvec,
                    load_model, model_from_arrays)
from .reml import (average_info, default_theta0, fit, log_likelihood, loglik_components,
                   profile_sigma2, score, splitting_check)
from .results import FitResult, InfoMatrix, ScoreVec

__version__ = "0.1.0"

__all__ = [
    "BoundaryError", "DataError", "DenseThresholdError", "FitResult", "InfoMatrix", "KAPPA_MIN",
    "MixedModelEquations", "MmeSystem", "ModelSpec", "NotPositiveDefiniteError", "RandomFactor",
    "RankDeficientError", "RemlkitError", "ScoreVec", "Theta", "apply_p", "assemble_c",
    "average_info", "build_model", "default_theta0", "evaluate", "fit", "h_matvec", "hdot_matvec",
    "load_model", "log_likelihood", "loglik_components", "model_from_arrays", "profile_sigma2",
    "score", "solve_mme", "splitting_check", "trace_p_hdot",
]
