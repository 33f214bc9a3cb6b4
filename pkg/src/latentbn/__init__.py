"""Exact Bayesian evidence and latent-label estimation errors for two-layered binary networks."""

from .asymptotics import (
    BoundSet,
    FisherTriple,
    LambdaFit,
    RankDeficiencyError,
    SingularFisherError,
    bn_bounds,
    dn_coefficients,
    fisher_matrices,
    fit_lambda,
    fit_lambda_arrays,
    transition_point,
)
from .estimation import (
    ERROR_KINDS,
    ErrorCurve,
    ErrorEstimate,
    FreeEnergyEstimate,
    error_curve,
    error_curves,
    estimate_error,
    estimate_errors,
    estimate_free_energy,
    mix_seed,
    paired_difference,
    replicate_error,
)
from .estimators import BayesLatentEstimator, LearningCoefficientRegressor
from .evidence import (
    ENUMERATION_CAP_BITS,
    BudgetError,
    Hyper,
    log_posterior_labels,
    log_Z_complete,
    log_Z_X,
    log_Z_XY1,
    log_Z_XY1C,
    log_Z_XY11,
    mc_log_Z_X,
)
from .model import (
    BNParams,
    Dataset,
    NetworkShape,
    ShapeError,
    apply_symmetry,
    embed_eliminating,
    embed_replicating,
    h_function,
    joint_table,
    sample_dataset,
    symmetry_counts,
)

__version__ = "0.1.0"
