"""Imbalanced binary regression, q-exponential families and their Poisson point-process limit."""

from imbreg._backend import BACKEND
from imbreg.deformed import (
    LinkFamily,
    NormalizingTriple,
    exp_q,
    ln_exp_q,
    normalizing_sequence,
    t_logistic_cdf,
    verify_gev,
)
from imbreg.glm import (
    BinaryDataset,
    GlmFit,
    MissingClassError,
    NonSeparableViolation,
    NormalizedCoefficients,
    RawCoefficients,
    denormalize_coefficients,
    fit_glm,
    glm_log_likelihood,
    normalize_coefficients,
)
from imbreg.io import DataError
from imbreg.ppp import (
    CovariateDistribution,
    DivergenceDetected,
    EventSample,
    HyperplaneSupportError,
    PointProcessFit,
    PointProcessModel,
    fit_additive_smoothing,
    penalized_objective,
    point_process_log_likelihood,
    q_exponential_density,
    region_intensity,
    theta_contains,
    total_intensity,
)
from imbreg.simlab import (
    ConvergenceReport,
    PaperSampleSpec,
    RegionPartition,
    generate_paper_sample,
    run_convergence_experiment,
    simulate_imbalanced,
    verify_poisson_limit,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BinaryDataset",
    "ConvergenceReport",
    "CovariateDistribution",
    "DataError",
    "DivergenceDetected",
    "EventSample",
    "GlmFit",
    "HyperplaneSupportError",
    "LinkFamily",
    "MissingClassError",
    "NonSeparableViolation",
    "NormalizedCoefficients",
    "NormalizingTriple",
    "PaperSampleSpec",
    "PointProcessFit",
    "PointProcessModel",
    "RawCoefficients",
    "RegionPartition",
    "denormalize_coefficients",
    "exp_q",
    "fit_additive_smoothing",
    "fit_glm",
    "generate_paper_sample",
    "glm_log_likelihood",
    "ln_exp_q",
    "normalize_coefficients",
    "normalizing_sequence",
    "penalized_objective",
    "point_process_log_likelihood",
    "q_exponential_density",
    "region_intensity",
    "run_convergence_experiment",
    "simulate_imbalanced",
    "t_logistic_cdf",
    "theta_contains",
    "total_intensity",
    "verify_gev",
    "verify_poisson_limit",
]
