"""Poisson-Voronoi approximation of sets: simulation, covariogram theory, rates."""

from .approx import (
    ApproximationModel,
    MomentSummary,
    Quadrature,
    VolumeSample,
    build_model,
    estimate_volumes,
    replicate,
)
from .covariogram import (
    AngularRule,
    ConvergenceError,
    CovariogramEvaluator,
    SphericalAggregate,
    angular_rule,
    covariogram,
    directional_derivative_at_zero,
    perimeter_from_covariogram,
    spherical_aggregate,
)
from .fit import PowerLawFit, fit_power_law
from .geom import (
    Ball,
    Box,
    DimConstants,
    Difference,
    Shape,
    Union,
    bounding_box,
    contains,
    dim_constants,
    pva_constant,
    shape_from_json,
    shape_to_json,
    unit_ball_volume,
)
from .sampler import NucleusSet, Window, label_nuclei, sample_ppp, simulation_window
from .theory import (
    TheoryPrediction,
    asymptotic_mean_sym_diff,
    asymptotic_moment,
    direct_mean_sym_diff,
    exact_mean_sym_diff,
    kernel_integral_check,
    moment_bound_report,
    predict,
    variance_rate_report,
)

__version__ = "0.1.0"
