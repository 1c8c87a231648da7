"""Partial-identification bounds on the general probability of necessity."""

from .bounds import (
    BoundInterval,
    Diagnostics,
    IntervalWeights,
    MarginalPoint,
    SensitivityCurve,
    Thresholds,
    aggregate,
    copula_gpn,
    copula_gpn_bounds,
    fh_bounds,
    find_rho_crossing,
    guard_marginals,
    interval_gpn,
    interval_weights,
    mono_bounds,
    point_identify_mono,
    sensitivity_curve,
)
from .copula import (
    CopulaFamily,
    CopulaSpec,
    DependenceRange,
    copula_cdf,
    copula_extremes,
    param_to_tau,
    sample_copula_pair,
    tau_to_param,
)
from .normal import bvn_cdf, norm_cdf, norm_ppf

__version__ = "0.1.0"
