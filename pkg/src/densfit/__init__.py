"""Additive conditional density regression over mixed domains.

Fits structured additive models for conditional probability densities
(continuous, discrete, or mixed) directly from raw samples by reducing the
density-space penalized likelihood to a penalized Poisson regression over
binned counts, with confidence regions, p-values, ceteris-paribus
interpretation tools, and a simulation harness.
"""

__version__ = "0.1.0"

from .bayes_space import (
    BayesDensity,
    GridFunction,
    MixedDomain,
    clr,
    inner_product,
    integrate,
    inv_clr,
    norm,
    perturb,
    power,
)
from .basis import (
    ModelSpec,
    ResponseBasis,
    TermSpec,
    covariate_design,
    check_rank_conditions,
)
from .binning import Observations, build_binned_design, read_csv
from .fit import (
    FitResult,
    fit_direct_bayes,
    fit_multinomial,
    fit_newton,
    fit_poisson,
    select_smoothing,
)
from .inference import (
    EffectRegion,
    chi2_cdf,
    chi2_quantile,
    effect_region,
    p_value,
    sample_region,
    simultaneous_region,
)
from .interpret import (
    ClrEffect,
    effect_function,
    mass_shift_sets,
    odds_ratio,
    predict_clr,
    transform_reference,
)
from .sim import SimScenario, coverage_experiment, rel_mse, sample_binned

__all__ = [
    "BayesDensity",
    "ClrEffect",
    "EffectRegion",
    "FitResult",
    "GridFunction",
    "MixedDomain",
    "ModelSpec",
    "Observations",
    "ResponseBasis",
    "SimScenario",
    "TermSpec",
    "build_binned_design",
    "check_rank_conditions",
    "chi2_cdf",
    "chi2_quantile",
    "clr",
    "covariate_design",
    "coverage_experiment",
    "effect_function",
    "effect_region",
    "fit_direct_bayes",
    "fit_multinomial",
    "fit_newton",
    "fit_poisson",
    "inner_product",
    "integrate",
    "inv_clr",
    "mass_shift_sets",
    "norm",
    "odds_ratio",
    "p_value",
    "perturb",
    "power",
    "predict_clr",
    "read_csv",
    "rel_mse",
    "sample_binned",
    "sample_region",
    "select_smoothing",
    "simultaneous_region",
    "transform_reference",
]
