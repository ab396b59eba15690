"""Classical and center-outward rank-based portmanteau tests for VARMA
models, with the measure-transportation rank machinery, one-step
R-estimation, and a reproducible Monte Carlo harness."""

__version__ = "0.1.0"

from .estimation import (
    KMatrix,
    QmleFit,
    REstimate,
    estimate_K,
    gaussian_central_sequence,
    hannan_rissanen_init,
    qmle,
    r_estimate_one_step,
    rank_central_sequence,
)
from .grids import CenterOutwardMap, Grid, compute_map, make_grid, ranks_and_signs
from .innovations import GaussianMixture, SkewT, SphericalNormal, make_sampler, mixture_default
from .montecarlo import (
    ExperimentError,
    McConfig,
    McResult,
    alt_spec_default,
    emit_results,
    null_spec_default,
    run_power_experiment,
    run_size_experiment,
)
from .portmanteau import TestReport, WeightMatrices, gaussian_stat, p_value, rank_stat, weight_matrices
from .scores import (
    RankCrossCov,
    ScoreSpec,
    chi2_quantile,
    make_score,
    rank_cross_cov,
    score_eval,
    score_moments,
    score_moments_mc,
    stack_cross_cov,
)
from .varma import (
    GreenMatrices,
    ModelError,
    ResidualSet,
    SeriesData,
    VarmaSpec,
    coeff_blocks,
    green_matrices,
    residuals,
    simulate,
    validate_spec,
)
