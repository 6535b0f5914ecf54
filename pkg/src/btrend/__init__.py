"""Bayesian and penalized trend filtering for univariate series."""

__version__ = "0.1.0"

from .bench import (
    BenchConfig,
    BenchReport,
    TestFunction,
    coverage,
    eval_function,
    mse,
    run_benchmark,
    simulate_dataset,
)
from .dataio import Dataset, ingest_csv
from .difference import BandedSPD, DifferenceOperator, difference_operator
from .gibbs import (
    ChainDraws,
    ChainState,
    PosteriorSummary,
    PriorSpec,
    SamplerConfig,
    run_chain,
    summarize,
)
from .mm import (
    BootstrapBand,
    CVResult,
    FitResult,
    MMConfig,
    bootstrap_intervals,
    default_lambda_grid,
    kfold_cv,
    mm_fit,
)
from .rng import (
    RngStream,
    draw_gamma,
    draw_gaussian_banded,
    draw_inverse_gamma,
    draw_inverse_gaussian,
)

__all__ = [
    "BandedSPD",
    "BenchConfig",
    "BenchReport",
    "BootstrapBand",
    "CVResult",
    "ChainDraws",
    "ChainState",
    "Dataset",
    "DifferenceOperator",
    "FitResult",
    "MMConfig",
    "PosteriorSummary",
    "PriorSpec",
    "RngStream",
    "SamplerConfig",
    "TestFunction",
    "bootstrap_intervals",
    "coverage",
    "default_lambda_grid",
    "difference_operator",
    "draw_gamma",
    "draw_gaussian_banded",
    "draw_inverse_gamma",
    "draw_inverse_gaussian",
    "eval_function",
    "ingest_csv",
    "kfold_cv",
    "mm_fit",
    "mse",
    "run_benchmark",
    "run_chain",
    "simulate_dataset",
    "summarize",
]
