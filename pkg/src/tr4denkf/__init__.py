"""Trust-region 4D ensemble Kalman filtering and its reduced-space baselines."""
from .core import (
    AssimilationError,
    ConfigurationError,
    DegenerateBasisError,
    DiagonalCovariance,
    DimensionError,
    DivergenceError,
    IllConditionedError,
    Observation,
    ObservationOperator,
    SubproblemError,
    weighted_sq_norm,
)
from .drivers import (
    AnalysisResult,
    AssimilationProblem,
    StopCriteria,
    full_cost,
    run_ism,
    run_pod_4denkf,
    run_tr_4denkf,
)
from .models import LinearModel, Lorenz96Model, forecast
from .trustregion import TRParams, generic_trust_region, solve_subproblem

__version__ = "0.1.0"
