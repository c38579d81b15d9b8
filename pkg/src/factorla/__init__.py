"""Factorized linear algebra over normalized (multi-table) data.

The package represents a key-joined dataset as a :class:`NormalizedMatrix`
over its base tables and executes linear-algebra operators and ML training
directly on the factors through algebraic rewrites, avoiding the redundancy
of materializing the join.  A cost heuristic decides per matrix whether the
factorized or the materialized route will be faster.
"""

from .costmodel import (
    CountPrediction,
    DecisionThresholds,
    Plan,
    auto_dispatch,
    decide,
    plan_for,
    predict_counts,
)
from .exceptions import (
    DataError,
    DivergenceError,
    EmptyJoinError,
    FactorlaError,
    NumericError,
    ShapeError,
)
from .indicator import IndicatorMatrix
from .kernel import OpCounter, pinv_dense, row_min_mask
from .ml import ModelOutput, TrainConfig, gnmf, kmeans, linreg_gd, linreg_normal, logistic_gd
from .normmat import (
    NormalizedMatrix,
    ShapeStats,
    build_mn,
    build_multimn,
    build_pkfk,
    build_star,
    materialize,
    stats,
    transpose,
)
from .rewrite import (
    col_sums,
    crossprod,
    dmm,
    dmm_gram,
    elementwise_matrix_op,
    ginv,
    gram_transposed,
    lmm,
    rmm,
    row_sums,
    scalar_fn,
    scalar_op,
    sum_all,
)

__version__ = "0.1.0"

__all__ = [
    "NormalizedMatrix",
    "IndicatorMatrix",
    "ShapeStats",
    "OpCounter",
    "TrainConfig",
    "ModelOutput",
    "DecisionThresholds",
    "CountPrediction",
    "Plan",
    "build_pkfk",
    "build_star",
    "build_mn",
    "build_multimn",
    "materialize",
    "transpose",
    "stats",
    "scalar_op",
    "scalar_fn",
    "row_sums",
    "col_sums",
    "sum_all",
    "lmm",
    "rmm",
    "crossprod",
    "gram_transposed",
    "ginv",
    "dmm",
    "dmm_gram",
    "elementwise_matrix_op",
    "predict_counts",
    "decide",
    "plan_for",
    "auto_dispatch",
    "pinv_dense",
    "row_min_mask",
    "logistic_gd",
    "linreg_normal",
    "linreg_gd",
    "kmeans",
    "gnmf",
    "FactorlaError",
    "ShapeError",
    "DataError",
    "EmptyJoinError",
    "NumericError",
    "DivergenceError",
]
