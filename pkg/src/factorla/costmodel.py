"""Arithmetic-count prediction and the factorize-or-materialize heuristic.

The closed-form counts give the multiplies of the standard (single-table)
and factorized execution of each operator, ignoring lower-order terms.  The
dispatch rule thresholds the tuple ratio and feature ratio (defaults tau=5,
rho=1): low redundancy means the rewrite overhead is not worth it.  M:N
variants have no meaningful tuple/feature ratio, so they are decided by
comparing predicted counts directly with a 1.25x safety margin.
"""

import weakref
from dataclasses import dataclass
from enum import Enum

from . import kernel, rewrite
from .normmat import MN, MULTIMN, materialize, stats

__all__ = [
    "DecisionThresholds",
    "CountPrediction",
    "Plan",
    "predict_counts",
    "decide",
    "plan_for",
    "auto_dispatch",
    "KNOWN_OPS",
]


@dataclass(frozen=True)
class DecisionThresholds:
    tau: float = 5.0
    rho: float = 1.0

    def __post_init__(self):
        if self.tau <= 0 or self.rho <= 0:
            raise ValueError("thresholds must be positive")


@dataclass(frozen=True)
class CountPrediction:
    op: str
    standard: float
    factorized: float

    @property
    def predicted_speedup(self):
        return self.standard / self.factorized


class Plan(str, Enum):
    FACTORIZED = "factorized"
    MATERIALIZED = "materialized"


KNOWN_OPS = (
    "scalar_op",
    "rowsums",
    "colsums",
    "sum",
    "lmm",
    "rmm",
    "crossprod",
    "ginv",
)

_AGGREGATE_LIKE = {"scalar_op", "rowsums", "colsums", "sum"}


def _factor_cells(st):
    # total stored cells across base tables; the factorized linear cost unit
    return st.n_s * st.d_s + sum(n * d for n, d in zip(st.n_r, st.d_r))


def predict_counts(op, st, d_x=None, n_x=None):
    """Evaluate the closed-form multiply counts for one operator.

    ``st`` is a ShapeStats; ``d_x``/``n_x`` give the width of the regular
    operand for lmm/rmm.  Quadratic-cost predictions (crossprod, ginv) use
    the two-table forms; for star inputs the cross-attribute blocks are a
    lower-order omission of the same kind the source tables make.
    """
    n, d = st.logical_rows, st.logical_cols
    cells = _factor_cells(st)
    cp_fact = (
        0.5 * st.n_s * st.d_s**2
        + sum(0.5 * nr * dr**2 + st.d_s * dr * nr for nr, dr in zip(st.n_r, st.d_r))
    )
    if op in _AGGREGATE_LIKE:
        std, fact = n * d, cells
    elif op == "lmm":
        if d_x is None:
            raise ValueError("lmm prediction needs d_x")
        std, fact = d_x * n * d, d_x * cells
    elif op == "rmm":
        if n_x is None:
            raise ValueError("rmm prediction needs n_x")
        std, fact = n_x * n * d, n_x * cells
    elif op == "crossprod":
        std, fact = 0.5 * d * d * n, cp_fact
    elif op == "ginv":
        if n > d:
            std = 7 * n * d**2 + 20 * d**3
            fact = 27 * d**3 + cp_fact + d * cells
        else:
            std = 7 * n**2 * d + 20 * n**3
            gram_fact = 0.5 * st.n_s**2 * st.d_s + sum(
                0.5 * nr**2 * dr for nr, dr in zip(st.n_r, st.d_r)
            )
            fact = 27 * n**3 + gram_fact + n * cells
    else:
        raise ValueError(f"unknown operator id {op!r} (known: {', '.join(KNOWN_OPS)})")
    return CountPrediction(op=op, standard=float(std), factorized=float(fact))


def decide(st, thresholds=None):
    """Pick the execution plan from shape statistics alone.

    PK-FK shapes: materialize iff TR < tau or FR < rho.  M:N shapes carry no
    tuple/feature ratio, so the predicted LMM counts decide, factorizing
    only when the saving clears a 1.25x margin.
    """
    thresholds = thresholds or DecisionThresholds()
    if st.variant in (MN, MULTIMN):
        pred = predict_counts("lmm", st, d_x=1)
        if pred.factorized * 1.25 < pred.standard:
            return Plan.FACTORIZED
        return Plan.MATERIALIZED
    if st.tuple_ratio < thresholds.tau or st.feature_ratio < thresholds.rho:
        return Plan.MATERIALIZED
    return Plan.FACTORIZED


# ---------------------------------------------------------------------------
# automatic dispatch

_plan_cache = weakref.WeakKeyDictionary()
_mat_cache = weakref.WeakKeyDictionary()


def plan_for(nm, thresholds=None):
    """Cached decision for a normalized matrix (decide runs once per matrix)."""
    thresholds = thresholds or DecisionThresholds()
    per_nm = _plan_cache.setdefault(nm, {})
    key = (thresholds.tau, thresholds.rho)
    if key not in per_nm:
        per_nm[key] = decide(stats(nm), thresholds)
    return per_nm[key]


def _materialized(nm):
    if nm not in _mat_cache:
        _mat_cache[nm] = materialize(nm)
    return _mat_cache[nm]


def _std_ginv(t, counter=None):
    return kernel.pinv_dense(t if not kernel.is_sparse(t) else t.toarray(), counter)


_FACTORIZED_OPS = {
    "scalar_op": lambda nm, c, x=1.0, op="mul": rewrite.scalar_op(nm, x, op, c),
    "scalar_fn": lambda nm, c, f=None: rewrite.scalar_fn(nm, f, c),
    "rowsums": lambda nm, c: rewrite.row_sums(nm, c),
    "colsums": lambda nm, c: rewrite.col_sums(nm, c),
    "sum": lambda nm, c: rewrite.sum_all(nm, c),
    "lmm": lambda nm, c, x=None: rewrite.lmm(nm, x, c),
    "rmm": lambda nm, c, x=None: rewrite.rmm(x, nm, c),
    "crossprod": lambda nm, c, method="efficient": rewrite.crossprod(nm, method, c),
    "gram_transposed": lambda nm, c: rewrite.gram_transposed(nm, c),
    "ginv": lambda nm, c: rewrite.ginv(nm, c),
}

_STANDARD_OPS = {
    "scalar_op": lambda t, c, x=1.0, op="mul": kernel.scalar_map(t, op, x, c),
    "scalar_fn": lambda t, c, f=None: kernel.unary_map(t, f, c),
    "rowsums": lambda t, c: kernel.row_sums(t, c),
    "colsums": lambda t, c: kernel.col_sums(t, c),
    "sum": lambda t, c: kernel.total_sum(t, c),
    "lmm": lambda t, c, x=None: kernel.matmul(t, x, c),
    "rmm": lambda t, c, x=None: kernel.matmul(x, t, c),
    "crossprod": lambda t, c, method="efficient": kernel.crossprod(t, c),
    "gram_transposed": lambda t, c: kernel.gram(t, c),
    "ginv": lambda t, c: _std_ginv(t, c),
}


def auto_dispatch(op, nm, thresholds=None, counter=None, **op_args):
    """Run one operator on the plan :func:`decide` picks for this matrix.

    The verdict and (on the materialized plan) the expanded table are cached
    per normalized matrix, so iterative callers pay the join at most once.
    Closed operators return a normalized matrix on the factorized plan and a
    regular matrix on the materialized plan; numeric results agree either
    way within floating-point tolerance.
    """
    if op not in _FACTORIZED_OPS:
        raise ValueError(f"unknown operator id {op!r}")
    plan = plan_for(nm, thresholds)
    if plan is Plan.FACTORIZED:
        return _FACTORIZED_OPS[op](nm, counter, **op_args)
    return _STANDARD_OPS[op](_materialized(nm), counter, **op_args)
