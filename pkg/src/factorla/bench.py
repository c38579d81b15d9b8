"""Timed factorized-vs-materialized comparisons with correctness gating.

Every benchmark first checks that both execution paths produce the same
values; timing a wrong answer is meaningless, so a deviation beyond the
tolerance aborts the run.  Timings are medians over a configurable number
of trials after warmup runs, and instrumented multiply/add counts are
collected in a separate non-timed pass alongside the closed-form
predictions.
"""

import statistics
import time

import numpy as np

from . import costmodel, kernel, ml, rewrite
from .exceptions import FactorlaError
from .normmat import materialize, stats

__all__ = ["CorrectnessError", "OP_BENCHMARKS", "ALGO_BENCHMARKS", "bench_op", "bench_algo"]

CORRECTNESS_TOL = 1e-6


class CorrectnessError(FactorlaError):
    """Factorized and materialized paths disagreed beyond tolerance."""


def _comparable(result):
    """Flatten any benchmark result into a dense array for comparison."""
    if hasattr(result, "blocks"):
        result = materialize(result)
    if np.isscalar(result):
        return np.array([[float(result)]])
    return np.asarray(kernel.to_dense(result), dtype=np.float64)


def max_rel_deviation(a, b):
    a, b = _comparable(a), _comparable(b)
    if a.shape != b.shape:
        raise CorrectnessError(f"result shapes differ: {a.shape} vs {b.shape}")
    scale = max(float(np.max(np.abs(b))), 1e-30)
    return float(np.max(np.abs(a - b)) / scale)


def _timed(fn, warmup, trials):
    for _ in range(warmup):
        fn()
    out = []
    for _ in range(trials):
        t0 = time.perf_counter()
        fn()
        out.append((time.perf_counter() - t0) * 1000.0)
    return out


# ---------------------------------------------------------------------------
# operator benchmarks: name -> (factorized fn, standard fn, prediction id)


def _op_spec(op, d_x, n_x, method):
    if op == "scalar_mult":
        return (
            lambda nm, c=None: rewrite.scalar_op(nm, 3.0, "mul", c),
            lambda t, c=None: kernel.scalar_map(t, "mul", 3.0, c),
            ("scalar_op", {}),
            None,
        )
    if op == "scalar_add":
        return (
            lambda nm, c=None: rewrite.scalar_op(nm, 3.0, "add", c),
            lambda t, c=None: kernel.scalar_map(t, "add", 3.0, c),
            ("scalar_op", {}),
            None,
        )
    if op == "scalar_exp":
        return (
            lambda nm, c=None: rewrite.scalar_fn(nm, np.exp, c),
            lambda t, c=None: kernel.unary_map(t, np.exp, c),
            ("scalar_op", {}),
            None,
        )
    if op == "rowsums":
        return (
            lambda nm, c=None: rewrite.row_sums(nm, c),
            lambda t, c=None: kernel.row_sums(t, c),
            ("rowsums", {}),
            None,
        )
    if op == "colsums":
        return (
            lambda nm, c=None: rewrite.col_sums(nm, c),
            lambda t, c=None: kernel.col_sums(t, c),
            ("colsums", {}),
            None,
        )
    if op == "sum":
        return (
            lambda nm, c=None: rewrite.sum_all(nm, c),
            lambda t, c=None: kernel.total_sum(t, c),
            ("sum", {}),
            None,
        )
    if op == "lmm":
        return (
            lambda nm, c=None, x=None: rewrite.lmm(nm, x, c),
            lambda t, c=None, x=None: kernel.matmul(t, x, c),
            ("lmm", {"d_x": d_x}),
            lambda nm, rng: {"x": rng.random((nm.shape[1], d_x))},
        )
    if op == "rmm":
        return (
            lambda nm, c=None, x=None: rewrite.rmm(x, nm, c),
            lambda t, c=None, x=None: kernel.matmul(x, t, c),
            ("rmm", {"n_x": n_x}),
            lambda nm, rng: {"x": rng.random((n_x, nm.shape[0]))},
        )
    if op == "crossprod":
        return (
            lambda nm, c=None: rewrite.crossprod(nm, method, c),
            lambda t, c=None: kernel.crossprod(t, c),
            ("crossprod", {}),
            None,
        )
    if op == "gram_transposed":
        return (
            lambda nm, c=None: rewrite.gram_transposed(nm, c),
            lambda t, c=None: kernel.gram(t, c),
            ("crossprod", {}),
            None,
        )
    if op == "ginv":
        return (
            lambda nm, c=None: rewrite.ginv(nm, c),
            lambda t, c=None: kernel.pinv_dense(kernel.to_dense(t), c),
            ("ginv", {}),
            None,
        )
    raise ValueError(f"unknown benchmark op {op!r}")


OP_BENCHMARKS = (
    "scalar_mult",
    "scalar_add",
    "scalar_exp",
    "rowsums",
    "colsums",
    "sum",
    "lmm",
    "rmm",
    "crossprod",
    "gram_transposed",
    "ginv",
)


def bench_op(nm, op, d_x=10, n_x=10, method="efficient", warmup=2, trials=5, seed=0):
    """Benchmark one operator on both paths; returns a JSON-ready record."""
    fact_fn, std_fn, (pred_id, pred_kw), make_args = _op_spec(op, d_x, n_x, method)
    rng = np.random.default_rng(seed)
    args = make_args(nm, rng) if make_args else {}
    t = materialize(nm)

    fact_result = fact_fn(nm, **args)
    std_result = std_fn(t, **args)
    err = max_rel_deviation(fact_result, std_result)
    if err > CORRECTNESS_TOL:
        raise CorrectnessError(
            f"op {op}: factorized deviates from materialized by {err:.3e} "
            f"(tolerance {CORRECTNESS_TOL:.0e})"
        )

    fact_counter, std_counter = kernel.OpCounter(), kernel.OpCounter()
    fact_fn(nm, fact_counter, **args)
    std_fn(t, std_counter, **args)

    times_f = _timed(lambda: fact_fn(nm, **args), warmup, trials)
    times_m = _timed(lambda: std_fn(t, **args), warmup, trials)
    med_f, med_m = statistics.median(times_f), statistics.median(times_m)

    st = stats(nm)
    predict = costmodel.predict_counts(pred_id, st, **pred_kw)
    predicted = {
        "standard": predict.standard,
        "factorized": predict.factorized,
        "speedup": predict.predicted_speedup,
    }
    return {
        "op": op,
        "method": method if op == "crossprod" else None,
        "dims": _dims_record(st),
        "warmup": warmup,
        "trials": trials,
        "times_ms": {"factorized": times_f, "materialized": times_m},
        "median_ms": {"factorized": med_f, "materialized": med_m},
        "speedup": med_m / med_f if med_f > 0 else float("inf"),
        "max_rel_err": err,
        "counts": {
            "factorized": fact_counter.as_dict(),
            "materialized": std_counter.as_dict(),
            "predicted": predicted,
        },
    }


# ---------------------------------------------------------------------------
# algorithm benchmarks

ALGO_BENCHMARKS = ("logreg", "linreg", "linreg_gd", "kmeans", "gnmf")


def _run_algo(algo, m, y, cfg):
    if algo == "logreg":
        return ml.logistic_gd(m, y, cfg)
    if algo == "linreg":
        return ml.linreg_normal(m, y)
    if algo == "linreg_gd":
        return ml.linreg_gd(m, y, cfg)
    if algo == "kmeans":
        return ml.kmeans(m, cfg)
    if algo == "gnmf":
        return ml.gnmf(m, cfg)
    raise ValueError(f"unknown algorithm {algo!r}")


def needs_target(algo):
    return algo in ("logreg", "linreg", "linreg_gd")


def bench_algo(nm, y, algo, cfg, warmup=1, trials=3):
    """Benchmark one training algorithm end to end on both paths."""
    if needs_target(algo) and y is None:
        raise FactorlaError(f"algorithm {algo} needs a target column in the dataset")
    t = materialize(nm)

    out_f = _run_algo(algo, nm, y, cfg)
    out_m = _run_algo(algo, t, y, cfg)
    err = 0.0
    arrays_f, arrays_m = out_f.model_arrays(), out_m.model_arrays()
    for key in arrays_f:
        err = max(err, max_rel_deviation(arrays_f[key], arrays_m[key]))
    if err > CORRECTNESS_TOL:
        raise CorrectnessError(
            f"algo {algo}: model state deviates by {err:.3e} between paths"
        )

    times_f = _timed(lambda: _run_algo(algo, nm, y, cfg), warmup, trials)
    times_m = _timed(lambda: _run_algo(algo, t, y, cfg), warmup, trials)
    med_f, med_m = statistics.median(times_f), statistics.median(times_m)
    st = stats(nm)
    return {
        "algo": algo,
        "dims": _dims_record(st),
        "config": out_f.to_json_dict()["config"],
        "warmup": warmup,
        "trials": trials,
        "times_ms": {"factorized": times_f, "materialized": times_m},
        "median_ms": {"factorized": med_f, "materialized": med_m},
        "speedup": med_m / med_f if med_f > 0 else float("inf"),
        "max_rel_err": err,
        "objective_head": [float(v) for v in out_f.objective[:3]],
        "counts": {
            "factorized": out_f.counts.as_dict(),
            "materialized": out_m.counts.as_dict(),
        },
    }


def _dims_record(st):
    return {
        "variant": st.variant,
        "n_s": st.n_s,
        "d_s": st.d_s,
        "n_r": list(st.n_r),
        "d_r": list(st.d_r),
        "logical_rows": st.logical_rows,
        "logical_cols": st.logical_cols,
        "tuple_ratio": st.tuple_ratio,
        "feature_ratio": None if np.isinf(st.feature_ratio) else st.feature_ratio,
    }
