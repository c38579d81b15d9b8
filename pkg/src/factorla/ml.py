"""ML algorithms written once against a polymorphic matrix surface.

Each trainer accepts either a regular matrix (dense ndarray or CSR) or a
:class:`~factorla.normmat.NormalizedMatrix`; the algorithm body is shared
and only the generic operations below dispatch differently.  Running the
same seeded configuration on a normalized matrix and on its materialization
therefore produces the same per-iteration model trace up to floating-point
reordering.

Conventions: gradient-descent weights start at zero; K-Means centroids are
seeded samples of k distinct data rows; GNMF factors are seeded uniform
draws from (0, 1].  Iteration counts are fixed (no convergence stopping).

The logistic-regression update is ``w += alpha * T'(y / (1 + exp(T w)))``
with labels in {-1, +1}.  Note this matches the +1-label gradient of the
usual log-likelihood only up to the sign convention on y; it is kept as is
because path equivalence, not statistical fidelity, is the contract here.
"""

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import kernel, rewrite
from .exceptions import DataError, DivergenceError, ShapeError
from .normmat import NormalizedMatrix

__all__ = ["TrainConfig", "ModelOutput", "logistic_gd", "linreg_normal", "linreg_gd", "kmeans", "gnmf"]


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 20
    step_size: float = 0.01
    k: int = 10
    r: int = 5
    rng_seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.k < 1 or self.r < 1:
            raise ValueError("k and r must be >= 1")


@dataclass
class ModelOutput:
    algorithm: str
    dims: tuple
    config: TrainConfig | None
    objective: list = field(default_factory=list)
    weights: np.ndarray | None = None
    centroids: np.ndarray | None = None
    factors: tuple | None = None
    wall_time_s: float = 0.0
    counts: kernel.OpCounter = field(default_factory=kernel.OpCounter)

    def model_arrays(self):
        out = {}
        if self.weights is not None:
            out["weights"] = self.weights
        if self.centroids is not None:
            out["centroids"] = self.centroids
        if self.factors is not None:
            out["w_factor"], out["h_factor"] = self.factors
        return out

    def to_json_dict(self):
        cfg = None
        if self.config is not None:
            cfg = {
                "iterations": self.config.iterations,
                "step_size": self.config.step_size,
                "k": self.config.k,
                "r": self.config.r,
                "rng_seed": self.config.rng_seed,
            }
        return {
            "algorithm": self.algorithm,
            "dims": {"rows": self.dims[0], "cols": self.dims[1]},
            "config": cfg,
            "objective": [float(v) for v in self.objective],
            "model": {
                name: {"shape": list(arr.shape), "values": arr.ravel().tolist()}
                for name, arr in self.model_arrays().items()
            },
            "timing": {"wall_time_s": self.wall_time_s},
            "counts": self.counts.as_dict(),
        }


# ---------------------------------------------------------------------------
# the generic matrix surface


def _is_nm(m):
    return isinstance(m, NormalizedMatrix)


def _shape(m):
    return tuple(m.shape)


def _mm(m, x, counter=None):
    """``m @ x`` for a regular right operand."""
    if _is_nm(m):
        return rewrite.lmm(m, x, counter)
    return kernel.matmul(m, x, counter)


def _tmm(m, x, counter=None):
    """``m' @ x`` (transposed left multiplication)."""
    if _is_nm(m):
        return rewrite.lmm(m.T, x, counter)
    return kernel.matmul(m.T.tocsr() if sparse.issparse(m) else m.T, x, counter)


def _scale(m, c, counter=None):
    if _is_nm(m):
        return rewrite.scalar_op(m, c, "mul", counter)
    return kernel.scalar_map(m, "mul", c, counter)


def _square(m, counter=None):
    if _is_nm(m):
        return rewrite.scalar_fn(m, np.square, counter)
    return kernel.unary_map(m, np.square, counter)


def _row_sums(m, counter=None):
    if _is_nm(m):
        return rewrite.row_sums(m, counter)
    return kernel.row_sums(m, counter)


def _sum_all(m, counter=None):
    if _is_nm(m):
        return rewrite.sum_all(m, counter)
    return kernel.total_sum(m, counter)


def _crossprod(m, counter=None):
    if _is_nm(m):
        if m.transposed:
            return rewrite.gram_transposed(m.T, counter)
        return rewrite.crossprod(m, counter=counter)
    return kernel.crossprod(m, counter)


def _take_rows(m, idx):
    """Dense copy of selected logical rows (used for centroid seeding)."""
    idx = np.asarray(idx, dtype=np.int64)
    if not _is_nm(m):
        sub = m[idx]
        return sub.toarray() if sparse.issparse(sub) else np.array(sub)
    if m.transposed:
        raise ShapeError("row sampling expects an untransposed matrix")
    cols = []
    for e, f in m.blocks:
        rows = idx if e is None else e.target[idx]
        sub = f[rows] if sparse.issparse(f) else f.take(rows, axis=0)
        cols.append(sub.toarray() if sparse.issparse(sub) else sub)
    return np.hstack(cols)


def _min_value(m):
    if not _is_nm(m):
        return float(m.min()) if not sparse.issparse(m) else float(m.tocsr().data.min(initial=0.0))
    vals = []
    for _, f in m.blocks:
        if sparse.issparse(f):
            vals.append(float(f.data.min(initial=0.0)))
        elif f.size:
            vals.append(float(f.min()))
    return min(vals) if vals else 0.0


def _as_column(y, n, what="y"):
    y = kernel.as_matrix(kernel.to_dense(y))
    if y.shape != (n, 1):
        raise ShapeError(f"{what} must be {n}x1, got {y.shape[0]}x{y.shape[1]}")
    return y


def _check_finite(w, iteration):
    if not np.all(np.isfinite(w)):
        raise DivergenceError(iteration)


# ---------------------------------------------------------------------------
# algorithms


def logistic_gd(m, y, cfg):
    """Logistic regression by full-gradient descent (labels in {-1, +1})."""
    n, d = _shape(m)
    y = _as_column(y, n)
    counter = kernel.OpCounter()
    w = np.zeros((d, 1))
    trace = []
    t0 = time.perf_counter()
    for it in range(cfg.iterations):
        tw = kernel.to_dense(_mm(m, w, counter))
        with np.errstate(over="ignore"):
            p = y / (1.0 + np.exp(tw))
            trace.append(float(np.sum(np.log1p(np.exp(-np.abs(y * tw))) + np.maximum(-y * tw, 0.0))))
        w = w + cfg.step_size * kernel.to_dense(_tmm(m, p, counter))
        _check_finite(w, it)
    wall = time.perf_counter() - t0
    return ModelOutput("logistic_gd", (n, d), cfg, trace, weights=w, wall_time_s=wall, counts=counter)


def linreg_normal(m, y):
    """Least squares via the normal equations and the pseudo-inverse.

    Returns the minimum-norm solution; rank-deficient feature matrices are
    fine because the Gram matrix is pseudo-inverted.
    """
    n, d = _shape(m)
    y = _as_column(y, n)
    counter = kernel.OpCounter()
    t0 = time.perf_counter()
    g = _crossprod(m, counter)
    tty = kernel.to_dense(_tmm(m, y, counter))
    w = kernel.matmul(kernel.pinv_dense(g, counter), tty, counter)
    resid = kernel.to_dense(_mm(m, w, counter)) - y
    wall = time.perf_counter() - t0
    out = ModelOutput("linreg_normal", (n, d), None, [float(np.sum(resid**2))], weights=w)
    out.wall_time_s = wall
    out.counts = counter
    return out


def linreg_gd(m, y, cfg):
    """Least squares by gradient descent: ``w -= alpha * T'(T w - y)``."""
    n, d = _shape(m)
    y = _as_column(y, n)
    counter = kernel.OpCounter()
    w = np.zeros((d, 1))
    trace = []
    t0 = time.perf_counter()
    for it in range(cfg.iterations):
        tw = kernel.to_dense(_mm(m, w, counter))
        resid = tw - y
        trace.append(float(np.sum(resid**2)))
        w = w - cfg.step_size * kernel.to_dense(_tmm(m, resid, counter))
        _check_finite(w, it)
    wall = time.perf_counter() - t0
    return ModelOutput("linreg_gd", (n, d), cfg, trace, weights=w, wall_time_s=wall, counts=counter)


def kmeans(m, cfg):
    """K-Means in matrix form; centroids are columns of a d x k matrix.

    Squared distances use the precomputed row norms plus the centroid norms
    minus twice the data-centroid inner products; assignment breaks ties to
    the lowest centroid index, and an empty cluster keeps its previous
    centroid.
    """
    n, d = _shape(m)
    if cfg.k > n:
        raise DataError(f"k={cfg.k} exceeds the number of data rows ({n})")
    rng = np.random.default_rng(cfg.rng_seed)
    counter = kernel.OpCounter()
    t0 = time.perf_counter()
    c = np.ascontiguousarray(_take_rows(m, rng.choice(n, size=cfg.k, replace=False)).T)
    d_t = kernel.to_dense(_row_sums(_square(m, counter), counter))
    two_t = _scale(m, 2.0, counter)
    trace = []
    for _ in range(cfg.iterations):
        dist = d_t + np.sum(c * c, axis=0, keepdims=True) - kernel.to_dense(_mm(two_t, c, counter))
        a = kernel.row_min_mask(dist)
        trace.append(float(np.sum(dist * a)))
        sizes = a.sum(axis=0, keepdims=True)
        tta = kernel.to_dense(_tmm(m, a, counter))
        nonempty = sizes.ravel() > 0
        c = c.copy()
        c[:, nonempty] = tta[:, nonempty] / sizes[:, nonempty]
    wall = time.perf_counter() - t0
    return ModelOutput("kmeans", (n, d), cfg, trace, centroids=c, wall_time_s=wall, counts=counter)


def gnmf(m, cfg):
    """Gaussian NMF by multiplicative updates; factors W (n x r), H (d x r).

    The Frobenius objective ||T - W H'|| is tracked after each full update
    pair without materializing T.  Denominators carry a 1e-12 guard.
    """
    n, d = _shape(m)
    if _min_value(m) < 0:
        warnings.warn("input has negative entries; GNMF semantics assume non-negative data")
    rng = np.random.default_rng(cfg.rng_seed)
    counter = kernel.OpCounter()
    t0 = time.perf_counter()
    w = 1.0 - rng.random((n, cfg.r))
    h = 1.0 - rng.random((d, cfg.r))
    sum_t2 = _sum_all(_square(m, counter), counter)
    trace = []
    eps = 1e-12
    cpw = kernel.crossprod(w, counter)
    for _ in range(cfg.iterations):
        ttw = kernel.to_dense(_tmm(m, w, counter))
        h = h * ttw / (h @ cpw + eps)
        cph = kernel.crossprod(h, counter)
        th = kernel.to_dense(_mm(m, h, counter))
        w = w * th / (w @ cph + eps)
        ttw_now = kernel.to_dense(_tmm(m, w, counter))
        cpw = kernel.crossprod(w, counter)
        sq = sum_t2 - 2.0 * float(np.sum(ttw_now * h)) + float(np.sum(cpw * cph))
        trace.append(float(np.sqrt(max(sq, 0.0))))
    wall = time.perf_counter() - t0
    return ModelOutput("gnmf", (n, d), cfg, trace, factors=(w, h), wall_time_s=wall, counts=counter)
