"""Minimal numeric matrix layer: dense/CSR kernels with arithmetic counting.

Matrices are either C-contiguous float64 2-D ``numpy.ndarray`` (dense) or
``scipy.sparse.csr_matrix`` with sorted indices (sparse).  Every kernel is a
pure function; mutation never escapes a call.

Counting conventions (recorded in an :class:`OpCounter`):

* dense product (m x k)(k x n): ``m*k*n`` multiplies, ``m*(k-1)*n`` additions
* sparse operands: multiplies proportional to the nonzero contributions that
  are actually formed (never ``m*k*n``)
* ``crossprod``/``gram`` exploit symmetry (BLAS syrk), so a dense n x d input
  registers ``n*d*(d+1)/2`` multiplies
* aggregations are executed as ones-vector products, so they register one
  multiply per element touched; a pure addition tree would register zero
  multiplies and make the operator invisible to multiply-based accounting
* elementwise scalar maps register one multiply per element for ``*``, ``/``,
  ``^`` and function application, one addition per element for ``+``/``-``
"""

import numpy as np
from scipy import sparse
from scipy.linalg import blas as _blas

from .exceptions import NumericError, ShapeError

__all__ = [
    "OpCounter",
    "as_matrix",
    "is_sparse",
    "to_dense",
    "matmul",
    "crossprod",
    "gram",
    "row_sums",
    "col_sums",
    "total_sum",
    "add",
    "scalar_map",
    "unary_map",
    "pinv_dense",
    "row_min_mask",
]


class OpCounter:
    """Accumulator for scalar multiply/add counts across kernel calls."""

    __slots__ = ("multiplies", "additions")

    def __init__(self, multiplies=0, additions=0):
        self.multiplies = int(multiplies)
        self.additions = int(additions)

    def tally(self, multiplies=0, additions=0):
        self.multiplies += int(multiplies)
        self.additions += int(additions)

    def merge(self, other):
        self.tally(other.multiplies, other.additions)

    def as_dict(self):
        return {"multiplies": self.multiplies, "additions": self.additions}

    def __repr__(self):
        return f"OpCounter(multiplies={self.multiplies}, additions={self.additions})"


def is_sparse(a):
    return sparse.issparse(a)


def as_matrix(a):
    """Coerce to the canonical matrix representation (2-D float64).

    Lists and 1-D arrays become dense 2-D arrays (a 1-D vector becomes a
    single column).  Sparse inputs are converted to CSR with sorted indices.
    """
    if sparse.issparse(a):
        m = a.tocsr().astype(np.float64)
        m.sort_indices()
        return m
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={m.ndim}")
    return np.ascontiguousarray(m)


def to_dense(a):
    return a.toarray() if sparse.issparse(a) else np.asarray(a)


def _check_dims(a, b, what="matmul"):
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"{what}: left operand {a.shape[0]}x{a.shape[1]} does not conform "
            f"with right operand {b.shape[0]}x{b.shape[1]}"
        )


def matmul(a, b, counter=None):
    """Matrix product with storage-aware multiply counting."""
    _check_dims(a, b)
    out = a @ b
    if counter is not None:
        m, k = a.shape
        n = b.shape[1]
        a_sp, b_sp = sparse.issparse(a), sparse.issparse(b)
        if a_sp and b_sp:
            row_len_b = np.diff(b.indptr)
            mults = int(row_len_b[a.indices].sum())
            adds = max(mults - out.nnz, 0)
        elif a_sp:
            mults = a.nnz * n
            adds = max(a.nnz - m, 0) * n
        elif b_sp:
            mults = b.nnz * m
            adds = max(b.nnz - n, 0) * m
        else:
            mults = m * k * n
            adds = m * max(k - 1, 0) * n
        counter.tally(mults, adds)
    if sparse.issparse(out):
        out.sort_indices()
    elif out.ndim != 2:
        out = np.asarray(out).reshape(a.shape[0], b.shape[1])
    return out


def _mirror_upper(c):
    # exact symmetry: copy the computed upper triangle onto the lower
    upper = np.triu(c)
    return upper + np.triu(c, 1).T


def crossprod(a, counter=None):
    """a' a, exploiting symmetry.  Output is dense and exactly symmetric."""
    n, d = a.shape
    if sparse.issparse(a):
        g = (a.T @ a).toarray()
        if counter is not None:
            # half of the generic sparse-sparse count, mirroring syrk
            row_len = np.diff(a.indptr)
            full = int((row_len * row_len).sum()) * 1  # per-row outer products
            counter.tally(full // 2 + d, max(full // 2 - d * d, 0))
        return _mirror_upper(g)
    # a.T is F-contiguous when a is C-contiguous, so syrk needs no copy
    g = _blas.dsyrk(1.0, np.asfortranarray(a.T), trans=0, lower=0)
    if counter is not None:
        mults = n * d * (d + 1) // 2
        counter.tally(mults, max(n - 1, 0) * d * (d + 1) // 2)
    return _mirror_upper(g)


def gram(a, counter=None):
    """a a', exploiting symmetry.  Output is dense and exactly symmetric."""
    n, d = a.shape
    if sparse.issparse(a):
        g = (a @ a.T).toarray()
        if counter is not None:
            col_len = np.diff(a.tocsc().indptr)
            full = int((col_len * col_len).sum())
            counter.tally(full // 2 + n, max(full // 2 - n * n, 0))
        return _mirror_upper(g)
    g = _blas.dsyrk(1.0, np.asfortranarray(a.T), trans=1, lower=0)
    if counter is not None:
        mults = d * n * (n + 1) // 2
        counter.tally(mults, max(d - 1, 0) * n * (n + 1) // 2)
    return _mirror_upper(g)


def row_sums(a, counter=None):
    """Row totals as an (n, 1) column vector (ones-vector product)."""
    n, d = a.shape
    ones = np.ones((d, 1))
    out = a @ ones
    if counter is not None:
        mults = a.nnz if sparse.issparse(a) else n * d
        counter.tally(mults, max(mults - n, 0))
    return np.asarray(out).reshape(n, 1)


def col_sums(a, counter=None):
    """Column totals as a (1, d) row vector (ones-vector product)."""
    n, d = a.shape
    ones = np.ones((1, n))
    out = ones @ a
    if counter is not None:
        mults = a.nnz if sparse.issparse(a) else n * d
        counter.tally(mults, max(mults - d, 0))
    return np.asarray(out).reshape(1, d)


def total_sum(a, counter=None):
    """Grand total of all elements."""
    rs = row_sums(a, counter)
    if counter is not None:
        counter.tally(0, max(rs.shape[0] - 1, 0))
    return float(rs.sum())


def add(a, b, counter=None):
    """Element-wise sum of two conforming matrices (dense result if mixed)."""
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")
    if sparse.issparse(a) != sparse.issparse(b):
        a, b = to_dense(a), to_dense(b)
    out = a + b
    if counter is not None:
        counter.tally(0, int(np.prod(a.shape)))
    return out


_MULTIPLICATIVE = {"mul", "div", "pow", "rdiv", "rpow"}


def _scalar_fns(op, x):
    if op == "add" or op == "radd":
        return lambda v: v + x
    if op == "sub":
        return lambda v: v - x
    if op == "rsub":
        return lambda v: x - v
    if op == "mul" or op == "rmul":
        return lambda v: v * x
    if op == "div":
        if x == 0:
            raise NumericError("division by zero scalar")
        return lambda v: v / x
    if op == "rdiv":
        return lambda v: x / v
    if op == "pow":
        return lambda v: v**x
    if op == "rpow":
        return lambda v: x**v
    raise ValueError(f"unknown scalar op {op!r}")


def preserves_zero(op, x):
    """True if ``0 <op> x`` stays zero (sparse storage can be kept)."""
    fn = _scalar_fns(op, float(x))
    with np.errstate(divide="ignore", invalid="ignore"):
        v = fn(np.float64(0.0))
    return bool(v == 0.0)


def scalar_map(a, op, x, counter=None):
    """Apply ``a <op> x`` (or the reversed form) element-wise.

    Sparse inputs whose zero entries would become nonzero are densified;
    the caller is expected to warn if that matters to it.
    """
    fn = _scalar_fns(op, float(x))
    if sparse.issparse(a):
        if not preserves_zero(op, x):
            a = a.toarray()
        else:
            out = a.copy()
            out.data = fn(out.data)
            if counter is not None:
                cost = a.nnz
                if op in _MULTIPLICATIVE:
                    counter.tally(cost, 0)
                else:
                    counter.tally(0, cost)
            return out
    with np.errstate(divide="ignore", invalid="ignore"):
        out = fn(np.asarray(a))
    if counter is not None:
        cost = int(np.prod(a.shape))
        if op in _MULTIPLICATIVE:
            counter.tally(cost, 0)
        else:
            counter.tally(0, cost)
    return out


def unary_map(a, f, counter=None):
    """Apply a scalar function element-wise (counts one multiply per element).

    Sparse inputs with ``f(0) != 0`` are densified; zero-preserving functions
    are applied to the stored values only.
    """
    if sparse.issparse(a):
        with np.errstate(divide="ignore", invalid="ignore"):
            f0 = float(f(np.zeros(1))[0])
        if f0 == 0.0:
            out = a.copy()
            out.data = f(out.data)
            if counter is not None:
                counter.tally(a.nnz, 0)
            return out
        a = a.toarray()
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        out = f(np.asarray(a))
    if counter is not None:
        counter.tally(int(np.prod(a.shape)), 0)
    return out


def pinv_dense(a, counter=None):
    """Moore-Penrose pseudo-inverse via SVD.

    Singular values below ``eps * max(rows, cols) * sigma_max`` are treated
    as zero, so rank-deficient inputs yield the minimum-norm inverse.
    """
    a = np.asarray(a, dtype=np.float64)
    m, n = a.shape
    try:
        u, s, vh = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD failed on {m}x{n} matrix: {exc}") from exc
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((n, m))
    cutoff = np.finfo(np.float64).eps * max(m, n) * s[0]
    r = int(np.sum(s > cutoff))
    if counter is not None:
        # SVD flops are not itemized; charge the classical O(mn^2 + n^3) bound
        counter.tally(7 * m * n * min(m, n) + 20 * min(m, n) ** 3, 0)
    if r == 0:
        return np.zeros((n, m))
    return (vh[:r].T / s[:r]) @ u[:, :r].T


def row_min_mask(d, counter=None):
    """0/1 matrix marking each row's minimum (ties to the lowest column)."""
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] < 1 or d.shape[1] < 1:
        raise ShapeError(f"row_min_mask: need a non-empty 2-D matrix, got {d.shape}")
    if np.isnan(d).any():
        bad = int(np.where(np.isnan(d).any(axis=1))[0][0])
        raise NumericError(f"row_min_mask: NaN in row {bad}")
    mask = np.zeros_like(d)
    mask[np.arange(d.shape[0]), np.argmin(d, axis=1)] = 1.0
    if counter is not None:
        counter.tally(0, int(np.prod(d.shape)))
    return mask
