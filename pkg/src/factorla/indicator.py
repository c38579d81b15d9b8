"""Sparse 0/1 row-selection matrices and their dedicated kernels.

An indicator matrix has exactly one 1 per row, so every product involving it
is a gather, a scatter-add, or a histogram rather than a general sparse
multiply.  The kernels here record additions for the elements they combine
and no multiplies: unit coefficients contribute nothing to multiply-based
accounting even when a cached CSR product executes them.
"""

from functools import cached_property

import numpy as np
from scipy import sparse

from .exceptions import ShapeError

__all__ = [
    "IndicatorMatrix",
    "expand",
    "compress",
    "right_expand",
    "right_compress",
    "pair_product",
]


class IndicatorMatrix:
    """Row-selection matrix stored as the column index of each row's single 1.

    ``target[i] = j`` means row ``i`` selects source row ``j``; the dense
    equivalent has shape ``(rows, cols)`` with ``nnz == rows``.
    """

    def __init__(self, target, cols):
        target = np.ascontiguousarray(target, dtype=np.int64)
        if target.ndim != 1:
            raise ShapeError("indicator target must be a 1-D index array")
        cols = int(cols)
        if target.size == 0:
            raise ShapeError("indicator matrix must have at least one row")
        if cols < 1:
            raise ShapeError("indicator matrix must have at least one column")
        if target.min() < 0 or target.max() >= cols:
            raise ShapeError(f"indicator target out of range [0, {cols})")
        target.setflags(write=False)
        self.target = target
        self.cols = cols

    @property
    def rows(self):
        return self.target.size

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def nnz(self):
        return self.rows

    @cached_property
    def counts(self):
        """Column sums (number of rows selecting each source row)."""
        c = np.bincount(self.target, minlength=self.cols).astype(np.float64)
        c.setflags(write=False)
        return c

    def all_columns_used(self):
        return bool((self.counts > 0).all())

    @cached_property
    def _csr(self):
        n = self.rows
        return sparse.csr_matrix(
            (np.ones(n), self.target, np.arange(n + 1)), shape=self.shape
        )

    @cached_property
    def _csr_t(self):
        # transpose assembled directly: stable argsort groups rows by target
        order = np.argsort(self.target, kind="stable")
        indptr = np.zeros(self.cols + 1, dtype=np.int64)
        np.cumsum(self.counts.astype(np.int64), out=indptr[1:])
        return sparse.csr_matrix(
            (np.ones(self.rows), order, indptr), shape=(self.cols, self.rows)
        )

    def to_csr(self):
        return self._csr

    def to_dense(self):
        return self._csr.toarray()

    def __repr__(self):
        return f"IndicatorMatrix(rows={self.rows}, cols={self.cols})"


def expand(ind, a, counter=None):
    """``E a``: replicate rows of ``a`` (pure gather, no arithmetic)."""
    if a.shape[0] != ind.cols:
        raise ShapeError(f"expand: indicator cols {ind.cols} != matrix rows {a.shape[0]}")
    if sparse.issparse(a):
        return a[ind.target]
    return a.take(ind.target, axis=0)


def compress(ind, a, counter=None):
    """``E' a``: scatter-add rows of ``a`` into the source-row buckets."""
    if a.shape[0] != ind.rows:
        raise ShapeError(f"compress: indicator rows {ind.rows} != matrix rows {a.shape[0]}")
    out = ind._csr_t @ a
    if counter is not None:
        touched = a.nnz if sparse.issparse(a) else int(np.prod(a.shape))
        counter.tally(0, touched)
    if sparse.issparse(out):
        out.sort_indices()
        return out
    return np.asarray(out)


def right_expand(a, ind, counter=None):
    """``a E'``: replicate columns of ``a`` (pure gather)."""
    if a.shape[1] != ind.cols:
        raise ShapeError(f"right_expand: matrix cols {a.shape[1]} != indicator cols {ind.cols}")
    if sparse.issparse(a):
        return a[:, ind.target]
    return a.take(ind.target, axis=1)


def right_compress(a, ind, counter=None):
    """``a E``: scatter-add columns of ``a`` into the source-row buckets."""
    if a.shape[1] != ind.rows:
        raise ShapeError(f"right_compress: matrix cols {a.shape[1]} != indicator rows {ind.rows}")
    out = a @ ind._csr
    if counter is not None:
        touched = a.nnz if sparse.issparse(a) else int(np.prod(a.shape))
        counter.tally(0, touched)
    if sparse.issparse(out):
        out.sort_indices()
        return out
    return np.asarray(out)


def pair_product(ind_a, ind_b, counter=None):
    """``E_a' E_b`` as a sparse counts matrix (2-D histogram of target pairs).

    Both indicators must have the same number of rows; entry (i, j) counts
    the rows selecting source ``i`` on the left and source ``j`` on the right.
    """
    if ind_a.rows != ind_b.rows:
        raise ShapeError(
            f"pair_product: row counts differ ({ind_a.rows} vs {ind_b.rows})"
        )
    n = ind_a.rows
    p = sparse.coo_matrix(
        (np.ones(n), (ind_a.target, ind_b.target)), shape=(ind_a.cols, ind_b.cols)
    ).tocsr()
    p.sum_duplicates()
    p.sort_indices()
    if counter is not None:
        counter.tally(0, n)
    return p
