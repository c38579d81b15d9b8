"""Factorized linear-algebra operators over normalized matrices.

Each function executes an operator on the logical join result using only the
base-table factors, never materializing it (except the explicitly
non-factorizable element-wise matrix ops).  Structural products with
indicator matrices go through the dedicated gather/scatter kernels, so the
cheap multiplication order is enforced by construction: the replication step
``K (R X)`` cannot be reordered into the redundant ``(K R) X``.

Transposed inputs are handled by flag-dispatch: an operation on the
transposed logical matrix is rewritten into the mirror operation on the
untransposed one (``rowSums -> colSums'``, ``T' X -> (X' T)'`` and so on).
"""

import warnings

import numpy as np
from scipy import sparse

from . import kernel
from .exceptions import ShapeError
from .indicator import compress, expand, pair_product, right_compress, right_expand
from .normmat import MN, MULTIMN, PKFK, STAR, NormalizedMatrix, materialize

__all__ = [
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
]


class MaterializationWarning(UserWarning):
    """A non-factorizable operation (or a densifying one) ran on factors."""


def _t(a):
    """Transpose that keeps kernels happy: CSR for sparse, view for dense."""
    return a.T.tocsr() if sparse.issparse(a) else a.T


def _t_result(a):
    if sparse.issparse(a):
        return a.T.tocsr()
    return np.ascontiguousarray(a.T)


# ---------------------------------------------------------------------------
# element-wise scalar operators (closed: output is a normalized matrix)


def _map_blocks(nm, fn, densify_check):
    new_blocks = []
    for e, f in nm.blocks:
        if sparse.issparse(f) and densify_check(f):
            warnings.warn(
                "scalar operation does not preserve zeros; densifying a "
                "sparse factor matrix",
                MaterializationWarning,
                stacklevel=3,
            )
        new_blocks.append((e, fn(f)))
    return NormalizedMatrix(nm.variant, new_blocks, nm.transposed, nm.source_rows)


def scalar_op(nm, x, op, counter=None):
    """``T <op> x`` with op in +,-,*,/,** ("r"-prefixed for ``x <op> T``).

    Applied to the factor matrices only; indicators and the transpose flag
    carry over unchanged.
    """
    kernel._scalar_fns(op, float(x))  # validates op and zero divisors up front
    return _map_blocks(
        nm,
        lambda f: kernel.scalar_map(f, op, x, counter),
        lambda f: not kernel.preserves_zero(op, x),
    )


def scalar_fn(nm, f, counter=None):
    """Element-wise scalar function ``f(T)``, e.g. exp, log, square.

    Sound because indicators replicate rows rather than combining them; a
    sparse factor is densified (with a warning) when ``f(0) != 0``.
    """
    def densifies(_):
        with np.errstate(divide="ignore", invalid="ignore"):
            return float(f(np.zeros(1))[0]) != 0.0

    return _map_blocks(nm, lambda m: kernel.unary_map(m, f, counter), densifies)


# ---------------------------------------------------------------------------
# aggregations


def _accumulate(out, piece, counter):
    """Sum freshly produced pieces, reusing the first one as the accumulator."""
    if out is None:
        return piece
    if not sparse.issparse(out) and not sparse.issparse(piece):
        if counter is not None:
            counter.tally(0, int(np.prod(out.shape)))
        np.add(out, piece, out=out)
        return out
    return kernel.add(out, piece, counter)


def row_sums(nm, counter=None):
    """Row totals of the logical matrix as a column vector."""
    if nm.transposed:
        return np.ascontiguousarray(col_sums(nm.T, counter).T)
    out = None
    for e, f in nm.blocks:
        part = kernel.row_sums(f, counter)
        if e is not None:
            part = expand(e, part, counter)
        out = _accumulate(out, part, counter)
    return out


def col_sums(nm, counter=None):
    """Column totals of the logical matrix as a row vector.

    Indicator blocks pre-aggregate the replication counts (a histogram) and
    multiply those into the factor instead of expanding it.
    """
    if nm.transposed:
        return np.ascontiguousarray(row_sums(nm.T, counter).T)
    parts = []
    for e, f in nm.blocks:
        if e is None:
            parts.append(kernel.col_sums(f, counter))
        else:
            weights = e.counts.reshape(1, -1)
            if counter is not None:
                counter.tally(0, e.rows)
            parts.append(kernel.matmul(weights, f, counter))
    parts = [np.asarray(kernel.to_dense(p)).reshape(1, -1) for p in parts]
    return np.ascontiguousarray(np.hstack(parts))


def sum_all(nm, counter=None):
    """Grand total; invariant under transposition."""
    base = nm.untransposed()
    total = 0.0
    for e, f in base.blocks:
        if e is None:
            total += kernel.total_sum(f, counter)
        else:
            weights = e.counts.reshape(1, -1)
            if counter is not None:
                counter.tally(0, e.rows)
            rs = kernel.row_sums(f, counter)
            total += float(kernel.matmul(weights, rs, counter)[0, 0])
    return total


# ---------------------------------------------------------------------------
# multiplication


def lmm(nm, x, counter=None):
    """Left matrix multiplication ``T X`` for a regular X.

    X is split along the column blocks; each slice is multiplied into its
    factor first and only then replicated, which is where the factorized
    saving comes from.
    """
    n_log, d_log = nm.shape
    if x.shape[0] != d_log:
        raise ShapeError(f"lmm: X has {x.shape[0]} rows, normalized matrix has {d_log} columns")
    if nm.transposed:
        return _t_result(rmm(_t(x), nm.T, counter))
    offs = nm.col_offsets()
    out = None
    for (e, f), c0, c1 in zip(nm.blocks, offs[:-1], offs[1:]):
        piece = kernel.matmul(f, x[c0:c1], counter)
        if e is not None:
            piece = expand(e, piece, counter)
        out = _accumulate(out, piece, counter)
    return out


def rmm(x, nm, counter=None):
    """Right matrix multiplication ``X T`` for a regular X.

    X is pushed down to each base table: entity blocks multiply directly,
    indicator blocks first collapse X's columns (``X E``) and then multiply
    the factor.
    """
    n_log, d_log = nm.shape
    if x.shape[1] != n_log:
        raise ShapeError(f"rmm: X has {x.shape[1]} columns, normalized matrix has {n_log} rows")
    if nm.transposed:
        return _t_result(lmm(nm.T, _t(x), counter))
    parts = []
    for e, f in nm.blocks:
        xe = x if e is None else right_compress(x, e, counter)
        parts.append(kernel.matmul(xe, f, counter))
    if any(sparse.issparse(p) for p in parts):
        return sparse.hstack([sparse.csr_matrix(p) for p in parts], format="csr")
    return np.ascontiguousarray(np.hstack(parts))


def _scale_rows(f, scale, counter=None):
    # diag(scale) @ f without building the diagonal
    if sparse.issparse(f):
        out = f.copy()
        out.data = out.data * np.repeat(scale, np.diff(f.indptr))
        if counter is not None:
            counter.tally(f.nnz, 0)
        return out
    if counter is not None:
        counter.tally(int(np.prod(f.shape)), 0)
    return f * scale[:, None]


def _block_inner(nm, i, j, counter):
    """Upper off-diagonal crossprod block ``(E_i F_i)' (E_j F_j)``."""
    e_i, f_i = nm.blocks[i]
    e_j, f_j = nm.blocks[j]
    if e_i is None:
        # (F_i' E_j) F_j, with F_i' E_j realized as a scatter of F_i's rows
        left = _t(compress(e_j, f_i, counter))
        return kernel.to_dense(kernel.matmul(left, f_j, counter))
    if e_j is None:
        return kernel.to_dense(
            kernel.matmul(_t(compress(e_i, f_j, counter)), f_i, counter)
        ).T
    p = pair_product(e_i, e_j, counter)
    mid = kernel.matmul(p, f_j, counter)
    return kernel.to_dense(kernel.matmul(_t(f_i), mid, counter))


def crossprod(nm, method="efficient", counter=None):
    """``T' T`` without materializing T; output dense and exactly symmetric.

    The efficient method computes each diagonal block as the self-product of
    a count-scaled factor and each off-diagonal block through the indicator
    pair products.  The naive method keeps generic sparse products
    (including the transposed indicator multiplies) for benchmarking.
    """
    if nm.transposed:
        raise ShapeError("crossprod expects an untransposed input; use gram_transposed")
    if method not in ("efficient", "naive"):
        raise ValueError(f"unknown crossprod method {method!r}")
    offs = nm.col_offsets()
    d = nm.base_cols
    out = np.zeros((d, d))
    q = len(nm.blocks)
    for i in range(q):
        e_i, f_i = nm.blocks[i]
        c0, c1 = offs[i], offs[i + 1]
        if method == "efficient":
            if e_i is None:
                block = kernel.crossprod(f_i, counter)
            else:
                scaled = _scale_rows(f_i, np.sqrt(e_i.counts), counter)
                block = kernel.crossprod(scaled, counter)
        else:
            if e_i is None:
                block = kernel.to_dense(kernel.matmul(_t(f_i), f_i, counter))
            else:
                g = kernel.matmul(_t(e_i.to_csr()), e_i.to_csr(), counter)
                block = kernel.to_dense(
                    kernel.matmul(_t(f_i), kernel.matmul(g, f_i, counter), counter)
                )
        out[c0:c1, c0:c1] = block
        for j in range(i + 1, q):
            d0, d1 = offs[j], offs[j + 1]
            if method == "efficient":
                upper = _block_inner(nm, i, j, counter)
            else:
                e_j, f_j = nm.blocks[j]
                gi = e_i.to_csr() if e_i is not None else None
                gj = e_j.to_csr() if e_j is not None else None
                if gi is None:
                    mid = kernel.matmul(gj, f_j, counter)
                    upper = kernel.to_dense(kernel.matmul(_t(f_i), mid, counter))
                elif gj is None:
                    mid = kernel.matmul(_t(gi), f_j, counter)
                    upper = kernel.to_dense(kernel.matmul(_t(f_i), mid, counter))
                else:
                    p = kernel.matmul(_t(gi), gj, counter)
                    mid = kernel.matmul(p, f_j, counter)
                    upper = kernel.to_dense(kernel.matmul(_t(f_i), mid, counter))
            out[c0:c1, d0:d1] = upper
    return np.triu(out) + np.triu(out, 1).T


def gram_transposed(nm, counter=None):
    """``T T'`` (the Gram matrix over rows), factorized per column block.

    Each block contributes ``E_i (F_i F_i') E_i'``: a small self-product
    expanded by a two-sided gather.  Ignores the transpose flag (it is the
    crossprod of the transposed logical matrix either way).
    """
    base = nm.untransposed()
    out = None
    for e, f in base.blocks:
        g = kernel.gram(f, counter)
        if e is not None:
            g = g[np.ix_(e.target, e.target)]
        out = g if out is None else kernel.add(out, g, counter)
    return out


def ginv(nm, counter=None):
    """Moore-Penrose pseudo-inverse of the logical matrix.

    Routes through the small Gram matrix: ``pinv(T'T) T'`` when the logical
    matrix is tall, ``T' pinv(T T')`` otherwise.
    """
    n_log, d_log = nm.shape
    if d_log < n_log:
        g = gram_transposed(nm, counter) if nm.transposed else crossprod(nm, counter=counter)
        return rmm(kernel.pinv_dense(g, counter), nm.T, counter)
    g = crossprod(nm.T, counter=counter) if nm.transposed else gram_transposed(nm, counter)
    return lmm(nm.T, kernel.pinv_dense(g, counter), counter)


# ---------------------------------------------------------------------------
# double matrix multiplication (both operands normalized, pkfk only)


def _require_pkfk(nm, side):
    if nm.variant != PKFK:
        raise ShapeError(f"double multiplication supports pkfk operands only ({side} is {nm.variant})")


def _indicator_slice(ind, lo, hi):
    if hi <= lo:
        return None
    from .indicator import IndicatorMatrix

    return IndicatorMatrix(ind.target[lo:hi], ind.cols)


def dmm(a, b, counter=None):
    """Product of two normalized matrices ``A B``.

    Transposed flags dispatch to the Gram-style forms: ``A'B'`` becomes
    ``(B A)'`` and single-transposed products go through :func:`dmm_gram`.
    """
    _require_pkfk(a, "left operand")
    _require_pkfk(b, "right operand")
    if a.transposed and b.transposed:
        return _t_result(dmm(b.T, a.T, counter))
    if a.transposed:
        return dmm_gram(a.T, b, "atb", counter)
    if b.transposed:
        return dmm_gram(a, b.T, "abt", counter)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"dmm: shapes {a.shape} and {b.shape} do not conform")
    s_a, k_a, r_a = a.s, a.k, a.r
    s_b, k_b, r_b = b.s, b.k, b.r
    d_sa = s_a.shape[1]

    s_b1, s_b2 = s_b[:d_sa], s_b[d_sa:]
    k_b1 = _indicator_slice(k_b, 0, d_sa)
    k_b2 = _indicator_slice(k_b, d_sa, k_b.rows)

    left = kernel.matmul(s_a, s_b1, counter)
    if s_b2.shape[0]:
        left = kernel.add(
            left, expand(k_a, kernel.matmul(r_a, s_b2, counter), counter), counter
        )

    right = None
    if k_b1 is not None:
        right = kernel.matmul(right_compress(s_a, k_b1, counter), r_b, counter)
    if k_b2 is not None:
        inner = kernel.matmul(right_compress(r_a, k_b2, counter), r_b, counter)
        inner = expand(k_a, inner, counter)
        right = inner if right is None else kernel.add(right, inner, counter)

    left = kernel.to_dense(left)
    right = kernel.to_dense(right)
    return np.ascontiguousarray(np.hstack([left, right]))


def dmm_gram(a, b, form, counter=None):
    """Gram-style products of two normalized matrices: ``A B'`` or ``A' B``.

    ``a`` and ``b`` are untransposed; ``form`` picks the product.  For
    ``A'B`` the indicator pair product P is computed first and its nonzero
    count always lies in [max(n_RA, n_RB), n_SA].
    """
    _require_pkfk(a, "left operand")
    _require_pkfk(b, "right operand")
    if a.transposed or b.transposed:
        raise ShapeError("dmm_gram operands carry no transpose flag; the form selects it")
    s_a, k_a, r_a = a.s, a.k, a.r
    s_b, k_b, r_b = b.s, b.k, b.r
    d_sa, d_sb = s_a.shape[1], s_b.shape[1]

    if form == "atb":
        if a.shape[0] != b.shape[0]:
            raise ShapeError(f"dmm_gram A'B: row counts differ ({a.shape[0]} vs {b.shape[0]})")
        p = pair_product(k_a, k_b, counter)
        assert p.nnz >= max(k_a.cols, k_b.cols) and p.nnz <= k_a.rows
        top_left = kernel.to_dense(kernel.matmul(_t(s_a), s_b, counter))
        top_right = kernel.to_dense(
            kernel.matmul(_t(compress(k_b, s_a, counter)), r_b, counter)
        )
        bot_left = kernel.to_dense(
            kernel.matmul(_t(r_a), compress(k_a, s_b, counter), counter)
        )
        bot_right = kernel.to_dense(
            kernel.matmul(_t(r_a), kernel.matmul(p, r_b, counter), counter)
        )
        return np.block([[top_left, top_right], [bot_left, bot_right]])

    if form == "abt":
        if a.shape[1] != b.shape[1]:
            raise ShapeError(f"dmm_gram AB': column counts differ ({a.shape[1]} vs {b.shape[1]})")
        if d_sa > d_sb:
            return np.ascontiguousarray(dmm_gram(b, a, "abt", counter).T)
        if d_sa == d_sb:
            out = kernel.to_dense(kernel.matmul(s_a, _t(s_b), counter))
            mid = kernel.to_dense(kernel.matmul(r_a, _t(r_b), counter))
            return out + mid[np.ix_(k_a.target, k_b.target)]
        # d_sa < d_sb: S_B and R_A overlap on the middle columns
        cut = d_sb - d_sa
        s_b1, s_b2 = s_b[:, :d_sa], s_b[:, d_sa:]
        r_a1, r_a2 = r_a[:, :cut], r_a[:, cut:]
        out = kernel.to_dense(kernel.matmul(s_a, _t(s_b1), counter))
        out = out + expand(k_a, kernel.to_dense(kernel.matmul(r_a1, _t(s_b2), counter)), counter)
        mid = kernel.to_dense(kernel.matmul(r_a2, _t(r_b), counter))
        return out + mid[np.ix_(k_a.target, k_b.target)]

    raise ValueError(f"unknown dmm_gram form {form!r} (expected 'atb' or 'abt')")


# ---------------------------------------------------------------------------
# non-factorizable element-wise matrix operators


def elementwise_matrix_op(nm, x, op, counter=None):
    """Element-wise ``T <op> X`` with a full-size X: forces materialization.

    Joins introduce no exploitable redundancy here, so the logical matrix is
    expanded and a regular matrix is returned; an advisory warning marks the
    materialization.
    """
    if tuple(x.shape) != tuple(nm.shape):
        raise ShapeError(f"elementwise op: X shape {x.shape} != logical shape {nm.shape}")
    warnings.warn(
        "element-wise matrix op is non-factorizable; materializing the join",
        MaterializationWarning,
        stacklevel=2,
    )
    t = kernel.to_dense(materialize(nm))
    x = kernel.to_dense(x)
    fns = {
        "add": lambda: t + x,
        "sub": lambda: t - x,
        "rsub": lambda: x - t,
        "mul": lambda: t * x,
        "div": lambda: t / x,
        "rdiv": lambda: x / t,
    }
    if op not in fns:
        raise ValueError(f"unknown elementwise op {op!r}")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = fns[op]()
    if counter is not None:
        size = int(np.prod(t.shape))
        if op in ("mul", "div", "rdiv"):
            counter.tally(size, 0)
        else:
            counter.tally(0, size)
    return out
