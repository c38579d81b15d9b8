"""The normalized matrix: a logical join result kept as base-table factors.

A normalized matrix represents the output of a join without materializing
it.  Four variants are supported:

* ``pkfk``    -- entity S plus one attribute table R linked by an indicator
  K; the logical matrix is ``[S, K R]``.
* ``star``    -- entity S plus q attribute tables; ``[S, K1 R1, ..., Kq Rq]``.
* ``mn``      -- general equi-join of S and R; ``[I_S S, I_R R]`` where the
  indicators map join-output rows back to base rows.
* ``multimn`` -- q-table M:N join given an explicit row-mapping table;
  ``[I_1 R1, ..., Iq Rq]``.

Internally every variant is a sequence of column blocks ``(E_i, F_i)`` where
``E_i`` is an indicator (or ``None`` for the un-replicated entity block), so
operator rewrites can be written once.  A ``transposed`` flag represents
logical transposition without touching the stored factors.
"""

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from . import kernel
from .exceptions import DataError, EmptyJoinError, ShapeError
from .indicator import IndicatorMatrix, expand

__all__ = [
    "NormalizedMatrix",
    "ShapeStats",
    "build_pkfk",
    "build_star",
    "build_mn",
    "build_multimn",
    "materialize",
    "transpose",
    "stats",
]

PKFK = "pkfk"
STAR = "star"
MN = "mn"
MULTIMN = "multimn"


class NormalizedMatrix:
    """Immutable multi-matrix value; build with the ``build_*`` constructors.

    Attributes:
        variant: one of ``pkfk``, ``star``, ``mn``, ``multimn``.
        blocks: tuple of ``(indicator_or_None, factor_matrix)`` column blocks.
        transposed: logical-transpose flag; factors are never transposed.
        source_rows: per block, the original base-table row ids kept after
            dropping unreferenced rows (``None`` when nothing was dropped).
    """

    def __init__(self, variant, blocks, transposed=False, source_rows=None):
        blocks = tuple((e, f) for e, f in blocks)
        if not blocks:
            raise ShapeError("normalized matrix needs at least one block")
        rows = {e.rows if e is not None else f.shape[0] for e, f in blocks}
        if len(rows) != 1:
            raise ShapeError(f"blocks disagree on logical row count: {sorted(rows)}")
        for e, f in blocks:
            if e is not None and e.cols != f.shape[0]:
                raise ShapeError(
                    f"indicator cols {e.cols} != factor rows {f.shape[0]}"
                )
        self.variant = variant
        self.blocks = blocks
        self.transposed = bool(transposed)
        self.source_rows = tuple(source_rows) if source_rows is not None else None

    # -- shape ------------------------------------------------------------

    @property
    def base_rows(self):
        e, f = self.blocks[0]
        return e.rows if e is not None else f.shape[0]

    @property
    def base_cols(self):
        return sum(f.shape[1] for _, f in self.blocks)

    @property
    def shape(self):
        n, d = self.base_rows, self.base_cols
        return (d, n) if self.transposed else (n, d)

    def col_offsets(self):
        """Column start offsets of each block in the untransposed layout."""
        widths = [f.shape[1] for _, f in self.blocks]
        return np.concatenate([[0], np.cumsum(widths)]).astype(int)

    # -- pkfk accessors (used by double-multiplication rewrites) ----------

    @property
    def s(self):
        if self.variant not in (PKFK, STAR, MN):
            raise ShapeError(f"{self.variant} variant has no entity block")
        return self.blocks[0][1]

    @property
    def k(self):
        if self.variant != PKFK:
            raise ShapeError("k accessor is pkfk-only")
        return self.blocks[1][0]

    @property
    def r(self):
        if self.variant not in (PKFK, MN):
            raise ShapeError("r accessor applies to single-attribute variants")
        return self.blocks[1][1]

    # -- logical ops -------------------------------------------------------

    @property
    def T(self):
        return NormalizedMatrix(
            self.variant, self.blocks, not self.transposed, self.source_rows
        )

    def untransposed(self):
        return self if not self.transposed else self.T

    def __repr__(self):
        n, d = self.shape
        flag = ", transposed" if self.transposed else ""
        return f"NormalizedMatrix({self.variant}, {n}x{d}{flag})"


def transpose(nm):
    """Flip the logical-transpose flag; no data is copied."""
    return nm.T


def materialize(nm, counter=None):
    """Expand the join result into a single regular matrix.

    This is the correctness oracle for every rewrite: sparse if any factor
    is sparse, dense otherwise.  Honors the transpose flag.
    """
    any_sparse = any(sparse.issparse(f) for _, f in nm.blocks)
    n, d = nm.base_rows, nm.base_cols
    if any_sparse:
        cols = [
            (f if e is None else expand(e, f)) for e, f in nm.blocks
        ]
        cols = [sparse.csr_matrix(c) for c in cols]
        out = sparse.hstack(cols, format="csr")
        out.sort_indices()
        return out.T.tocsr() if nm.transposed else out
    out = np.empty((n, d))
    offs = nm.col_offsets()
    for (e, f), c0, c1 in zip(nm.blocks, offs[:-1], offs[1:]):
        # gather into a contiguous temporary; np.take into a strided view is slow
        out[:, c0:c1] = f if e is None else f.take(e.target, axis=0)
    if counter is not None:
        counter.tally(0, 0)
    return np.ascontiguousarray(out.T) if nm.transposed else out


# ---------------------------------------------------------------------------
# construction


def _remap_part(key_rows, r, part_label=""):
    """Drop unreferenced attribute rows and compact indices to 0-based.

    ``key_rows`` are 0-based attribute-row references; returns the indicator
    target array, the reduced attribute matrix, and the kept row indices.
    """
    used = np.unique(key_rows)
    lookup = np.full(int(used[-1]) + 1, -1, dtype=np.int64)
    lookup[used] = np.arange(used.size)
    target = lookup[key_rows]
    kept = r[used] if sparse.issparse(r) else r.take(used, axis=0)
    return target, kept, used


def _check_keys(key, n_rows, part_label=""):
    key = np.asarray(key)
    if not np.issubdtype(key.dtype, np.integer):
        keyf = np.asarray(key, dtype=np.float64)
        if not np.all(keyf == np.round(keyf)):
            raise DataError(f"key column{part_label} contains non-integer values")
        key = keyf.astype(np.int64)
    else:
        key = key.astype(np.int64)
    bad = np.where((key < 1) | (key > n_rows))[0]
    if bad.size:
        raise DataError(
            f"key{part_label} references nonexistent attribute row "
            f"{int(key[bad[0]])} at entity row {int(bad[0])} "
            f"(valid range 1..{n_rows})"
        )
    return key


def build_pkfk(s, key_column, r):
    """Primary-key/foreign-key normalized matrix from S, its key column, and R.

    Key values are 1-based row numbers of ``r``.  Attribute rows never
    referenced are dropped and the keys are remapped to contiguous indices.
    """
    s = kernel.as_matrix(s)
    r = kernel.as_matrix(r)
    key = _check_keys(key_column, r.shape[0])
    if key.size != s.shape[0]:
        raise ShapeError(f"key column length {key.size} != entity rows {s.shape[0]}")
    target, r_kept, used = _remap_part(key - 1, r)
    ind = IndicatorMatrix(target, r_kept.shape[0])
    return NormalizedMatrix(PKFK, [(None, s), (ind, r_kept)], source_rows=[None, used])


def build_star(s, parts):
    """Star-schema normalized matrix: S plus ``[(key_column_i, R_i), ...]``."""
    s = kernel.as_matrix(s)
    blocks = [(None, s)]
    source = [None]
    for idx, (key_column, r) in enumerate(parts):
        r = kernel.as_matrix(r)
        try:
            key = _check_keys(key_column, r.shape[0], part_label=f" (part {idx})")
        except DataError:
            raise
        if key.size != s.shape[0]:
            raise ShapeError(
                f"part {idx}: key column length {key.size} != entity rows {s.shape[0]}"
            )
        target, r_kept, used = _remap_part(key - 1, r)
        blocks.append((IndicatorMatrix(target, r_kept.shape[0]), r_kept))
        source.append(used)
    if len(blocks) == 1:
        raise ShapeError("star join needs at least one attribute table")
    return NormalizedMatrix(STAR, blocks, source_rows=source)


def build_mn(s, j_s, r, j_r):
    """M:N normalized matrix from join columns of equal values.

    Output rows are enumerated in lexicographic (S-row, R-row) order; rows of
    either table that match nothing are dropped before the indicators are
    built.
    """
    s = kernel.as_matrix(s)
    r = kernel.as_matrix(r)
    j_s = np.asarray(j_s)
    j_r = np.asarray(j_r)
    if j_s.shape[0] != s.shape[0]:
        raise ShapeError(f"join column length {j_s.shape[0]} != S rows {s.shape[0]}")
    if j_r.shape[0] != r.shape[0]:
        raise ShapeError(f"join column length {j_r.shape[0]} != R rows {r.shape[0]}")

    common = np.intersect1d(j_s, j_r)
    if common.size == 0:
        raise EmptyJoinError("M:N join is empty: the join columns share no values")

    s_keep = np.where(np.isin(j_s, common))[0]
    r_keep = np.where(np.isin(j_r, common))[0]
    s_kept = s[s_keep] if sparse.issparse(s) else s.take(s_keep, axis=0)
    r_kept = r[r_keep] if sparse.issparse(r) else r.take(r_keep, axis=0)

    # code join values into 0..n_common-1 on both sides
    s_code = np.searchsorted(common, j_s[s_keep])
    r_code = np.searchsorted(common, j_r[r_keep])

    # group kept R rows by value; groups stay ascending thanks to stable sort
    r_order = np.argsort(r_code, kind="stable")
    group_sizes = np.bincount(r_code, minlength=common.size)
    group_starts = np.concatenate([[0], np.cumsum(group_sizes)[:-1]])

    match_counts = group_sizes[s_code]
    n_out = int(match_counts.sum())
    i_s_target = np.repeat(np.arange(s_keep.size), match_counts)
    out_starts = np.concatenate([[0], np.cumsum(match_counts)[:-1]])
    within = np.arange(n_out) - np.repeat(out_starts, match_counts)
    i_r_target = r_order[np.repeat(group_starts[s_code], match_counts) + within]

    i_s = IndicatorMatrix(i_s_target, s_keep.size)
    i_r = IndicatorMatrix(i_r_target, r_keep.size)
    return NormalizedMatrix(
        MN, [(i_s, s_kept), (i_r, r_kept)], source_rows=[s_keep, r_keep]
    )


def build_multimn(row_map, tables):
    """Multi-table M:N normalized matrix from an explicit row mapping.

    ``row_map`` is an (n_out, q) integer array whose column j holds the
    0-based row of ``tables[j]`` feeding each join-output row (the join
    planning itself is up to the caller).  Unreferenced table rows are
    dropped and indices compacted, as in the other constructors.
    """
    row_map = np.asarray(row_map, dtype=np.int64)
    if row_map.ndim != 2:
        raise ShapeError("row_map must be 2-D (output rows x tables)")
    if row_map.shape[0] < 1:
        raise EmptyJoinError("row mapping has no output rows")
    if row_map.shape[1] != len(tables):
        raise ShapeError(
            f"row_map has {row_map.shape[1]} columns but {len(tables)} tables given"
        )
    blocks, source = [], []
    for j, t in enumerate(tables):
        t = kernel.as_matrix(t)
        refs = row_map[:, j]
        if refs.min() < 0 or refs.max() >= t.shape[0]:
            raise DataError(f"row_map column {j} references nonexistent rows")
        target, kept, used = _remap_part(refs, t)
        blocks.append((IndicatorMatrix(target, kept.shape[0]), kept))
        source.append(used)
    return NormalizedMatrix(MULTIMN, blocks, source_rows=source)


# ---------------------------------------------------------------------------
# shape statistics


@dataclass
class ShapeStats:
    """Dimensions plus the tuple/feature ratios feeding the decision rule."""

    variant: str
    n_s: int
    d_s: int
    n_r: tuple
    d_r: tuple
    logical_rows: int
    logical_cols: int
    tuple_ratio: float
    feature_ratio: float

    @property
    def d_total(self):
        return self.logical_cols


def stats(nm):
    """Shape statistics of a normalized matrix (transpose flag ignored)."""
    base = nm.untransposed()
    n_log, d_log = base.shape
    if nm.variant in (PKFK, STAR):
        s = base.blocks[0][1]
        n_s, d_s = s.shape
        n_r = tuple(f.shape[0] for _, f in base.blocks[1:])
        d_r = tuple(f.shape[1] for _, f in base.blocks[1:])
        tr = n_s / max(n_r)
        fr = (sum(d_r) / d_s) if d_s > 0 else float("inf")
    elif nm.variant == MN:
        s = base.blocks[0][1]
        r = base.blocks[1][1]
        n_s, d_s = s.shape
        n_r = (r.shape[0],)
        d_r = (r.shape[1],)
        tr = n_s / r.shape[0]
        fr = (r.shape[1] / d_s) if d_s > 0 else float("inf")
    else:  # multimn: no entity table
        n_s, d_s = 0, 0
        n_r = tuple(f.shape[0] for _, f in base.blocks)
        d_r = tuple(f.shape[1] for _, f in base.blocks)
        tr = n_log / max(n_r)
        fr = float("inf")
    return ShapeStats(
        variant=nm.variant,
        n_s=n_s,
        d_s=d_s,
        n_r=n_r,
        d_r=d_r,
        logical_rows=n_log,
        logical_cols=d_log,
        tuple_ratio=float(tr),
        feature_ratio=float(fr),
    )
