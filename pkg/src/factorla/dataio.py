"""CSV/triplet ingestion, schema descriptors, and synthetic data generators.

File formats (fixed for reproducibility):

* dense CSV: header row, comma delimiter, ``.`` decimal, numerics printed at
  17 significant digits, no quoting
* sparse triplet: two header lines (``rows,cols`` then ``nnz``) followed by
  ``row,col,value`` lines with 0-based indices
* ``schema.json``::

      {"entity": {"path": ..., "target": ..., "keys": [
           {"column": ..., "table": ..., "kind": "pkfk" | "mn"}]},
       "tables": [{"id": ..., "path": ..., "pk": ...}]}

  Table entries may carry an optional ``"storage": "dense" | "sparse"``
  override; otherwise matrices denser than 5% are stored dense.

Synthetic generators draw features i.i.d. uniform(0, 1) (masked to the
requested density) and a {-1, +1} target, and write a manifest recording the
seed and parameters so datasets are reproducible byte for byte.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from . import kernel
from .exceptions import DataError
from .normmat import build_mn, build_pkfk, build_star

__all__ = [
    "SchemaKey",
    "TableDef",
    "SchemaDescriptor",
    "SynthParams",
    "load",
    "load_schema",
    "gen_pkfk",
    "gen_mn",
    "write_dense_csv",
    "write_triplet",
    "read_triplet",
]

DENSITY_THRESHOLD = 0.05


@dataclass(frozen=True)
class SchemaKey:
    column: str
    table: str
    kind: str = "pkfk"


@dataclass(frozen=True)
class TableDef:
    id: str
    path: str
    pk: str | None = None
    storage: str | None = None


@dataclass(frozen=True)
class SchemaDescriptor:
    entity_path: str
    keys: tuple
    tables: tuple
    target: str | None = None
    entity_storage: str | None = None
    base_dir: str = "."

    def __post_init__(self):
        ids = {t.id for t in self.tables}
        if len(ids) != len(self.tables):
            raise DataError("duplicate attribute-table ids in schema")
        for k in self.keys:
            if k.table not in ids:
                raise DataError(f"key column {k.column!r} references undeclared table {k.table!r}")
            if k.kind not in ("pkfk", "mn"):
                raise DataError(f"unknown join kind {k.kind!r} for key {k.column!r}")

    def to_json_dict(self):
        return {
            "entity": {
                "path": self.entity_path,
                "target": self.target,
                "keys": [
                    {"column": k.column, "table": k.table, "kind": k.kind}
                    for k in self.keys
                ],
            },
            "tables": [
                {
                    "id": t.id,
                    "path": t.path,
                    "pk": t.pk,
                    **({"storage": t.storage} if t.storage else {}),
                }
                for t in self.tables
            ],
        }


def load_schema(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"schema file not found: {path}")
    try:
        doc = json.loads(path.read_text())
        entity = doc["entity"]
        keys = tuple(
            SchemaKey(k["column"], k["table"], k.get("kind", "pkfk"))
            for k in entity["keys"]
        )
        tables = tuple(
            TableDef(t["id"], t["path"], t.get("pk"), t.get("storage"))
            for t in doc["tables"]
        )
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise DataError(f"malformed schema {path}: {exc}") from exc
    return SchemaDescriptor(
        entity_path=entity["path"],
        target=entity.get("target"),
        keys=keys,
        tables=tables,
        entity_storage=entity.get("storage"),
        base_dir=str(path.parent),
    )


# ---------------------------------------------------------------------------
# file readers / writers


def write_dense_csv(path, mat, columns):
    mat = np.atleast_2d(np.asarray(mat))
    if len(columns) != mat.shape[1]:
        raise DataError(f"{len(columns)} column names for a {mat.shape[1]}-wide matrix")
    np.savetxt(path, mat, fmt="%.17g", delimiter=",", header=",".join(columns), comments="")


def write_triplet(path, mat):
    coo = sparse.coo_matrix(mat)
    with open(path, "w") as fh:
        fh.write(f"{coo.shape[0]},{coo.shape[1]}\n{coo.nnz}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r},{c},{v:.17g}\n")


def read_triplet(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    with open(path) as fh:
        try:
            rows, cols = (int(v) for v in fh.readline().split(","))
            nnz = int(fh.readline())
        except ValueError as exc:
            raise DataError(f"{path}: malformed triplet header: {exc}") from exc
        data = np.loadtxt(fh, delimiter=",", ndmin=2) if nnz else np.zeros((0, 3))
    if data.shape[0] != nnz:
        raise DataError(f"{path}: header claims {nnz} entries, found {data.shape[0]}")
    return sparse.csr_matrix(
        (data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))),
        shape=(rows, cols),
    )


def _read_csv_columns(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    with open(path) as fh:
        header = fh.readline().strip()
    if not header:
        raise DataError(f"{path}: empty file")
    names = [h.strip() for h in header.split(",")]
    raw = np.loadtxt(path, delimiter=",", skiprows=1, dtype=str, ndmin=2)
    if raw.size and raw.shape[1] != len(names):
        raise DataError(f"{path}: header has {len(names)} columns, rows have {raw.shape[1]}")
    if raw.size == 0:
        raise DataError(f"{path}: no data rows")
    return names, raw


def _parse_float_block(raw, cols, names, path):
    if not cols:
        return np.zeros((raw.shape[0], 0))
    block = raw[:, cols]
    try:
        return block.astype(np.float64)
    except ValueError:
        for j, col in enumerate(cols):
            for i in range(block.shape[0]):
                try:
                    float(block[i, j])
                except ValueError:
                    raise DataError(
                        f"{path}:{i + 2}: column {names[col]!r} has "
                        f"unparseable value {block[i, j]!r}"
                    ) from None
        raise


def _maybe_sparse(mat, storage):
    if storage == "dense":
        return np.ascontiguousarray(mat)
    density = np.count_nonzero(mat) / max(mat.size, 1)
    if storage == "sparse" or density <= DENSITY_THRESHOLD:
        return sparse.csr_matrix(mat)
    return np.ascontiguousarray(mat)


def _load_table(tdef, base_dir):
    """Returns (pk_values_or_None, feature_matrix)."""
    path = Path(base_dir) / tdef.path
    if str(path).endswith(".triplet"):
        feats = read_triplet(path)
        if tdef.storage == "dense":
            feats = feats.toarray()
        return None, feats
    names, raw = _read_csv_columns(path)
    pk_vals = None
    feature_cols = list(range(len(names)))
    if tdef.pk is not None:
        if tdef.pk not in names:
            raise DataError(f"{path}: declared pk column {tdef.pk!r} not in header")
        pk_idx = names.index(tdef.pk)
        pk_vals = raw[:, pk_idx]
        feature_cols.remove(pk_idx)
    feats = _parse_float_block(raw, feature_cols, names, path)
    return pk_vals, _maybe_sparse(feats, tdef.storage)


def _positional_keys(key_values, pk_values, path, key_name):
    """Map raw key ids to 1-based row numbers of the attribute table."""
    order = np.argsort(pk_values, kind="stable")
    sorted_pk = pk_values[order]
    if sorted_pk.size > 1 and (sorted_pk[1:] == sorted_pk[:-1]).any():
        raise DataError(f"{path}: duplicate primary-key values")
    pos = np.searchsorted(sorted_pk, key_values)
    pos_clipped = np.clip(pos, 0, sorted_pk.size - 1)
    ok = sorted_pk[pos_clipped] == key_values
    if not ok.all():
        bad = int(np.where(~ok)[0][0])
        raise DataError(
            f"dangling key: entity row {bad} value {key_values[bad]!r} in column "
            f"{key_name!r} matches no primary key"
        )
    return order[pos_clipped] + 1


def load(schema):
    """Load a dataset into a normalized matrix plus the optional target.

    ``schema`` is a SchemaDescriptor or a path to a schema.json.  Key values
    are remapped to contiguous row numbers and unreferenced attribute rows
    dropped by the underlying constructors.
    """
    if not isinstance(schema, SchemaDescriptor):
        schema = load_schema(schema)
    entity_path = Path(schema.base_dir) / schema.entity_path
    names, raw = _read_csv_columns(entity_path)
    special = {}
    for k in schema.keys:
        if k.column not in names:
            raise DataError(f"{entity_path}: key column {k.column!r} not in header")
        special[k.column] = names.index(k.column)
    if schema.target is not None:
        if schema.target not in names:
            raise DataError(f"{entity_path}: target column {schema.target!r} not in header")
        special[schema.target] = names.index(schema.target)
    feature_cols = [i for i in range(len(names)) if i not in special.values()]
    s = _maybe_sparse(
        _parse_float_block(raw, feature_cols, names, entity_path), schema.entity_storage
    )
    y = None
    if schema.target is not None:
        y = _parse_float_block(raw, [special[schema.target]], names, entity_path)

    tables = {t.id: t for t in schema.tables}
    kinds = {k.kind for k in schema.keys}
    if kinds == {"pkfk"}:
        parts = []
        for k in schema.keys:
            tdef = tables[k.table]
            pk_vals, feats = _load_table(tdef, schema.base_dir)
            key_raw = raw[:, special[k.column]]
            if pk_vals is None:
                keys = _parse_float_block(raw, [special[k.column]], names, entity_path)
                keys = keys.ravel().astype(np.int64)
            else:
                keys = _positional_keys(key_raw, pk_vals, entity_path, k.column)
            parts.append((keys, feats))
        if len(parts) == 1:
            nm = build_pkfk(s, parts[0][0], parts[0][1])
        else:
            nm = build_star(s, parts)
    elif kinds == {"mn"}:
        if len(schema.keys) != 1:
            raise DataError("multi-table M:N loading is not supported; use build_multimn")
        k = schema.keys[0]
        tdef = tables[k.table]
        pk_vals, feats = _load_table(tdef, schema.base_dir)
        if pk_vals is None:
            raise DataError(f"M:N table {tdef.id!r} needs an explicit join column (pk)")
        nm = build_mn(s, raw[:, special[k.column]], feats, pk_vals)
        if y is not None:
            y = kernel.to_dense(
                np.asarray(y)[nm.source_rows[0]][nm.blocks[0][0].target]
            )
    else:
        raise DataError("schemas mixing pkfk and mn keys are not supported")
    return nm, y


# ---------------------------------------------------------------------------
# synthetic data


@dataclass(frozen=True)
class SynthParams:
    n_s: int
    n_r: int
    d_s: int
    d_r: int
    n_u: int | None = None
    density: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("n_s", "n_r", "d_s", "d_r"):
            if getattr(self, name) < 1:
                raise DataError(f"{name} must be >= 1")
        if not (0.0 < self.density <= 1.0):
            raise DataError("density must be in (0, 1]")
        if self.n_u is not None and not (1 <= self.n_u <= self.n_s):
            raise DataError("n_u must lie in [1, n_s]")


def _features(rng, n, d, density):
    x = rng.random((n, d))
    if density < 1.0:
        x[rng.random((n, d)) >= density] = 0.0
    return x


def _write_manifest(out_dir, kind, p, extra=None):
    doc = {
        "kind": kind,
        "seed": p.seed,
        "params": {
            "n_s": p.n_s,
            "n_r": p.n_r,
            "d_s": p.d_s,
            "d_r": p.d_r,
            "n_u": p.n_u,
            "density": p.density,
        },
        "value_distribution": "uniform(0,1)",
        "target_distribution": "uniform{-1,+1}",
    }
    if extra:
        doc.update(extra)
    (Path(out_dir) / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _emit(out_dir, s, y, key_cols, key_names, tables, keys_meta):
    """Write entity/attribute files and schema.json; returns the schema path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ent_cols = ["target"] + key_names + [f"f{j}" for j in range(s.shape[1])]
    ent_mat = np.hstack([y] + [k.reshape(-1, 1).astype(np.float64) for k in key_cols] + [s])
    write_dense_csv(out / "entity.csv", ent_mat, ent_cols)
    table_defs = []
    for tid, (ids, feats) in tables.items():
        density = np.count_nonzero(feats) / feats.size
        if density <= DENSITY_THRESHOLD and ids is None:
            fname = f"table_{tid}.triplet"
            write_triplet(out / fname, feats)
            table_defs.append(TableDef(tid, fname, None))
        else:
            fname = f"table_{tid}.csv"
            cols = [f"f{j}" for j in range(feats.shape[1])]
            mat = feats
            pk = None
            if ids is not None:
                cols = ["id"] + cols
                mat = np.hstack([ids.reshape(-1, 1).astype(np.float64), feats])
                pk = "id"
            write_dense_csv(out / fname, mat, cols)
            table_defs.append(TableDef(tid, fname, pk))
    schema = SchemaDescriptor(
        entity_path="entity.csv",
        target="target",
        keys=tuple(keys_meta),
        tables=tuple(table_defs),
        base_dir=str(out),
    )
    (out / "schema.json").write_text(json.dumps(schema.to_json_dict(), indent=2, sort_keys=True) + "\n")
    return out / "schema.json"


def gen_pkfk(p, out_dir):
    """Generate a PK-FK dataset on disk; returns the schema.json path.

    Keys are uniform over the attribute rows with every row referenced at
    least once (the first n_r entity rows take keys 1..n_r), which needs
    n_s >= n_r; smaller entity tables are outside the supported regime.
    """
    if p.n_s < p.n_r:
        raise DataError("PK-FK generation needs n_s >= n_r (tuple ratio >= 1)")
    rng = np.random.default_rng(p.seed)
    s = _features(rng, p.n_s, p.d_s, p.density)
    r = _features(rng, p.n_r, p.d_r, p.density)
    keys = rng.integers(1, p.n_r + 1, size=p.n_s)
    keys[: p.n_r] = np.arange(1, p.n_r + 1)
    y = np.where(rng.random((p.n_s, 1)) < 0.5, -1.0, 1.0)
    # keys are positional row numbers, so the attribute table needs no pk column
    schema_path = _emit(
        out_dir, s, y, [keys], ["k_0"], {"0": (None, r)}, [SchemaKey("k_0", "0", "pkfk")]
    )
    _write_manifest(out_dir, "pkfk", p)
    return schema_path


def gen_mn(p, out_dir):
    """Generate an M:N dataset; join values are uniform over n_u ids.

    Every join value appears on both sides (the first n_u rows of each side
    enumerate them), so no rows are dropped and the expected join size is
    n_s * n_r / n_u.
    """
    if p.n_u is None:
        raise DataError("M:N generation needs n_u")
    rng = np.random.default_rng(p.seed)
    s = _features(rng, p.n_s, p.d_s, p.density)
    r = _features(rng, p.n_r, p.d_r, p.density)
    j_s = rng.integers(1, p.n_u + 1, size=p.n_s)
    j_r = rng.integers(1, p.n_u + 1, size=p.n_r)
    j_s[: p.n_u] = np.arange(1, p.n_u + 1)
    j_r[: min(p.n_u, p.n_r)] = np.arange(1, min(p.n_u, p.n_r) + 1)
    y = np.where(rng.random((p.n_s, 1)) < 0.5, -1.0, 1.0)
    schema_path = _emit(
        out_dir,
        s,
        y,
        [j_s],
        ["j_0"],
        {"0": (j_r, r)},
        [SchemaKey("j_0", "0", "mn")],
    )
    _write_manifest(out_dir, "mn", p)
    return schema_path
