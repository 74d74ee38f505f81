"""CSV ingestion, reversible mixed-type encoding, and client partitioning.

Numeric columns are quantile-transformed to their empirical CDF position and
rescaled to [-1, 1]; categorical columns become trainable 2-d embedding rows.
The fitted pipeline (quantiles, vocabularies, embedding init seed) persists to
a single JSON file so that decoding is reproducible.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import CsvFormatError, SchemaError, ValidationError
from .store import json_digest, read_json, write_json

KIND_NUMERIC = "numeric"
KIND_CATEGORICAL = "categorical"
_KINDS = (KIND_NUMERIC, KIND_CATEGORICAL)

EMBED_DIM = 2
EMBED_INIT_STD = 1.0 / math.sqrt(2.0)
DEFAULT_N_QUANTILES = 1000


@dataclass(frozen=True)
class TabularSchema:
    """Ordered column declaration: name -> kind, plus optional special roles.

    ``target_column`` marks the label used by the utility metric;
    ``partition_column`` names the categorical column driving non-IID splits.
    """

    columns: tuple[tuple[str, str], ...]
    target_column: str | None = None
    partition_column: str | None = None

    def __post_init__(self):
        if not self.columns:
            raise SchemaError("schema must declare at least one column")
        names = [name for name, _ in self.columns]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"duplicate column names: {dupes}")
        for name, kind in self.columns:
            if kind not in _KINDS:
                raise SchemaError(f"column {name!r} has unknown kind {kind!r}")
        kinds = dict(self.columns)
        for role, col in (("target_column", self.target_column),
                          ("partition_column", self.partition_column)):
            if col is not None and col not in kinds:
                raise SchemaError(f"{role} {col!r} not among schema columns")
        if (self.partition_column is not None
                and kinds[self.partition_column] != KIND_CATEGORICAL):
            raise SchemaError(
                f"partition_column {self.partition_column!r} must be categorical")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.columns)

    @property
    def kinds(self) -> dict:
        return dict(self.columns)

    @property
    def numeric_names(self) -> tuple[str, ...]:
        return tuple(n for n, k in self.columns if k == KIND_NUMERIC)

    @property
    def categorical_names(self) -> tuple[str, ...]:
        return tuple(n for n, k in self.columns if k == KIND_CATEGORICAL)

    @property
    def encoded_width(self) -> int:
        return len(self.numeric_names) + EMBED_DIM * len(self.categorical_names)

    def to_dict(self) -> dict:
        out = {"columns": [{"name": n, "kind": k} for n, k in self.columns]}
        if self.target_column is not None:
            out["target"] = self.target_column
        if self.partition_column is not None:
            out["partition_by"] = self.partition_column
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "TabularSchema":
        try:
            cols = tuple((c["name"], c["kind"]) for c in d["columns"])
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed schema: {exc}") from exc
        return cls(cols, d.get("target"), d.get("partition_by"))

    @classmethod
    def load(cls, path) -> "TabularSchema":
        try:
            return cls.from_dict(read_json(path))
        except OSError as exc:
            raise SchemaError(f"cannot read schema file {path!r}: {exc}") from exc
        except ValueError as exc:
            raise SchemaError(f"schema file {path!r} is not valid JSON: {exc}") from exc

    def save(self, path) -> None:
        write_json(path, self.to_dict())


@dataclass
class RawTable:
    """Column-major table: numeric columns as float64, categoricals as str."""

    schema: TabularSchema
    columns: dict

    def __post_init__(self):
        lengths = {name: len(col) for name, col in self.columns.items()}
        if set(lengths) != set(self.schema.names):
            raise SchemaError("table columns do not match schema")
        if len(set(lengths.values())) > 1:
            raise SchemaError(f"ragged columns: {lengths}")

    @property
    def n_rows(self) -> int:
        return len(self.columns[self.schema.names[0]])

    def select(self, indices) -> "RawTable":
        idx = np.asarray(indices)
        return RawTable(self.schema,
                        {name: col[idx] for name, col in self.columns.items()})

    def column(self, name: str) -> np.ndarray:
        return self.columns[name]


def load_csv(path, schema: TabularSchema) -> RawTable:
    """Parse a UTF-8, comma-delimited CSV with a header row against ``schema``.

    Column order in the file is free; the result follows schema order. Any
    missing/extra header, unparseable numeric cell, or empty cell is an error
    (missing values are out of scope).
    """
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise CsvFormatError(f"cannot open CSV {path!r}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"CSV {path!r} is empty") from None
        missing = [n for n in schema.names if n not in header]
        if missing:
            raise SchemaError(f"CSV {path!r} missing column(s) {missing}")
        extra = [n for n in header if n not in schema.names]
        if extra:
            raise SchemaError(f"CSV {path!r} has undeclared column(s) {extra}")
        if len(set(header)) != len(header):
            raise SchemaError(f"CSV {path!r} has duplicate header names")
        pos = {name: header.index(name) for name in schema.names}

        raw_cols: dict = {name: [] for name in schema.names}
        kinds = schema.kinds
        for row_idx, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise CsvFormatError(
                    f"{path!r} row {row_idx}: expected {len(header)} cells, got {len(row)}")
            for name in schema.names:
                cell = row[pos[name]]
                if cell == "":
                    raise CsvFormatError(f"{path!r} row {row_idx}: empty cell in {name!r}")
                if kinds[name] == KIND_NUMERIC:
                    try:
                        value = float(cell)
                    except ValueError:
                        raise CsvFormatError(
                            f"{path!r} row {row_idx}: cannot parse {cell!r} "
                            f"as numeric in column {name!r}") from None
                    if not math.isfinite(value):
                        raise CsvFormatError(
                            f"{path!r} row {row_idx}: non-finite value in {name!r}")
                    raw_cols[name].append(value)
                else:
                    raw_cols[name].append(cell)

    if not raw_cols[schema.names[0]]:
        raise CsvFormatError(f"CSV {path!r} has a header but no data rows")
    columns = {}
    for name in schema.names:
        if kinds[name] == KIND_NUMERIC:
            columns[name] = np.asarray(raw_cols[name], dtype=np.float64)
        else:
            columns[name] = np.asarray(raw_cols[name], dtype=object)
    return RawTable(schema, columns)


def write_csv(path, table: RawTable) -> None:
    """Write a RawTable back to CSV in schema column order."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(table.schema.names)
        kinds = table.schema.kinds
        cols = [table.columns[name] for name in table.schema.names]
        for i in range(table.n_rows):
            row = []
            for name, col in zip(table.schema.names, cols):
                if kinds[name] == KIND_NUMERIC:
                    row.append(repr(float(col[i])))
                else:
                    row.append(str(col[i]))
            writer.writerow(row)


# ---------------------------------------------------------------------------
# Numeric quantile transform


@dataclass(frozen=True)
class QuantileMap:
    """Empirical-CDF transform for one numeric column.

    ``quantiles[k]`` is the empirical quantile at level ``k/(n_q-1)``;
    transform/inverse interpolate linearly between them.
    """

    quantiles: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.quantiles, dtype=np.float64)
        if q.ndim != 1 or q.size < 1:
            raise ValidationError("quantile map needs a 1-d quantile array")
        if np.any(np.diff(q) < 0):
            raise ValidationError("reference quantiles must be non-decreasing")
        object.__setattr__(self, "quantiles", q)

    @property
    def levels(self) -> np.ndarray:
        n = self.quantiles.size
        if n == 1:
            return np.array([0.5])
        return np.linspace(0.0, 1.0, n)

    def transform(self, values) -> np.ndarray:
        """Map values to their interpolated CDF position in [0, 1]."""
        return np.interp(np.asarray(values, dtype=np.float64),
                         self.quantiles, self.levels)

    def inverse(self, u) -> np.ndarray:
        """Map CDF positions back to data scale (inputs clamped to [0, 1])."""
        u = np.clip(np.asarray(u, dtype=np.float64), 0.0, 1.0)
        return np.interp(u, self.levels, self.quantiles)


def fit_quantile_map(values, n_quantiles: int = DEFAULT_N_QUANTILES) -> QuantileMap:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValidationError("cannot fit a quantile map on an empty column")
    if not np.all(np.isfinite(values)):
        raise ValidationError("numeric column contains non-finite values")
    if n_quantiles < 2:
        raise ValidationError("n_quantiles must be >= 2")
    n_q = min(int(n_quantiles), values.size)
    if n_q == 1:
        quantiles = np.array([values[0]])
    else:
        quantiles = np.quantile(values, np.linspace(0.0, 1.0, n_q))
    return QuantileMap(quantiles)


# ---------------------------------------------------------------------------
# Categorical codec


@dataclass(frozen=True)
class CategoryCodec:
    """Vocabulary plus the seeded initial 2-d embedding rows for one column.

    Embeddings are only *initialized* here; training happens wherever the
    tables are treated as model parameters. Decoding maps a 2-d vector to the
    nearest row (Euclidean), ties to the lowest index.
    """

    vocabulary: tuple
    init_table: np.ndarray

    def __post_init__(self):
        if len(self.vocabulary) == 0:
            raise ValidationError("empty vocabulary")
        if len(set(self.vocabulary)) != len(self.vocabulary):
            raise ValidationError("vocabulary entries must be unique")
        table = np.asarray(self.init_table, dtype=np.float64)
        if table.shape != (len(self.vocabulary), EMBED_DIM):
            raise ValidationError(
                f"embedding table shape {table.shape} != ({len(self.vocabulary)}, {EMBED_DIM})")
        object.__setattr__(self, "init_table", table)

    @property
    def size(self) -> int:
        return len(self.vocabulary)

    def indices_of(self, values, column: str = "?") -> np.ndarray:
        lookup = {v: i for i, v in enumerate(self.vocabulary)}
        out = np.empty(len(values), dtype=np.int64)
        for i, v in enumerate(values):
            try:
                out[i] = lookup[v]
            except KeyError:
                raise ValidationError(
                    f"unseen category {v!r} in column {column!r}") from None
        return out

    def decode_vectors(self, slices: np.ndarray, table: np.ndarray | None = None) -> np.ndarray:
        table = self.init_table if table is None else table
        # (N, V) squared distances; argmin returns the lowest index on ties.
        d2 = ((slices[:, None, :] - table[None, :, :]) ** 2).sum(axis=2)
        idx = np.argmin(d2, axis=1)
        vocab = np.asarray(self.vocabulary, dtype=object)
        return vocab[idx]


def fit_category_codec(values, rng_seed) -> CategoryCodec:
    """Build a codec with vocabulary in first-occurrence order.

    ``rng_seed`` may be an int or a seed sequence; the embedding rows are
    drawn i.i.d. from N(0, 1/2) (std 1/sqrt(2)).
    """
    if len(values) == 0:
        raise ValidationError("cannot fit a codec on an empty column")
    seen: dict = {}
    for v in values:
        if v not in seen:
            seen[v] = len(seen)
    vocab = tuple(seen)
    rng = np.random.default_rng(rng_seed)
    table = rng.normal(0.0, EMBED_INIT_STD, size=(len(vocab), EMBED_DIM))
    return CategoryCodec(vocab, table)


# ---------------------------------------------------------------------------
# Pipeline: fit once, encode/decode many times


PIPELINE_FORMAT = "fedsynth-pipeline-v1"


@dataclass
class EncodingPipeline:
    """Fitted, immutable encode/decode state for one schema."""

    schema: TabularSchema
    quantile_maps: dict
    codecs: dict
    n_quantiles: int
    embed_seed: int

    @property
    def encoded_width(self) -> int:
        return self.schema.encoded_width

    @classmethod
    def fit(cls, table: RawTable, n_quantiles: int = DEFAULT_N_QUANTILES,
            embed_seed: int = 0) -> "EncodingPipeline":
        schema = table.schema
        qmaps = {name: fit_quantile_map(table.column(name), n_quantiles)
                 for name in schema.numeric_names}
        codecs = {}
        for pos, name in enumerate(schema.categorical_names):
            codecs[name] = fit_category_codec(table.column(name), [embed_seed, pos])
        return cls(schema, qmaps, codecs, n_quantiles, embed_seed)

    def initial_embeddings(self) -> list:
        return [self.codecs[name].init_table.copy()
                for name in self.schema.categorical_names]

    def encode_numeric(self, table: RawTable) -> np.ndarray:
        """Numeric block only, in [-1, 1], shape (N, #numeric)."""
        cols = [2.0 * self.quantile_maps[name].transform(table.column(name)) - 1.0
                for name in self.schema.numeric_names]
        if not cols:
            return np.zeros((table.n_rows, 0))
        return np.column_stack(cols)

    def category_indices(self, table: RawTable) -> np.ndarray:
        """Vocabulary index matrix, shape (N, #categorical), dtype int64."""
        cols = [self.codecs[name].indices_of(table.column(name), name)
                for name in self.schema.categorical_names]
        if not cols:
            return np.zeros((table.n_rows, 0), dtype=np.int64)
        return np.column_stack(cols)

    def encode(self, table: RawTable, embeddings: list | None = None) -> np.ndarray:
        """Full encoded matrix: numerics first, then 2-d embedding slices."""
        if embeddings is None:
            embeddings = self.initial_embeddings()
        blocks = [self.encode_numeric(table)]
        idx = self.category_indices(table)
        for j in range(idx.shape[1]):
            blocks.append(embeddings[j][idx[:, j]])
        out = np.hstack(blocks)
        if not np.all(np.isfinite(out)):
            raise ValidationError("encoded matrix contains non-finite values")
        return out

    def decode(self, encoded: np.ndarray, embeddings: list | None = None) -> RawTable:
        encoded = np.atleast_2d(np.asarray(encoded, dtype=np.float64))
        if encoded.shape[1] != self.encoded_width:
            raise ValidationError(
                f"encoded width {encoded.shape[1]} != expected {self.encoded_width}")
        if embeddings is None:
            embeddings = self.initial_embeddings()
        n_num = len(self.schema.numeric_names)
        columns: dict = {}
        for i, name in enumerate(self.schema.numeric_names):
            u = (np.clip(encoded[:, i], -1.0, 1.0) + 1.0) / 2.0
            columns[name] = self.quantile_maps[name].inverse(u)
        for j, name in enumerate(self.schema.categorical_names):
            sl = encoded[:, n_num + EMBED_DIM * j: n_num + EMBED_DIM * (j + 1)]
            columns[name] = self.codecs[name].decode_vectors(sl, embeddings[j])
        return RawTable(self.schema, columns)

    # -- persistence --------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": PIPELINE_FORMAT,
            "schema": self.schema.to_dict(),
            "n_quantiles": self.n_quantiles,
            "embed_seed": self.embed_seed,
            "quantiles": {name: qm.quantiles.tolist()
                          for name, qm in self.quantile_maps.items()},
            "vocabularies": {name: list(codec.vocabulary)
                             for name, codec in self.codecs.items()},
        }

    @property
    def digest(self) -> str:
        return json_digest(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "EncodingPipeline":
        if d.get("format") != PIPELINE_FORMAT:
            raise ValidationError(f"unsupported pipeline format {d.get('format')!r}")
        schema = TabularSchema.from_dict(d["schema"])
        qmaps = {name: QuantileMap(np.asarray(vals, dtype=np.float64))
                 for name, vals in d["quantiles"].items()}
        embed_seed = int(d["embed_seed"])
        codecs = {}
        for pos, name in enumerate(schema.categorical_names):
            vocab = tuple(d["vocabularies"][name])
            rng = np.random.default_rng([embed_seed, pos])
            table = rng.normal(0.0, EMBED_INIT_STD, size=(len(vocab), EMBED_DIM))
            codecs[name] = CategoryCodec(vocab, table)
        return cls(schema, qmaps, codecs, int(d["n_quantiles"]), embed_seed)

    def save(self, path) -> None:
        write_json(path, self.to_dict())

    @classmethod
    def load(cls, path) -> "EncodingPipeline":
        return cls.from_dict(read_json(path))


# ---------------------------------------------------------------------------
# Client partitioning


@dataclass(frozen=True)
class ClientPartition:
    """Row indices owned by one simulated client."""

    client_id: int
    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.size == 0:
            raise ValidationError(f"client {self.client_id} has no rows")
        object.__setattr__(self, "indices", idx)

    @property
    def n_samples(self) -> int:
        return int(self.indices.size)


def _check_lambda(n_clients: int, n_rows: int) -> None:
    if n_clients < 2:
        raise ValidationError("need at least 2 clients for a federated split")
    if n_clients > n_rows:
        raise ValidationError(
            f"cannot split {n_rows} rows across {n_clients} clients")


def partition_iid(table: RawTable, n_clients: int, rng_seed) -> list:
    """Uniform shuffle, then near-equal contiguous shards (sizes differ <= 1)."""
    _check_lambda(n_clients, table.n_rows)
    rng = np.random.default_rng(rng_seed)
    perm = rng.permutation(table.n_rows)
    return [ClientPartition(cid, np.sort(chunk))
            for cid, chunk in enumerate(np.array_split(perm, n_clients))]


def partition_noniid(table: RawTable, partition_column: str, n_clients: int,
                     rng_seed) -> list:
    """Label-skew split: each distinct value of ``partition_column`` goes,
    whole, to the currently smallest client (greedy, largest groups first).

    When there are fewer distinct values than clients, the largest value
    group is split uniformly at random so every client ends non-empty.
    """
    _check_lambda(n_clients, table.n_rows)
    if table.schema.kinds.get(partition_column) != KIND_CATEGORICAL:
        raise ValidationError(
            f"partition column {partition_column!r} must be a categorical column")
    values = table.column(partition_column)

    order: dict = {}
    for v in values:
        if v not in order:
            order[v] = len(order)
    groups = {v: np.flatnonzero(np.asarray([x == v for x in values]))
              for v in order}
    # Largest group first; ties broken by first occurrence for determinism.
    ranked = sorted(order, key=lambda v: (-groups[v].size, order[v]))

    buckets: list = [[] for _ in range(n_clients)]
    counts = np.zeros(n_clients, dtype=np.int64)
    for v in ranked:
        target = int(np.argmin(counts))
        buckets[target].append(groups[v])
        counts[target] += groups[v].size

    rng = np.random.default_rng(rng_seed)
    while np.any(counts == 0):
        empties = np.flatnonzero(counts == 0)
        donor = int(np.argmax(counts))
        donor_rows = np.concatenate(buckets[donor])
        if donor_rows.size < 2:
            raise ValidationError("not enough rows to give every client data")
        shuffled = rng.permutation(donor_rows)
        n_parts = min(empties.size + 1, donor_rows.size)
        parts = np.array_split(shuffled, n_parts)
        buckets[donor] = [parts[0]]
        counts[donor] = parts[0].size
        for empty, part in zip(empties, parts[1:]):
            buckets[int(empty)] = [part]
            counts[int(empty)] = part.size

    return [ClientPartition(cid, np.sort(np.concatenate(buckets[cid])))
            for cid in range(n_clients)]


def save_partitions(path, partitions: list) -> None:
    write_json(path, {"clients": [{"client_id": p.client_id,
                                   "indices": p.indices.tolist()}
                                  for p in partitions]})


def load_partitions(path) -> list:
    d = read_json(path)
    return [ClientPartition(int(c["client_id"]), np.asarray(c["indices"], dtype=np.int64))
            for c in d["clients"]]
