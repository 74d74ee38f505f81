"""Seeded synthetic fixtures used by tests, demos, and calibration checks.

Everything here is generated from explicit seeds — no bundled data files —
so fixture tables are bit-identical across machines.
"""

from __future__ import annotations

import numpy as np

from .data import RawTable, TabularSchema

MIXTURE_SCHEMA = TabularSchema(
    columns=(("x", "numeric"), ("y", "numeric"), ("segment", "categorical")),
    target_column="segment",
    partition_column="segment",
)


def gaussian_mixture_table(n_rows: int = 2000, seed: int = 7) -> RawTable:
    """Three correlated Gaussian blobs labelled by component.

    The segment column doubles as classification target and non-IID
    partition key; the numeric pair carries within-component correlation so
    row fidelity has signal to detect.
    """
    rng = np.random.default_rng(seed)
    means = np.array([[-2.0, -2.0], [0.0, 1.6], [2.4, -0.6]])
    covs = np.array([
        [[0.40, 0.24], [0.24, 0.40]],
        [[0.30, -0.15], [-0.15, 0.30]],
        [[0.50, 0.30], [0.30, 0.50]],
    ])
    weights = np.array([0.5, 0.3, 0.2])
    comps = rng.choice(3, size=n_rows, p=weights)
    points = np.empty((n_rows, 2))
    for c in range(3):
        rows = np.flatnonzero(comps == c)
        points[rows] = rng.multivariate_normal(means[c], covs[c], size=rows.size)
    labels = np.asarray([f"s{c}" for c in comps], dtype=object)
    return RawTable(MIXTURE_SCHEMA, {"x": points[:, 0], "y": points[:, 1],
                                     "segment": labels})


SEPARABLE_SCHEMA = TabularSchema(
    columns=(("u", "numeric"), ("v", "numeric"), ("label", "categorical")),
    target_column="label",
)


def separable_table(n_rows: int = 600, seed: int = 11) -> RawTable:
    """Two linearly separable balanced clusters with a wide margin."""
    rng = np.random.default_rng(seed)
    half = n_rows // 2
    a = rng.normal([-2.0, -2.0], 0.5, size=(half, 2))
    b = rng.normal([2.0, 2.0], 0.5, size=(n_rows - half, 2))
    points = np.vstack([a, b])
    labels = np.asarray(["neg"] * half + ["pos"] * (n_rows - half), dtype=object)
    perm = rng.permutation(n_rows)
    return RawTable(SEPARABLE_SCHEMA, {"u": points[perm, 0], "v": points[perm, 1],
                                       "label": labels[perm]})


INDEPENDENT_SCHEMA = TabularSchema(
    columns=(("amount", "numeric"), ("score", "numeric"), ("offset", "numeric"),
             ("dept", "categorical"), ("grade", "categorical")),
)


def independent_table(n_rows: int = 500, seed: int = 23) -> RawTable:
    """Five mutually independent columns with high joint cardinality.

    Used for attack calibration: a fresh draw with another seed is a perfect
    "non-leaking generator" null, while the table itself is the
    leak-everything case.
    """
    rng = np.random.default_rng(seed)
    dept_levels = [f"dept_{i:02d}" for i in range(40)]
    dept_w = 1.0 / np.arange(1, 41)
    dept_w /= dept_w.sum()
    grade_levels = [f"g{i}" for i in range(12)]
    grade_w = 1.0 / np.arange(1, 13) ** 0.5
    grade_w /= grade_w.sum()
    return RawTable(INDEPENDENT_SCHEMA, {
        "amount": rng.lognormal(mean=3.0, sigma=0.6, size=n_rows),
        "score": rng.normal(0.0, 1.0, size=n_rows),
        "offset": rng.uniform(-1.0, 2.0, size=n_rows),
        "dept": rng.choice(np.asarray(dept_levels, dtype=object), size=n_rows, p=dept_w),
        "grade": rng.choice(np.asarray(grade_levels, dtype=object), size=n_rows, p=grade_w),
    })


def shuffle_column(table: RawTable, column: str, seed: int = 0) -> RawTable:
    """Copy of the table with one column independently permuted."""
    rng = np.random.default_rng(seed)
    columns = {name: col.copy() for name, col in table.columns.items()}
    columns[column] = columns[column][rng.permutation(table.n_rows)]
    return RawTable(table.schema, columns)
