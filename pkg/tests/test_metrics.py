import json

import numpy as np
import pytest
from scipy import stats

from fedsynth.classifiers import (DecisionTreeGini, LogisticRegressionGD,
                                  MlpClassifierAdam, accuracy,
                                  builtin_classifiers)
from fedsynth.errors import ValidationError
from fedsynth.fixtures import (INDEPENDENT_SCHEMA, gaussian_mixture_table,
                               independent_table, separable_table,
                               shuffle_column)
from fedsynth.metrics import (MetricsReport, column_fidelity, evaluate_tables,
                              js_similarity, row_fidelity, theil_u,
                              utility_score, wasserstein_similarity)

# Frozen oracle: 1 - JS2((1/2, 1/2), (1, 0)) with base-2 logs.
JS_HALF_VS_POINT = 0.6887218755408672


# ---------------------------------------------------------------------------
# Column fidelity


def test_wasserstein_similarity_identical_is_one():
    x = np.random.default_rng(0).normal(size=500)
    assert wasserstein_similarity(x, x) == 1.0


def test_wasserstein_similarity_extreme_point_masses():
    assert wasserstein_similarity([0.0, 0.0], [1.0, 1.0]) == 0.0
    assert wasserstein_similarity([2.0, 2.0], [2.0, 2.0]) == 1.0


def test_wasserstein_similarity_half_shift():
    # ranges [0,1] and [1,2]: joint range [0,2], W1 = 1/2 after normalizing
    a = np.linspace(0.0, 1.0, 2000)
    b = np.linspace(1.0, 2.0, 2000)
    assert wasserstein_similarity(a, b) == pytest.approx(0.5, abs=1e-3)


def test_wasserstein_matches_scipy_after_joint_normalization():
    rng = np.random.default_rng(1)
    a = rng.normal(size=400)
    b = rng.normal(1.0, 2.0, size=300)
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    expected = 1.0 - stats.wasserstein_distance((a - lo) / (hi - lo),
                                                (b - lo) / (hi - lo))
    assert wasserstein_similarity(a, b) == pytest.approx(expected, rel=1e-12)


def test_js_similarity_identical_is_one():
    col = ["a", "b", "a", "c"]
    assert js_similarity(col, col) == 1.0


def test_js_similarity_frozen_half_vs_point():
    got = js_similarity(["u", "v"], ["u", "u"])
    assert got == pytest.approx(JS_HALF_VS_POINT, rel=1e-12)


def test_js_similarity_disjoint_supports_is_zero():
    assert js_similarity(["a", "a"], ["b", "b"]) == 0.0


def test_js_similarity_symmetric():
    a = ["x"] * 7 + ["y"] * 3
    b = ["x"] * 2 + ["y"] * 8
    assert js_similarity(a, b) == pytest.approx(js_similarity(b, a), rel=1e-15)


def test_column_fidelity_self_is_exactly_one():
    table = gaussian_mixture_table(300, seed=2)
    omega_col, per_column = column_fidelity(table, table)
    assert omega_col == 1.0
    assert all(v == 1.0 for v in per_column.values())


def test_column_fidelity_mean_is_exact():
    real = gaussian_mixture_table(200, seed=3)
    syn = gaussian_mixture_table(200, seed=4)
    omega_col, per_column = column_fidelity(real, syn)
    manual = np.mean([per_column[n] for n in real.schema.names])
    assert omega_col == pytest.approx(manual, abs=1e-15)


def test_column_fidelity_requires_matching_schema():
    a = gaussian_mixture_table(50, seed=0)
    b = separable_table(50, seed=0)
    with pytest.raises(ValidationError):
        column_fidelity(a, b)


# ---------------------------------------------------------------------------
# Row fidelity


def test_theil_u_self_is_one():
    vals = ["a", "b", "b", "c", "a", "c", "c"]
    assert theil_u(vals, vals) == 1.0


def test_theil_u_constant_first_column_is_one():
    assert theil_u(["k"] * 6, ["a", "b", "a", "b", "a", "b"]) == 1.0


def test_theil_u_independent_near_zero():
    rng = np.random.default_rng(5)
    a = rng.choice(["a", "b"], size=20_000)
    b = rng.choice(["x", "y", "z"], size=20_000)
    assert theil_u(a, b) < 0.005


def test_theil_u_is_directional():
    # b determines a, but a only partly determines b
    a = ["p", "p", "q", "q"]
    b = ["1", "2", "3", "4"]
    assert theil_u(a, b) == 1.0
    assert theil_u(b, a) < 1.0


def test_row_fidelity_self_is_exactly_one():
    table = gaussian_mixture_table(250, seed=6)
    row = row_fidelity(table, table)
    assert row["omega_row"] == 1.0
    # only the x-y numeric pair is in scope (mixed-type pairs are not scored)
    assert row["pairs_evaluated"] == 1
    assert row["pairs_skipped"] == 0


def test_row_fidelity_pair_bookkeeping_mixed_table():
    table = independent_table(150, seed=7)
    row = row_fidelity(table, table)
    # 3 numeric -> 3 unordered pairs; 2 categorical -> 2 ordered pairs
    assert row["pairs_evaluated"] == 5
    assert row["pairs_skipped"] == 0
    assert row["omega_row"] == 1.0


def test_row_fidelity_constant_numeric_column_skipped():
    table = gaussian_mixture_table(100, seed=6)
    from fedsynth.data import RawTable
    cols = {n: c.copy() for n, c in table.columns.items()}
    cols["y"][:] = 2.5
    flat = RawTable(table.schema, cols)
    row = row_fidelity(flat, flat)
    assert row["pairs_evaluated"] == 0
    assert row["pairs_skipped"] == 1
    assert row["omega_row"] is None


def test_row_fidelity_detects_broken_correlation():
    table = gaussian_mixture_table(2000, seed=8)
    broken = shuffle_column(table, "y", seed=9)
    row_self = row_fidelity(table, table)
    row_broken = row_fidelity(table, broken)
    assert row_broken["omega_row"] < row_self["omega_row"] - 0.1


def test_row_fidelity_none_when_no_pairs():
    table = separable_table(100, seed=0)
    # u, v numeric + label categorical -> one numeric pair, so drop a column
    sub_schema_cols = [c for c in table.schema.names if c != "v"]
    from fedsynth.data import RawTable, TabularSchema
    schema = TabularSchema(columns=(("u", "numeric"), ("label", "categorical")),
                           target_column="label")
    sub = RawTable(schema, {"u": table.column("u"),
                            "label": table.column("label")})
    row = row_fidelity(sub, sub)
    assert row["omega_row"] is None
    assert row["pairs_evaluated"] == 0


# ---------------------------------------------------------------------------
# Classifiers


def _split_xy(table, target):
    names = [n for n in table.schema.names if n != target]
    X = np.column_stack([table.column(n) for n in names])
    labels = {v: i for i, v in enumerate(dict.fromkeys(table.column(target)))}
    y = np.array([labels[v] for v in table.column(target)], dtype=np.int64)
    return X, y, len(labels)


def test_logistic_regression_separable():
    table = separable_table(400, seed=1)
    X, y, k = _split_xy(table, "label")
    model = LogisticRegressionGD().fit(X[:300], y[:300], k)
    assert accuracy(y[300:], model.predict(X[300:])) >= 0.95


def test_logistic_regression_deterministic():
    table = separable_table(200, seed=2)
    X, y, k = _split_xy(table, "label")
    p1 = LogisticRegressionGD().fit(X, y, k).predict(X)
    p2 = LogisticRegressionGD().fit(X, y, k).predict(X)
    np.testing.assert_array_equal(p1, p2)


def test_decision_tree_learns_axis_aligned_rectangle():
    rng = np.random.default_rng(3)
    X = rng.uniform(-1, 1, size=(400, 2))
    y = ((X[:, 0] > 0.3) & (X[:, 1] < 0.6)).astype(np.int64)
    model = DecisionTreeGini(max_depth=3).fit(X, y, 2)
    assert accuracy(y, model.predict(X)) >= 0.99


def test_decision_tree_deterministic():
    rng = np.random.default_rng(30)
    X = rng.uniform(size=(300, 4))
    y = rng.integers(0, 3, size=300)
    p1 = DecisionTreeGini().fit(X, y, 3).predict(X)
    p2 = DecisionTreeGini().fit(X.copy(), y.copy(), 3).predict(X)
    np.testing.assert_array_equal(p1, p2)


def test_decision_tree_depth_limit_respected():
    rng = np.random.default_rng(4)
    X = rng.uniform(size=(200, 3))
    y = rng.integers(0, 2, size=200)
    stump = DecisionTreeGini(max_depth=0).fit(X, y, 2)
    # a depth-0 tree is a single leaf: constant prediction
    assert np.unique(stump.predict(X)).size == 1


def test_mlp_separable_and_seeded():
    table = separable_table(300, seed=5)
    X, y, k = _split_xy(table, "label")
    m1 = MlpClassifierAdam(seed=0).fit(X, y, k)
    m2 = MlpClassifierAdam(seed=0).fit(X, y, k)
    np.testing.assert_array_equal(m1.predict(X), m2.predict(X))
    assert accuracy(y, m1.predict(X)) >= 0.95


def test_builtin_classifiers_names():
    names = [name for name, _ in builtin_classifiers(0)]
    assert names == ["logistic_regression", "decision_tree", "mlp"]


def test_accuracy_basic():
    assert accuracy(np.array([1, 0, 1, 1]), np.array([1, 1, 1, 0])) == 0.5


# ---------------------------------------------------------------------------
# Utility score


def test_utility_separable_self_train_high():
    table = separable_table(600, seed=11)
    out = utility_score(table.select(np.arange(480)),
                        table.select(np.arange(480, 600)), seed=0)
    assert out["phi"] >= 0.95
    assert set(out["accuracies"]) == {"logistic_regression", "decision_tree",
                                      "mlp"}
    assert out["phi"] == pytest.approx(
        np.mean(list(out["accuracies"].values())), abs=1e-15)


def test_utility_label_independent_data_near_majority():
    """When test labels carry no feature signal, train-on-anything accuracy
    concentrates near the majority rate."""
    table = separable_table(2000, seed=12)
    shuffled = shuffle_column(table, "label", seed=13)
    out = utility_score(shuffled.select(np.arange(1000)),
                        shuffled.select(np.arange(1000, 2000)), seed=0)
    assert abs(out["phi"] - out["majority_rate"]) <= 0.06


def test_utility_single_class_train_skips():
    table = separable_table(100, seed=14)
    mask = np.flatnonzero(table.column("label") == table.column("label")[0])
    out = utility_score(table.select(mask), table, seed=0)
    assert out["phi"] is None
    assert len(out["skipped"]) == 3


def test_utility_requires_categorical_target():
    table = gaussian_mixture_table(80, seed=15)
    from fedsynth.data import RawTable, TabularSchema
    no_target = TabularSchema(columns=table.schema.columns)
    stripped = RawTable(no_target, dict(table.columns))
    with pytest.raises(ValidationError):
        utility_score(stripped, stripped)


# ---------------------------------------------------------------------------
# Full report


def test_evaluate_self_omega_exactly_one():
    table = gaussian_mixture_table(250, seed=16)
    report = evaluate_tables(table, table, seed=0, n_attacks=25)
    assert report.omega == 1.0
    assert report.fidelity["omega_col"] == 1.0
    assert report.fidelity["omega_row"] == 1.0


def test_evaluate_aggregates_are_exact_means():
    real = gaussian_mixture_table(220, seed=17)
    syn = gaussian_mixture_table(220, seed=18)
    report = evaluate_tables(real, syn, seed=1, n_attacks=30)
    f = report.fidelity
    assert f["omega"] == pytest.approx(
        (f["omega_col"] + f["omega_row"]) / 2.0, abs=1e-15)
    p = report.privacy
    np.testing.assert_allclose(
        p["pi"], np.mean([p["singling_out"]["risk"], p["linkability"]["risk"],
                          p["inference"]["risk"]]), atol=1e-15)
    assert p["protection"] == pytest.approx(1.0 - p["pi"], abs=1e-15)


def test_evaluate_deterministic_given_seed():
    real = gaussian_mixture_table(150, seed=19)
    syn = gaussian_mixture_table(150, seed=20)
    r1 = evaluate_tables(real, syn, seed=5, n_attacks=40)
    r2 = evaluate_tables(real, syn, seed=5, n_attacks=40)
    assert r1.to_json() == r2.to_json()


def test_report_json_roundtrip():
    real = gaussian_mixture_table(120, seed=21)
    report = evaluate_tables(real, real, seed=2, n_attacks=20)
    back = MetricsReport.from_dict(json.loads(report.to_json()))
    assert back.to_json() == report.to_json()
    assert back.omega == report.omega
    assert back.privacy_risk == report.privacy_risk


def test_evaluate_rejects_schema_mismatch_and_bad_fraction():
    a = gaussian_mixture_table(60, seed=22)
    b = separable_table(60, seed=23)
    with pytest.raises(ValidationError):
        evaluate_tables(a, b)
    with pytest.raises(ValidationError):
        evaluate_tables(a, a, test_fraction=1.5)
