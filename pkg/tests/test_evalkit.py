import math
import random

import numpy as np
import pytest

from cmml import evalkit
from cmml.tabular import Table


# ---------------------------------------------------------------------------
# Regression / classification metrics


def test_regression_metrics_oracle():
    actual = [3.0, -0.5, 2.0, 7.0]
    predicted = [2.5, 0.0, 2.0, 8.0]
    # independent arithmetic: squared errors .25, .25, 0, 1 -> mse 0.375
    rep = evalkit.regression_metrics(actual, predicted, value_range=10.0)
    assert rep.rmse == pytest.approx(math.sqrt(0.375), abs=1e-12)
    assert rep.nrmse == pytest.approx(math.sqrt(0.375) / 10.0, abs=1e-12)
    ss_tot = sum((a - 2.875) ** 2 for a in actual)
    assert rep.r2 == pytest.approx(1.0 - 1.5 / ss_tot, abs=1e-12)


def test_regression_metrics_validation():
    with pytest.raises(ValueError):
        evalkit.regression_metrics([1.0], [1.0, 2.0], 1.0)
    with pytest.raises(ValueError):
        evalkit.regression_metrics([], [], 1.0)
    with pytest.raises(ValueError):
        evalkit.regression_metrics([1.0], [1.0], 0.0)


def test_f1_published_cells():
    assert evalkit.f1_score(40.56, 59.28) == pytest.approx(48.17, abs=0.01)
    assert evalkit.f1_score(38.89, 84.0) == pytest.approx(53.17, abs=0.01)
    assert evalkit.f1_score(0.0, 0.0) == 0.0


def test_classification_metrics():
    rep = evalkit.classification_metrics(tp=8, fp=2, fn=4)
    assert rep.precision == pytest.approx(80.0)
    assert rep.recall == pytest.approx(100.0 * 8 / 12)
    assert rep.f1 == pytest.approx(evalkit.f1_score(rep.precision, rep.recall))
    zero = evalkit.classification_metrics(tp=0, fp=0, fn=0)
    assert zero.f1 == 0.0 and zero.warnings


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank


def oracle_t_plus(diffs):
    """Rank |d| by brute sort with mid-ranks, sum ranks of positive d."""
    nz = [d for d in diffs if d != 0]
    mags = sorted(abs(d) for d in nz)
    ranks = {}
    for m in set(mags):
        idxs = [i + 1 for i, x in enumerate(mags) if x == m]
        ranks[m] = sum(idxs) / len(idxs)
    return sum(ranks[abs(d)] for d in nz if d > 0)


def test_wilcoxon_known_case():
    # n=6, all positive, no ties: T+ = 21, z = 15/sqrt(91/2) = 2.20...
    pairs = [(i + 1.0, 0.0) for i in range(6)]
    res = evalkit.wilcoxon_signed_rank(pairs)
    assert res.t_plus == 21.0
    assert res.z == pytest.approx(10.5 / math.sqrt(6 * 7 * 13 / 24.0), abs=1e-12)
    assert res.p_two_tailed == pytest.approx(
        2 * 0.5 * math.erfc(res.z / math.sqrt(2)), abs=1e-12)


def test_wilcoxon_matches_oracle_randomized():
    rng = random.Random(8)
    for _ in range(50):
        n = rng.randint(1, 10)
        diffs = [rng.choice([-3, -2, -1, 0, 1, 2, 3]) * 1.0 for _ in range(n)]
        pairs = [(d, 0.0) for d in diffs]
        res = evalkit.wilcoxon_signed_rank(pairs)
        assert res.t_plus == oracle_t_plus(diffs)


def test_wilcoxon_degenerate_all_zero():
    res = evalkit.wilcoxon_signed_rank([(1.0, 1.0), (2.0, 2.0)])
    assert res.degenerate and res.p_two_tailed == 1.0 and res.z == 0.0


def test_wilcoxon_tie_correction_shrinks_sigma():
    no_ties = evalkit.wilcoxon_signed_rank([(1.0, 0.0), (2.0, 0.0), (0.0, 3.0),
                                            (4.0, 0.0), (0.0, 5.0)])
    ties = evalkit.wilcoxon_signed_rank([(1.0, 0.0), (1.0, 0.0), (0.0, 1.0),
                                         (4.0, 0.0), (0.0, 5.0)])
    assert ties.sigma_t < no_ties.sigma_t


def test_wilcoxon_empty_rejected():
    with pytest.raises(ValueError):
        evalkit.wilcoxon_signed_rank([])


# ---------------------------------------------------------------------------
# OLS


def test_ols_recovers_exact_linear_function():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(50, 3))
    y = 2.0 + X @ np.array([1.5, -2.0, 0.5])
    beta = evalkit.ols_fit(X, y)
    assert beta == pytest.approx([2.0, 1.5, -2.0, 0.5], abs=1e-4)
    pred = evalkit.ols_predict(beta, X)
    assert float(np.max(np.abs(pred - y))) < 1e-4


def test_ols_singular_without_ridge():
    X = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])  # collinear
    with pytest.raises(ValueError):
        evalkit.ols_fit(X, [1.0, 2.0, 3.0], ridge=0.0)
    beta = evalkit.ols_fit(X, [1.0, 2.0, 3.0], ridge=1e-8)  # ridge rescues
    assert np.all(np.isfinite(beta))


def test_one_hot_design():
    t = Table("T", [("id", "identifier"), ("num", "numeric"),
                    ("cat", "nominal"), ("flag", "boolean"), ("y", "numeric")],
              rows=[["a", 1.0, "red", True, 0.0],
                    ["b", None, "blue", False, 0.0],
                    ["c", 3.0, "green", True, 0.0]],
              key_columns=["id"])
    d = evalkit.OneHotDesign(t, "y", ["id"]).fit(t.rows)
    X = d.transform(t.rows)
    # columns: num, flag, cat in {blue, green} (red dropped as lexically last)
    assert X.shape == (3, 4)
    assert X[1, 0] == 2.0  # null numeric filled with train mean (1+3)/2
    assert list(X[0]) == [1.0, 1.0, 0.0, 0.0]   # red -> all zeros
    assert list(X[1]) == [2.0, 0.0, 1.0, 0.0]   # blue
    assert list(X[2]) == [3.0, 1.0, 0.0, 1.0]   # green


# ---------------------------------------------------------------------------
# Synthetic generator


def test_synth_deterministic_per_seed():
    spec = evalkit.SynthSpec(customers=30)
    b1 = evalkit.synth_generate(spec, 7)
    b2 = evalkit.synth_generate(spec, 7)
    b3 = evalkit.synth_generate(spec, 8)
    assert b1.table("ORDER").rows == b2.table("ORDER").rows
    assert b1.table("ORDER").rows != b3.table("ORDER").rows


def test_synth_respects_spec_and_truth():
    spec = evalkit.SynthSpec(customers=40, fanout_min=2, fanout_max=5,
                             noise_sigma=0.0)
    bundle = evalkit.synth_generate(spec, 1)
    customers = bundle.table("CUSTOMER")
    orders = bundle.table("ORDER")
    assert len(customers.rows) == 40
    fk = orders.column_index("cust_id")
    tot = orders.column_index("total")
    by_cust = {}
    for r in orders.rows:
        by_cust.setdefault(r[fk], []).append(r[tot])
    ltv_i = customers.column_index("ltv")
    for row in customers.rows:
        totals = by_cust[row[0]]
        assert 2 <= len(totals) <= 5
        expected = 3.0 * sum(totals) / len(totals) + 2.0 * len(totals)
        assert row[ltv_i] == pytest.approx(expected, abs=1e-5)
    truth = spec.truth()
    assert truth["coef_mean_total"] == 3.0 and truth["coef_order_count"] == 2.0


def test_synth_schema_parses_and_binds():
    from cmml import binder, eer
    schema = eer.rewrite_many_to_many(evalkit.synth_schema())
    bound = binder.bind(schema, evalkit.synth_generate(evalkit.SynthSpec(customers=10), 0))
    assert bound.ok, bound.report.render()


def test_synth_spec_from_dict_validation():
    assert evalkit.SynthSpec.from_dict({"customers": 5}).customers == 5
    with pytest.raises(ValueError):
        evalkit.SynthSpec.from_dict({"nope": 1})
    with pytest.raises(ValueError):
        evalkit.SynthSpec.from_dict({"fanout_min": 5, "fanout_max": 2})


# ---------------------------------------------------------------------------
# compare_datasets


def _prepared(seed=42, customers=200):
    from cmml import binder, eer, engine, planner
    spec = evalkit.SynthSpec(customers=customers)
    bundle = evalkit.synth_generate(spec, seed)
    schema = eer.rewrite_many_to_many(evalkit.synth_schema())
    bound = binder.bind(schema, bundle)
    assert bound.ok
    task = schema.task("PREDICT_LTV")
    options = planner.PlanOptions.from_task(task)
    plan = planner.compile_plan(bound, task, options)
    datasets, _ = engine.execute(plan, bound, options)
    flat = engine.flatten_naive(bound, eer.resolve_target(schema, task))
    return flat, datasets[0]


def test_compare_datasets_prefers_summarized():
    flat, tds = _prepared()
    ti = tds.table.column_index(tds.target_column)
    vals = [r[ti] for r in tds.table.rows]
    rep = evalkit.compare_datasets(flat, tds, value_range=max(vals) - min(vals),
                                   folds=5, seed=0)
    assert rep.tds.r2 > rep.ds0.r2
    assert rep.n_entities == 200
    assert sum(rep.fold_sizes) == 200


def test_compare_datasets_fold_validation():
    flat, tds = _prepared(customers=10)
    with pytest.raises(ValueError):
        evalkit.compare_datasets(flat, tds, 100.0, folds=1)
    with pytest.raises(ValueError):
        evalkit.compare_datasets(flat, tds, 100.0, folds=11)
