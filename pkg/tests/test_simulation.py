import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from ibart.bart import BartConfig
from ibart.descriptors import parse_descriptor
from ibart.exceptions import ValidationError
from ibart.pan import PanConfig
from ibart.simulation import (
    UNARY_SCREEN_OPS,
    MetricReport,
    SimDesign,
    cross_validate_rmse,
    generate_sim,
    plot_rows,
    run_screen_suite,
    score_selection,
    write_rows,
)
from ibart.space import DescriptorSpace, generate_binary, generate_unary

TINY = BartConfig(n_burn=100, n_keep=100)


def test_unary_exp_design():
    design = SimDesign("unary-screen", "exp")
    X, y, truth = generate_sim(design, 0)
    assert X.shape == (200, 5)
    assert [t.text for t in truth] == ["exp(x1)"]
    assert design.law == "normal(0,1)"
    assert (X < 0).any()


@pytest.mark.parametrize("op", ["log", "sqrt"])
def test_positive_domain_designs_use_lognormal(op):
    X, _, _ = generate_sim(SimDesign("unary-screen", op), 0)
    assert (X > 0).all()
    assert np.log(X).mean() == pytest.approx(2.0, abs=0.1)
    assert np.log(X).std() == pytest.approx(0.5, abs=0.05)


def test_reciprocal_design_uses_normal_law():
    X, _, _ = generate_sim(SimDesign("unary-screen", "inv"), 0)
    assert SimDesign("unary-screen", "inv").law == "normal(0,1)"
    assert (X < 0).any()


def test_noiseless_response_is_signal():
    design = SimDesign("binary-screen", "divide", sigma=0.0)
    X, y, _ = generate_sim(design, 3)
    np.testing.assert_allclose(y, 10 * X[:, 0] / X[:, 1])


def test_generator_determinism():
    design = SimDesign("complex-3comp", seed=7)
    a = generate_sim(design, 2)
    b = generate_sim(design, 2)
    c = generate_sim(design, 3)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    assert not np.array_equal(a[0], c[0])


def test_design_validation():
    with pytest.raises(ValidationError):
        SimDesign("unary-screen")
    with pytest.raises(ValidationError):
        SimDesign("unary-screen", "add")
    with pytest.raises(ValidationError):
        SimDesign("nope")
    assert SimDesign("complex-3comp").n == 250
    assert SimDesign("unary-screen", "sin").operator == "sinpi"


def test_complex_signal_variance_matches_monte_carlo():
    design = SimDesign("complex-3comp", n=200_000, sigma=0.0)
    X, _, _ = generate_sim(design, 0)
    component = 20 * np.sin(np.pi * X[:, 2] * X[:, 3])
    rng = np.random.default_rng(12345)
    u = rng.uniform(-1, 1, size=(1_000_000, 2))
    oracle = np.var(20 * np.sin(np.pi * u[:, 0] * u[:, 1]))
    assert component.var() == pytest.approx(oracle, rel=0.05)
    # the component has mean zero, so its variance is 400 E[sin^2]
    second, _ = integrate.dblquad(lambda a, b: np.sin(np.pi * a * b) ** 2 / 4, -1, 1, -1, 1)
    assert oracle == pytest.approx(400 * second, rel=0.01)


def test_complex_true_descriptors_correlate_below_stop_level():
    X, y, _ = generate_sim(SimDesign("complex-3comp", n=100_000), 0)
    f1 = (np.exp(X[:, 0]) - np.exp(X[:, 1])) ** 2
    f2 = np.sin(np.pi * X[:, 2] * X[:, 3])
    assert np.corrcoef(f1, y)[0, 1] == pytest.approx(0.80, abs=0.02)
    assert np.corrcoef(f2, y)[0, 1] == pytest.approx(0.60, abs=0.02)
    assert np.corrcoef(f1 + 4 / 3 * f2, y)[0, 1] > 0.95


def test_truth_matches_generated_canonical_form():
    X, _, truth = generate_sim(SimDesign("complex-3comp"), 0)
    space = DescriptorSpace.from_primary(X[:, :4])
    space = generate_unary(space, ["exp"])
    space = generate_binary(space, ["subtract", "multiply"])
    space = generate_unary(space, ["square", "sinpi"])
    for t in truth:
        assert t.text in space
    assert parse_descriptor("{exp(x1)-exp(x2)}^2".replace("{", "((").replace("}^2", ")^2)")) \
        == truth[0]


def test_score_examples():
    truth = ["((exp(x1)-exp(x2))^2)", "sin(pi*(x3*x4))"]
    m = score_selection(["sin(pi*(x4*x3))", "((exp(x1)-exp(x2))^2)"], truth)
    assert (m.tp, m.fp, m.fn, m.f1) == (2, 0, 0, 1.0)
    m = MetricReport(tp=1, fp=3, fn=1)
    assert m.precision == 0.25 and m.recall == 0.5
    assert m.f1 == pytest.approx(1 / 3)
    assert score_selection([], truth).f1 == 0.0


def test_score_is_exact_not_fuzzy():
    m = score_selection(["|exp(x1)-exp(x2)|"], ["((exp(x1)-exp(x2))^2)"])
    assert m.tp == 0 and m.fp == 1


@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_metric_identities(tp, fp, fn):
    m = MetricReport(tp, fp, fn)
    assert 0.0 <= m.precision <= 1.0 and 0.0 <= m.recall <= 1.0
    if tp == 0:
        assert m.f1 == 0.0
    else:
        assert m.f1 == pytest.approx(2 * m.precision * m.recall / (m.precision + m.recall))
        assert m.f1 == pytest.approx(2 * tp / (2 * tp + fp + fn))


def test_subtract_absdiff_pair_correlation_is_small():
    values = []
    for r in range(50):
        X, _, _ = generate_sim(SimDesign("binary-screen", "subtract"), r)
        d = X[:, 0] - X[:, 1]
        values.append(abs(np.corrcoef(d, np.abs(d))[0, 1]))
    assert np.mean(values) == pytest.approx(0.07, abs=0.05)


def test_screen_suite_rows(tmp_path):
    res = run_screen_suite("binary-screen", TINY, operators=["subtract"], replicates=2,
                           n_permutations=4)
    assert len(res.rows) == 2
    row = res.rows[0]
    assert {"tp", "fp", "f1", "co_selected", "pair_corr", "space_size"} <= set(row)
    assert row["space_size"] <= 55
    summary = res.summary()["subtract"]
    assert summary["replicates"] == 2
    path = tmp_path / "rows.csv"
    write_rows(path, res.rows)
    with open(path) as fh:
        assert len(list(csv.DictReader(fh))) == 2
    long = plot_rows(res, "fig")
    assert {r["metric"] for r in long} >= {"tp", "fp", "f1"}


def test_screen_suite_is_seed_reproducible():
    a = run_screen_suite("unary-screen", TINY, operators=["exp"], replicates=1, n_permutations=3)
    b = run_screen_suite("unary-screen", TINY, operators=["exp"], replicates=1, n_permutations=3)
    assert a.rows == b.rows


def test_screen_suite_operator_list():
    assert len(UNARY_SCREEN_OPS) == 8
    with pytest.raises(ValidationError):
        run_screen_suite("complex-3comp", TINY)


def test_rmse_perfect_linear_truth():
    rng = np.random.default_rng(0)
    X = rng.uniform(1, 2, size=(60, 3))
    y = X[:, 0] + X[:, 1]
    # the stop level is already met by a primary feature, so selection runs on X0 directly
    cfg = PanConfig(bart=TINY, n_permutations=4, n_average=1, rho_max=0.5)
    rows, summary = cross_validate_rmse(X, y, cfg, splits=3, k_values=(2,), seed=1)
    assert summary[2]["splits"] == 3
    assert summary[2]["mean"] <= 1e-8


def test_rmse_k_beyond_selection_uses_all():
    rng = np.random.default_rng(1)
    X = rng.uniform(1, 2, size=(60, 3))
    y = 3 * X[:, 0] + 0.01 * rng.normal(size=60)
    cfg = PanConfig(bart=TINY, n_permutations=4, n_average=1, m_max=1, rho_max=0.5)
    rows, summary = cross_validate_rmse(X, y, cfg, splits=2, k_values=(1, 5), seed=2)
    five = [r for r in rows if r["k"] == 5]
    assert all(r["n_terms"] <= 5 for r in five)
    assert summary[1]["mean"] < 0.05


def test_rmse_rejects_empty_test_part():
    with pytest.raises(ValidationError):
        cross_validate_rmse(np.ones((20, 2)), np.arange(20.0), train_fraction=1.0)
