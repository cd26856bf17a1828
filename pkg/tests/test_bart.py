import numpy as np
import pytest
from scipy import stats

from ibart.bart import BartConfig, bart_fit, inclusion_proportions
from ibart.exceptions import ValidationError

DESK = BartConfig.profile("desk")


def _linear(seed, n=200, p=5):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    return X, 10 * X[:, 0] + rng.normal(size=n)


def test_inclusion_counting():
    s = inclusion_proportions(np.array([[2, 1, 0, 0]]))
    np.testing.assert_allclose(s.q, [2 / 3, 1 / 3, 0, 0])


def test_inclusion_averaging():
    s = inclusion_proportions(np.array([[3, 0], [0, 1]]))
    np.testing.assert_allclose(s.q, [0.5, 0.5])


def test_inclusion_skips_empty_draws():
    s = inclusion_proportions(np.array([[0, 0], [1, 3]]))
    np.testing.assert_allclose(s.q, [0.25, 0.75])
    assert s.n_draws_used == 1


def test_inclusion_all_stumps_flagged():
    s = inclusion_proportions(np.zeros((4, 3), dtype=int))
    assert s.no_split and np.all(s.q == 0)


def test_config_validation():
    with pytest.raises(ValidationError):
        BartConfig(alpha=1.0)
    with pytest.raises(ValidationError):
        BartConfig(n_trees=0)
    with pytest.raises(ValidationError):
        BartConfig(p_grow=0.5, p_prune=0.5, p_change=0.5)
    with pytest.raises(ValidationError):
        BartConfig.profile("huge")
    assert BartConfig.profile("desk").n_burn == 1000
    assert BartConfig().n_burn == 10_000 and BartConfig().n_keep == 5_000


def test_input_validation():
    with pytest.raises(ValidationError):
        bart_fit(np.array([[np.nan], [1.0]]), np.array([1.0, 2.0]))
    with pytest.raises(ValidationError):
        bart_fit(np.ones((1, 2)), np.ones(1))
    with pytest.raises(ValidationError):
        bart_fit(np.ones((5, 2)), np.ones(4))


def test_inclusion_sums_to_one_and_sigma_positive():
    X, y = _linear(0)
    fit = bart_fit(X, y, BartConfig(n_burn=200, n_keep=200, seed=1))
    assert fit.inclusion.q.sum() == pytest.approx(1.0)
    assert np.all(fit.inclusion.q >= 0)
    assert np.all(fit.sigma2 > 0)
    assert fit.counts.shape == (200, 5)


def test_seed_determinism_is_bit_exact():
    X, y = _linear(1)
    cfg = BartConfig(n_burn=300, n_keep=300, seed=42)
    a = bart_fit(X, y, cfg)
    b = bart_fit(X, y, cfg)
    assert a.inclusion.q.tobytes() == b.inclusion.q.tobytes()
    assert a.sigma2.tobytes() == b.sigma2.tobytes()
    c = bart_fit(X, y, cfg.with_seed(43))
    assert not np.array_equal(a.counts, c.counts)


def test_linear_signal_dominates():
    hits = 0
    for seed in range(20):
        X, y = _linear(seed)
        hits += int(np.argmax(bart_fit(X, y, DESK.with_seed(seed)).inclusion.q) == 0)
    assert hits >= 19


def test_scale_equivariance_of_ranking():
    for seed in range(20):
        X, y = _linear(seed)
        cfg = DESK.with_seed(seed)
        a = np.argmax(bart_fit(X, y, cfg).inclusion.q)
        b = np.argmax(bart_fit(X, 100 * y, cfg).inclusion.q)
        assert a == b


def test_single_variable_gets_everything():
    rng = np.random.default_rng(0)
    x = rng.uniform(size=(100, 1))
    fit = bart_fit(x, np.sin(6 * x[:, 0]), BartConfig(n_burn=100, n_keep=100))
    np.testing.assert_allclose(fit.inclusion.q, [1.0])


def test_constant_response_has_no_splits():
    X = np.random.default_rng(0).normal(size=(50, 3))
    fit = bart_fit(X, np.full(50, 2.5), BartConfig(n_burn=50, n_keep=50))
    assert fit.constant_response
    assert fit.inclusion.no_split


def test_depth_prior_goodness_of_fit():
    # likelihood switched off by a huge fixed noise variance; thinning makes draws near independent
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(1000, 3))
    y = rng.normal(size=1000)
    cfg = BartConfig(n_trees=1, n_burn=1000, n_keep=10_000, thin=20, seed=11)
    fit = bart_fit(X, y, cfg, fix_sigma2=1e12, record_depths=True)
    table = fit.depth_table
    chi2, dof = 0.0, 0
    for d in range(table.shape[0]):
        nodes, internal = table[d]
        if nodes < 20:
            continue
        prob = cfg.alpha * (1 + d) ** -cfg.beta
        expected = np.array([nodes * prob, nodes * (1 - prob)])
        observed = np.array([internal, nodes - internal])
        chi2 += float(((observed - expected) ** 2 / expected).sum())
        dof += 1
    assert dof >= 3
    assert stats.chi2.sf(chi2, dof) > 0.01


def test_sigma2_full_conditional():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(80, 2))
    y = rng.normal(size=80)
    cfg = BartConfig(n_burn=10, n_keep=10_000, seed=3)
    fit = bart_fit(X, y, cfg, freeze_trees=True)
    ys = (y - fit.y_shift) / fit.y_scale - 0.5
    shape = (cfg.nu + len(y)) / 2
    scale = (cfg.nu * fit.lam + float(ys @ ys)) / 2
    assert fit.inclusion.no_split
    res = stats.kstest(fit.sigma2, stats.invgamma(shape, scale=scale).cdf)
    assert res.pvalue > 0.01


def test_dump_counts(tmp_path):
    X, y = _linear(2, n=60, p=3)
    path = tmp_path / "counts.csv"
    fit = bart_fit(X, y, BartConfig(n_burn=20, n_keep=15), dump_counts=path)
    rows = path.read_text().strip().splitlines()
    assert rows[0] == "draw,v0,v1,v2"
    assert len(rows) == 16
    assert rows[1].split(",")[1:] == [str(v) for v in fit.counts[0]]
