"""scikit-learn compatible wrappers around descriptor generation and selection."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .bart import BartConfig
from .descriptors import evaluate
from .pan import PanConfig, pan_run
from .selectors import gse_select
from .space import DEFAULT_DEDUP_THRESHOLD, DescriptorSpace, generate_binary, generate_unary

__all__ = ["DescriptorExpander", "BartGSESelector", "IBARTRegressor"]


def _bart_config(profile, n_trees, seed, overrides):
    return BartConfig.profile(profile, n_trees=n_trees, seed=seed, **(overrides or {}))


class DescriptorExpander(TransformerMixin, BaseEstimator):
    """Expand primary features with one layer of unary or binary operators.

    The set of surviving descriptors is learned in ``fit`` (domain, unit and
    duplicate filtering on the training data) and reused by ``transform``.

    Parameters
    ----------
    kind : {'unary', 'binary'}
    ops : sequence of str, optional
        Operator names; defaults to the full set for ``kind``.
    dedup_threshold : float
    cap : float
        Magnitude cap applied while fitting.
    """

    def __init__(self, kind="unary", ops=None, dedup_threshold=DEFAULT_DEDUP_THRESHOLD, cap=1e8):
        self.kind = kind
        self.ops = ops
        self.dedup_threshold = dedup_threshold
        self.cap = cap

    def fit(self, X, y=None):
        X = check_array(X)
        if self.kind not in ("unary", "binary"):
            raise ValueError(f"kind must be 'unary' or 'binary', got {self.kind!r}")
        primary = DescriptorSpace.from_primary(X)
        gen = generate_unary if self.kind == "unary" else generate_binary
        space = gen(primary, self.ops, dedup_threshold=self.dedup_threshold, cap=self.cap)
        self.descriptors_ = list(space.descriptors)
        self.report_ = space.report.as_dict()
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "descriptors_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        memo = {}
        return np.column_stack([evaluate(d, X, cap=np.inf, _memo=memo) for d in self.descriptors_])

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "descriptors_")
        return np.array([d.text for d in self.descriptors_], dtype=object)


class BartGSESelector(SelectorMixin, BaseEstimator):
    """Keep columns whose BART inclusion proportion beats a permutation null.

    Parameters
    ----------
    n_permutations : int
    alpha : float
        One minus the simultaneous coverage of the null band.
    profile : {'paper', 'desk'}
        Burn-in and kept-draw counts.
    n_trees : int
    seed : int
    n_jobs : int
    n_average : int
        Chains averaged for the observed inclusion proportions.
    bart_params : dict, optional
        Further :class:`BartConfig` overrides.
    """

    def __init__(self, n_permutations=50, alpha=0.05, profile="paper", n_trees=20, seed=0,
                 n_jobs=1, n_average=10, bart_params=None):
        self.n_permutations = n_permutations
        self.n_average = n_average
        self.alpha = alpha
        self.profile = profile
        self.n_trees = n_trees
        self.seed = seed
        self.n_jobs = n_jobs
        self.bart_params = bart_params

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        cfg = _bart_config(self.profile, self.n_trees, self.seed, self.bart_params)
        self.result_ = gse_select(X, y, cfg, self.n_permutations, self.alpha, self.n_jobs,
                                  self.n_average)
        self.inclusion_ = self.result_.q
        self.multiplier_ = self.result_.multiplier
        self.n_features_in_ = X.shape[1]
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "result_")
        mask = np.zeros(self.n_features_in_, dtype=bool)
        mask[self.result_.selected] = True
        return mask


class IBARTRegressor(RegressorMixin, BaseEstimator):
    """Linear model on descriptors found by iterative generation and screening.

    Parameters mirror :class:`ibart.pan.PanConfig`; BART draw counts come from
    ``profile``.

    Attributes
    ----------
    descriptors_ : list of str
        Canonical text of the final descriptors.
    coef_, intercept_ :
        Least-squares coefficients on those descriptors.
    result_ : PanResult
    """

    def __init__(self, scheme="auto", m_max=4, rho_max=0.95, run_l0=True, k=4, profile="paper",
                 n_trees=20, n_permutations=50, alpha=0.05, n_average=10,
                 dedup_threshold=DEFAULT_DEDUP_THRESHOLD, span_reduce=True, lasso_folds=10, seed=0,
                 n_jobs=1, bart_params=None):
        self.scheme = scheme
        self.m_max = m_max
        self.rho_max = rho_max
        self.run_l0 = run_l0
        self.k = k
        self.profile = profile
        self.n_trees = n_trees
        self.n_permutations = n_permutations
        self.alpha = alpha
        self.n_average = n_average
        self.dedup_threshold = dedup_threshold
        self.span_reduce = span_reduce
        self.lasso_folds = lasso_folds
        self.seed = seed
        self.n_jobs = n_jobs
        self.bart_params = bart_params

    def _config(self):
        return PanConfig(
            scheme=self.scheme, m_max=self.m_max, rho_max=self.rho_max, run_l0=self.run_l0,
            k=self.k, bart=_bart_config(self.profile, self.n_trees, self.seed, self.bart_params),
            n_permutations=self.n_permutations, alpha=self.alpha, n_average=self.n_average,
            dedup_threshold=self.dedup_threshold, span_reduce=self.span_reduce,
            lasso_folds=self.lasso_folds, seed=self.seed, n_jobs=self.n_jobs,
        )

    def fit(self, X, y, feature_names=None, leaf_units=None):
        X, y = check_X_y(X, y, y_numeric=True)
        self.result_ = pan_run(X, y, self._config(), feature_names=feature_names,
                               leaf_units=leaf_units)
        self.descriptors_ = list(self.result_.selected)
        self.coef_ = np.asarray(self.result_.coef)
        self.intercept_ = float(self.result_.intercept)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        """Evaluate the final descriptors on ``X``."""
        check_is_fitted(self, "result_")
        X = check_array(X)
        if not self.descriptors_:
            return np.empty((X.shape[0], 0))
        return np.column_stack([evaluate(d, X, cap=np.inf)
                                for d in self.result_.selected_descriptors])

    def predict(self, X):
        check_is_fitted(self, "result_")
        Z = self.transform(X)
        return self.intercept_ + Z @ self.coef_
