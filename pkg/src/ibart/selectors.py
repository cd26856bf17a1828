"""Selection primitives: permutation-thresholded BART, cross-validated LASSO, best subset."""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .bart import BartConfig, bart_fit
from .exceptions import BudgetExceededError, ValidationError
from .rng import child_seed, substream

logger = logging.getLogger(__name__)

__all__ = [
    "GseResult",
    "LassoResult",
    "SubsetResult",
    "gse_threshold",
    "gse_select",
    "lasso_path",
    "lasso_cv",
    "l0_best_subset",
    "select_k_sweep",
    "RSS_FLOOR",
]

RSS_FLOOR = 1e-12


# --------------------------------------------------------------------------
# BART with a global permutation threshold
# --------------------------------------------------------------------------

@dataclass
class GseResult:
    selected: np.ndarray
    q: np.ndarray
    perm_mean: np.ndarray
    perm_sd: np.ndarray
    multiplier: float
    n_permutations: int
    alpha: float
    perm_q: np.ndarray = field(repr=False, default=None)
    no_split: bool = False

    def to_dict(self, names=None):
        sel = self.selected.tolist()
        return {
            "selected": [names[i] for i in sel] if names is not None else sel,
            "q": self.q.tolist(),
            "perm_mean": self.perm_mean.tolist(),
            "perm_sd": self.perm_sd.tolist(),
            "multiplier": self.multiplier,
            "n_permutations": self.n_permutations,
            "alpha": self.alpha,
        }


def gse_threshold(q, perm_q, alpha=0.05):
    """Smallest global multiplier giving simultaneous ``1 - alpha`` coverage.

    Parameters
    ----------
    q : array of shape (p,)
        Observed inclusion proportions.
    perm_q : array of shape (B, p)
        Inclusion proportions under permuted responses.

    Returns
    -------
    multiplier, mean, sd, selected
        ``selected`` holds the indices with ``q > mean + multiplier * sd``.

    Notes
    -----
    A permutation is covered at ``C`` when every variable satisfies
    ``q*_i <= mean_i + C * sd_i``, i.e. when ``C`` is at least the largest
    standardized null value of that permutation.  The covered fraction is a
    right-continuous step function of ``C``; it first exceeds ``1 - alpha``
    at the K-th smallest of these per-permutation maxima, with
    ``K = floor((1 - alpha) * B) + 1``.  The multiplier is clipped at zero.
    Variables with zero null spread never break coverage and are selected
    iff ``q > mean``.
    """
    q = np.asarray(q, dtype=float)
    perm_q = np.asarray(perm_q, dtype=float)
    if perm_q.ndim != 2 or perm_q.shape[1] != q.shape[0]:
        raise ValidationError("perm_q must have shape (B, p)")
    B = perm_q.shape[0]
    if B < 2:
        raise ValidationError("at least two permutations are needed")
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha}")
    mean = perm_q.mean(axis=0)
    sd = perm_q.std(axis=0, ddof=1)
    # strictly more than (1 - alpha) * B permutations must be covered
    K = math.floor((1.0 - alpha) * B + 1e-9) + 1
    C = 0.0
    spread = sd > 0
    if spread.any():
        worst = ((perm_q[:, spread] - mean[spread]) / sd[spread]).max(axis=1)
        worst.sort()
        C = max(0.0, float(worst[K - 1]))
    selected = np.flatnonzero(q > mean + C * sd)
    return C, mean, sd, selected


def _fit_q(X, y, cfg):
    return bart_fit(X, y, cfg).inclusion


def gse_select(X, y, cfg: BartConfig | None = None, n_permutations=50, alpha=0.05, n_jobs=1,
               n_average=10):
    """Select variables whose BART inclusion proportion beats a permutation null.

    Parameters
    ----------
    X, y : arrays
    cfg : BartConfig
    n_permutations : int
        Number of permuted-response fits forming the null.
    alpha : float
        One minus the simultaneous coverage of the null band.
    n_jobs : int
        Worker threads for the independent fits.
    n_average : int
        Independent chains on the observed response whose inclusion
        proportions are averaged; a single chain is noticeably noisy.

    Every fit draws its own seed from ``cfg.seed`` and its replicate index,
    so the outcome does not depend on ``n_jobs``.
    """
    cfg = cfg or BartConfig()
    if n_permutations < 2:
        raise ValidationError("at least two permutations are needed")
    if n_average < 1:
        raise ValidationError("n_average must be at least 1")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n = y.shape[0]
    jobs = [(y, cfg.with_seed(child_seed(cfg.seed, "observed", r))) for r in range(n_average)]
    for b in range(n_permutations):
        perm = substream(cfg.seed, "perm", b).permutation(n)
        jobs.append((y[perm], cfg.with_seed(child_seed(cfg.seed, "perm-fit", b))))
    if n_jobs == 1:
        results = [_fit_q(X, yy, c) for yy, c in jobs]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs if n_jobs > 0 else None) as pool:
            results = list(pool.map(lambda job: _fit_q(X, *job), jobs))
    observed = [r for r in results[:n_average] if not r.no_split]
    no_split = not observed
    q = np.mean([r.q for r in observed], axis=0) if observed else np.zeros(X.shape[1])
    perm_q = np.vstack([r.q for r in results[n_average:]])
    C, mean, sd, selected = gse_threshold(q, perm_q, alpha)
    if no_split:
        selected = np.array([], dtype=int)
    return GseResult(selected=selected, q=q, perm_mean=mean, perm_sd=sd, multiplier=C,
                     n_permutations=n_permutations, alpha=alpha, perm_q=perm_q,
                     no_split=no_split)


# --------------------------------------------------------------------------
# LASSO by coordinate descent
# --------------------------------------------------------------------------

@njit(cache=True)
def _sweep(Xt, r, beta, colsq, lam, n, active_only):
    p = Xt.shape[0]
    maxd = 0.0
    for j in range(p):
        if colsq[j] == 0.0:
            continue
        if active_only and beta[j] == 0.0:
            continue
        xj = Xt[j]
        old = beta[j]
        g = 0.0
        for i in range(n):
            g += xj[i] * r[i]
        z = g / n + colsq[j] * old
        if z > lam:
            new = (z - lam) / colsq[j]
        elif z < -lam:
            new = (z + lam) / colsq[j]
        else:
            new = 0.0
        if new != old:
            d = new - old
            for i in range(n):
                r[i] -= d * xj[i]
            beta[j] = new
            step = abs(d) * math.sqrt(colsq[j])
            if step > maxd:
                maxd = step
    return maxd


@njit(cache=True)
def _cd_path(Xt, y, lambdas, tol, max_sweeps):
    p, n = Xt.shape
    L = lambdas.shape[0]
    colsq = np.empty(p)
    for j in range(p):
        s = 0.0
        for i in range(n):
            s += Xt[j, i] * Xt[j, i]
        colsq[j] = s / n
    beta = np.zeros(p)
    r = y.copy()
    out = np.zeros((L, p))
    unconverged = 0
    for l in range(L):
        lam = lambdas[l]
        sweeps = 0
        while sweeps < max_sweeps:
            maxd = _sweep(Xt, r, beta, colsq, lam, n, False)
            sweeps += 1
            if maxd < tol:
                break
            while sweeps < max_sweeps:
                maxd = _sweep(Xt, r, beta, colsq, lam, n, True)
                sweeps += 1
                if maxd < tol:
                    break
        if sweeps >= max_sweeps:
            unconverged += 1
        out[l] = beta
    return out, unconverged


@dataclass
class LassoResult:
    lambdas: np.ndarray
    cv_error: np.ndarray
    cv_se: np.ndarray
    lambda_: float
    coef: np.ndarray
    intercept: float
    selected: np.ndarray
    coef_path: np.ndarray = field(repr=False, default=None)

    def to_dict(self, names=None):
        sel = self.selected.tolist()
        return {
            "lambda": self.lambda_,
            "lambda_max": float(self.lambdas[0]),
            "lambda_min": float(self.lambdas[-1]),
            "n_lambdas": int(len(self.lambdas)),
            "cv_error_min": float(self.cv_error.min()) if len(self.cv_error) else None,
            "selected": [names[i] for i in sel] if names is not None else sel,
            "coef": {(names[i] if names is not None else str(i)): float(self.coef[i]) for i in sel},
            "intercept": self.intercept,
        }


def _prepare(X, y, standardize, fit_intercept):
    xm = X.mean(axis=0) if fit_intercept else np.zeros(X.shape[1])
    ym = float(y.mean()) if fit_intercept else 0.0
    Xc = X - xm
    if standardize:
        sd = np.sqrt((Xc ** 2).mean(axis=0))
        sd_safe = np.where(sd > 1e-12 * np.maximum(1.0, np.abs(xm)), sd, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            Xs = np.where(sd_safe > 0, Xc / np.where(sd_safe > 0, sd_safe, 1.0), 0.0)
    else:
        sd_safe = np.ones(X.shape[1])
        Xs = Xc
    return Xs, y - ym, xm, ym, sd_safe


def lasso_path(X, y, lambdas=None, *, n_lambdas=100, eps=1e-3, standardize=True,
               fit_intercept=True, tol=1e-9, max_sweeps=10_000):
    """Coordinate-descent solutions of ``(1/2n)||y - b0 - X b||^2 + lambda ||b||_1``.

    With ``standardize`` the penalty applies to coefficients of columns
    scaled to unit (population) variance; returned coefficients are on the
    original scale.

    Returns
    -------
    lambdas : array (L,)
    coefs : array (L, p)
    intercepts : array (L,)
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    Xs, yc, xm, ym, sd = _prepare(X, y, standardize, fit_intercept)
    n = X.shape[0]
    if lambdas is None:
        lam_max = float(np.abs(Xs.T @ yc).max()) / n if X.shape[1] else 0.0
        # guard against rounding so the first solution is exactly empty
        lam_max *= 1.0 + 1e-12
        if lam_max <= 0:
            lambdas = np.zeros(1)
        else:
            lambdas = np.geomspace(lam_max, eps * lam_max, n_lambdas)
    lambdas = np.asarray(lambdas, dtype=float)
    scale = max(float(np.sqrt((yc ** 2).mean())), 1e-300)
    path, unconverged = _cd_path(np.ascontiguousarray(Xs.T), yc, lambdas, tol * scale, max_sweeps)
    if unconverged:
        logger.info("coordinate descent hit the sweep limit at %d of %d lambdas",
                    unconverged, len(lambdas))
    with np.errstate(divide="ignore", invalid="ignore"):
        coefs = np.where(sd > 0, path / np.where(sd > 0, sd, 1.0), 0.0)
    intercepts = ym - coefs @ xm
    return lambdas, coefs, intercepts


def lasso_cv(X, y, folds=10, *, seed=0, n_lambdas=100, eps=1e-3, standardize=True, tol=1e-9):
    """LASSO with the penalty chosen by K-fold cross-validated squared error.

    The lambda grid comes from the full data; each fold refits on its own
    training part along that grid.  The chosen lambda minimises the mean
    held-out squared error (no one-standard-error rule).
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if folds < 2:
        raise ValidationError("need at least two folds")
    if n < folds:
        raise ValidationError(f"n = {n} is smaller than the number of folds ({folds})")
    lambdas, coefs, intercepts = lasso_path(X, y, n_lambdas=n_lambdas, eps=eps,
                                            standardize=standardize, tol=tol)
    if np.all(lambdas == 0):
        zero = np.zeros(p)
        return LassoResult(lambdas=lambdas, cv_error=np.zeros(1), cv_se=np.zeros(1), lambda_=0.0,
                           coef=zero, intercept=float(y.mean()), selected=np.array([], dtype=int),
                           coef_path=coefs)
    assignment = substream(seed, "fold").permutation(np.arange(n) % folds)
    errors = np.zeros((folds, len(lambdas)))
    sizes = np.zeros(folds)
    for f in range(folds):
        test = assignment == f
        train = ~test
        if not test.any():
            raise ValidationError(f"fold {f} is empty")
        _, fc, fi = lasso_path(X[train], y[train], lambdas, standardize=standardize, tol=tol)
        pred = X[test] @ fc.T + fi
        errors[f] = ((y[test][:, None] - pred) ** 2).sum(axis=0)
        sizes[f] = test.sum()
    cv_error = errors.sum(axis=0) / n
    per_fold = errors / sizes[:, None]
    cv_se = per_fold.std(axis=0, ddof=1) / np.sqrt(folds)
    best = int(np.argmin(cv_error))
    coef = coefs[best]
    selected = np.flatnonzero(coef != 0)
    return LassoResult(lambdas=lambdas, cv_error=cv_error, cv_se=cv_se, lambda_=float(lambdas[best]),
                       coef=coef, intercept=float(intercepts[best]), selected=selected,
                       coef_path=coefs)


# --------------------------------------------------------------------------
# Exhaustive best subset by AIC
# --------------------------------------------------------------------------

@dataclass
class SubsetResult:
    k: int
    subset: tuple
    aic: float
    rss: float
    coef: np.ndarray
    n_evaluated: int
    n_rank_deficient: int = 0

    def to_dict(self, names=None):
        return {
            "k": self.k,
            "subset": [names[i] for i in self.subset] if names is not None else list(self.subset),
            "aic": self.aic,
            "rss": self.rss,
            "intercept": float(self.coef[0]),
            "coef": [float(c) for c in self.coef[1:]],
        }


def _aic(n, rss, k):
    return n * math.log(max(rss, RSS_FLOOR) / n) + 2 * (k + 1)


def _ols(X, y, subset):
    A = np.column_stack([np.ones(len(y))] + [X[:, j] for j in subset])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return coef, float(resid @ resid)


def l0_best_subset(X, y, k, budget=10_000_000, chunk=50_000):
    """Best size-``k`` subset (intercept always included) by exhaustive AIC.

    ``AIC = n log(RSS / n) + 2 (k + 1)`` with RSS floored at ``1e-12``.  Ties
    go to the lexicographically smallest index tuple.  Subsets whose design
    is numerically rank deficient are skipped.

    Raises
    ------
    BudgetExceededError
        If ``C(p, k)`` exceeds ``budget``; screen the candidates first.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if k < 0 or k > p:
        raise ValidationError(f"k must lie in [0, {p}], got {k}")
    total = math.comb(p, k)
    if total > budget:
        raise BudgetExceededError(
            f"C({p}, {k}) = {total} subsets exceeds the budget of {budget}; pre-screen first")
    yc = y - y.mean()
    tss = float(yc @ yc)
    if k == 0:
        return SubsetResult(k=0, subset=(), aic=_aic(n, tss, 0), rss=tss,
                            coef=np.array([y.mean()]), n_evaluated=1)

    Xc = X - X.mean(axis=0)
    norms = np.sqrt((Xc ** 2).sum(axis=0))
    usable = norms > 0
    Xn = Xc / np.where(usable, norms, 1.0)
    G = Xn.T @ Xn
    b = Xn.T @ yc

    best_rss = np.inf
    best = None
    deficient = 0
    combos = itertools.combinations(range(p), k)
    while True:
        block = np.fromiter(itertools.chain.from_iterable(itertools.islice(combos, chunk)),
                            dtype=np.int64)
        if block.size == 0:
            break
        S = block.reshape(-1, k)
        Gs = G[S[:, :, None], S[:, None, :]]
        bs = b[S]
        eig_min = np.linalg.eigvalsh(Gs)[:, 0]
        ok = (eig_min > 1e-10) & usable[S].all(axis=1)
        deficient += int((~ok).sum())
        if not ok.any():
            continue
        Gs, bs, S = Gs[ok], bs[ok], S[ok]
        beta = np.linalg.solve(Gs, bs[:, :, None])[:, :, 0]
        rss = np.maximum(tss - (bs * beta).sum(axis=1), 0.0)
        j = int(np.argmin(rss))
        # strict improvement keeps the earliest (lexicographically smallest) subset on ties
        if rss[j] < best_rss:
            best_rss = float(rss[j])
            best = tuple(int(v) for v in S[j])
    if deficient:
        logger.info("skipped %d rank-deficient subset(s) of size %d", deficient, k)
    if best is None:
        raise ValidationError(f"every subset of size {k} is rank deficient")
    coef, rss = _ols(X, y, best)
    return SubsetResult(k=k, subset=best, aic=_aic(n, rss, k), rss=rss, coef=coef,
                        n_evaluated=total, n_rank_deficient=deficient)


def select_k_sweep(X, y, k_max, budget=10_000_000):
    """Best subset for each size ``1..k_max`` plus the overall AIC winner.

    Returns
    -------
    per_k : list of SubsetResult
    best : SubsetResult
    """
    X = np.asarray(X, dtype=float)
    p = X.shape[1]
    if k_max < 1:
        raise ValidationError("k_max must be at least 1")
    per_k = [l0_best_subset(X, y, k, budget=budget) for k in range(1, min(k_max, p) + 1)]
    best = min(per_k, key=lambda r: (r.aic, r.k))
    return per_k, best
