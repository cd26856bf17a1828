"""Sum-of-trees posterior sampling for variable-inclusion screening.

The sampler only exists to estimate how often each predictor is used as a
split rule; there is no prediction interface.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import stats

from . import _bart_kernel
from .exceptions import ValidationError
from .rng import child_seed

logger = logging.getLogger(__name__)

__all__ = [
    "BartConfig",
    "BartFit",
    "InclusionSummary",
    "bart_fit",
    "inclusion_proportions",
]

PROFILES = {
    "paper": {"n_burn": 10_000, "n_keep": 5_000},
    "desk": {"n_burn": 1_000, "n_keep": 1_000},
}


@dataclass(frozen=True)
class BartConfig:
    """Prior and MCMC settings.

    Parameters
    ----------
    n_trees : int
        Number of trees in the ensemble.
    n_burn, n_keep : int
        Burn-in and retained iterations.
    alpha, beta : float
        A node at depth ``d`` splits with prior probability ``alpha * (1 + d) ** -beta``.
    k : float
        Leaf shrinkage; leaf values are ``N(0, (0.5 / (k * sqrt(n_trees))) ** 2)``
        on the response scaled to ``[-0.5, 0.5]``.
    nu, q : float
        Noise prior ``sigma^2 ~ nu * lambda / chi2_nu`` with ``lambda`` chosen so
        that ``P(sigma < sd(y)) = q``.
    seed : int
        Master seed; chains draw their kernel seed from it.
    """

    n_trees: int = 20
    n_burn: int = 10_000
    n_keep: int = 5_000
    alpha: float = 0.95
    beta: float = 2.0
    k: float = 2.0
    nu: float = 3.0
    q: float = 0.9
    thin: int = 1
    max_depth: int = 10
    p_grow: float = 0.28
    p_prune: float = 0.28
    p_change: float = 0.44
    seed: int = 0

    def __post_init__(self):
        for name in ("n_trees", "n_burn", "n_keep", "thin", "max_depth"):
            value = getattr(self, name)
            if int(value) != value or value < (0 if name == "n_burn" else 1):
                raise ValidationError(f"{name} must be a positive integer, got {value!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.beta <= 0 or self.k <= 0 or self.nu <= 0:
            raise ValidationError("beta, k and nu must be positive")
        if not 0.0 < self.q < 1.0:
            raise ValidationError(f"q must lie in (0, 1), got {self.q}")
        probs = (self.p_grow, self.p_prune, self.p_change)
        if min(probs) < 0 or self.p_grow <= 0 or self.p_prune <= 0 or abs(sum(probs) - 1) > 1e-9:
            raise ValidationError("move probabilities must be non-negative, sum to 1, "
                                  "with grow and prune strictly positive")

    @classmethod
    def profile(cls, name="paper", **overrides):
        """Build a config from a named draw-count profile (``paper`` or ``desk``)."""
        try:
            base = PROFILES[name]
        except KeyError:
            raise ValidationError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
        return cls(**{**base, **overrides})

    def with_seed(self, seed):
        return replace(self, seed=int(seed))

    def to_dict(self):
        return asdict(self)


@dataclass
class InclusionSummary:
    """Posterior variable-inclusion proportions.

    ``no_split`` is set when no retained draw contained a single split, in
    which case ``q`` is all zeros rather than a meaningless uniform vector.
    """

    q: np.ndarray
    n_draws_used: int
    no_split: bool = False


@dataclass
class BartFit:
    counts: np.ndarray
    sigma2: np.ndarray
    inclusion: InclusionSummary
    y_shift: float
    y_scale: float
    lam: float
    constant_response: bool = False
    depth_table: np.ndarray | None = None
    move_stats: dict = field(default_factory=dict)


def inclusion_proportions(counts):
    """Average the per-draw share of split rules that use each variable.

    Parameters
    ----------
    counts : array of shape (n_draws, p)
        Split-rule counts per variable, pooled over all trees of a draw.

    Draws without any split carry no information about which variable
    matters and are skipped.
    """
    counts = np.asarray(counts, dtype=float)
    if counts.ndim == 1:
        counts = counts[None, :]
    totals = counts.sum(axis=1)
    used = totals > 0
    if not used.any():
        return InclusionSummary(q=np.zeros(counts.shape[1]), n_draws_used=0, no_split=True)
    q = (counts[used] / totals[used, None]).mean(axis=0)
    return InclusionSummary(q=q, n_draws_used=int(used.sum()))


def _check_inputs(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValidationError(f"X has shape {X.shape} but y has {y.shape[0]} rows")
    if X.shape[0] < 2:
        raise ValidationError("at least two observations are required")
    if X.shape[1] < 1:
        raise ValidationError("at least one predictor is required")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValidationError("X and y must be finite")
    return X, y


def bart_fit(X, y, cfg: BartConfig | None = None, *, fix_sigma2=None, freeze_trees=False,
             record_depths=False, dump_counts=None):
    """Run one sum-of-trees chain and summarise split-variable usage.

    Parameters
    ----------
    X : array-like of shape (n, p)
    y : array-like of shape (n,)
    cfg : BartConfig
    fix_sigma2 : float, optional
        Hold the noise variance (on the scaled response) fixed instead of
        sampling it.  A huge value flattens the likelihood so the chain
        samples the tree prior.
    freeze_trees : bool
        Keep every tree a zero stump and only sample the noise variance.
    record_depths : bool
        Tabulate node depths over kept draws.
    dump_counts : path, optional
        Write the per-draw split counts as CSV.
    """
    cfg = cfg or BartConfig()
    X, y = _check_inputs(X, y)
    n = y.shape[0]

    lo, hi = float(y.min()), float(y.max())
    constant = hi - lo <= 1e-12 * max(1.0, abs(hi))
    if constant:
        logger.warning("response is constant; trees are kept as stumps")
        scale = 1.0
        ys = np.zeros(n)
    else:
        scale = hi - lo
        ys = (y - lo) / scale - 0.5
    sd = float(ys.std(ddof=1)) if n > 1 else 0.0
    if sd <= 0:
        sd = 1.0
    lam = sd * sd * stats.chi2.ppf(1.0 - cfg.q, cfg.nu) / cfg.nu
    tau = 0.5 / (cfg.k * np.sqrt(cfg.n_trees))

    sigma2_init = float(fix_sigma2) if fix_sigma2 is not None else sd * sd
    counts, sigma2, depth_table, mv = _bart_kernel.run_chain(
        np.ascontiguousarray(X.T), ys, int(cfg.n_trees), int(cfg.n_burn), int(cfg.n_keep),
        int(cfg.thin), float(cfg.alpha), float(cfg.beta), float(tau), float(cfg.nu),
        float(lam), sigma2_init, int(cfg.max_depth), float(cfg.p_grow),
        float(cfg.p_prune), fix_sigma2 is not None, bool(freeze_trees or constant),
        bool(record_depths), child_seed(cfg.seed, "bart"),
    )
    inclusion = inclusion_proportions(counts)
    if inclusion.no_split:
        logger.info("no kept draw contained a split")
    if dump_counts is not None:
        with open(dump_counts, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["draw"] + [f"v{j}" for j in range(X.shape[1])])
            for i, row in enumerate(counts):
                w.writerow([i] + row.tolist())
    moves = dict(zip(("grow_proposed", "grow_accepted", "prune_proposed", "prune_accepted",
                      "change_proposed", "change_accepted"), (int(v) for v in mv)))
    return BartFit(
        counts=counts, sigma2=sigma2, inclusion=inclusion, y_shift=lo, y_scale=scale,
        lam=float(lam), constant_response=constant,
        depth_table=depth_table if record_depths else None, move_stats=moves,
    )
