"""Alternate descriptor generation with BART screening, then LASSO and best subset.

One run starts from the primary features, screens them with the permutation
threshold, expands the union of everything selected so far with the next
operator set of the schedule, and repeats until the iteration budget is used
or some descriptor correlates with the response strongly enough.  The final
space is handed to cross-validated LASSO and, optionally, to an exhaustive
AIC sweep over subset sizes.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .bart import BartConfig
from .descriptors import BINARY_OPS, UNARY_OPS, Op, parse_descriptor
from .exceptions import NoSignalError, ValidationError
from .rng import child_seed
from .selectors import gse_select, lasso_cv, select_k_sweep
from .space import (
    DEFAULT_DEDUP_THRESHOLD,
    DescriptorSpace,
    correlation_scan,
    generate_binary,
    generate_unary,
)

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

logger = logging.getLogger(__name__)

__all__ = [
    "SCHEMES",
    "PanConfig",
    "IterationAudit",
    "PanResult",
    "pan_run",
    "choose_scheme",
    "load_config",
    "linear_span_reduce",
]

SCHEMES = ("auto", "unary-first", "binary-first")
COLLINEARITY_CUTOFF = 0.9


@dataclass(frozen=True)
class PanConfig:
    """Settings for one generate-and-screen run.

    Parameters
    ----------
    scheme : {'auto', 'unary-first', 'binary-first'}
        Which operator set the first expansion uses; the two then alternate.
        ``auto`` starts with binary operators when some pair of primary
        features has absolute correlation above 0.9.
    m_max : int
        Maximum number of expansions.
    rho_max : float
        Stop expanding once some descriptor reaches this absolute
        correlation with the response.
    run_l0, k : bool, int
        Refine the LASSO selection by an exhaustive AIC sweep over subset
        sizes ``1..k``.
    l0_budget : int
        Largest number of subsets the sweep may evaluate for one size.
    span_reduce : bool
        Before the final LASSO, drop sums and differences whose two operands
        are both in the space; they lie in the span of those operands and
        only make the linear selection non-identifiable.
    """

    scheme: str = "auto"
    m_max: int = 4
    rho_max: float = 0.95
    run_l0: bool = True
    k: int = 4
    bart: BartConfig = field(default_factory=BartConfig)
    n_permutations: int = 50
    alpha: float = 0.05
    n_average: int = 10
    dedup_threshold: float = DEFAULT_DEDUP_THRESHOLD
    unit_filter: bool = True
    span_reduce: bool = True
    cap: float = 1e8
    unary_ops: tuple = tuple(op.value for op in UNARY_OPS)
    binary_ops: tuple = tuple(op.value for op in BINARY_OPS)
    lasso_folds: int = 10
    l0_budget: int = 10_000_000
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValidationError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if int(self.m_max) != self.m_max or self.m_max < 0:
            raise ValidationError("m_max must be a non-negative integer")
        if not 0.0 < self.rho_max <= 1.0:
            raise ValidationError("rho_max must lie in (0, 1]")
        if self.k < 1:
            raise ValidationError("k must be at least 1")
        if not 0.0 < self.dedup_threshold <= 1.0:
            raise ValidationError("dedup_threshold must lie in (0, 1]")
        for name in ("unary_ops", "binary_ops"):
            object.__setattr__(self, name, tuple(Op.lookup(o).value for o in getattr(self, name)))
        bad = [o for o in self.unary_ops if Op(o) not in UNARY_OPS]
        bad += [o for o in self.binary_ops if Op(o) not in BINARY_OPS]
        if bad:
            raise ValidationError(f"operators in the wrong set: {bad}")

    def to_dict(self):
        d = asdict(self)
        d["unary_ops"] = list(self.unary_ops)
        d["binary_ops"] = list(self.binary_ops)
        return d

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown configuration keys: {sorted(unknown)}")
        bart = data.pop("bart", None)
        if isinstance(bart, dict):
            bart = dict(bart)
            profile = bart.pop("profile", None)
            bart = BartConfig.profile(profile, **bart) if profile else BartConfig(**bart)
        if bart is not None:
            data["bart"] = bart
        for name in ("unary_ops", "binary_ops"):
            if name in data:
                data[name] = tuple(data[name])
        return cls(**data)

    def with_seed(self, seed):
        return replace(self, seed=int(seed), bart=self.bart.with_seed(int(seed)))


def load_config(path):
    """Read a :class:`PanConfig` from a JSON or TOML file (chosen by extension)."""
    path = str(path)
    if path.endswith(".toml"):
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    else:
        with open(path) as fh:
            data = json.load(fh)
    return PanConfig.from_dict(data)


def choose_scheme(X0, scheme="auto"):
    """Resolve ``auto`` to a concrete schedule from primary-feature collinearity."""
    if scheme != "auto":
        return scheme
    X0 = np.asarray(X0, dtype=float)
    if X0.shape[1] < 2:
        return "unary-first"
    with np.errstate(invalid="ignore", divide="ignore"):
        R = np.corrcoef(X0, rowvar=False)
    R = np.nan_to_num(np.abs(R))
    np.fill_diagonal(R, 0.0)
    return "binary-first" if R.max() > COLLINEARITY_CUTOFF else "unary-first"


@dataclass
class IterationAudit:
    """Bookkeeping for one screen-and-expand step.

    ``selected`` is the number of descriptors the screen kept from the
    ``screened`` inputs; ``generated`` is the size of the next space after
    domain, unit and duplicate filtering.
    """

    iteration: int
    operators: str
    screened: int
    selected: int
    carried_forward: bool
    union_size: int
    generated: int
    report: dict
    rho: float
    rho_descriptor: str
    multiplier: float
    seconds: float
    selected_descriptors: list = field(default_factory=list)

    def as_dict(self):
        return asdict(self)


@dataclass
class PanResult:
    selected: list
    coef: np.ndarray
    intercept: float
    lasso_selected: list
    lasso_coef: np.ndarray
    lasso_intercept: float
    scheme: str
    stop_reason: str
    iterations: list
    rho_history: list
    final_space_size: int
    l0_table: list = field(default_factory=list)
    l0_best_k: int | None = None
    feature_names: list | None = None
    seconds: float = 0.0
    lambda_: float = float("nan")
    span_dropped: list = field(default_factory=list)

    @property
    def selected_descriptors(self):
        return [parse_descriptor(s) for s in self.selected]

    def predict(self, X0):
        """Linear prediction from the final descriptors evaluated on ``X0``."""
        from .descriptors import evaluate

        X0 = np.asarray(X0, dtype=float)
        out = np.full(X0.shape[0], self.intercept)
        for d, c in zip(self.selected_descriptors, self.coef):
            out += c * evaluate(d, X0, cap=np.inf)
        return out

    def to_dict(self, include_timing=True):
        out = {
            "selected": self.selected,
            "coef": [float(c) for c in self.coef],
            "intercept": float(self.intercept),
            "lasso": {
                "selected": self.lasso_selected,
                "coef": [float(c) for c in self.lasso_coef],
                "intercept": float(self.lasso_intercept),
                "lambda": float(self.lambda_),
            },
            "l0": {"best_k": self.l0_best_k, "table": self.l0_table},
            "scheme": self.scheme,
            "stop_reason": self.stop_reason,
            "rho_history": [float(r) for r in self.rho_history],
            "final_space_size": self.final_space_size,
            "span_dropped": self.span_dropped,
            "iterations": [a.as_dict() for a in self.iterations],
            "feature_names": self.feature_names,
        }
        if not include_timing:
            for it in out["iterations"]:
                it.pop("seconds")
        else:
            out["seconds"] = self.seconds
        return out

    def report(self):
        """Plain-text summary of the run."""
        names = self.feature_names

        def show(text):
            if not names:
                return text
            import re
            return re.sub(r"x(\d+)", lambda m: names[int(m.group(1)) - 1], text)

        lines = [f"scheme: {self.scheme}", f"stopped by: {self.stop_reason}", "",
                 "iter  ops     screened  selected  union  generated   rho"]
        for a in self.iterations:
            flag = "*" if a.carried_forward else " "
            lines.append(f"{a.iteration:>4}  {a.operators:<6} {a.screened:>9} {a.selected:>8}{flag}"
                         f" {a.union_size:>6} {a.generated:>10}  {a.rho:.4f}")
        lines += ["", f"final space: {self.final_space_size} descriptors",
                  f"LASSO kept {len(self.lasso_selected)} descriptor(s) at lambda = {self.lambda_:.4g}"]
        if self.l0_table:
            lines.append("")
            lines.append("   k        AIC  subset")
            for row in self.l0_table:
                mark = "<" if row["k"] == self.l0_best_k else " "
                lines.append(f"{row['k']:>4} {row['aic']:>10.3f}{mark} "
                             + ", ".join(show(s) for s in row["subset"]))
        lines += ["", "final model:", f"  {self.intercept:+.6g}"]
        for s, c in zip(self.selected, self.coef):
            lines.append(f"  {c:+.6g} * {show(s)}")
        return "\n".join(lines) + "\n"


def _expand(space, kind, cfg, tag):
    if kind == "unary":
        return generate_unary(space, cfg.unary_ops, dedup_threshold=cfg.dedup_threshold,
                              cap=cfg.cap, unit_check=cfg.unit_filter, origin_tag=tag)
    ops = cfg.binary_ops if len(space) >= 2 else ("identity",)
    return generate_binary(space, ops, dedup_threshold=cfg.dedup_threshold, cap=cfg.cap,
                           unit_check=cfg.unit_filter, origin_tag=tag)


def linear_span_reduce(space):
    """Drop ``(a+b)`` and ``(a-b)`` when both ``a`` and ``b`` are in ``space``.

    Such a column is an exact linear combination of two others, so any
    linear model using it has an equally good counterpart without it.

    Returns
    -------
    reduced : DescriptorSpace
    dropped : list of str
    """
    keep, dropped = [], []
    for i, d in enumerate(space.descriptors):
        if d.op in (Op.ADD, Op.SUBTRACT) and all(c in space for c in d.children):
            dropped.append(d.text)
        else:
            keep.append(i)
    if not dropped:
        return space, dropped
    reduced = space.subset(keep)
    reduced.report = space.report
    return reduced, dropped


def _l0_candidates(columns, lasso_coef, k, budget):
    """Indices of LASSO survivors, trimmed by standardized |coef| if a sweep would overrun."""
    order = np.flatnonzero(lasso_coef)
    size = len(order)
    while size > k and math.comb(size, min(k, size)) > budget:
        size -= 1
    if size < len(order):
        strength = np.abs(lasso_coef[order]) * columns[:, order].std(axis=0)
        keep = np.sort(order[np.argsort(-strength, kind="stable")[:size]])
        logger.warning("best-subset sweep restricted to the %d strongest of %d LASSO survivors",
                       size, len(order))
        return keep
    return order


def pan_run(X0, y, cfg: PanConfig | None = None, *, feature_names=None, leaf_units=None):
    """Run the iterative generate-and-screen procedure and the final selection.

    Parameters
    ----------
    X0 : array-like of shape (n, p)
        Primary features.
    y : array-like of shape (n,)
    cfg : PanConfig
    feature_names : list of str, optional
        Used only in the text report.
    leaf_units : list of unit vectors, optional
        Enables the unit filter.

    Raises
    ------
    NoSignalError
        If the first screen keeps nothing.
    """
    cfg = cfg or PanConfig()
    t_start = time.perf_counter()
    X0 = np.asarray(X0, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X0.ndim != 2 or X0.shape[0] != y.shape[0]:
        raise ValidationError(f"X0 has shape {X0.shape} but y has {y.shape[0]} entries")
    if X0.shape[0] < 10:
        raise ValidationError(f"at least 10 observations are required, got {X0.shape[0]}")
    if not np.isfinite(y).all():
        raise ValidationError("y must be finite")
    space = DescriptorSpace.from_primary(X0, feature_names,
                                         leaf_units if cfg.unit_filter else None)
    scheme = choose_scheme(X0, cfg.scheme)
    first, second = ("unary", "binary") if scheme == "unary-first" else ("binary", "unary")

    rho, best = correlation_scan(space, y)
    rho_history = [rho]
    audits = []
    union = None
    M = 0
    while M < cfg.m_max and rho < cfg.rho_max:
        t0 = time.perf_counter()
        bart = cfg.bart.with_seed(child_seed(cfg.seed, "screen", M))
        g = gse_select(space.columns, y, bart, cfg.n_permutations, cfg.alpha, cfg.n_jobs,
                       cfg.n_average)
        chosen = space.subset(g.selected)
        carried = False
        if len(chosen) == 0:
            if union is None:
                raise NoSignalError("the first screen selected no descriptor; "
                                    "no detectable signal in the primary features")
            logger.warning("screen at iteration %d selected nothing; carrying the union forward", M)
            carried = True
        union = chosen if union is None else union.union(chosen)
        kind = first if M % 2 == 0 else second
        space = _expand(union, kind, cfg, M + 1)
        rho, best = correlation_scan(space, y)
        rho_history.append(rho)
        audits.append(IterationAudit(
            iteration=M, operators=kind, screened=g.q.shape[0], selected=len(chosen),
            carried_forward=carried, union_size=len(union), generated=len(space),
            report=space.report.as_dict(), rho=rho, rho_descriptor=best.text,
            multiplier=float(g.multiplier), seconds=time.perf_counter() - t0,
            selected_descriptors=[d.text for d in chosen.descriptors],
        ))
        logger.info("iteration %d: %d -> %d selected, %d generated, rho %.4f",
                    M, g.q.shape[0], len(chosen), len(space), rho)
        M += 1
    stop_reason = "rho_max" if rho >= cfg.rho_max else "m_max"

    final_size = len(space)
    dropped = []
    if cfg.span_reduce:
        space, dropped = linear_span_reduce(space)
    lasso = lasso_cv(space.columns, y, cfg.lasso_folds, seed=child_seed(cfg.seed, "lasso"))
    lasso_sel = [space.descriptors[i].text for i in lasso.selected]
    selected, coef, intercept = lasso_sel, lasso.coef[lasso.selected], lasso.intercept
    table, best_k = [], None
    if cfg.run_l0 and len(lasso.selected) > 0:
        cand = _l0_candidates(space.columns, lasso.coef, cfg.k, cfg.l0_budget)
        Xs = space.columns[:, cand]
        per_k, winner = select_k_sweep(Xs, y, min(cfg.k, len(cand)), budget=cfg.l0_budget)
        names = [space.descriptors[i].text for i in cand]
        table = [r.to_dict(names) for r in per_k]
        best_k = winner.k
        selected = [names[i] for i in winner.subset]
        coef, intercept = winner.coef[1:], float(winner.coef[0])

    return PanResult(
        selected=list(selected), coef=np.asarray(coef, dtype=float), intercept=float(intercept),
        lasso_selected=lasso_sel, lasso_coef=lasso.coef[lasso.selected],
        lasso_intercept=lasso.intercept, scheme=scheme, stop_reason=stop_reason,
        iterations=audits, rho_history=rho_history, final_space_size=final_size,
        l0_table=table, l0_best_k=best_k, feature_names=feature_names,
        seconds=time.perf_counter() - t_start, lambda_=lasso.lambda_, span_dropped=dropped,
    )
