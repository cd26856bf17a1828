"""Synthetic designs, selection scoring and the train/test RMSE protocol."""

from __future__ import annotations

import csv
import logging
import statistics
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .bart import BartConfig
from .descriptors import Descriptor, Op, evaluate, leaf, make, parse_descriptor
from .exceptions import ValidationError
from .pan import PanConfig, pan_run
from .rng import child_seed, substream
from .selectors import gse_select
from .space import DescriptorSpace, generate_binary, generate_unary

logger = logging.getLogger(__name__)

__all__ = [
    "GENERATORS",
    "UNARY_SCREEN_OPS",
    "BINARY_SCREEN_OPS",
    "POSITIVE_DOMAIN_OPS",
    "SimDesign",
    "MetricReport",
    "SuiteResult",
    "generate_sim",
    "score_selection",
    "run_screen_suite",
    "run_pan_suite",
    "cross_validate_rmse",
    "write_rows",
    "plot_rows",
]

GENERATORS = ("unary-screen", "binary-screen", "complex-3comp")
UNARY_SCREEN_OPS = ("inv", "square", "sqrt", "log", "exp", "abs", "sinpi", "cospi")
BINARY_SCREEN_OPS = ("add", "subtract", "multiply", "divide", "absdiff")
# operators whose screening data come from a positive law; the reciprocal is
# defined on both sides of zero and uses normal data like the rest
POSITIVE_DOMAIN_OPS = frozenset({"log", "sqrt"})

COMPLEX_TRUTH = ("((exp(x1)-exp(x2))^2)", "sin(pi*(x3*x4))")
COMPLEX_COEF = (15.0, 20.0)

_DEFAULTS = {
    "unary-screen": {"n": 200, "p": 5, "sigma": 1.0},
    "binary-screen": {"n": 200, "p": 5, "sigma": 1.0},
    "complex-3comp": {"n": 250, "p": 10, "sigma": 0.5},
}


@dataclass(frozen=True)
class SimDesign:
    """One synthetic data-generating setting.

    ``operator`` names the single true operator for the screening designs and
    is ignored by ``complex-3comp``.  ``n``, ``p`` and ``sigma`` default to the
    generator's standard setting when left as ``None``.
    """

    generator: str
    operator: str | None = None
    n: int | None = None
    p: int | None = None
    sigma: float | None = None
    replicates: int = 10
    seed: int = 0
    lognormal_mean: float = 2.0
    lognormal_sd: float = 0.5

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ValidationError(f"generator must be one of {GENERATORS}, got {self.generator!r}")
        for key, value in _DEFAULTS[self.generator].items():
            if getattr(self, key) is None:
                object.__setattr__(self, key, value)
        if self.generator != "complex-3comp":
            if self.operator is None:
                raise ValidationError(f"{self.generator} needs an operator")
            op = Op.lookup(self.operator).value
            allowed = UNARY_SCREEN_OPS if self.generator == "unary-screen" else BINARY_SCREEN_OPS
            if op not in allowed:
                raise ValidationError(f"{op!r} is not one of {allowed}")
            object.__setattr__(self, "operator", op)
        min_p = 4 if self.generator == "complex-3comp" else 2
        if self.p < min_p or self.n < 2 or self.sigma < 0 or self.replicates < 1:
            raise ValidationError("design needs p >= %d, n >= 2, sigma >= 0, replicates >= 1" % min_p)

    @property
    def label(self):
        return self.operator if self.operator else self.generator

    @property
    def law(self):
        if self.generator == "complex-3comp":
            return "uniform(-1,1)"
        if self.operator in POSITIVE_DOMAIN_OPS:
            return f"lognormal({self.lognormal_mean},{self.lognormal_sd})"
        return "normal(0,1)"

    def truth(self):
        if self.generator == "unary-screen":
            return [make(self.operator, leaf(0))]
        if self.generator == "binary-screen":
            return [make(self.operator, leaf(0), leaf(1))]
        return [parse_descriptor(t) for t in COMPLEX_TRUTH]

    def coefficients(self):
        if self.generator == "complex-3comp":
            return COMPLEX_COEF
        return (10.0,)

    def to_dict(self):
        return asdict(self)


def generate_sim(design: SimDesign, replicate: int):
    """Draw one data set.

    Returns
    -------
    X0 : ndarray of shape (n, p)
    y : ndarray of shape (n,)
    truth : list of Descriptor
    """
    rng = substream(design.seed, "replicate", design.generator, design.label, replicate)
    shape = (design.n, design.p)
    if design.generator == "complex-3comp":
        X = rng.uniform(-1.0, 1.0, size=shape)
    elif design.operator in POSITIVE_DOMAIN_OPS:
        X = rng.lognormal(design.lognormal_mean, design.lognormal_sd, size=shape)
    else:
        X = rng.standard_normal(shape)
    truth = design.truth()
    signal = np.zeros(design.n)
    for c, d in zip(design.coefficients(), truth):
        signal += c * evaluate(d, X, cap=np.inf)
    y = signal + design.sigma * rng.standard_normal(design.n)
    return X, y, truth


def _canon(items):
    out = []
    for d in items:
        d = d if isinstance(d, Descriptor) else parse_descriptor(d)
        if d.text not in out:
            out.append(d.text)
    return out


@dataclass(frozen=True)
class MetricReport:
    """True/false positive counts with precision, recall and F1.

    A ratio whose denominator is zero is reported as 0.
    """

    tp: int
    fp: int
    fn: int

    @property
    def precision(self):
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self):
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self):
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def as_dict(self):
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "precision": self.precision,
                "recall": self.recall, "f1": self.f1}


def score_selection(selected, truth):
    """Compare descriptor sets by canonical form.

    Either argument may hold :class:`Descriptor` objects or descriptor text.
    """
    sel = set(_canon(selected))
    tru = set(_canon(truth))
    return MetricReport(tp=len(sel & tru), fp=len(sel - tru), fn=len(tru - sel))


@dataclass
class SuiteResult:
    """Per-replicate rows and a per-group summary."""

    rows: list
    group_key: str = "label"
    meta: dict = field(default_factory=dict)

    def groups(self):
        out = {}
        for row in self.rows:
            out.setdefault(row[self.group_key], []).append(row)
        return out

    def summary(self):
        out = {}
        for label, rows in self.groups().items():
            s = {"replicates": len(rows)}
            for key in ("tp", "fp", "f1", "l0_tp", "l0_fp", "l0_f1", "max_generated"):
                values = [r[key] for r in rows if key in r]
                if values:
                    s[f"mean_{key}"] = float(np.mean(values))
                    s[f"median_{key}"] = float(statistics.median(values))
            s["tp_counts"] = {str(v): sum(1 for r in rows if r["tp"] == v)
                              for v in sorted({r["tp"] for r in rows})}
            out[label] = s
        return out


def _screen_space(X, family, design):
    primary = DescriptorSpace.from_primary(X)
    if family == "unary-screen":
        return generate_unary(primary)
    return generate_binary(primary)


def _screen_one(design, replicate, cfg, n_permutations, alpha):
    X, y, truth = generate_sim(design, replicate)
    space = _screen_space(X, design.generator, design)
    missing = [t.text for t in truth if t not in space]
    if missing:
        logger.warning("true descriptor(s) %s did not survive generation", missing)
    bart = cfg.with_seed(child_seed(design.seed, "screen", design.label, replicate))
    g = gse_select(space.columns, y, bart, n_permutations, alpha)
    selected = [space.descriptors[i].text for i in g.selected]
    m = score_selection(selected, truth)
    row = {"label": design.label, "replicate": replicate, **m.as_dict(),
           "n_selected": len(selected), "space_size": len(space), "multiplier": g.multiplier,
           "selected": ";".join(selected)}
    if design.generator == "binary-screen" and design.operator in ("subtract", "absdiff"):
        pair = ("(x1-x2)", "|x1-x2|")
        row["co_selected"] = all(s in selected for s in pair)
        row["pair_corr"] = float(np.corrcoef(X[:, 0] - X[:, 1], np.abs(X[:, 0] - X[:, 1]))[0, 1])
    return row


def _run_jobs(fn, jobs, n_jobs):
    if n_jobs == 1:
        return [fn(*job) for job in jobs]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=n_jobs if n_jobs > 0 else None) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


def run_screen_suite(family, cfg: BartConfig | None = None, *, operators=None, replicates=10,
                     n=None, p=None, sigma=None, seed=0, n_permutations=50, alpha=0.05,
                     n_jobs=1):
    """Single-layer screening experiment over a family of true operators.

    For every operator and replicate, builds the one-step unary or binary
    space of the primary features, runs the permutation-thresholded screen
    and scores the kept set against the single true descriptor.
    """
    if family not in ("unary-screen", "binary-screen"):
        raise ValidationError(f"unknown screening family {family!r}")
    cfg = cfg or BartConfig.profile("desk")
    ops = operators or (UNARY_SCREEN_OPS if family == "unary-screen" else BINARY_SCREEN_OPS)
    designs = [SimDesign(family, op, n=n, p=p, sigma=sigma, replicates=replicates, seed=seed)
               for op in ops]
    jobs = [(d, r, cfg, n_permutations, alpha) for d in designs for r in range(replicates)]
    rows = _run_jobs(_screen_one, jobs, n_jobs)
    return SuiteResult(rows=rows, meta={"family": family, "bart": cfg.to_dict(),
                                        "n_permutations": n_permutations, "alpha": alpha,
                                        "designs": [d.to_dict() for d in designs]})


def _pan_one(design, replicate, cfg):
    X, y, truth = generate_sim(design, replicate)
    run_cfg = cfg.with_seed(child_seed(design.seed, "pan", replicate))
    res = pan_run(X, y, run_cfg)
    lasso = score_selection(res.lasso_selected, truth)
    row = {"label": f"p={design.p}", "replicate": replicate, **lasso.as_dict(),
           "n_lasso": len(res.lasso_selected), "lasso_selected": ";".join(res.lasso_selected),
           "iterations": len(res.iterations), "stop_reason": res.stop_reason,
           "generated": ";".join(str(a.generated) for a in res.iterations),
           "screen_selected": ";".join(str(a.selected) for a in res.iterations),
           "max_generated": max([a.generated for a in res.iterations], default=0),
           "seconds": res.seconds}
    if res.l0_table:
        l0 = score_selection(res.selected, truth)
        row.update({f"l0_{k}": v for k, v in l0.as_dict().items()})
        row["l0_k"] = res.l0_best_k
        row["l0_selected"] = ";".join(res.selected)
    return row


def run_pan_suite(design: SimDesign, cfg: PanConfig | None = None, n_jobs=1):
    """Full generate-and-screen runs on replicates of ``design``.

    Each row scores the LASSO selection (``tp``, ``fp``, ``f1``) and, when the
    best-subset sweep ran, its refinement (``l0_tp``, ...), and records the
    size of every generated space.
    """
    cfg = cfg or PanConfig(scheme="unary-first", bart=BartConfig.profile("desk"))
    jobs = [(design, r, cfg) for r in range(design.replicates)]
    rows = _run_jobs(_pan_one, jobs, n_jobs)
    return SuiteResult(rows=rows, meta={"design": design.to_dict(), "pan": cfg.to_dict()})


def _ols_fit(A, y):
    A1 = np.column_stack([np.ones(len(y)), A])
    coef, *_ = np.linalg.lstsq(A1, y, rcond=None)
    return coef


def cross_validate_rmse(X0, y, cfg: PanConfig | None = None, *, splits=50, train_fraction=0.9,
                        k_values=(1, 2, 3, 4, 5), seed=0, feature_names=None, leaf_units=None):
    """Repeated random train/test evaluation of the selected linear models.

    For every split the whole procedure runs on the training part; for each
    ``k`` the best size-``k`` subset of the LASSO survivors (or all of them
    when fewer than ``k`` survive) is refit by least squares on the training
    part and scored on the test part.

    Returns
    -------
    rows : list of dict
        One row per (split, k) with the test RMSE.
    summary : dict
        Mean and standard deviation of the RMSE per ``k``.
    """
    X0 = np.asarray(X0, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    n = y.shape[0]
    n_train = int(round(train_fraction * n))
    if n - n_train < 1:
        raise ValidationError(f"train_fraction {train_fraction} leaves no test observations")
    if n_train < 10:
        raise ValidationError("the training part needs at least 10 observations")
    k_values = sorted(set(int(k) for k in k_values))
    cfg = cfg or PanConfig(bart=BartConfig.profile("desk"))
    cfg = replace(cfg, run_l0=True, k=max(k_values))
    rows = []
    for s in range(splits):
        perm = substream(seed, "split", s).permutation(n)
        train, test = np.sort(perm[:n_train]), np.sort(perm[n_train:])
        res = pan_run(X0[train], y[train], cfg.with_seed(child_seed(seed, "split-run", s)),
                      feature_names=feature_names, leaf_units=leaf_units)
        by_k = {row["k"]: row["subset"] for row in res.l0_table}
        for k in k_values:
            chosen = by_k.get(k, res.lasso_selected)
            descs = [parse_descriptor(t) for t in chosen]
            A_tr = np.column_stack([evaluate(d, X0[train], cap=np.inf) for d in descs]) \
                if descs else np.empty((n_train, 0))
            coef = _ols_fit(A_tr, y[train])
            with np.errstate(all="ignore"):
                A_te = np.column_stack([_loose(d, X0[test]) for d in descs]) \
                    if descs else np.empty((len(test), 0))
                pred = coef[0] + A_te @ coef[1:]
            rmse = float(np.sqrt(np.mean((y[test] - pred) ** 2)))
            rows.append({"split": s, "k": k, "rmse": rmse, "n_terms": len(descs),
                         "descriptors": ";".join(chosen)})
    summary = {}
    for k in k_values:
        vals = np.array([r["rmse"] for r in rows if r["k"] == k])
        finite = vals[np.isfinite(vals)]
        summary[k] = {"mean": float(finite.mean()) if finite.size else float("nan"),
                      "sd": float(finite.std(ddof=1)) if finite.size > 1 else float("nan"),
                      "splits": int(vals.size), "undefined": int(vals.size - finite.size)}
    return rows, summary


def _loose(d, X):
    from .space import _evaluate_loose

    return _evaluate_loose(d, X, {})


def write_rows(path, rows):
    """Write dict rows to CSV with the union of keys as header (first-seen order)."""
    header = []
    for row in rows:
        for key in row:
            if key not in header:
                header.append(key)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header)
        w.writeheader()
        for row in rows:
            w.writerow(row)


def plot_rows(result: SuiteResult, figure):
    """Long-format rows (figure, panel, replicate, metric, value) for boxplots."""
    out = []
    for row in result.rows:
        for metric in ("tp", "fp", "f1", "l0_tp", "l0_fp", "l0_f1", "max_generated"):
            if metric in row:
                out.append({"figure": figure, "panel": row[result.group_key],
                            "replicate": row["replicate"], "metric": metric,
                            "value": row[metric]})
        if "generated" in row and row["generated"]:
            for i, size in enumerate(row["generated"].split(";")):
                out.append({"figure": figure, "panel": row[result.group_key],
                            "replicate": row["replicate"], "metric": f"generated_iter{i}",
                            "value": int(size)})
    return out
