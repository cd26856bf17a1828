"""Evaluated descriptor spaces and the operators that grow and prune them."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .descriptors import (
    BINARY_OPS,
    DEFAULT_CAP,
    UNARY_OPS,
    Op,
    apply_op,
    descriptor_units,
    evaluate,
    first_bad_row,
    leaf,
    make,
)
from .exceptions import ValidationError

logger = logging.getLogger(__name__)

__all__ = [
    "DescriptorSpace",
    "GenerationReport",
    "DEFAULT_DEDUP_THRESHOLD",
    "generate_unary",
    "generate_binary",
    "dedup",
    "unit_filter",
    "correlation_scan",
]

DEFAULT_DEDUP_THRESHOLD = 1.0 - 1e-10


@dataclass
class GenerationReport:
    generated: int = 0
    domain_dropped: int = 0
    unit_dropped: int = 0
    constant_dropped: int = 0
    dedup_dropped: int = 0
    retained: int = 0

    def as_dict(self):
        return dict(self.__dict__)


class DescriptorSpace:
    """Descriptors together with their evaluated columns.

    Parameters
    ----------
    descriptors : sequence of Descriptor
    columns : ndarray of shape (n_samples, n_descriptors)
    origin : sequence of int, optional
        Iteration that produced each descriptor (0 for primary features).
    leaf_units : sequence of unit vectors, optional
        Units of the primary features; ``None`` disables unit checking.
    feature_names : sequence of str, optional
        Names of the primary features, used only for display.
    """

    def __init__(self, descriptors, columns, origin=None, leaf_units=None, feature_names=None):
        descriptors = list(descriptors)
        columns = np.asarray(columns, dtype=float)
        if columns.ndim != 2 or columns.shape[1] != len(descriptors):
            raise ValidationError(
                f"{len(descriptors)} descriptors but columns have shape {columns.shape}")
        self.descriptors = descriptors
        self.columns = columns
        self.origin = list(origin) if origin is not None else [0] * len(descriptors)
        self.leaf_units = list(leaf_units) if leaf_units is not None else None
        self.feature_names = list(feature_names) if feature_names is not None else None
        self.report = None
        self._index = {d.text: i for i, d in enumerate(descriptors)}

    @classmethod
    def from_primary(cls, X, feature_names=None, leaf_units=None):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] == 0:
            raise ValidationError("primary features must be a non-empty 2-D array")
        if not np.isfinite(X).all():
            raise ValidationError("primary features must be finite")
        if leaf_units is not None and len(leaf_units) != X.shape[1]:
            raise ValidationError("need one unit per primary feature")
        descs = [leaf(j) for j in range(X.shape[1])]
        return cls(descs, X.copy(), [0] * len(descs), leaf_units, feature_names)

    @property
    def units(self):
        """Per-descriptor unit vectors (``None`` entries are unit-illegal), or ``None``."""
        if self.leaf_units is None:
            return None
        return [descriptor_units(d, self.leaf_units) for d in self.descriptors]

    def __len__(self):
        return len(self.descriptors)

    def __iter__(self):
        return iter(self.descriptors)

    def __contains__(self, d):
        return getattr(d, "text", d) in self._index

    @property
    def n_samples(self):
        return self.columns.shape[0]

    @property
    def strings(self):
        return [d.text for d in self.descriptors]

    def index_of(self, d):
        return self._index[getattr(d, "text", d)]

    def column(self, d):
        return self.columns[:, self.index_of(d)]

    def subset(self, indices):
        indices = list(indices)
        return DescriptorSpace(
            [self.descriptors[i] for i in indices],
            self.columns[:, indices],
            [self.origin[i] for i in indices],
            self.leaf_units,
            self.feature_names,
        )

    def union(self, other):
        """Append descriptors of ``other`` not already present, keeping order."""
        keep = [i for i, d in enumerate(other.descriptors) if d.text not in self._index]
        extra = other.subset(keep)
        return DescriptorSpace(
            self.descriptors + extra.descriptors,
            np.hstack([self.columns, extra.columns]),
            self.origin + extra.origin,
            self.leaf_units if self.leaf_units is not None else other.leaf_units,
            self.feature_names or other.feature_names,
        )

    def display(self, d):
        """Descriptor text with feature names substituted for ``x<k>`` leaves."""
        text = getattr(d, "text", str(d))
        if not self.feature_names:
            return text
        import re

        return re.sub(r"x(\d+)", lambda m: self.feature_names[int(m.group(1)) - 1], text)

    def evaluate_on(self, X, strict=False, cap=np.inf):
        """Evaluate every descriptor on new primary data.

        With ``strict=False`` undefined entries become ``nan`` instead of raising.
        """
        X = np.asarray(X, dtype=float)
        out = np.empty((X.shape[0], len(self)))
        memo = {}
        for j, d in enumerate(self.descriptors):
            if strict:
                out[:, j] = evaluate(d, X, cap=cap, _memo=memo)
            else:
                out[:, j] = _evaluate_loose(d, X, memo)
        return out

    def __repr__(self):
        return f"DescriptorSpace(n_samples={self.n_samples}, n_descriptors={len(self)})"


def _evaluate_loose(d, X, memo):
    if d.text in memo:
        return memo[d.text]
    if d.is_leaf:
        out = X[:, d.index]
    else:
        out = apply_op(d.op, *[_evaluate_loose(c, X, memo) for c in d.children])
    with np.errstate(invalid="ignore"):
        out = np.where(np.isfinite(out), out, np.nan)
    memo[d.text] = out
    return out


def _ops(ops, allowed, kind):
    ops = [Op.lookup(o) for o in (ops if ops is not None else allowed)]
    bad = [o for o in ops if o not in allowed]
    if bad:
        raise ValidationError(f"{[o.value for o in bad]} are not {kind} operators")
    return [o for o in ops if o is not Op.IDENTITY]


def _assemble(space, candidates, *, dedup_threshold, cap, unit_check, origin_tag, report):
    """Evaluate, domain-check, unit-check and dedup candidate descriptors.

    ``candidates`` holds ``(descriptor, column_or_None, op, arg_indices)``;
    a ready column means an identity copy.
    """
    seen = set()
    descs, cols, origins, copies = [], [], [], []
    check_units = space.leaf_units is not None and unit_check
    for d, col, op, args in candidates:
        report.generated += 1
        if d.text in seen:
            report.dedup_dropped += 1
            continue
        if col is None:
            col = apply_op(op, *[space.columns[:, a] for a in args])
            if first_bad_row(col, cap) >= 0:
                report.domain_dropped += 1
                continue
            if check_units and descriptor_units(d, space.leaf_units) is None:
                report.unit_dropped += 1
                continue
            origin = origin_tag
        else:
            origin = space.origin[args[0]]
        seen.add(d.text)
        descs.append(d)
        cols.append(col)
        origins.append(origin)
        copies.append(op is Op.IDENTITY)
    columns = np.column_stack(cols) if cols else np.empty((space.n_samples, 0))
    out = DescriptorSpace(descs, columns, origins, space.leaf_units, space.feature_names)
    # identity copies win their duplicate groups so earlier selections persist
    out, dd = _dedup(out, dedup_threshold, carried=np.array(copies, dtype=bool))
    report.constant_dropped += dd[0]
    report.dedup_dropped += dd[1]
    report.retained = len(out)
    out.report = report
    return out


def generate_unary(space, ops=None, *, dedup_threshold=DEFAULT_DEDUP_THRESHOLD, cap=DEFAULT_CAP,
                   unit_check=True, origin_tag=None):
    """Identity copy plus every unary transform of every descriptor.

    Candidates that evaluate to a non-finite value or exceed ``cap`` in
    magnitude are dropped, then unit-illegal ones (when units are known),
    then near-duplicates, where the copy of an input descriptor always wins
    its group.  ``space.report`` records how many fell at each stage.
    """
    if len(space) == 0:
        raise ValidationError("cannot generate from an empty space")
    ops = _ops(ops, UNARY_OPS, "unary")
    tag = origin_tag if origin_tag is not None else max(space.origin, default=0) + 1
    candidates = []
    for i, d in enumerate(space.descriptors):
        candidates.append((d, space.columns[:, i], Op.IDENTITY, (i,)))
        for op in ops:
            candidates.append((make(op, d), None, op, (i,)))
    return _assemble(space, candidates, dedup_threshold=dedup_threshold, cap=cap,
                     unit_check=unit_check, origin_tag=tag, report=GenerationReport())


def generate_binary(space, ops=None, *, dedup_threshold=DEFAULT_DEDUP_THRESHOLD, cap=DEFAULT_CAP,
                    unit_check=True, origin_tag=None):
    """Identity copies plus each binary operator on every unordered pair.

    Only the orientation ``(d_i, d_j)`` with ``i < j`` in space order is
    built, so ``d_j / d_i`` is never generated.
    """
    ops = _ops(ops, BINARY_OPS, "binary")
    if ops and len(space) < 2:
        raise ValidationError("binary generation needs at least two descriptors")
    if len(space) == 0:
        raise ValidationError("cannot generate from an empty space")
    tag = origin_tag if origin_tag is not None else max(space.origin, default=0) + 1
    candidates = [(d, space.columns[:, i], Op.IDENTITY, (i,)) for i, d in enumerate(space.descriptors)]
    ds = space.descriptors
    for i in range(len(ds)):
        for j in range(i + 1, len(ds)):
            for op in ops:
                candidates.append((make(op, ds[i], ds[j]), None, op, (i, j)))
    return _assemble(space, candidates, dedup_threshold=dedup_threshold, cap=cap,
                     unit_check=unit_check, origin_tag=tag, report=GenerationReport())


def _standardize(columns):
    centered = columns - columns.mean(axis=0)
    norms = np.sqrt((centered ** 2).sum(axis=0))
    scale = np.maximum(np.abs(columns).max(axis=0), 1.0) if columns.size else np.ones(0)
    constant = norms <= 1e-12 * scale * np.sqrt(max(columns.shape[0], 1))
    safe = np.where(constant, 1.0, norms)
    return centered / safe, constant


def _dedup(space, threshold, block=512, carried=None):
    if not 0.0 < threshold <= 1.0:
        raise ValidationError(f"dedup threshold must lie in (0, 1], got {threshold}")
    P = len(space)
    if P == 0:
        return space, (0, 0)
    Z, constant = _standardize(space.columns)
    if constant.any():
        names = [space.descriptors[i].text for i in np.flatnonzero(constant)]
        logger.info("dropping %d constant column(s): %s", len(names), ", ".join(names[:10]))
    carried = np.zeros(P, dtype=bool) if carried is None else carried
    order = sorted((i for i in range(P) if not constant[i]),
                   key=lambda i: (not carried[i], space.descriptors[i].complexity, i))
    if not order:
        return space.subset([]), (int(constant.sum()), 0)
    Zs = Z[:, order]
    m = len(order)
    removed = np.zeros(m, dtype=bool)
    keep_sorted = []
    for start in range(0, m, block):
        stop = min(start + block, m)
        C = np.abs(Zs[:, start:stop].T @ Zs)
        for r in range(start, stop):
            if removed[r]:
                continue
            keep_sorted.append(r)
            row = C[r - start]
            hit = row >= threshold
            hit[: r + 1] = False
            removed |= hit
    keep = sorted(order[r] for r in keep_sorted)
    return space.subset(keep), (int(constant.sum()), m - len(keep_sorted))


def dedup(space, threshold=DEFAULT_DEDUP_THRESHOLD):
    """Drop near-duplicate columns by absolute Pearson correlation.

    Within each group of columns whose pairwise ``|cor| >= threshold`` the
    one with the lowest composition complexity (then earliest position)
    survives.  Constant columns are dropped because their correlation is
    undefined.
    """
    out, _ = _dedup(space, threshold)
    return out


def unit_filter(space):
    """Remove descriptors whose construction breaks a unit rule.

    Returns the filtered space; its ``report.unit_dropped`` holds the count.
    Without unit information the input is returned unchanged.
    """
    report = GenerationReport(generated=len(space))
    if space.leaf_units is None:
        keep = list(range(len(space)))
    else:
        keep = [i for i, u in enumerate(space.units) if u is not None]
    report.unit_dropped = len(space) - len(keep)
    out = space.subset(keep)
    report.retained = len(out)
    out.report = report
    if report.unit_dropped:
        logger.info("unit filter removed %d descriptor(s)", report.unit_dropped)
    return out


def correlation_scan(space, y):
    """Largest absolute Pearson correlation with ``y`` and the descriptor attaining it.

    Constant columns count as zero correlation.
    """
    if len(space) == 0:
        raise ValidationError("correlation scan on an empty space")
    y = np.asarray(y, dtype=float).ravel()
    Z, constant = _standardize(space.columns)
    yc = y - y.mean()
    ny = np.sqrt(yc @ yc)
    if ny == 0:
        return 0.0, space.descriptors[0]
    r = np.abs(Z.T @ yc) / ny
    r[constant] = 0.0
    j = int(np.argmax(r))
    return float(min(r[j], 1.0)), space.descriptors[j]
