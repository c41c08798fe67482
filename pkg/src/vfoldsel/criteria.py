"""Risk-estimation criteria and penalties, and model selection by argmin.

All criteria are expressed through histogram bin counts.  Under an exactly
regular fold partition the V-fold quantities come from the fast kernel; for
merely near-regular partitions they fall back to their definitions (the
algebraic identities tying cross-validation to penalties are only used when
V divides n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fastvf
from .densities import TrueDensity
from .models import HistogramModel, ModelCollection
from .projection import argmin_with_ties, as_sample, bin_counts, fit, true_projection


# -- fold partitions ----------------------------------------------------------


@dataclass(frozen=True)
class FoldPartition:
    """A partition of sample indices 0..n-1 into V blocks of near-equal size."""

    n: int
    V: int
    assignment: np.ndarray          # block id per index
    exact_reg: bool                 # all blocks have exactly n/V elements
    contiguous: bool = False        # blocks are consecutive index ranges
    _blocks: tuple = field(default=None, repr=False, compare=False)

    @property
    def blocks(self):
        if self._blocks is None:
            blocks = tuple(np.flatnonzero(self.assignment == k) for k in range(self.V))
            object.__setattr__(self, "_blocks", blocks)
        return self._blocks


def make_folds(n: int, V: int, seed: int | None = None) -> FoldPartition:
    """Contiguous near-regular blocks; block sizes differ by at most one.

    With a seed, indices are shuffled before being cut into blocks.
    """
    if V < 2 or V > n:
        raise ValueError(f"need 2 <= V <= n, got V={V}, n={n}")
    base, extra = divmod(n, V)
    sizes = np.full(V, base, dtype=np.int64)
    sizes[:extra] += 1
    assignment = np.repeat(np.arange(V, dtype=np.int64), sizes)
    contiguous = True
    if seed is not None:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        assignment = assignment[rng.permutation(n)]
        contiguous = False
    return FoldPartition(n=n, V=V, assignment=assignment, exact_reg=extra == 0,
                         contiguous=contiguous)


# -- penalties and criteria ---------------------------------------------------


def _alpha_from(counts, m, model):
    return counts / (m * np.sqrt(model.widths))


def pen_vf(values, model: HistogramModel, folds: FoldPartition, x: float) -> float:
    """V-fold penalty with multiplicative constant x (linear in x, >= 0)."""
    v = as_sample(values)
    if folds.n != v.size:
        raise ValueError(f"fold partition is for n={folds.n}, sample has n={v.size}")
    if x <= 0:
        raise ValueError("the penalty constant x must be positive")
    if folds.exact_reg:
        emp, vfcv, _ = fastvf.vf_fast(v, model, folds)
        return x * (vfcv - emp) / (folds.V - 0.5)
    return _pen_vf_direct(v, model, folds, x)


def _pen_vf_direct(v, model, folds, x):
    n = v.size
    total = bin_counts(v, model)
    acc = 0.0
    for blk in folds.blocks:
        c_block = bin_counts(v[blk], model) if blk.size else np.zeros_like(total)
        c_comp = total - c_block
        a_comp = _alpha_from(c_comp, n - blk.size, model)
        a_full = _alpha_from(total, n, model)
        acc += np.dot(a_comp - a_full, a_comp)
    return 2.0 * x / folds.V * acc


@dataclass(frozen=True)
class VfoldCriteria:
    emp_risk: float
    vfcv: float
    corr_vfcv: float
    pen_base: float  # the V-fold penalty at x = V - 1


def crit_vf(values, model: HistogramModel, folds: FoldPartition) -> VfoldCriteria:
    """Empirical risk, V-fold CV, bias-corrected V-fold CV and the base penalty."""
    v = as_sample(values)
    if folds.n != v.size:
        raise ValueError(f"fold partition is for n={folds.n}, sample has n={v.size}")
    V = folds.V
    if folds.exact_reg:
        emp, vfcv, _ = fastvf.vf_fast(v, model, folds)
        pen_base = (vfcv - emp) * (V - 1.0) / (V - 0.5)
        return VfoldCriteria(emp, vfcv, emp + pen_base, pen_base)
    # near-regular fallback: straight from the definitions
    est = fit(v, model)
    emp = float(-np.dot(est.coeffs, est.coeffs))
    total = est.counts
    n = v.size
    crit_sum = 0.0
    train_risk_sum = 0.0
    for blk in folds.blocks:
        c_block = bin_counts(v[blk], model)
        c_comp = total - c_block
        a_comp = _alpha_from(c_comp, n - blk.size, model)
        a_test = _alpha_from(c_block, max(blk.size, 1), model)
        crit_sum += np.dot(a_comp, a_comp) - 2.0 * np.dot(a_test, a_comp)
        a_full = _alpha_from(total, n, model)
        train_risk_sum += np.dot(a_comp, a_comp) - 2.0 * np.dot(a_full, a_comp)
    vfcv = crit_sum / V
    corr = vfcv + emp - train_risk_sum / V
    return VfoldCriteria(emp, vfcv, corr, _pen_vf_direct(v, model, folds, V - 1.0))


def crit_lpo_closed(values, model: HistogramModel, p: int) -> float:
    """Closed-form leave-p-out criterion, O(n + dim)."""
    v = as_sample(values)
    n = v.size
    if n < 2:
        raise ValueError("leave-p-out needs n >= 2")
    if not 1 <= p <= n - 1:
        raise ValueError(f"need 1 <= p <= n-1, got p={p}")
    c = bin_counts(v, model).astype(float)
    inv_mu = 1.0 / model.widths
    sum_sq = np.dot(c, inv_mu)                       # sum over points of basis values squared
    sum_cross = np.dot(c * c - c, inv_mu)            # sum over ordered pairs of distinct points
    return float((sum_sq - (n - p + 1.0) / (n - 1.0) * sum_cross) / (n * (n - p)))


def _check_subset(train_idx, n):
    t = np.asarray(train_idx, dtype=np.int64)
    if t.size == 0 or t.size >= n:
        raise ValueError("the training subset must be non-empty and proper")
    if np.unique(t).size != t.size or t.min() < 0 or t.max() >= n:
        raise ValueError("training indices must be distinct and within range")
    return t


def crit_ho(values, model: HistogramModel, train_idx) -> float:
    """Hold-out criterion: train on the index subset, test on its complement.

    The split is a set of positions, not of values: permuting the sample
    while keeping the same indices changes which observations are held out.
    """
    v = as_sample(values)
    t = _check_subset(train_idx, v.size)
    mask = np.zeros(v.size, dtype=bool)
    mask[t] = True
    c_train = bin_counts(v[mask], model)
    c_test = bin_counts(v[~mask], model)
    a_train = _alpha_from(c_train, t.size, model)
    a_test = _alpha_from(c_test, v.size - t.size, model)
    return float(np.dot(a_train, a_train) - 2.0 * np.dot(a_test, a_train))


def pen_ho(values, model: HistogramModel, train_idx, x: float) -> float:
    """Hold-out penalty: 2x * squared gap between the split and full estimators.

    Evaluated through the split difference, 2x (1-tau)^2 * sum of squared
    coefficient gaps between the two half estimators; this form makes the
    tau = 1/2 exchange symmetry exact in floating point.
    """
    v = as_sample(values)
    t = _check_subset(train_idx, v.size)
    mask = np.zeros(v.size, dtype=bool)
    mask[t] = True
    c_train = bin_counts(v[mask], model)
    c_test = bin_counts(v, model) - c_train
    a_train = _alpha_from(c_train, t.size, model)
    a_test = _alpha_from(c_test, v.size - t.size, model)
    gap = a_train - a_test
    tau = t.size / v.size
    return float(2.0 * x * (1.0 - tau) ** 2 * np.dot(gap, gap))


def default_holdout_split(n: int, tau: float) -> np.ndarray:
    """The first ceil(tau * n) indices; deterministic, valid for i.i.d. data."""
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie strictly between 0 and 1")
    size = math.ceil(tau * n)
    if size >= n:
        raise ValueError(f"tau={tau} leaves an empty test set for n={n}")
    return np.arange(size, dtype=np.int64)


def pen_dim(model: HistogramModel, n: int) -> float:
    """Dimension penalty 2 * dim / n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return 2.0 * model.dim / n


def crit_ideal_expected(values, model: HistogramModel, density: TrueDensity,
                        C: float, overpen: float = 1.0) -> float:
    """Empirical risk plus the expected ideal penalty (needs the true density)."""
    if C <= 0:
        raise ValueError("C must be positive")
    est = fit(values, model)
    emp = -float(np.dot(est.coeffs, est.coeffs))
    stats = true_projection(density, model)
    return emp + overpen * C * 2.0 * stats.d_cal / est.n


# -- criterion specifications --------------------------------------------------


_KINDS = ("vfcv", "corrvfcv", "penvf", "lpo", "ho", "penho", "pendim", "ideal")


@dataclass(frozen=True)
class CriterionSpec:
    """Which risk estimator to use, with its parameters.

    kind: one of vfcv, corrvfcv, penvf, lpo, ho, penho, pendim, ideal.
    overpen multiplies the penalty term only, never the empirical risk.
    """

    kind: str
    v: int | None = None
    c: float = 1.0
    p: int | None = None
    tau: float | None = None
    overpen: float = 1.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown criterion kind {self.kind!r}")
        if self.kind in ("vfcv", "corrvfcv", "penvf") and (self.v is None or self.v < 2):
            raise ValueError(f"{self.kind} needs V >= 2")
        if self.kind in ("penvf", "penho", "ideal") and not self.c > 0:
            raise ValueError(f"{self.kind} needs C > 0")
        if self.kind == "lpo" and (self.p is None or self.p < 1):
            raise ValueError("lpo needs p >= 1")
        if self.kind in ("ho", "penho") and (self.tau is None or not 0.0 < self.tau < 1.0):
            raise ValueError(f"{self.kind} needs 0 < tau < 1")
        if not self.overpen > 0:
            raise ValueError("the over-penalization factor must be positive")
        if self.kind == "ho" and self.overpen != 1.0:
            raise ValueError("the plain hold-out criterion does not take an over-penalization factor")

    def label(self) -> str:
        parts = []
        if self.v is not None:
            parts.append(f"V={self.v}")
        if self.kind in ("penvf", "penho", "ideal") and self.c != 1.0:
            parts.append(f"C={self.c:g}")
        elif self.kind in ("penvf", "penho", "ideal"):
            parts.append("C=1")
        if self.p is not None:
            parts.append(f"p={self.p}")
        if self.tau is not None:
            parts.append(f"tau={self.tau:g}")
        if self.overpen != 1.0:
            parts.append(f"over={self.overpen:g}")
        return self.kind + (":" + ",".join(parts) if parts else "")


def parse_criterion(text: str) -> CriterionSpec:
    """Parse a criterion string such as "penvf:V=5,C=1,over=1.5" or "pendim"."""
    text = text.strip()
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    kwargs = {}
    if rest:
        for item in rest.split(","):
            key, sep, val = item.partition("=")
            if not sep:
                raise ValueError(f"malformed criterion parameter {item!r} in {text!r}")
            key = key.strip().lower()
            val = val.strip()
            if key == "v":
                kwargs["v"] = int(val)
            elif key == "c":
                kwargs["c"] = float(val)
            elif key == "p":
                kwargs["p"] = int(val)
            elif key == "tau":
                kwargs["tau"] = float(val)
            elif key == "over":
                kwargs["overpen"] = float(val)
            else:
                raise ValueError(f"unknown criterion parameter {key!r} in {text!r}")
    return CriterionSpec(kind=kind, **kwargs)


@dataclass(frozen=True)
class CriterionTable:
    """Per-model criterion values, aligned with the collection order."""

    spec: CriterionSpec
    values: np.ndarray
    n: int


def criterion_table(values, collection: ModelCollection, spec: CriterionSpec,
                    density: TrueDensity | None = None) -> CriterionTable:
    """Evaluate one criterion for every model of the collection."""
    from .experiments import tables_for_sample  # packed fast path

    v = as_sample(values)
    out = tables_for_sample(v, collection, [spec], density=density)[0]
    return CriterionTable(spec=spec, values=out, n=v.size)


def select(table: CriterionTable, collection: ModelCollection) -> str:
    """Argmin model id; ties broken by smaller dimension, then collection order."""
    if len(collection) != table.values.size or len(collection) == 0:
        raise ValueError("criterion table is not aligned with the collection")
    if not np.all(np.isfinite(table.values)):
        raise ValueError("criterion table contains non-finite values")
    i = argmin_with_ties(table.values, collection.dims)
    return collection[i].id
