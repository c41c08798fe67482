"""Fast and naive V-fold kernels over a single model, plus benchmarks.

The fast kernel builds the (V x d) matrix of per-fold empirical basis
coefficients in one pass, reduces it through the (V x V) Gram matrix, and
reads off the empirical risk, the V-fold cross-validation value and the
scaled V-fold penalty.  Cost: O(n + V^2 d) for histograms, O((n + V^2) d)
for a generic orthonormal basis.  The naive kernel retrains the estimator
fold by fold straight from the definitions, at O(n V d); it is kept as a
correctness oracle and benchmark baseline.  Both require an exactly regular
fold partition (V divides n).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ._kernels import JIT_ENABLED, get_kernels
from .models import HistogramModel, custom_model
from .projection import as_sample

# above this many entries the V x V Gram matrix is streamed, not materialized
C_MATRIX_MAX_ENTRIES = 1 << 20


def _require_exact(folds, n):
    if folds.n != n:
        raise ValueError(f"fold partition is for n={folds.n}, sample has n={n}")
    if not folds.exact_reg:
        raise ValueError("this kernel requires an exactly regular partition (V divides n)")


def hist_basis(model: HistogramModel):
    """Orthonormal indicator basis of a histogram model as an evaluation callback."""
    bp = model.breakpoints
    scale = 1.0 / np.sqrt(model.widths)
    d = model.dim

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        k = np.clip(np.searchsorted(bp, x, side="right") - 1, 0, d - 1)
        out = np.zeros((x.size, d))
        out[np.arange(x.size), k] = scale[k]
        return out

    return evaluate


@dataclass(frozen=True)
class VfAggregates:
    """Fold-level aggregates: per-fold coefficient matrix, Gram matrix and sums."""

    a: np.ndarray           # (V, d): per-fold empirical basis coefficients, scaled by V/n
    c: np.ndarray | None    # (V, V) Gram matrix, or None when above the memory cap
    s: float                # sum of all Gram entries
    t: float                # trace of the Gram matrix


def _coeff_matrix_hist(values, model, folds, kernels):
    v = np.asarray(values, dtype=float)
    V = folds.V
    n = v.size
    npf = n // V
    if folds.contiguous:
        fold_sv = np.sort(v.reshape(V, npf), axis=1)
    else:
        fold_sv = np.empty((V, npf))
        for i, blk in enumerate(folds.blocks):
            fold_sv[i] = np.sort(v[blk])
    counts = np.empty((V, model.dim))
    kernels.fold_counts_matrix(fold_sv, model.breakpoints, counts)
    counts *= (V / n) / np.sqrt(model.widths)
    return counts


def _coeff_matrix_basis(values, folds, basis):
    v = np.asarray(values, dtype=float)
    V = folds.V
    n = v.size
    rows = [basis(v[blk]).sum(axis=0) * (V / n) for blk in folds.blocks]
    return np.vstack(rows)


def _gram_reduce(a: np.ndarray):
    """S and T through the Gram matrix; streamed when V x V exceeds the cap."""
    V = a.shape[0]
    if V * V <= C_MATRIX_MAX_ENTRIES:
        c = a @ a.T
        return c, float(c.sum()), float(np.trace(c))
    col = a.sum(axis=0)
    return None, float(np.dot(col, col)), float(np.einsum("ij,ij->", a, a))


def vf_aggregates(values, model: HistogramModel | None, folds, basis=None,
                  kernels=None) -> VfAggregates:
    """The fold aggregates of the fast algorithm, for inspection and tests."""
    v = as_sample(values)
    _require_exact(folds, v.size)
    if basis is not None:
        a = _coeff_matrix_basis(v, folds, basis)
    elif model is not None:
        a = _coeff_matrix_hist(v, model, folds, get_kernels() if kernels is None else kernels)
    else:
        raise ValueError("need a model or a basis callback")
    c, s, t = _gram_reduce(a)
    return VfAggregates(a=a, c=c, s=s, t=t)


def _outputs_from_sums(s: float, t: float, V: int):
    emp = -s / V**2
    vfcv = t / (V * (V - 1.0)) - (s - t) / (V - 1.0) ** 2
    pen_scaled = (vfcv - emp) * (V - 0.5) / (V - 1.0)
    return emp, vfcv, pen_scaled


def vf_fast(values, model: HistogramModel | None, folds, basis=None, kernels=None):
    """Fast V-fold evaluation: (empirical risk, V-fold CV value, scaled penalty)."""
    agg = vf_aggregates(values, model, folds, basis=basis, kernels=kernels)
    return _outputs_from_sums(agg.s, agg.t, folds.V)


def vf_naive(values, model: HistogramModel | None, folds, basis=None):
    """Reference V-fold evaluation by explicit per-fold retraining, O(n V d).

    Each fold trains its estimator from scratch on the complement (basis
    evaluation over all training points), then evaluates the hold-out
    criterion and the penalty terms from their definitions.
    """
    v = as_sample(values)
    _require_exact(folds, v.size)
    if basis is None:
        if model is None:
            raise ValueError("need a model or a basis callback")
        basis = hist_basis(model)
    V = folds.V
    n = v.size
    crit_sum = 0.0
    pen_sum = 0.0
    for blk in folds.blocks:
        train_mask = np.ones(n, dtype=bool)
        train_mask[blk] = False
        train_phi = basis(v[train_mask])
        alpha = train_phi.sum(axis=0) / train_phi.shape[0]
        norm_sq = np.dot(alpha, alpha)
        test_phi = basis(v[blk])
        q = np.dot(test_phi.sum(axis=0) / blk.size, alpha)    # test-block fit
        r = np.dot(train_phi.sum(axis=0) / train_phi.shape[0], alpha)
        crit_sum += norm_sq - 2.0 * q
        pen_sum += r - q
    vfcv = crit_sum / V
    full_phi = basis(v)
    alpha_full = full_phi.sum(axis=0) / n
    emp = np.dot(alpha_full, alpha_full) - 2.0 * np.dot(full_phi.sum(axis=0) / n, alpha_full)
    pen_half = (2.0 * (V - 0.5) / V**2) * pen_sum             # penalty at x = V - 1/2
    pen_scaled = pen_half * (V - 0.5) / (V - 1.0)
    return float(emp), float(vfcv), float(pen_scaled)


# -- benchmark ----------------------------------------------------------------


@dataclass(frozen=True)
class BenchRow:
    algorithm: str
    n: int
    v: int
    d: int
    median_ns: float
    iqr_ns: float


def _single_thread_blas():
    """Pin BLAS to one thread during measurements, when threadpoolctl exists."""
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        import contextlib

        return contextlib.nullcontext()
    return threadpool_limits(limits=1)


def _time_call(fn, repeats):
    times = np.empty(repeats)
    with _single_thread_blas():
        for r in range(repeats):
            t0 = time.perf_counter_ns()
            fn()
            times[r] = time.perf_counter_ns() - t0
    q25, q50, q75 = np.percentile(times, [25, 50, 75])
    return float(q50), float(q75 - q25)


def bench_kernels(n_list, v_list, d_list, repeats: int = 20, seed: int = 0,
                  compare_backends: bool = False, algorithms=("fast", "naive")):
    """Median/IQR wall-clock times of the fast and naive kernels on a grid.

    Grid points where V does not divide n are skipped.  With
    compare_backends=True the fast kernel is also timed on the pure-numpy
    fallback (algorithm "fast[numpy]").
    """
    from .criteria import make_folds

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    rows = []
    for n in n_list:
        for v_folds in v_list:
            if v_folds < 2 or v_folds > n or n % v_folds != 0:
                continue
            for d in d_list:
                values = rng.random(n)
                model = custom_model(np.arange(d + 1) / d, id=f"bench:{d}")
                folds = make_folds(n, v_folds)
                if "fast" in algorithms:
                    vf_fast(values, model, folds)  # warm up JIT outside the timer
                    med, iqr = _time_call(lambda: vf_fast(values, model, folds), repeats)
                    rows.append(BenchRow("fast", n, v_folds, d, med, iqr))
                if "naive" in algorithms:
                    med, iqr = _time_call(lambda: vf_naive(values, model, folds), repeats)
                    rows.append(BenchRow("naive", n, v_folds, d, med, iqr))
                if compare_backends and JIT_ENABLED and "fast" in algorithms:
                    np_kernels = get_kernels("numpy")
                    med, iqr = _time_call(
                        lambda: vf_fast(values, model, folds, kernels=np_kernels), repeats
                    )
                    rows.append(BenchRow("fast[numpy]", n, v_folds, d, med, iqr))
    return rows
