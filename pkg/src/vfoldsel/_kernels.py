"""Hot numeric kernels, JIT-compiled with numba when available.

Every kernel is plain numpy code that numba can compile in nopython mode;
the same source therefore doubles as the pure-numpy fallback.  Set the
environment variable ``VFOLDSEL_NO_NUMBA=1`` to force the fallback (used by
the benchmark to compare both backends).

All kernels work on a packed model layout: the breakpoints of every model
in a collection are concatenated into one array with offset tables, so a
single call processes the whole collection.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_FORCE_NUMPY = os.environ.get("VFOLDSEL_NO_NUMBA", "").strip().lower() in {"1", "true", "yes"}
JIT_ENABLED = numba is not None and not _FORCE_NUMPY


# -- kernel bodies (numba-compilable numpy) ----------------------------------


def _bin_counts_all(sv, edges, e_off, b_off, out_counts):
    """Per-model bin counts of the sorted sample sv.

    Bins are right-open except the last, which is closed; a value equal to an
    interior breakpoint belongs to the bin on its right.
    """
    n = sv.size
    n_models = e_off.size - 1
    for m in range(n_models):
        s, e = e_off[m], e_off[m + 1]
        idx = np.searchsorted(sv, edges[s:e])
        idx[0] = 0
        idx[-1] = n
        bs, be = b_off[m], b_off[m + 1]
        out_counts[bs:be] = (idx[1:] - idx[:-1]).astype(np.float64)


def _emp_loss_all(counts, b_off, inv_mu, pbin, n, norm_s_sq, out_emp, out_loss):
    """Empirical risk and true loss per model from full-sample bin counts."""
    n_models = b_off.size - 1
    nn = float(n) * float(n)
    for m in range(n_models):
        bs, be = b_off[m], b_off[m + 1]
        c = counts[bs:be]
        im = inv_mu[bs:be]
        acc_nsq = np.dot(c * c, im)
        acc_pl = np.dot(c, pbin[bs:be] * im)
        out_emp[m] = -acc_nsq / nn
        out_loss[m] = norm_s_sq - 2.0 * acc_pl / n + acc_nsq / nn


def _loo_pen_unit_all(counts, b_off, inv_mu, n, out_pen):
    """Leave-one-out penalty at unit scale, closed form from total counts."""
    n_models = b_off.size - 1
    denom = float(n) * float(n) * (n - 1.0) * (n - 1.0)
    for m in range(n_models):
        bs, be = b_off[m], b_off[m + 1]
        c = counts[bs:be]
        out_pen[m] = 2.0 * np.dot(c * (n - c), inv_mu[bs:be]) / denom


def _vf_stats_all(fold_sv, edges, e_off, b_off, inv_mu, out_emp, out_vfcv):
    """V-fold criterion aggregates per model, for an exactly regular partition.

    fold_sv has shape (V, n/V): the values of each fold, sorted within the
    fold.  Outputs the empirical risk and the V-fold cross-validation value
    per model.  Accumulation order is fold-major and fixed, for cross-run
    determinism.
    """
    V, npf = fold_sv.shape
    n = V * npf
    n_models = e_off.size - 1
    vf = float(V)
    scale = (vf / n) * (vf / n)
    for m in range(n_models):
        s, e = e_off[m], e_off[m + 1]
        bs, be = b_off[m], b_off[m + 1]
        d = e - s - 1
        im = inv_mu[bs:be]
        tot = np.zeros(d, dtype=np.float64)
        acc_csq = 0.0
        for f in range(V):
            idx = np.searchsorted(fold_sv[f], edges[s:e])
            idx[0] = 0
            idx[-1] = npf
            cf = (idx[1:] - idx[:-1]).astype(np.float64)
            tot += cf
            acc_csq += np.dot(cf * cf, im)
        acc_nsq = np.dot(tot * tot, im)
        s_stat = scale * acc_nsq
        t_stat = scale * acc_csq
        out_emp[m] = -acc_nsq / (float(n) * float(n))
        out_vfcv[m] = t_stat / (vf * (vf - 1.0)) - (s_stat - t_stat) / ((vf - 1.0) * (vf - 1.0))


def _fold_counts_matrix(fold_sv, edges, out):
    """(V, d) bin-count matrix of one model: zero the matrix, then scatter
    one increment per data point.

    Scales as V d + n log d with no per-fold allocations, so the quadratic
    Gram stage downstream stays the dominant cost for large V.
    """
    V, npf = fold_sv.shape
    d = edges.size - 1
    out[:] = 0.0
    for f in range(V):
        for j in range(npf):
            k = np.searchsorted(edges, fold_sv[f, j], side="right") - 1
            if k < 0:
                k = 0
            elif k >= d:
                k = d - 1
            out[f, k] += 1.0


_BODIES = {
    "bin_counts_all": _bin_counts_all,
    "emp_loss_all": _emp_loss_all,
    "loo_pen_unit_all": _loo_pen_unit_all,
    "vf_stats_all": _vf_stats_all,
    "fold_counts_matrix": _fold_counts_matrix,
}


@dataclass(frozen=True)
class KernelSet:
    name: str
    bin_counts_all: object
    emp_loss_all: object
    loo_pen_unit_all: object
    vf_stats_all: object
    fold_counts_matrix: object


NUMPY_KERNELS = KernelSet("numpy", **_BODIES)

if numba is not None:
    NUMBA_KERNELS = KernelSet(
        "numba",
        **{name: numba.njit(cache=True, nogil=True)(fn) for name, fn in _BODIES.items()},
    )
else:
    NUMBA_KERNELS = None

ACTIVE_KERNELS = NUMBA_KERNELS if JIT_ENABLED else NUMPY_KERNELS
BACKEND = ACTIVE_KERNELS.name


def get_kernels(backend: str | None = None) -> KernelSet:
    """Return a kernel set by name ("numba" / "numpy"), or the active one."""
    if backend is None:
        return ACTIVE_KERNELS
    if backend == "numpy":
        return NUMPY_KERNELS
    if backend == "numba":
        if NUMBA_KERNELS is None:
            raise RuntimeError("numba is not available")
        return NUMBA_KERNELS
    raise ValueError(f"unknown kernel backend {backend!r}")
