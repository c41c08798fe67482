"""Projection estimators, empirical risk, true losses and per-model statistics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import get_kernels
from ._pack import density_tables, pack_collection
from .densities import TrueDensity
from .models import HistogramModel, ModelCollection


def as_sample(values) -> np.ndarray:
    """Validate and return sample values as a float array in [0, 1]."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("a sample must be a non-empty 1-d array")
    if not np.all(np.isfinite(v)):
        raise ValueError("sample values must be finite")
    if np.any(v < 0.0) or np.any(v > 1.0):
        raise ValueError("sample values must lie in [0, 1]")
    return v


def bin_counts(values, model: HistogramModel) -> np.ndarray:
    """Counts per model bin; interior breakpoints belong to the right bin."""
    v = as_sample(values)
    sv = np.sort(v)
    idx = np.searchsorted(sv, model.breakpoints)
    idx[0] = 0
    idx[-1] = v.size
    return np.diff(idx)


@dataclass(frozen=True)
class ProjectedEstimate:
    """Least-squares projection of the empirical measure onto a histogram model."""

    model: HistogramModel
    coeffs: np.ndarray  # coordinates in the orthonormal bin-indicator basis
    counts: np.ndarray
    n: int

    def pdf(self, x) -> np.ndarray:
        """Evaluate the estimated density (bin count / (n * bin width))."""
        x = np.asarray(x, dtype=float)
        bp = self.model.breakpoints
        k = np.clip(np.searchsorted(bp, x, side="right") - 1, 0, self.model.dim - 1)
        heights = self.counts / (self.n * self.model.widths)
        out = heights[k]
        return float(out) if out.ndim == 0 else out


def fit(values, model: HistogramModel) -> ProjectedEstimate:
    """Fit the projection estimator: coefficients count / (n * sqrt(width))."""
    counts = bin_counts(values, model)
    n = int(counts.sum())
    coeffs = counts / (n * np.sqrt(model.widths))
    return ProjectedEstimate(model=model, coeffs=coeffs, counts=counts, n=n)


def empirical_risk(est: ProjectedEstimate) -> float:
    """Minimized least-squares contrast: minus the squared estimator norm."""
    return float(-np.dot(est.coeffs, est.coeffs))


def loss(density: TrueDensity, est: ProjectedEstimate) -> float:
    """Squared L2 distance between the true density and the estimate."""
    p = density.bin_probs(est.model.breakpoints)
    s_coef = p / np.sqrt(est.model.widths)
    return float(
        density.l2_norm_sq() - 2.0 * np.dot(est.coeffs, s_coef) + np.dot(est.coeffs, est.coeffs)
    )


@dataclass(frozen=True)
class ProjectionStats:
    """Analytic statistics of the projection of a density onto one model."""

    model: HistogramModel
    sm_coeffs: np.ndarray   # basis coordinates of the projection
    norm_sm_sq: float
    p_psi: float            # expectation of the bin-wise sup statistic
    d_cal: float            # p_psi - norm_sm_sq, the variance-complexity measure
    var_sm: float
    var_psi: float
    cov_sm_psi: float
    bias_sq: float


def true_projection(density: TrueDensity, model: HistogramModel) -> ProjectionStats:
    """All moments of the projected density and the sup statistic over bins."""
    p = density.bin_probs(model.breakpoints)
    inv_mu = 1.0 / model.widths
    sm_vals = p * inv_mu                      # value of the projection on each bin
    norm_sm_sq = float(np.dot(p, sm_vals))
    p_psi = float(np.dot(p, inv_mu))
    e_sm2 = float(np.dot(p, sm_vals * sm_vals))
    e_psi2 = float(np.dot(p, inv_mu * inv_mu))
    e_sm_psi = float(np.dot(p, sm_vals * inv_mu))
    return ProjectionStats(
        model=model,
        sm_coeffs=p * np.sqrt(inv_mu),
        norm_sm_sq=norm_sm_sq,
        p_psi=p_psi,
        d_cal=max(p_psi - norm_sm_sq, 0.0),
        var_sm=max(e_sm2 - norm_sm_sq * norm_sm_sq, 0.0),
        var_psi=max(e_psi2 - p_psi * p_psi, 0.0),
        cov_sm_psi=e_sm_psi - norm_sm_sq * p_psi,
        bias_sq=max(density.l2_norm_sq() - norm_sm_sq, 0.0),
    )


def losses_over_collection(density: TrueDensity, collection: ModelCollection, values) -> np.ndarray:
    """True loss of the fitted estimator for every model in the collection."""
    v = as_sample(values)
    sv = np.sort(v)
    pack = pack_collection(collection)
    tables = density_tables(pack, density)
    k = get_kernels()
    counts = np.empty(pack.n_bins, dtype=np.float64)
    k.bin_counts_all(sv, pack.edges, pack.e_off, pack.b_off, counts)
    emp = np.empty(pack.n_models)
    lo = np.empty(pack.n_models)
    k.emp_loss_all(counts, pack.b_off, pack.inv_mu, tables.pbin, v.size, tables.norm_s_sq, emp, lo)
    return lo


def argmin_with_ties(values: np.ndarray, dims: np.ndarray) -> int:
    """Index of the smallest value; ties go to the smaller dimension, then order."""
    best = values.min()
    tied = np.flatnonzero(values == best)
    if tied.size == 1:
        return int(tied[0])
    return int(tied[np.argmin(dims[tied])])


def oracle_model(density: TrueDensity, collection: ModelCollection, values):
    """The loss-minimizing model for this sample: (model id, loss value)."""
    if len(collection) == 0:
        raise ValueError("empty model collection")
    lo = losses_over_collection(density, collection, values)
    i = argmin_with_ties(lo, collection.dims)
    return collection[i].id, float(lo[i])
