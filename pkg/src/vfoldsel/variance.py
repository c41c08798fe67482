"""Exact variance formulas for penalized criteria and their increments.

Everything here is analytic: the basis-covariance sums are computed from
exact bin-overlap probabilities, and the variance of the piecewise-constant
statistics is taken over the common refinement of the two partitions.
Monte Carlo appears only in the validation suite, never in these formulas.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .densities import TrueDensity
from .models import HistogramModel


@dataclass(frozen=True)
class BetaTerms:
    """Squared basis-covariance sums for a pair of models."""

    beta_11: float
    beta_22: float
    beta_12: float
    b_incr: float  # beta_11 + beta_22 - 2 beta_12, clamped at zero


@dataclass(frozen=True)
class VarianceReport:
    """An analytic variance with its term decomposition and optional MC check."""

    analytic: float
    first_term: float            # carries the covariance sum and the V (or tau) factor
    second_term: float           # variance of the piecewise-constant statistic
    third_term: float = 0.0      # split-asymmetry term; hold-out only
    mc_estimate: float | None = None
    mc_se: float | None = None


# -- refinement machinery ------------------------------------------------------


def _refinement(density: TrueDensity, m1: HistogramModel, m2: HistogramModel):
    """Common refinement cells: probabilities and owning-bin indices in m1, m2."""
    edges = np.union1d(m1.breakpoints, m2.breakpoints)
    p_cell = density.bin_probs(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    i1 = np.clip(np.searchsorted(m1.breakpoints, mid, side="right") - 1, 0, m1.dim - 1)
    i2 = np.clip(np.searchsorted(m2.breakpoints, mid, side="right") - 1, 0, m2.dim - 1)
    return p_cell, i1, i2


def _model_tables(density, model):
    p = density.bin_probs(model.breakpoints)
    inv_mu = 1.0 / model.widths
    return p, inv_mu


def beta(density: TrueDensity, m1: HistogramModel, m2: HistogramModel) -> float:
    """Sum of squared covariances between the two indicator bases.

    Computed in O(d1 + d2) by merging breakpoints: only overlapping bin pairs
    contribute beyond a rank-one correction.
    """
    p1, im1 = _model_tables(density, m1)
    p2, im2 = _model_tables(density, m2)
    p_cell, i1, i2 = _refinement(density, m1, m2)
    overlap = p_cell * (p_cell - 2.0 * p1[i1] * p2[i2]) * im1[i1] * im2[i2]
    norm1 = float(np.dot(p1 * p1, im1))
    norm2 = float(np.dot(p2 * p2, im2))
    return float(overlap.sum() + norm1 * norm2)


def beta_terms(density: TrueDensity, m1: HistogramModel, m2: HistogramModel) -> BetaTerms:
    b11 = beta(density, m1, m1)
    b22 = beta(density, m2, m2)
    b12 = beta(density, m1, m2)
    incr = b11 + b22 - 2.0 * b12
    if incr < -1e-10:
        raise AssertionError(f"increment covariance sum is negative: {incr}")
    return BetaTerms(beta_11=b11, beta_22=b22, beta_12=b12, b_incr=max(incr, 0.0))


def beta_increment(density: TrueDensity, m1: HistogramModel, m2: HistogramModel) -> float:
    return beta_terms(density, m1, m2).b_incr


def beta_regular_nested(density: TrueDensity, coarse: HistogramModel,
                        fine: HistogramModel) -> float:
    """Closed form for beta when `coarse` is regular and `fine` refines it."""
    w = coarse.widths
    if np.max(w) - np.min(w) > 1e-12:
        raise ValueError("the coarse model must be a regular partition")
    if not set(np.asarray(coarse.breakpoints)).issubset(set(np.asarray(fine.breakpoints))):
        raise ValueError("the fine model must refine the coarse one")
    p1, im1 = _model_tables(density, coarse)
    p2, im2 = _model_tables(density, fine)
    p_cell, i1, i2 = _refinement(density, coarse, fine)
    s1 = p1 * im1
    s2 = p2 * im2
    cross = float(np.dot(p_cell, s1[i1] * s2[i2]))   # E[s_coarse(x) s_fine(x)]
    norm1 = float(np.dot(p1, s1))
    norm2 = float(np.dot(p2, s2))
    return coarse.dim * norm2 - 2.0 * cross + norm1 * norm2


# -- moment helpers --------------------------------------------------------------


def _pair_moments(density, m1, m2):
    """Moments of the differences of projections and sup statistics."""
    p1, im1 = _model_tables(density, m1)
    p2, im2 = _model_tables(density, m2)
    p_cell, i1, i2 = _refinement(density, m1, m2)
    ds = p1[i1] * im1[i1] - p2[i2] * im2[i2]     # s_m1 - s_m2 per cell
    dpsi = im1[i1] - im2[i2]                     # sup statistic difference per cell
    return p_cell, ds, dpsi


def _discrete_var(p, x):
    mean = float(np.dot(p, x))
    return float(np.dot(p, x * x)) - mean * mean


def _discrete_cov(p, x, y):
    return float(np.dot(p, x * y)) - float(np.dot(p, x)) * float(np.dot(p, y))


def _combo_var(p, s_vals, psi_vals, a, b):
    """Var(a * s(x) + b * psi(x)) for piecewise-constant s, psi."""
    return (
        a * a * _discrete_var(p, s_vals)
        + 2.0 * a * b * _discrete_cov(p, s_vals, psi_vals)
        + b * b * _discrete_var(p, psi_vals)
    )


# -- variance formulas ------------------------------------------------------------


def var_criterion(density: TrueDensity, model: HistogramModel, n: int, V: int,
                  C: float) -> VarianceReport:
    """Variance of the V-fold penalized criterion for one model."""
    _check_nv(n, V)
    b11 = beta(density, model, model)
    p, im = _model_tables(density, model)
    s_vals = p * im
    first = 2.0 / n**2 * (1.0 + 4.0 * C**2 / (V - 1.0) - (2.0 * C - 1.0) ** 2 / n) * b11
    a = 1.0 + (2.0 * C - 1.0) / n
    b = -(2.0 * C - 1.0) / (2.0 * n)
    second = 4.0 / n * _combo_var(p, s_vals, im, a, b)
    return VarianceReport(first + second, first, second)


def var_increment(density: TrueDensity, m1: HistogramModel, m2: HistogramModel,
                  n: int, V: int, C: float) -> VarianceReport:
    """Variance of the difference of V-fold penalized criteria at two models."""
    _check_nv(n, V)
    b_incr = beta_terms(density, m1, m2).b_incr
    p, ds, dpsi = _pair_moments(density, m1, m2)
    first = 2.0 / n**2 * (1.0 + 4.0 * C**2 / (V - 1.0) - (2.0 * C - 1.0) ** 2 / n) * b_incr
    a = 1.0 + (2.0 * C - 1.0) / n
    b = -(2.0 * C - 1.0) / (2.0 * n)
    second = 4.0 / n * _combo_var(p, ds, dpsi, a, b)
    return VarianceReport(first + second, first, second)


def var_ideal(density: TrueDensity, m1: HistogramModel, m2: HistogramModel,
              n: int) -> VarianceReport:
    """Variance of the increment of the expected-ideal-penalty criterion.

    The sign of the sup-statistic weight is +1/(2n) here, opposite to the
    V-fold case; this is the convention validated by the Monte Carlo suite.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    b_incr = beta_terms(density, m1, m2).b_incr
    p, ds, dpsi = _pair_moments(density, m1, m2)
    first = 2.0 / n**2 * (1.0 - 1.0 / n) * b_incr
    second = 4.0 / n * _combo_var(p, ds, dpsi, 1.0 - 1.0 / n, 1.0 / (2.0 * n))
    return VarianceReport(first + second, first, second)


def var_holdout(density: TrueDensity, m1: HistogramModel, m2: HistogramModel,
                n: int, tau: float, C: float) -> VarianceReport:
    """Variance of the increment of the hold-out penalized criterion."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie strictly between 0 and 1")
    if abs(tau * n - round(tau * n)) > 1e-9:
        raise ValueError(f"tau * n must be an integer, got tau={tau}, n={n}")
    b_incr = beta_terms(density, m1, m2).b_incr
    p, ds, dpsi = _pair_moments(density, m1, m2)
    first = 2.0 / n**2 * (1.0 + 4.0 * C**2 - (2.0 * C - 1.0) ** 2 / n) * b_incr
    a = 1.0 + (2.0 * C - 1.0) / n
    b = -(2.0 * C - 1.0) / (2.0 * n)
    second = 4.0 / n * _combo_var(p, ds, dpsi, a, b)
    split_factor = (1.0 - 2.0 * tau) ** 2 / (tau * (1.0 - tau))
    diag_var = _combo_var(p, ds, dpsi, -2.0, 1.0)    # Var(dpsi - 2 ds)
    third = 4.0 * C**2 / n**3 * split_factor * (diag_var - 2.0 * b_incr)
    return VarianceReport(first + second + third, first, second, third)


def expected_delta(density: TrueDensity, m1: HistogramModel, m2: HistogramModel,
                   n: int, C: float) -> float:
    """Expected criterion gap between two models under a bias constant C."""
    from .projection import true_projection

    s1 = true_projection(density, m1)
    s2 = true_projection(density, m2)
    return (s1.bias_sq - s2.bias_sq) + (2.0 * C - 1.0) * (s1.d_cal - s2.d_cal) / n


def _check_nv(n, V):
    if n < 2:
        raise ValueError("n must be >= 2")
    if V < 2 or V > n:
        raise ValueError(f"need 2 <= V <= n, got V={V}, n={n}")
