"""Selection-probability proxy: signal-to-noise ratios and Gaussian tails.

For each model, the proxy compares the expected criterion gap to its
standard deviation against every competitor; the Gaussian upper tail of the
worst ratio approximates how often the model gets selected.  A Monte Carlo
selection distribution is provided for the comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .criteria import CriterionSpec
from .densities import TrueDensity
from .models import ModelCollection
from .projection import argmin_with_ties
from .variance import expected_delta, var_ideal, var_increment

_SQRT2 = math.sqrt(2.0)


def phi_bar(t: float) -> float:
    """Standard normal upper tail P(Z > t); exact at +-inf markers."""
    if math.isnan(t):
        raise ValueError("phi_bar needs a real argument")
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    return 0.5 * math.erfc(t / _SQRT2)


def m_star(density: TrueDensity, collection: ModelCollection, n: int) -> int:
    """Index of the model minimizing the expected loss bias^2 + D/n."""
    from .projection import true_projection

    risk = np.empty(len(collection))
    for i, m in enumerate(collection):
        st = true_projection(density, m)
        risk[i] = st.bias_sq + st.d_cal / n
    return argmin_with_ties(risk, collection.dims)


def _gap_stats(spec: CriterionSpec, n: int):
    """Map a criterion spec onto (bias constant, variance function)."""
    kind = spec.kind
    over = spec.overpen
    if kind == "penvf":
        c_eff = over * spec.c
        v = spec.v
        return c_eff, lambda d, m1, m2: var_increment(d, m1, m2, n, v, c_eff).analytic
    if kind == "vfcv":
        v = spec.v
        c_eff = over * (v - 0.5) / (v - 1.0)
        return c_eff, lambda d, m1, m2: var_increment(d, m1, m2, n, v, c_eff).analytic
    if kind == "corrvfcv":
        v = spec.v
        c_eff = over
        return c_eff, lambda d, m1, m2: var_increment(d, m1, m2, n, v, c_eff).analytic
    if kind == "lpo":
        ratio = n / spec.p
        c_eff = over * (ratio - 0.5) / (ratio - 1.0)
        return c_eff, lambda d, m1, m2: var_increment(d, m1, m2, n, n, c_eff).analytic
    if kind == "ideal":
        c_eff = over * spec.c
        return c_eff, lambda d, m1, m2: var_ideal(d, m1, m2, n).analytic
    raise NotImplementedError(f"no analytic gap distribution for criterion kind {kind!r}")


def sr(density: TrueDensity, collection: ModelCollection, m, n: int, V: int,
       C: float = 1.0) -> float:
    """Worst-case mean-to-sd ratio of criterion gaps against all competitors.

    `m` may be a model index or a model id.  Gaps with zero variance resolve
    to +inf when the mean is positive (the model never wins that comparison)
    and to -inf otherwise.
    """
    spec = CriterionSpec(kind="penvf", v=V, c=C)
    return float(sr_values(density, collection, n, spec, only=m)[0])


def sr_values(density: TrueDensity, collection: ModelCollection, n: int,
              spec: CriterionSpec, only=None) -> np.ndarray:
    """Signal-to-noise ratio per model (or for one model when `only` is given)."""
    if len(collection) < 2:
        raise ValueError("need at least two models")
    c_eff, var_fn = _gap_stats(spec, n)
    if only is None:
        targets = range(len(collection))
    else:
        targets = [collection.index_of(only) if isinstance(only, str) else int(only)]
    out = np.empty(len(targets))
    for pos, i in enumerate(targets):
        best = -math.inf
        for j in range(len(collection)):
            if j == i:
                continue
            mean = expected_delta(density, collection[i], collection[j], n, c_eff)
            var = var_fn(density, collection[i], collection[j])
            if var > 0.0:
                ratio = mean / math.sqrt(var)
            elif mean > 1e-14:
                ratio = math.inf
            else:
                ratio = -math.inf
            if ratio > best:
                best = ratio
        out[pos] = best
    return out


@dataclass(frozen=True)
class HeuristicReport:
    """Per-model selection frequencies with their analytic proxies."""

    spec: CriterionSpec
    n: int
    n_replicates: int
    model_ids: tuple
    dims: np.ndarray
    sr: np.ndarray
    phi_bar_sr: np.ndarray
    freq: np.ndarray
    freq_se: np.ndarray
    m_star_id: str
    renormalized: bool

    def csv_header(self):
        return ["m_dim", "sr", "phi_bar_sr", "freq", "freq_se"]

    def csv_rows(self):
        for i in range(len(self.model_ids)):
            yield [int(self.dims[i]), self.sr[i], self.phi_bar_sr[i],
                   self.freq[i], self.freq_se[i]]


def selection_distribution(density: TrueDensity, collection: ModelCollection, n: int,
                           spec: CriterionSpec, N: int, seed: int,
                           threads: int | None = None,
                           renormalize: bool = False) -> HeuristicReport:
    """Monte Carlo selection frequencies next to the analytic tail proxy."""
    from .experiments import selection_counts

    if N < 1:
        raise ValueError("need at least one replicate")
    counts = selection_counts(density, collection, n, spec, N, seed, threads=threads)
    freq = counts / N
    freq_se = np.sqrt(freq * (1.0 - freq) / N)
    ratios = sr_values(density, collection, n, spec)
    tails = np.array([phi_bar(t) for t in ratios])
    if renormalize:
        total = tails.sum()
        if total > 0:
            tails = tails / total
    star = m_star(density, collection, n)
    return HeuristicReport(
        spec=spec,
        n=n,
        n_replicates=N,
        model_ids=tuple(m.id for m in collection),
        dims=collection.dims,
        sr=ratios,
        phi_bar_sr=tails,
        freq=freq,
        freq_se=freq_se,
        m_star_id=collection[star].id,
        renormalized=renormalize,
    )
