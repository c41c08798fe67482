"""Known target densities on [0, 1]: sampling, CDF evaluation and L2 quantities.

Supported building blocks are piecewise-linear densities and Gaussians
truncated to [0, 1]; arbitrary finite mixtures of the two can be formed.
The benchmark targets "L" (piecewise linear with a kink), "S" (spike
mixture) and "uniform" are provided by :func:`make_setting`.
"""

from __future__ import annotations

import json
import math

import numpy as np

from ._quadrature import adaptive_simpson

_SQRT2 = math.sqrt(2.0)
_ERFC = np.frompyfunc(math.erfc, 1, 1)


def _std_normal_cdf(z):
    """Standard normal CDF, vectorized, accurate to ~1e-16 (uses erfc)."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 0:
        return 0.5 * math.erfc(-float(z) / _SQRT2)
    return 0.5 * _ERFC(-z / _SQRT2).astype(float)


class _PiecewiseLinearPart:
    """Density that linearly interpolates `values` at `breakpoints` on [0,1]."""

    def __init__(self, breakpoints, values):
        bp = np.asarray(breakpoints, dtype=float)
        va = np.asarray(values, dtype=float)
        if bp.ndim != 1 or bp.size < 2 or va.shape != bp.shape:
            raise ValueError("breakpoints and values must be 1-d arrays of equal length >= 2")
        if bp[0] != 0.0 or bp[-1] != 1.0:
            raise ValueError("piecewise-linear breakpoints must start at 0 and end at 1")
        if np.any(np.diff(bp) <= 0):
            raise ValueError("piecewise-linear breakpoints must be strictly increasing")
        if np.any(va < -1e-12):
            raise ValueError("piecewise-linear density values must be nonnegative")
        va = np.maximum(va, 0.0)
        w = np.diff(bp)
        piece_mass = 0.5 * w * (va[:-1] + va[1:])
        total = float(piece_mass.sum())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"piecewise-linear density integrates to {total}, not 1")
        self.breakpoints = bp
        self.values = va
        self.cum = np.concatenate([[0.0], np.cumsum(piece_mass)])
        self.cum[-1] = 1.0

    def pdf(self, x):
        return np.interp(x, self.breakpoints, self.values)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        k = np.clip(np.searchsorted(self.breakpoints, x, side="right") - 1, 0, self.breakpoints.size - 2)
        a = self.breakpoints[k]
        w = self.breakpoints[k + 1] - a
        va = self.values[k]
        slope = (self.values[k + 1] - va) / w
        t = x - a
        return self.cum[k] + va * t + 0.5 * slope * t * t

    def ppf(self, u):
        """Inverse CDF; u in [0, 1]. Quadratic solve within the owning piece."""
        u = np.asarray(u, dtype=float)
        k = np.clip(np.searchsorted(self.cum, u, side="right") - 1, 0, self.breakpoints.size - 2)
        # pieces of zero mass are never selected for u in their (empty) range,
        # except exactly at the boundary; nudge to the next piece with mass
        while np.any(self.cum[k + 1] - self.cum[k] <= 0):
            k = np.where(self.cum[k + 1] - self.cum[k] <= 0, k + 1, k)
        a = self.breakpoints[k]
        w = self.breakpoints[k + 1] - a
        va = self.values[k]
        slope = (self.values[k + 1] - va) / w
        q = u - self.cum[k]
        disc = np.maximum(va * va + 2.0 * slope * q, 0.0)
        denom = va + np.sqrt(disc)
        t = np.where(denom > 0, 2.0 * q / np.where(denom > 0, denom, 1.0), 0.0)
        return np.minimum(a + t, self.breakpoints[k + 1])

    def sample(self, n, rng):
        return self.ppf(rng.random(n))

    def norm_sq(self):
        va, vb = self.values[:-1], self.values[1:]
        return float(np.sum(np.diff(self.breakpoints) * (va * va + va * vb + vb * vb) / 3.0))

    def knots(self):
        return list(self.breakpoints)


class _TruncatedGaussianPart:
    """Gaussian with given mean/sd truncated to [0, 1] and renormalized."""

    def __init__(self, mean, sd):
        if not sd > 0:
            raise ValueError("sd must be positive")
        self.mean = float(mean)
        self.sd = float(sd)
        self.lo_cdf = _std_normal_cdf((0.0 - self.mean) / self.sd)
        self.mass = _std_normal_cdf((1.0 - self.mean) / self.sd) - self.lo_cdf
        if self.mass < 1e-12:
            raise ValueError("truncated Gaussian keeps almost no mass on [0, 1]")

    def pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / self.sd
        return np.exp(-0.5 * z * z) / (self.sd * math.sqrt(2.0 * math.pi) * self.mass)

    def cdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / self.sd
        return (_std_normal_cdf(z) - self.lo_cdf) / self.mass

    def sample(self, n, rng):
        # rejection from the untruncated normal; acceptance ~1 for the
        # benchmark components (support misses only far tails)
        out = rng.normal(self.mean, self.sd, n)
        bad = (out < 0.0) | (out > 1.0)
        while np.any(bad):
            out[bad] = rng.normal(self.mean, self.sd, int(bad.sum()))
            bad = (out < 0.0) | (out > 1.0)
        return out

    def norm_sq(self):
        return None  # no closed form used; owner integrates numerically

    def knots(self):
        return [self.mean]


class TrueDensity:
    """A known density s on [0, 1]: a weighted mixture of simple parts.

    Immutable after construction; the L2 norm is cached on first use.
    Sampling always takes an explicit seed or generator.
    """

    def __init__(self, parts, weights, name="custom"):
        weights = np.asarray(weights, dtype=float)
        if len(parts) != weights.size or len(parts) == 0:
            raise ValueError("need one weight per mixture part")
        if np.any(weights < 0):
            raise ValueError("mixture weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixture weights sum to {weights.sum()}, not 1")
        self._parts = tuple(parts)
        self._weights = weights
        self.name = name
        self._norm_sq = None

    # -- evaluation ---------------------------------------------------------

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x, dtype=float)
        for w, p in zip(self._weights, self._parts):
            out = out + w * p.pdf(x)
        return float(out) if out.ndim == 0 else out

    def cdf(self, x):
        xa = np.asarray(x, dtype=float)
        if np.any(xa < 0.0) or np.any(xa > 1.0):
            raise ValueError("cdf argument outside [0, 1]")
        out = np.zeros_like(xa, dtype=float)
        for w, p in zip(self._weights, self._parts):
            out = out + w * p.cdf(xa)
        out = np.clip(out, 0.0, 1.0)
        return float(out) if out.ndim == 0 else out

    def bin_prob(self, a: float, b: float) -> float:
        """P([a, b)) = cdf(b) - cdf(a), clamped to [0, 1]."""
        if not (0.0 <= a < b <= 1.0):
            raise ValueError(f"need 0 <= a < b <= 1, got a={a}, b={b}")
        return float(min(max(self.cdf(b) - self.cdf(a), 0.0), 1.0))

    def bin_probs(self, edges) -> np.ndarray:
        """Probabilities of the bins delimited by sorted `edges`."""
        return np.maximum(np.diff(self.cdf(np.asarray(edges, dtype=float))), 0.0)

    # -- sampling -----------------------------------------------------------

    def sample(self, n: int, seed: int) -> np.ndarray:
        """n i.i.d. draws, deterministic for a given seed."""
        return self.sample_with(n, np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed))))

    def sample_with(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if n < 1:
            raise ValueError("sample size must be >= 1")
        if len(self._parts) == 1:
            return self._parts[0].sample(n, rng)
        comp = rng.choice(len(self._parts), size=n, p=self._weights)
        out = np.empty(n, dtype=float)
        for i, p in enumerate(self._parts):
            idx = np.flatnonzero(comp == i)
            if idx.size:
                out[idx] = p.sample(idx.size, rng)
        return out

    # -- L2 quantities ------------------------------------------------------

    def l2_norm_sq(self) -> float:
        """The squared L2 norm of the density (cached)."""
        if self._norm_sq is None:
            if len(self._parts) == 1 and isinstance(self._parts[0], _PiecewiseLinearPart):
                self._norm_sq = self._parts[0].norm_sq()
            else:
                self._norm_sq = adaptive_simpson(
                    lambda x: float(self.pdf(x)) ** 2, 0.0, 1.0, tol=1e-10, breakpoints=self.knots()
                )
        return self._norm_sq

    def knots(self):
        """Points where the pdf is non-smooth or sharply peaked (for quadrature)."""
        out = set()
        for p in self._parts:
            out.update(p.knots())
        return sorted(x for x in out if 0.0 < x < 1.0)


def _uniform() -> TrueDensity:
    return TrueDensity([_PiecewiseLinearPart([0.0, 1.0], [1.0, 1.0])], [1.0], name="uniform")


def make_setting(which: str) -> TrueDensity:
    """Build one of the benchmark densities: "L", "S" or "uniform"."""
    key = str(which).strip().lower()
    if key == "uniform":
        return _uniform()
    if key == "l":
        # 10x/3 on [0, 1/3), 1 + x/3 on [1/3, 1]; continuous at the kink
        part = _PiecewiseLinearPart([0.0, 1.0 / 3.0, 1.0], [0.0, 10.0 / 9.0, 4.0 / 3.0])
        return TrueDensity([part], [1.0], name="L")
    if key == "s":
        parts = [_PiecewiseLinearPart([0.0, 0.5, 1.0], [0.0, 0.0, 4.0])]
        weights = [0.8]
        for k in range(1, 5):
            parts.append(_TruncatedGaussianPart(k / 10.0, 1.0 / 60.0))
            weights.append(0.05)
        return TrueDensity(parts, weights, name="S")
    raise ValueError(f"unknown density setting {which!r} (expected L, S or uniform)")


def from_json(spec) -> TrueDensity:
    """Build a density from a JSON object or JSON string.

    Schema: {"kind": "L" | "S" | "uniform"}, or
    {"kind": "piecewise", "breakpoints": [...], "values": [...]}, or
    {"kind": "mixture", "components": [{"weight": w, "kind": "piecewise", ...} |
    {"weight": w, "kind": "gaussian", "mean": m, "sd": s}, ...]}.
    """
    if isinstance(spec, str):
        spec = json.loads(spec)
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValueError("density spec must be an object with a 'kind' field")
    kind = str(spec["kind"]).lower()
    if kind in ("l", "s", "uniform"):
        return make_setting(kind)
    if kind == "piecewise":
        part = _PiecewiseLinearPart(spec["breakpoints"], spec["values"])
        return TrueDensity([part], [1.0], name=spec.get("name", "piecewise"))
    if kind == "mixture":
        parts, weights = [], []
        for comp in spec["components"]:
            ck = str(comp["kind"]).lower()
            if ck == "piecewise":
                parts.append(_PiecewiseLinearPart(comp["breakpoints"], comp["values"]))
            elif ck == "gaussian":
                parts.append(_TruncatedGaussianPart(comp["mean"], comp["sd"]))
            else:
                raise ValueError(f"unknown mixture component kind {comp['kind']!r}")
            weights.append(float(comp["weight"]))
        return TrueDensity(parts, weights, name=spec.get("name", "mixture"))
    raise ValueError(f"unknown density kind {spec['kind']!r}")
