"""Histogram models (partitions of [0, 1]) and the Regu / Dya2 collections."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class HistogramModel:
    """A partition of [0, 1] into bins with strictly positive widths."""

    breakpoints: np.ndarray
    id: str

    @property
    def dim(self) -> int:
        return self.breakpoints.size - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    def __repr__(self):
        return f"HistogramModel(id={self.id!r}, dim={self.dim})"


def custom_model(breakpoints, id: str | None = None) -> HistogramModel:
    """Validate breakpoints and build a model: strictly increasing, 0 to 1."""
    bp = np.asarray(breakpoints, dtype=float)
    if bp.ndim != 1 or bp.size < 2:
        raise ValueError("need at least two breakpoints")
    if bp[0] != 0.0 or bp[-1] != 1.0:
        raise ValueError("breakpoints must start at 0 and end at 1")
    d = np.diff(bp)
    if np.any(d <= 0.0):
        raise ValueError("breakpoints must be strictly increasing (no zero-width bins)")
    return HistogramModel(bp, id if id is not None else f"custom:{bp.size - 1}bins")


@dataclass(frozen=True)
class ModelCollection:
    """An ordered collection of histogram models with unique ids."""

    name: str
    models: tuple = field(default_factory=tuple)

    def __post_init__(self):
        ids = [m.id for m in self.models]
        if len(set(ids)) != len(ids):
            raise ValueError("model ids within a collection must be unique")

    def __len__(self):
        return len(self.models)

    def __iter__(self):
        return iter(self.models)

    def __getitem__(self, i):
        return self.models[i]

    @property
    def dims(self) -> np.ndarray:
        return np.array([m.dim for m in self.models], dtype=np.int64)

    def index_of(self, model_id: str) -> int:
        for i, m in enumerate(self.models):
            if m.id == model_id:
                return i
        raise KeyError(model_id)


def regu_collection(n: int) -> ModelCollection:
    """Regular partitions of [0, 1] into m = 1..n bins."""
    if n < 1:
        raise ValueError("n must be >= 1")
    models = tuple(
        HistogramModel(np.arange(m + 1, dtype=float) / m, f"regu:{m}") for m in range(1, n + 1)
    )
    return ModelCollection("regu", models)


def dya2_ntilde(n: int) -> int:
    """floor(n / ln n), the change-point grid size of the Dya2 collection."""
    return int(math.floor(n / math.log(n)))


def dya2_collection(n: int) -> ModelCollection:
    """Two-sided dyadic histograms with a variable change-point.

    For each change-point k/ntilde (k = 1..ntilde-1) the left piece
    [0, k/ntilde) is split into 2**i equal bins (i up to log2 k) and the
    right piece into 2**j equal bins (j up to log2(ntilde - k)).  k = ntilde
    is excluded: it would produce a zero-width right piece.
    """
    if n < 3:
        raise ValueError("n must be >= 3 so that the change-point grid has >= 2 cells")
    nt = dya2_ntilde(n)
    if nt < 2:
        raise ValueError(f"n={n} gives a change-point grid of size {nt} < 2")
    models = []
    for k in range(1, nt):
        cp = k / nt
        imax = int(math.floor(math.log2(k)))
        jmax = int(math.floor(math.log2(nt - k)))
        for i in range(imax + 1):
            left = cp * np.arange(2**i + 1, dtype=float) / (2**i)
            for j in range(jmax + 1):
                right = cp + (1.0 - cp) * np.arange(1, 2**j + 1, dtype=float) / (2**j)
                bp = np.concatenate([left, right])
                bp[-1] = 1.0
                models.append(HistogramModel(bp, f"dya2:k={k},i={i},j={j}"))
    return ModelCollection("dya2", tuple(models))


def check_h1(model: HistogramModel, n: int) -> bool:
    """True iff every bin has width >= 1/n (sup-norm condition for dimension n).

    The comparison carries a one-ulp-scale slack so that bins constructed as
    exact fractions (regular partitions into n pieces) pass at the boundary.
    """
    return bool(np.min(model.widths) * n >= 1.0 - 1e-9)


def collection_by_name(name: str, n: int) -> ModelCollection:
    key = str(name).strip().lower()
    if key == "regu":
        return regu_collection(n)
    if key == "dya2":
        return dya2_collection(n)
    raise ValueError(f"unknown collection {name!r} (expected regu or dya2)")


def collection_from_json(spec, name: str = "custom") -> ModelCollection:
    """Build a collection from a JSON array of breakpoints (or array of arrays)."""
    if isinstance(spec, str):
        spec = json.loads(spec)
    if not isinstance(spec, list) or not spec:
        raise ValueError("collection spec must be a non-empty JSON array")
    if all(isinstance(x, (int, float)) for x in spec):
        spec = [spec]
    models = tuple(custom_model(bp, id=f"{name}:{i}") for i, bp in enumerate(spec))
    return ModelCollection(name, models)
