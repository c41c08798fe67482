"""Packed array layout for model collections, shared by the hot kernels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import ModelCollection


@dataclass(frozen=True)
class ModelPack:
    """Flattened breakpoints and bin geometry of a whole collection."""

    edges: np.ndarray      # concatenated breakpoints of all models
    e_off: np.ndarray      # model m owns edges[e_off[m]:e_off[m+1]]
    b_off: np.ndarray      # model m owns bins  [b_off[m]:b_off[m+1]]
    inv_mu: np.ndarray     # 1/width per bin
    dims: np.ndarray       # bins per model
    ids: tuple

    @property
    def n_models(self) -> int:
        return self.dims.size

    @property
    def n_bins(self) -> int:
        return int(self.b_off[-1])


def pack_collection(collection: ModelCollection) -> ModelPack:
    n_models = len(collection)
    e_off = np.zeros(n_models + 1, dtype=np.int64)
    b_off = np.zeros(n_models + 1, dtype=np.int64)
    for i, m in enumerate(collection):
        e_off[i + 1] = e_off[i] + m.breakpoints.size
        b_off[i + 1] = b_off[i] + m.dim
    edges = np.concatenate([m.breakpoints for m in collection])
    inv_mu = np.empty(int(b_off[-1]), dtype=np.float64)
    for i, m in enumerate(collection):
        inv_mu[b_off[i]:b_off[i + 1]] = 1.0 / m.widths
    return ModelPack(
        edges=edges,
        e_off=e_off,
        b_off=b_off,
        inv_mu=inv_mu,
        dims=collection.dims,
        ids=tuple(m.id for m in collection),
    )


@dataclass(frozen=True)
class DensityTables:
    """Per-bin probabilities and per-model projection statistics of a density."""

    pack: ModelPack
    pbin: np.ndarray        # P(bin) per packed bin
    norm_s_sq: float        # squared L2 norm of the density itself
    norm_sm_sq: np.ndarray  # squared norm of the projection, per model
    p_psi: np.ndarray       # expectation of the unit-ball sup statistic, per model
    d_complexity: np.ndarray  # p_psi - norm_sm_sq (>= 0), per model
    bias_sq: np.ndarray     # norm_s_sq - norm_sm_sq, per model


def density_tables(pack: ModelPack, density) -> DensityTables:
    cdf = density.cdf(pack.edges)
    pbin = np.empty(pack.n_bins, dtype=np.float64)
    n_models = pack.n_models
    norm_sm = np.empty(n_models)
    p_psi = np.empty(n_models)
    for m in range(n_models):
        s, e = pack.e_off[m], pack.e_off[m + 1]
        bs, be = pack.b_off[m], pack.b_off[m + 1]
        p = np.maximum(np.diff(cdf[s:e]), 0.0)
        pbin[bs:be] = p
        im = pack.inv_mu[bs:be]
        norm_sm[m] = np.dot(p * p, im)
        p_psi[m] = np.dot(p, im)
    norm_s_sq = density.l2_norm_sq()
    return DensityTables(
        pack=pack,
        pbin=pbin,
        norm_s_sq=norm_s_sq,
        norm_sm_sq=norm_sm,
        p_psi=p_psi,
        d_complexity=np.maximum(p_psi - norm_sm, 0.0),
        bias_sq=np.maximum(norm_s_sq - norm_sm, 0.0),
    )
