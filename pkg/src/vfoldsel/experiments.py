"""Seeded Monte Carlo harness: oracle-ratio tables, variance curves, benchmarks.

Replicate seeds are derived from the master seed as a pure function of the
replicate index, and every accumulation happens in a fixed order after the
(optionally threaded) replicate loop, so identical configurations produce
byte-identical CSV output regardless of the thread count.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import fastvf
from ._kernels import get_kernels
from ._pack import density_tables, pack_collection
from .criteria import (
    CriterionSpec,
    crit_vf,
    default_holdout_split,
    make_folds,
    parse_criterion,
)
from .densities import TrueDensity, from_json as density_from_json, make_setting
from .models import ModelCollection, collection_by_name, collection_from_json
from .projection import argmin_with_ties
from .variance import var_increment


def resolve_threads(threads: int | None) -> int:
    """CLI --threads value, VFOLD_THREADS, or the available parallelism."""
    if threads is None:
        env = os.environ.get("VFOLD_THREADS", "").strip()
        if env:
            threads = int(env)
        else:
            threads = os.cpu_count() or 1
    return max(1, int(threads))


def _run_replicates(worker, n_reps: int, threads: int | None):
    threads = resolve_threads(threads)
    if threads <= 1 or n_reps < 4:
        for r in range(n_reps):
            worker(r)
        return
    with ThreadPoolExecutor(max_workers=threads) as ex:
        chunk = max(1, n_reps // (threads * 8))
        list(ex.map(worker, range(n_reps), chunksize=chunk))


# -- per-sample criterion engine ------------------------------------------------


class _Engine:
    """Evaluates a fixed set of criteria over a whole collection per sample."""

    def __init__(self, collection: ModelCollection, specs, density: TrueDensity | None = None):
        self.collection = collection
        self.specs = [parse_criterion(s) if isinstance(s, str) else s for s in specs]
        self.pack = pack_collection(collection)
        self.density = density
        self.tables = density_tables(self.pack, density) if density is not None else None
        self.kernels = get_kernels()
        self.dims = collection.dims

    def _prepare(self, n: int):
        for s in self.specs:
            if s.kind in ("vfcv", "corrvfcv", "penvf") and s.v > n:
                raise ValueError(f"V={s.v} exceeds the sample size n={n}")
            if s.kind == "lpo" and not 1 <= s.p <= n - 1:
                raise ValueError(f"need 1 <= p <= n-1, got p={s.p}")
            if s.kind == "ideal" and self.tables is None:
                raise ValueError("the expected-ideal criterion needs the true density")
        self.v_exact = sorted(
            {s.v for s in self.specs if s.kind in ("vfcv", "corrvfcv", "penvf")
             and s.v < n and n % s.v == 0}
        )
        self.need_loo = any(
            s.kind == "lpo" or (s.kind in ("vfcv", "corrvfcv", "penvf") and s.v == n)
            for s in self.specs
        )
        self.ho_taus = sorted({s.tau for s in self.specs if s.kind in ("ho", "penho")})
        self.n = n  # set last; marks the engine ready for this sample size

    def evaluate(self, raw: np.ndarray):
        """Per-model criterion matrix, true losses and empirical risks."""
        pack, k = self.pack, self.kernels
        n = raw.size
        if not hasattr(self, "n") or self.n != n:
            self._prepare(n)
        sv = np.sort(raw)
        counts = np.empty(pack.n_bins)
        k.bin_counts_all(sv, pack.edges, pack.e_off, pack.b_off, counts)
        emp = np.empty(pack.n_models)
        loss = np.empty(pack.n_models)
        if self.tables is not None:
            k.emp_loss_all(counts, pack.b_off, pack.inv_mu, self.tables.pbin, n,
                           self.tables.norm_s_sq, emp, loss)
        else:
            k.emp_loss_all(counts, pack.b_off, pack.inv_mu, np.zeros(pack.n_bins), n,
                           0.0, emp, loss)
            loss = None

        pen_unit = {}
        for v in self.v_exact:
            fold_sv = np.sort(raw.reshape(v, n // v), axis=1)
            e = np.empty(pack.n_models)
            vf = np.empty(pack.n_models)
            k.vf_stats_all(fold_sv, pack.edges, pack.e_off, pack.b_off, pack.inv_mu, e, vf)
            pen_unit[v] = (vf - e) / (v - 0.5)
        if self.need_loo:
            pu = np.empty(pack.n_models)
            k.loo_pen_unit_all(counts, pack.b_off, pack.inv_mu, n, pu)
            pen_unit[n] = pu

        ho_cache = {}
        for tau in self.ho_taus:
            train_idx = default_holdout_split(n, tau)
            size = train_idx.size
            c_train = np.empty(pack.n_bins)
            k.bin_counts_all(np.sort(raw[:size]), pack.edges, pack.e_off, pack.b_off, c_train)
            ho_cache[tau] = (c_train, size)

        crit = np.empty((len(self.specs), pack.n_models))
        for si, s in enumerate(self.specs):
            crit[si] = self._assemble(s, raw, counts, emp, pen_unit, ho_cache, n)
        return crit, loss, emp

    def _assemble(self, s, raw, counts, emp, pen_unit, ho_cache, n):
        pack = self.pack
        if s.kind in ("vfcv", "corrvfcv", "penvf"):
            if s.v in pen_unit or s.v == n:
                pu = pen_unit[n if s.v == n else s.v]
                if s.kind == "vfcv":
                    x = s.v - 0.5
                elif s.kind == "corrvfcv":
                    x = s.v - 1.0
                else:
                    x = s.c * (s.v - 1.0)
                return emp + s.overpen * x * pu
            return self._assemble_irregular(s, raw, n)
        if s.kind == "lpo":
            ratio = n / s.p
            x = (n - 1.0) * (ratio - 0.5) / (ratio - 1.0)
            return emp + s.overpen * x * pen_unit[n]
        if s.kind == "pendim":
            return emp + s.overpen * 2.0 * self.dims / n
        if s.kind == "ideal":
            return emp + s.overpen * s.c * 2.0 * self.tables.d_complexity / n
        if s.kind in ("ho", "penho"):
            c_train, size = ho_cache[s.tau]
            im = pack.inv_mu
            if s.kind == "penho":
                tau = size / n
                x = s.c * tau / (1.0 - tau)
                per_bin = (c_train / size - (counts - c_train) / (n - size)) ** 2 * im
                pen = 2.0 * x * (1.0 - tau) ** 2 * np.add.reduceat(per_bin, pack.b_off[:-1])
                return emp + s.overpen * pen
            c_test = counts - c_train
            a2 = (c_train / size) ** 2 * im
            cross = (c_train / size) * (c_test / (n - size)) * im
            return (np.add.reduceat(a2, pack.b_off[:-1])
                    - 2.0 * np.add.reduceat(cross, pack.b_off[:-1]))
        raise AssertionError(f"unhandled criterion kind {s.kind}")

    def _assemble_irregular(self, s, raw, n):
        # V does not divide n: near-regular folds, definition-based, model by model
        folds = make_folds(n, s.v)
        out = np.empty(len(self.collection))
        for i, model in enumerate(self.collection):
            res = crit_vf(raw, model, folds)
            if s.kind == "vfcv":
                out[i] = res.emp_risk + s.overpen * (res.vfcv - res.emp_risk)
            elif s.kind == "corrvfcv":
                out[i] = res.emp_risk + s.overpen * (res.corr_vfcv - res.emp_risk)
            else:
                out[i] = res.emp_risk + s.overpen * s.c * res.pen_base
        return out


def tables_for_sample(values, collection: ModelCollection, specs,
                      density: TrueDensity | None = None):
    """Criterion values per model for each spec, for a single sample."""
    engine = _Engine(collection, specs, density=density)
    crit, _, _ = engine.evaluate(np.asarray(values, dtype=float))
    return [crit[i] for i in range(crit.shape[0])]


# -- oracle-ratio experiment -----------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """A seeded oracle-ratio experiment over one density and collection."""

    setting: str | dict
    collection: str | list
    n: int
    reps: int
    seed: int
    procedures: tuple
    threads: int | None = None

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not self.procedures:
            raise ValueError("need at least one procedure")

    def density(self) -> TrueDensity:
        if isinstance(self.setting, dict):
            return density_from_json(self.setting)
        return make_setting(self.setting)

    def model_collection(self) -> ModelCollection:
        if isinstance(self.collection, list):
            return collection_from_json(self.collection)
        return collection_by_name(self.collection, self.n)


def config_from_json(source) -> ExperimentConfig:
    """Load an ExperimentConfig from a JSON file path, string or dict."""
    if isinstance(source, str) and source.lstrip().startswith("{"):
        obj = json.loads(source)
    elif isinstance(source, str):
        with open(source, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    else:
        obj = source
    return ExperimentConfig(
        setting=obj["setting"],
        collection=obj["collection"],
        n=int(obj["n"]),
        reps=int(obj.get("reps", obj.get("N", 1000))),
        seed=int(obj["seed"]),
        procedures=tuple(obj["procedures"]),
        threads=obj.get("threads"),
    )


@dataclass(frozen=True)
class ProcedureResult:
    name: str
    c_or: float
    c_or_se: float
    risk: float
    risk_se: float


@dataclass(frozen=True)
class ExperimentReport:
    """Per-procedure oracle ratios and risks, plus oracle and best rows."""

    procedures: tuple
    oracle_risk: float
    oracle_risk_se: float
    best: str
    n: int
    reps: int
    per_replicate: tuple | None = None  # optional long-format (proc, rep, loss, ratio)

    def csv_header(self):
        return ["procedure", "c_or", "c_or_se", "risk", "risk_se"]

    def csv_rows(self):
        for p in self.procedures:
            yield [p.name, p.c_or, p.c_or_se, p.risk, p.risk_se]
        yield ["oracle", 1.0, 0.0, self.oracle_risk, self.oracle_risk_se]
        bp = next(p for p in self.procedures if p.name == self.best)
        yield ["best:" + bp.name, bp.c_or, bp.c_or_se, bp.risk, bp.risk_se]


def run_cor(config: ExperimentConfig, keep_replicates: bool = False) -> ExperimentReport:
    """Estimate the oracle ratio and risk of each configured procedure.

    With keep_replicates=True the report carries a long-format table of
    per-replicate losses and ratios, ready for external plotting tools.
    """
    density = config.density()
    collection = config.model_collection()
    specs = [parse_criterion(p) if isinstance(p, str) else p for p in config.procedures]
    engine = _Engine(collection, specs, density=density)
    n, reps = config.n, config.reps
    engine._prepare(n)
    children = np.random.SeedSequence(config.seed).spawn(reps)
    dims = collection.dims

    sel_loss = np.empty((reps, len(specs)))
    oracle_loss = np.empty(reps)

    def worker(rep):
        rng = np.random.Generator(np.random.PCG64(children[rep]))
        raw = density.sample_with(n, rng)
        crit, loss, _ = engine.evaluate(raw)
        oracle_loss[rep] = loss.min()
        for k in range(len(specs)):
            sel_loss[rep, k] = loss[argmin_with_ties(crit[k], dims)]

    _run_replicates(worker, reps, config.threads)

    with np.errstate(divide="ignore", invalid="ignore"):
        # a selected model matching the oracle counts as ratio 1 even when the
        # oracle loss is exactly zero (flat density, one-bin model)
        ratios = np.where(sel_loss == oracle_loss[:, None], 1.0,
                          sel_loss / oracle_loss[:, None])
    procs = []
    for k, s in enumerate(specs):
        name = config.procedures[k] if isinstance(config.procedures[k], str) else s.label()
        procs.append(ProcedureResult(
            name=name,
            c_or=float(ratios[:, k].mean()),
            c_or_se=float(ratios[:, k].std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0,
            risk=float(sel_loss[:, k].mean()),
            risk_se=float(sel_loss[:, k].std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0,
        ))
    best = min(procs, key=lambda p: p.risk).name
    per_replicate = None
    if keep_replicates:
        rows = []
        for k in range(len(specs)):
            name = procs[k].name
            for rep in range(reps):
                rows.append((name, rep, float(sel_loss[rep, k]), float(ratios[rep, k])))
        for rep in range(reps):
            rows.append(("oracle", rep, float(oracle_loss[rep]), 1.0))
        per_replicate = tuple(rows)
    return ExperimentReport(
        procedures=tuple(procs),
        oracle_risk=float(oracle_loss.mean()),
        oracle_risk_se=float(oracle_loss.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0,
        best=best,
        n=n,
        reps=reps,
        per_replicate=per_replicate,
    )


def selection_counts(density: TrueDensity, collection: ModelCollection, n: int,
                     spec: CriterionSpec, n_reps: int, seed: int,
                     threads: int | None = None) -> np.ndarray:
    """How often each model is selected over seeded replicates."""
    engine = _Engine(collection, [spec], density=density)
    engine._prepare(n)
    children = np.random.SeedSequence(seed).spawn(n_reps)
    dims = collection.dims
    selected = np.empty(n_reps, dtype=np.int64)

    def worker(rep):
        rng = np.random.Generator(np.random.PCG64(children[rep]))
        raw = density.sample_with(n, rng)
        crit, _, _ = engine.evaluate(raw)
        selected[rep] = argmin_with_ties(crit[0], dims)

    _run_replicates(worker, n_reps, threads)
    return np.bincount(selected, minlength=len(collection)).astype(np.int64)


def mc_vf_samples(density: TrueDensity, collection: ModelCollection, n: int,
                  v_list, n_reps: int, seed: int, threads: int | None = None):
    """Per-replicate empirical risks and unit-scale V-fold penalties.

    Returns (emp, pen_unit) with shapes (reps, M) and (reps, len(v_list), M);
    V = n entries use the leave-one-out closed form.  Used by the validation
    suite to build arbitrary penalized criteria.
    """
    specs = [CriterionSpec(kind="penvf", v=v, c=1.0) for v in v_list]
    engine = _Engine(collection, specs, density=density)
    engine._prepare(n)
    children = np.random.SeedSequence(seed).spawn(n_reps)
    emp_out = np.empty((n_reps, len(collection)))
    pen_out = np.empty((n_reps, len(v_list), len(collection)))

    def worker(rep):
        rng = np.random.Generator(np.random.PCG64(children[rep]))
        raw = density.sample_with(n, rng)
        crit, _, emp = engine.evaluate(raw)
        emp_out[rep] = emp
        for i, v in enumerate(v_list):
            # penvf at C=1 is emp + (V-1) * pen_unit
            pen_out[rep, i] = (crit[i] - emp) / (v - 1.0)

    _run_replicates(worker, n_reps, threads)
    return emp_out, pen_out


# -- variance curves and the K-fit ------------------------------------------------


@dataclass(frozen=True)
class KFit:
    """Two-stage least-squares fit of the variance-vs-dimension curves."""

    k1: float
    k2: float
    k3: float
    k4: float
    max_residual: float  # on the n^2-scaled variance values


@dataclass(frozen=True)
class VarianceCurves:
    rows: tuple  # (V, m_dim, n, C, analytic, mc_estimate, mc_se)
    fit: KFit
    m_star_dim: int

    def csv_header(self):
        return ["V", "m_dim", "m_star_dim", "n", "C", "analytic", "mc_estimate", "mc_se"]

    def csv_rows(self):
        for r in self.rows:
            yield [r[0], r[1], self.m_star_dim, r[2], r[3], r[4], r[5], r[6]]


def _ols_line(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xm, ym = x.mean(), y.mean()
    sxx = np.dot(x - xm, x - xm)
    slope = np.dot(x - xm, y - ym) / sxx if sxx > 0 else 0.0
    return ym - slope * xm, slope


def run_variance_curves(density: TrueDensity, collection: ModelCollection, n: int,
                        v_list, C: float = 1.0, mc_reps: int = 0,
                        seed: int | None = None, threads: int | None = None,
                        max_dim: int | None = None) -> VarianceCurves:
    """Analytic variance of criterion increments to the best model, with K-fit.

    For every V and every model above the best expected-risk model, computes
    the increment variance, then fits n^-2 [K1 (1 + K2/(V-1)) +
    K3 (1 + K4/(V-1)) (m - m*)] by per-V least squares followed by a
    regression of the per-V coefficients on 1/(V-1).
    """
    from .heuristic import m_star

    star = m_star(density, collection, n)
    star_model = collection[star]
    star_dim = int(collection.dims[star])
    fit_idx = [i for i, m in enumerate(collection)
               if m.dim > star_dim and (max_dim is None or m.dim <= max_dim)]
    if len(fit_idx) * len(v_list) < 4:
        raise ValueError("need at least 4 (model, V) points for the fit")

    analytic = np.empty((len(v_list), len(fit_idx)))
    for vi, v in enumerate(v_list):
        for mi, i in enumerate(fit_idx):
            analytic[vi, mi] = var_increment(density, collection[i], star_model, n, v, C).analytic

    mc_est = np.full_like(analytic, np.nan)
    mc_se = np.full_like(analytic, np.nan)
    if mc_reps > 0:
        if seed is None:
            raise ValueError("Monte Carlo curves need a seed")
        emp, pen = mc_vf_samples(density, collection, n, v_list, mc_reps, seed, threads)
        for vi, v in enumerate(v_list):
            crit = emp + C * (v - 1.0) * pen[:, vi, :]
            delta = crit[:, fit_idx] - crit[:, [star]]
            mc_est[vi] = delta.var(axis=0, ddof=1)
            nb = 20 if mc_reps >= 200 else max(2, mc_reps // 10)
            size = mc_reps // nb
            batches = np.array([
                delta[b * size:(b + 1) * size].var(axis=0, ddof=1) for b in range(nb)
            ])
            mc_se[vi] = batches.std(axis=0, ddof=1) / math.sqrt(nb)

    dims = collection.dims[fit_idx].astype(float)
    x = dims - star_dim
    scaled = analytic * n * n
    a_v = np.empty(len(v_list))
    b_v = np.empty(len(v_list))
    for vi in range(len(v_list)):
        a_v[vi], b_v[vi] = _ols_line(x, scaled[vi])
    z = 1.0 / (np.asarray(v_list, dtype=float) - 1.0)
    k1, s_a = _ols_line(z, a_v)
    k3, s_b = _ols_line(z, b_v)
    k2 = s_a / k1 if abs(k1) > 1e-9 else 0.0
    k4 = s_b / k3 if abs(k3) > 1e-9 else 0.0
    pred = (k1 + k1 * k2 * z)[:, None] + (k3 + k3 * k4 * z)[:, None] * x[None, :]
    fit = KFit(k1=float(k1), k2=float(k2), k3=float(k3), k4=float(k4),
               max_residual=float(np.max(np.abs(pred - scaled))))

    rows = []
    for vi, v in enumerate(v_list):
        for mi, i in enumerate(fit_idx):
            rows.append((int(v), int(collection.dims[i]), n, C, float(analytic[vi, mi]),
                         float(mc_est[vi, mi]) if mc_reps > 0 else None,
                         float(mc_se[vi, mi]) if mc_reps > 0 else None))
    return VarianceCurves(rows=tuple(rows), fit=fit, m_star_dim=star_dim)


# -- benchmark wrapper -------------------------------------------------------------


@dataclass(frozen=True)
class BenchTable:
    rows: tuple

    def csv_header(self):
        return ["algorithm", "n", "V", "d", "median_ns", "iqr_ns"]

    def csv_rows(self):
        for r in self.rows:
            yield [r.algorithm, r.n, r.v, r.d, r.median_ns, r.iqr_ns]


def run_bench(n_list, v_list, d_list, repeats: int = 20, seed: int = 0,
              compare_backends: bool = False) -> BenchTable:
    rows = fastvf.bench_kernels(n_list, v_list, d_list, repeats=repeats, seed=seed,
                                compare_backends=compare_backends)
    return BenchTable(rows=tuple(rows))


# -- generic CSV output ----------------------------------------------------------


@dataclass(frozen=True)
class CsvTable:
    """An ad-hoc report: a fixed header and prebuilt rows."""

    header: tuple
    rows: tuple

    def csv_header(self):
        return list(self.header)

    def csv_rows(self):
        return iter(self.rows)


def _format_cell(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.17g}"
    if isinstance(x, (np.floating,)):
        return f"{float(x):.17g}"
    return str(x)


def write_csv(report, path: str) -> None:
    """Write any report exposing csv_header()/csv_rows() as RFC-4180 CSV."""
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\r\n")
            writer.writerow(report.csv_header())
            for row in report.csv_rows():
                writer.writerow([_format_cell(c) for c in row])
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path!r}: {exc}") from exc


def read_csv_rows(path: str):
    """Parse a CSV written by write_csv back into (header, rows of strings)."""
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if not rows:
        raise ValueError(f"empty CSV file {path!r}")
    return rows[0], rows[1:]
