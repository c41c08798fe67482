"""Command-line front end: simulate / variance / heuristic / bench / select.

Exit codes: 0 success, 1 runtime failure, 2 usage error.  Every randomized
subcommand requires an explicit --seed; identical invocations reproduce
their output byte for byte (benchmark timings excepted, being measurements).
"""

from __future__ import annotations

import argparse
import difflib
import json
import sys

import numpy as np

from . import experiments
from .criteria import CriterionSpec, parse_criterion
from .densities import from_json as density_from_json, make_setting
from .heuristic import selection_distribution
from .models import collection_by_name, collection_from_json
from .projection import argmin_with_ties
from .variance import var_increment

_SETTINGS = ("L", "S", "uniform")
_COLLECTIONS = ("regu", "dya2")


def _fail_usage(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return 2


def _suggest(name, choices):
    close = difflib.get_close_matches(name, choices, n=1)
    return f" (did you mean {close[0]!r}?)" if close else ""


def _load_density(arg: str):
    if arg.startswith("file:"):
        with open(arg[5:], "r", encoding="utf-8") as fh:
            return density_from_json(json.load(fh))
    low = arg.strip().lower()
    if low in ("l", "s", "uniform"):
        return make_setting(low)
    raise _UsageError(f"unknown setting {arg!r}{_suggest(arg, _SETTINGS)}")


def _load_collection(arg: str, n: int):
    if arg.startswith("file:"):
        with open(arg[5:], "r", encoding="utf-8") as fh:
            return collection_from_json(json.load(fh))
    low = arg.strip().lower()
    if low in _COLLECTIONS:
        return collection_by_name(low, n)
    raise _UsageError(f"unknown collection {arg!r}{_suggest(arg, _COLLECTIONS)}")


class _UsageError(Exception):
    pass


def _parse_int_list(text: str, n: int | None = None):
    out = []
    for item in text.split(","):
        item = item.strip()
        if item.lower() == "n":
            if n is None:
                raise _UsageError("'n' is not allowed in this list")
            out.append(n)
        else:
            out.append(int(item))
    if not out:
        raise _UsageError("empty list")
    return out


# -- subcommands -------------------------------------------------------------------


def cmd_simulate(args) -> int:
    if args.setting.startswith("file:"):
        with open(args.setting[5:], "r", encoding="utf-8") as fh:
            setting = json.load(fh)
    else:
        setting = args.setting
        _load_density(args.setting)  # validate early for exit code 2
    if args.collection.startswith("file:"):
        with open(args.collection[5:], "r", encoding="utf-8") as fh:
            collection = json.load(fh)
    else:
        _load_collection(args.collection, max(args.n, 3))
        collection = args.collection.lower()
    procedures = []
    for chunk in args.procedures:
        procedures.extend(p for p in chunk.split(";") if p.strip())
    for p in procedures:
        parse_criterion(p)
    config = experiments.ExperimentConfig(
        setting=setting, collection=collection, n=args.n, reps=args.reps,
        seed=args.seed, procedures=tuple(procedures), threads=args.threads,
    )
    report = experiments.run_cor(config, keep_replicates=args.plot_data is not None)
    experiments.write_csv(report, args.out)
    if args.plot_data is not None:
        experiments.write_csv(
            experiments.CsvTable(header=("procedure", "replicate", "loss", "ratio"),
                                 rows=report.per_replicate),
            args.plot_data,
        )
    return 0


def cmd_variance(args) -> int:
    density = _load_density(args.setting)
    collection = _load_collection(args.collection, args.n)
    v_list = _parse_int_list(args.V, n=args.n)
    if args.mc > 0 and args.seed is None:
        raise _UsageError("--mc > 0 requires --seed")
    from .heuristic import m_star

    star = m_star(density, collection, args.n)
    star_model = collection[star]
    mc_emp = mc_pen = None
    if args.mc > 0:
        mc_emp, mc_pen = experiments.mc_vf_samples(
            density, collection, args.n, v_list, args.mc, args.seed, threads=args.threads
        )
    rows = []
    for vi, v in enumerate(v_list):
        for i, model in enumerate(collection):
            rep = var_increment(density, model, star_model, args.n, v, args.C)
            if args.mc > 0:
                crit = mc_emp + args.C * (v - 1.0) * mc_pen[:, vi, :]
                delta = crit[:, i] - crit[:, star]
                est = float(delta.var(ddof=1))
                nb = 20 if args.mc >= 200 else max(2, args.mc // 10)
                size = args.mc // nb
                batch = np.array([delta[b * size:(b + 1) * size].var(ddof=1) for b in range(nb)])
                se = float(batch.std(ddof=1) / np.sqrt(nb))
                rows.append((model.id, star_model.id, args.n, v, args.C, rep.analytic,
                             rep.first_term, rep.second_term, est, se))
            else:
                rows.append((model.id, star_model.id, args.n, v, args.C, rep.analytic,
                             rep.first_term, rep.second_term, None, None))
    header = ("m1", "m2", "n", "V", "C", "analytic", "first_term", "second_term",
              "mc_estimate", "mc_se")
    experiments.write_csv(experiments.CsvTable(header=header, rows=tuple(rows)), args.out)
    return 0


def cmd_heuristic(args) -> int:
    density = _load_density(args.setting)
    collection = _load_collection(args.collection, args.n)
    v = args.n if args.V.strip().lower() == "n" else int(args.V)
    spec = CriterionSpec(kind="penvf", v=v, c=args.C)
    report = selection_distribution(
        density, collection, args.n, spec, args.reps, args.seed,
        threads=args.threads, renormalize=args.renormalize,
    )
    experiments.write_csv(report, args.out)
    return 0


def cmd_bench(args) -> int:
    n_list = _parse_int_list(args.n_list)
    v_list = _parse_int_list(args.v_list)
    d_list = _parse_int_list(args.d_list)
    table = experiments.run_bench(n_list, v_list, d_list, repeats=args.repeats,
                                  seed=args.seed, compare_backends=args.compare_backends)
    experiments.write_csv(table, args.out)
    return 0


def cmd_select(args) -> int:
    values = []
    try:
        with open(args.data, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    x = float(line)
                except ValueError:
                    print(f"error: {args.data}:{lineno}: not a number: {line!r}", file=sys.stderr)
                    return 1
                if not 0.0 <= x <= 1.0:
                    print(f"error: {args.data}:{lineno}: value {x} outside [0, 1]", file=sys.stderr)
                    return 1
                values.append(x)
    except OSError as exc:
        print(f"error: cannot read {args.data!r}: {exc}", file=sys.stderr)
        return 1
    if not values:
        print(f"error: {args.data}: no data", file=sys.stderr)
        return 1
    n = len(values)
    collection = _load_collection(args.collection, n)
    spec = parse_criterion(args.criterion)
    if args.V is not None and spec.kind in ("vfcv", "corrvfcv", "penvf"):
        spec = CriterionSpec(kind=spec.kind, v=args.V, c=spec.c, overpen=spec.overpen)
    if args.p is not None and spec.kind == "lpo":
        spec = CriterionSpec(kind="lpo", p=args.p, overpen=spec.overpen)
    if spec.kind == "ideal":
        raise _UsageError("the expected-ideal criterion needs a known density; "
                          "it is not available for data files")
    table = experiments.tables_for_sample(np.array(values), collection, [spec])[0]
    i = argmin_with_ties(table, collection.dims)
    model = collection[i]
    print(json.dumps({
        "id": model.id,
        "dim": int(model.dim),
        "breakpoints": [float(b) for b in model.breakpoints],
    }))
    return 0


# -- argument parsing ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vfoldsel",
        description="Model selection for least-squares histogram density estimation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="oracle-ratio Monte Carlo experiment")
    sim.add_argument("--setting", required=True,
                     help="density: L, S, uniform, or file:PATH (JSON)")
    sim.add_argument("--collection", required=True,
                     help="model collection: regu, dya2, or file:PATH (JSON breakpoints)")
    sim.add_argument("--n", type=int, required=True, help="sample size per replicate")
    sim.add_argument("--reps", type=int, required=True, help="number of replicates")
    sim.add_argument("--seed", type=int, required=True, help="master seed")
    sim.add_argument("--procedures", nargs="+", required=True,
                     help="criterion specs, e.g. penvf:V=5,C=1 vfcv:V=10 (separate "
                          "with spaces or semicolons)")
    sim.add_argument("--out", required=True, help="output CSV path")
    sim.add_argument("--threads", type=int, default=None,
                     help="worker threads (default: VFOLD_THREADS or all cores)")
    sim.add_argument("--plot-data", default=None, metavar="PATH",
                     help="also write per-replicate losses and ratios (long CSV)")
    sim.set_defaults(fn=cmd_simulate)

    var = sub.add_parser("variance", help="analytic (and optional MC) increment variances")
    var.add_argument("--setting", required=True)
    var.add_argument("--collection", required=True)
    var.add_argument("--n", type=int, required=True)
    var.add_argument("--V", required=True, help="comma list of fold counts, 'n' allowed")
    var.add_argument("--C", type=float, default=1.0, help="bias constant (default 1)")
    var.add_argument("--mc", type=int, default=0, help="MC replicates (0 = analytic only)")
    var.add_argument("--seed", type=int, default=None, help="seed (required when --mc > 0)")
    var.add_argument("--out", required=True)
    var.add_argument("--threads", type=int, default=None)
    var.set_defaults(fn=cmd_variance)

    heu = sub.add_parser("heuristic", help="selection distribution vs analytic tail proxy")
    heu.add_argument("--setting", required=True)
    heu.add_argument("--collection", required=True)
    heu.add_argument("--n", type=int, required=True)
    heu.add_argument("--V", required=True, help="fold count, 'n' allowed")
    heu.add_argument("--C", type=float, default=1.0)
    heu.add_argument("--reps", type=int, required=True)
    heu.add_argument("--seed", type=int, required=True)
    heu.add_argument("--renormalize", action="store_true",
                     help="rescale the tail proxies to sum to one")
    heu.add_argument("--out", required=True)
    heu.add_argument("--threads", type=int, default=None)
    heu.set_defaults(fn=cmd_heuristic)

    ben = sub.add_parser("bench", help="time the fast and naive V-fold kernels")
    ben.add_argument("--n-list", required=True, help="comma list of sample sizes")
    ben.add_argument("--v-list", required=True, help="comma list of fold counts")
    ben.add_argument("--d-list", required=True, help="comma list of model dimensions")
    ben.add_argument("--repeats", type=int, default=20)
    ben.add_argument("--seed", type=int, required=True)
    ben.add_argument("--compare-backends", action="store_true",
                     help="also time the pure-numpy kernel fallback")
    ben.add_argument("--out", required=True)
    ben.set_defaults(fn=cmd_bench)

    sel = sub.add_parser("select", help="select a model for a data file")
    sel.add_argument("--data", required=True, help="newline-separated floats in [0, 1]")
    sel.add_argument("--collection", required=True)
    sel.add_argument("--criterion", required=True, help="criterion spec string")
    sel.add_argument("--V", type=int, default=None, help="override V of the criterion")
    sel.add_argument("--p", type=int, default=None, help="override p of the criterion")
    sel.set_defaults(fn=cmd_select)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except _UsageError as exc:
        return _fail_usage(str(exc))
    except (ValueError, KeyError) as exc:
        # bad parameter values discovered past argument parsing are usage errors
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
