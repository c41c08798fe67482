import json
import math

import numpy as np
import pytest

from vfoldsel import make_setting, regu_collection
from vfoldsel.experiments import (
    CsvTable,
    ExperimentConfig,
    config_from_json,
    mc_vf_samples,
    read_csv_rows,
    run_cor,
    run_variance_curves,
    tables_for_sample,
    write_csv,
)
from vfoldsel.criteria import criterion_table, parse_criterion, select
from vfoldsel.models import collection_from_json


def small_config(**overrides):
    base = dict(
        setting="L",
        collection="regu",
        n=20,
        reps=12,
        seed=1234,
        procedures=("pendim", "penvf:V=2,C=1", "vfcv:V=4", "lpo:p=3",
                    "penho:tau=0.5,C=1", "ho:tau=0.5", "ideal:C=1", "corrvfcv:V=5"),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def test_write_csv_empty_and_roundtrip(tmp_path):
    path = str(tmp_path / "empty.csv")
    write_csv(CsvTable(header=("a", "b"), rows=()), path)
    header, rows = read_csv_rows(path)
    assert header == ["a", "b"] and rows == []

    vals = (1, 0.1 + 0.2, -1.2345678901234567e-8, None, "text")
    path2 = str(tmp_path / "round.csv")
    write_csv(CsvTable(header=("i", "x", "y", "none", "s"), rows=(vals,)), path2)
    header, rows = read_csv_rows(path2)
    assert float(rows[0][1]) == 0.1 + 0.2  # 17 significant digits round-trip
    assert float(rows[0][2]) == -1.2345678901234567e-8
    assert rows[0][3] == ""


def test_write_csv_deterministic_bytes(tmp_path):
    table = CsvTable(header=("x",), rows=((math.pi,), (1.0 / 3.0,)))
    p1, p2 = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
    write_csv(table, p1)
    write_csv(table, p2)
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_write_csv_error_has_path_context(tmp_path):
    with pytest.raises(OSError, match="no/such"):
        write_csv(CsvTable(header=("x",), rows=()), str(tmp_path / "no" / "such.csv"))


def test_config_validation_and_json(tmp_path):
    with pytest.raises(ValueError):
        small_config(reps=0)
    with pytest.raises(ValueError):
        small_config(procedures=())
    obj = {"setting": "L", "collection": "regu", "n": 30, "reps": 5, "seed": 9,
           "procedures": ["pendim"]}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(obj))
    cfg = config_from_json(str(path))
    assert cfg.n == 30 and cfg.procedures == ("pendim",)
    cfg2 = config_from_json(json.dumps(obj))
    assert cfg2 == cfg


def test_run_cor_small():
    rep = run_cor(small_config())
    assert rep.reps == 12
    names = [p.name for p in rep.procedures]
    assert names[0] == "pendim"
    for p in rep.procedures:
        assert p.c_or >= 1.0 - 1e-12
        assert p.risk >= rep.oracle_risk - 1e-12
    rows = list(rep.csv_rows())
    assert rows[-2][0] == "oracle" and rows[-2][1] == 1.0
    assert rows[-1][0].startswith("best:")


def test_run_cor_single_model_ratio_is_one():
    cfg = ExperimentConfig(setting="L", collection=[[0.0, 0.5, 1.0]], n=15, reps=6,
                           seed=5, procedures=("pendim",))
    rep = run_cor(cfg)
    assert rep.procedures[0].c_or == pytest.approx(1.0, abs=0)
    assert rep.procedures[0].risk == pytest.approx(rep.oracle_risk, abs=0)


def test_run_cor_deterministic_and_thread_invariant(tmp_path):
    cfg = small_config(threads=1)
    rep1 = run_cor(cfg)
    rep2 = run_cor(small_config(threads=4))
    p1, p2 = str(tmp_path / "t1.csv"), str(tmp_path / "t4.csv")
    write_csv(rep1, p1)
    write_csv(rep2, p2)
    assert open(p1, "rb").read() == open(p2, "rb").read()


def test_run_cor_respects_vfold_threads_env(monkeypatch):
    monkeypatch.setenv("VFOLD_THREADS", "2")
    rep = run_cor(small_config(threads=None, reps=6))
    assert rep.reps == 6


def test_tables_for_sample_matches_slow_paths():
    # the packed engine must agree with the one-model-at-a-time functions
    from vfoldsel import (
        crit_ho,
        crit_ideal_expected,
        crit_lpo_closed,
        crit_vf,
        fit,
        empirical_risk,
        make_folds,
        pen_dim,
        pen_ho,
    )
    from vfoldsel.criteria import default_holdout_split

    d = make_setting("S")
    coll = regu_collection(9)
    n = 36
    vals = d.sample(n, seed=33)
    specs = [parse_criterion(s) for s in (
        "penvf:V=4,C=1.25,over=1.5", "vfcv:V=6", "corrvfcv:V=4", "lpo:p=7",
        "pendim", "ideal:C=1.5", "penho:tau=0.25,C=2", "ho:tau=0.25",
        "penvf:V=36,C=1", "vfcv:V=7",
    )]
    tables = tables_for_sample(vals, coll, specs, density=d)
    folds4 = make_folds(n, 4)
    folds6 = make_folds(n, 6)
    folds7 = make_folds(n, 7)   # 36 % 7 != 0: the near-regular path
    folds36 = make_folds(n, 36)
    tr = default_holdout_split(n, 0.25)
    for i, m in enumerate(coll):
        emp = empirical_risk(fit(vals, m))
        from vfoldsel import pen_vf

        assert tables[0][i] == pytest.approx(emp + 1.5 * pen_vf(vals, m, folds4, 1.25 * 3.0), rel=1e-10)
        assert tables[1][i] == pytest.approx(crit_vf(vals, m, folds6).vfcv, rel=1e-10)
        assert tables[2][i] == pytest.approx(crit_vf(vals, m, folds4).corr_vfcv, rel=1e-10)
        assert tables[3][i] == pytest.approx(crit_lpo_closed(vals, m, 7), rel=1e-10)
        assert tables[4][i] == pytest.approx(emp + pen_dim(m, n), rel=1e-12)
        assert tables[5][i] == pytest.approx(crit_ideal_expected(vals, m, d, C=1.5), rel=1e-10)
        assert tables[6][i] == pytest.approx(emp + pen_ho(vals, m, tr, 2.0 * 0.25 / 0.75), rel=1e-10)
        assert tables[7][i] == pytest.approx(crit_ho(vals, m, tr), rel=1e-10)
        assert tables[8][i] == pytest.approx(crit_vf(vals, m, folds36).corr_vfcv, rel=1e-10)
        assert tables[9][i] == pytest.approx(crit_vf(vals, m, folds7).vfcv, rel=1e-10)


def test_criterion_table_and_select_roundtrip():
    d = make_setting("L")
    coll = regu_collection(8)
    vals = d.sample(24, seed=2)
    table = criterion_table(vals, coll, parse_criterion("penvf:V=4,C=1"))
    brute = tables_for_sample(vals, coll, [parse_criterion("penvf:V=4,C=1")])[0]
    assert np.allclose(table.values, brute, atol=0)
    assert select(table, coll) == coll[int(np.argmin(brute))].id


def test_mc_vf_samples_shapes_and_loo_consistency():
    d = make_setting("uniform")
    coll = regu_collection(5)
    n = 20
    emp, pen = mc_vf_samples(d, coll, n, [2, n], 7, seed=11)
    assert emp.shape == (7, 5) and pen.shape == (7, 2, 5)
    assert np.all(pen >= -1e-15)
    # V = n pen units must match the V-fold kernel run at V = n
    from vfoldsel import make_folds, pen_vf

    children = np.random.SeedSequence(11).spawn(7)
    raw = d.sample_with(n, np.random.Generator(np.random.PCG64(children[0])))
    folds = make_folds(n, n)
    for i, m in enumerate(coll):
        assert pen[0, 1, i] == pytest.approx(pen_vf(raw, m, folds, 1.0), rel=1e-10, abs=1e-13)


def test_run_variance_curves_uniform_exact_structure():
    d = make_setting("uniform")
    coll = regu_collection(30)
    n = 50
    curves = run_variance_curves(d, coll, n, [2, 5, 10], C=1.0)
    f = curves.fit
    assert curves.m_star_dim == 1
    assert abs(f.k1) < 1e-9
    assert f.k3 == pytest.approx(2.0 * (1.0 - 1.0 / n), rel=1e-9)
    assert f.k4 == pytest.approx(4.0 / (1.0 - 1.0 / n), rel=1e-9)
    assert f.max_residual < 1e-9


def test_run_variance_curves_setting_l_constants():
    # change-point density: slope constants near the benchmark values
    d = make_setting("L")
    coll = regu_collection(100)
    curves = run_variance_curves(d, coll, 100, [2, 5, 10, 100], C=1.0)
    assert 2.1 * 0.7 <= curves.fit.k3 <= 2.1 * 1.3
    assert 4.2 * 0.7 <= curves.fit.k4 <= 4.2 * 1.3


def test_run_variance_curves_mc_and_validation():
    d = make_setting("uniform")
    coll = regu_collection(8)
    # a fit needs at least 4 (model, V) points
    tiny = collection_from_json([[0.0, 1.0], [0.0, 0.5, 1.0]])
    with pytest.raises(ValueError):
        run_variance_curves(d, tiny, 20, [2], C=1.0)
    curves = run_variance_curves(d, coll, 20, [2, 4], C=1.0, mc_reps=400, seed=8)
    for row in curves.rows:
        assert row[5] is not None and row[6] is not None
        assert abs(row[5] - row[4]) < 8 * max(row[6], 1e-12)
    with pytest.raises(ValueError):
        run_variance_curves(d, coll, 20, [2, 4], mc_reps=10, seed=None)


def test_run_cor_rejects_unknown_setting():
    with pytest.raises(ValueError):
        run_cor(small_config(setting="Q"))
