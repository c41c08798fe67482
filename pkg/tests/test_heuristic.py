import math

import numpy as np
import pytest

from vfoldsel import custom_model, make_setting, phi_bar, regu_collection, sr
from vfoldsel.criteria import CriterionSpec
from vfoldsel.heuristic import m_star, selection_distribution, sr_values
from vfoldsel.models import HistogramModel, ModelCollection
from vfoldsel.variance import expected_delta, var_increment


def regular(d):
    return custom_model(np.arange(d + 1) / d)


def test_phi_bar_values():
    assert phi_bar(0.0) == pytest.approx(0.5, abs=1e-15)
    assert phi_bar(math.inf) == 0.0
    assert phi_bar(-math.inf) == 1.0
    assert phi_bar(1.959964) == pytest.approx(0.025, abs=1e-6)
    with pytest.raises(ValueError):
        phi_bar(math.nan)


def test_phi_bar_monotone_and_symmetric():
    grid = np.linspace(-6, 6, 41)
    vals = [phi_bar(t) for t in grid]
    assert all(vals[i + 1] < vals[i] for i in range(len(vals) - 1))
    for t in grid:
        assert phi_bar(t) + phi_bar(-t) == pytest.approx(1.0, abs=1e-12)
    assert all(0.0 <= v <= 1.0 for v in vals)


def test_m_star_values():
    assert m_star(make_setting("uniform"), regu_collection(20), 100) == 0
    # change-point densities: the best dimension matches the benchmark runs
    s_star = m_star(make_setting("S"), regu_collection(100), 100)
    assert regu_collection(100)[s_star].dim == 7
    l_star = m_star(make_setting("L"), regu_collection(100), 100)
    assert regu_collection(100)[l_star].dim == 4


def test_sr_two_model_collection_exact():
    d = make_setting("S")
    coll = ModelCollection("pair", (regular(4), regular(9)))
    n, V, C = 80, 5, 1.0
    val = sr(d, coll, 0, n, V, C)
    mean = expected_delta(d, coll[0], coll[1], n, C)
    var = var_increment(d, coll[0], coll[1], n, V, C).analytic
    assert val == pytest.approx(mean / math.sqrt(var), rel=1e-12)
    # accepts a model id as well
    assert sr(d, coll, coll[0].id, n, V, C) == pytest.approx(val, rel=1e-15)


def test_sr_scale_invariance_of_the_ratio():
    # the ratio is invariant when the mean scales by a and the variance by a^2
    mean, var = -0.037, 1.9e-4
    a = 7.3
    assert mean / math.sqrt(var) == pytest.approx((a * mean) / math.sqrt(a * a * var), rel=1e-14)


def test_sr_degenerate_gap_markers():
    # two models with identical bins: the gap is identically zero -> -inf
    d = make_setting("L")
    twin = HistogramModel(np.array([0.0, 0.5, 1.0]), "twin")
    coll = ModelCollection("twins", (custom_model([0.0, 0.5, 1.0], id="a"), twin))
    spec = CriterionSpec(kind="penvf", v=5, c=1.0)
    ratios = sr_values(d, coll, 50, spec)
    assert ratios[0] == -math.inf and ratios[1] == -math.inf
    assert phi_bar(ratios[0]) == 1.0


def test_sr_strongest_competitor_is_best_model():
    # for every model the maximizing competitor is the best expected-risk one
    d = make_setting("S")
    n = 100
    coll = ModelCollection("sub", tuple(regular(k) for k in (2, 4, 7, 12, 20, 30)))
    star = m_star(d, coll, n)
    spec = CriterionSpec(kind="penvf", v=5, c=1.0)
    for i in range(len(coll)):
        if i == star:
            continue
        best_j, best_ratio = None, -math.inf
        for j in range(len(coll)):
            if j == i:
                continue
            mean = expected_delta(d, coll[i], coll[j], n, 1.0)
            var = var_increment(d, coll[i], coll[j], n, 5, 1.0).analytic
            ratio = mean / math.sqrt(var) if var > 0 else -math.inf
            if ratio > best_ratio:
                best_j, best_ratio = j, ratio
        assert best_j == star


def test_selection_distribution_basics():
    d = make_setting("L")
    coll = regu_collection(10)
    spec = CriterionSpec(kind="penvf", v=5, c=1.0)
    rep = selection_distribution(d, coll, 40, spec, N=1, seed=3)
    assert rep.freq.sum() == pytest.approx(1.0)
    assert np.count_nonzero(rep.freq) == 1
    rep2 = selection_distribution(d, coll, 40, spec, N=60, seed=4)
    assert rep2.freq.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(rep2.freq_se >= 0.0)
    assert len(rep2.model_ids) == len(coll)


def test_selection_distribution_deterministic_and_renormalized():
    d = make_setting("L")
    coll = regu_collection(8)
    spec = CriterionSpec(kind="vfcv", v=4)
    a = selection_distribution(d, coll, 32, spec, N=40, seed=9)
    b = selection_distribution(d, coll, 32, spec, N=40, seed=9)
    assert np.array_equal(a.freq, b.freq)
    assert np.array_equal(a.sr, b.sr)
    c = selection_distribution(d, coll, 32, spec, N=40, seed=9, renormalize=True)
    assert c.phi_bar_sr.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.array_equal(a.freq, c.freq)


def test_selection_distribution_thread_invariance():
    d = make_setting("S")
    coll = regu_collection(12)
    spec = CriterionSpec(kind="penvf", v=2, c=1.0)
    a = selection_distribution(d, coll, 24, spec, N=50, seed=7, threads=1)
    b = selection_distribution(d, coll, 24, spec, N=50, seed=7, threads=4)
    assert np.array_equal(a.freq, b.freq)


def test_sr_spec_mappings_run():
    d = make_setting("L")
    coll = ModelCollection("trio", (regular(2), regular(4), regular(8)))
    n = 40
    for spec in (CriterionSpec(kind="penvf", v=5, c=1.0),
                 CriterionSpec(kind="vfcv", v=5),
                 CriterionSpec(kind="corrvfcv", v=5),
                 CriterionSpec(kind="lpo", p=8),
                 CriterionSpec(kind="ideal", c=1.0)):
        vals = sr_values(d, coll, n, spec)
        assert vals.shape == (3,)
        assert np.all(np.isfinite(vals) | np.isinf(vals))
    with pytest.raises(NotImplementedError):
        sr_values(d, coll, n, CriterionSpec(kind="pendim"))
