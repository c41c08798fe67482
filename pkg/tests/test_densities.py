import json
import math

import numpy as np
import pytest
from scipy import integrate

from vfoldsel import make_setting
from vfoldsel.densities import from_json

# independent quadrature values, frozen from scipy.integrate.quad with the
# integrand split at every component knot (abs err < 1e-12)
S_NORM_SQ = 1.8759548737528415
S_PROB_BELOW_HALF = 0.19999999995067072


def quad_over_knots(f, density, lo=0.0, hi=1.0):
    cuts = [lo] + [k for k in density.knots() if lo < k < hi] + [hi]
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        val, _ = integrate.quad(f, a, b, limit=400, epsabs=1e-13, epsrel=1e-12)
        total += val
    return total


def test_setting_l_values():
    d = make_setting("L")
    assert d.pdf(1.0) == pytest.approx(4.0 / 3.0, abs=1e-15)
    assert d.pdf(0.0) == 0.0
    assert d.cdf(1.0) == 1.0
    assert d.cdf(1.0 / 3.0) == pytest.approx(5.0 / 27.0, abs=1e-14)
    assert d.bin_prob(0.0, 1.0 / 3.0) == pytest.approx(5.0 / 27.0, abs=1e-14)
    assert d.bin_prob(1.0 / 3.0, 1.0) == pytest.approx(22.0 / 27.0, abs=1e-14)
    assert d.l2_norm_sq() == pytest.approx(92.0 / 81.0, abs=1e-13)


def test_setting_s_values():
    d = make_setting("S")
    assert d.cdf(1.0) == pytest.approx(1.0, abs=1e-10)
    assert d.bin_prob(0.0, 0.5) == pytest.approx(S_PROB_BELOW_HALF, abs=1e-12)
    assert d.l2_norm_sq() == pytest.approx(S_NORM_SQ, abs=1e-10)


def test_uniform_values():
    d = make_setting("uniform")
    assert d.cdf(0.3) == pytest.approx(0.3, abs=1e-15)
    assert d.bin_prob(0.25, 0.5) == pytest.approx(0.25, abs=1e-15)
    assert d.l2_norm_sq() == 1.0


@pytest.mark.parametrize("which", ["L", "S", "uniform"])
def test_pdf_integrates_to_one(which):
    d = make_setting(which)
    mass = quad_over_knots(lambda x: d.pdf(x), d)
    assert mass == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("which", ["L", "S", "uniform"])
def test_norm_at_least_one(which):
    # Cauchy-Schwarz on [0,1]: equality only for the uniform density
    d = make_setting(which)
    assert d.l2_norm_sq() >= 1.0 - 1e-10
    if which == "uniform":
        assert d.l2_norm_sq() == pytest.approx(1.0, abs=1e-12)


def test_cdf_domain_errors():
    d = make_setting("L")
    with pytest.raises(ValueError):
        d.cdf(-0.01)
    with pytest.raises(ValueError):
        d.cdf(1.01)
    with pytest.raises(ValueError):
        d.bin_prob(0.5, 0.5)
    with pytest.raises(ValueError):
        d.bin_prob(0.6, 0.4)


def test_sampling_determinism_and_bounds():
    d = make_setting("S")
    x1 = d.sample(2000, seed=11)
    x2 = d.sample(2000, seed=11)
    assert np.array_equal(x1, x2)
    x3 = d.sample(2000, seed=12)
    assert not np.array_equal(x1, x3)
    assert x1.min() >= 0.0 and x1.max() <= 1.0
    with pytest.raises(ValueError):
        d.sample(0, seed=1)


def test_uniform_sample_mean_clt_bound():
    d = make_setting("uniform")
    x = d.sample(100_000, seed=5)
    assert abs(x.mean() - 0.5) < 4.0 / math.sqrt(12.0 * 100_000)


@pytest.mark.parametrize("which", ["L", "S", "uniform"])
def test_kolmogorov_smirnov(which):
    # bound 2 * 1.63 / sqrt(n) is loose enough to hold for every seed here
    d = make_setting(which)
    n = 100_000
    bound = 2.0 * 1.63 / math.sqrt(n)
    for seed in range(10):
        x = np.sort(d.sample(n, seed=seed))
        cdf = d.cdf(x)
        up = np.max(np.arange(1, n + 1) / n - cdf)
        down = np.max(cdf - np.arange(0, n) / n)
        assert max(up, down) < bound


def test_piecewise_validation():
    # strictly increasing breakpoints required
    with pytest.raises(ValueError):
        from_json({"kind": "piecewise", "breakpoints": [0, 0.5, 0.5, 1], "values": [1, 1, 1, 1]})
    with pytest.raises(ValueError):
        from_json({"kind": "piecewise", "breakpoints": [0.1, 1], "values": [1, 1]})
    with pytest.raises(ValueError):  # negative density
        from_json({"kind": "piecewise", "breakpoints": [0, 1], "values": [-1, 3]})
    with pytest.raises(ValueError):  # not normalized
        from_json({"kind": "piecewise", "breakpoints": [0, 1], "values": [2, 2]})


def test_mixture_validation():
    comps = [
        {"weight": 0.5, "kind": "piecewise", "breakpoints": [0, 1], "values": [1, 1]},
        {"weight": 0.4, "kind": "gaussian", "mean": 0.5, "sd": 0.1},
    ]
    with pytest.raises(ValueError):  # weights sum to 0.9
        from_json({"kind": "mixture", "components": comps})
    comps[1]["weight"] = 0.5
    d = from_json({"kind": "mixture", "components": comps})
    assert d.cdf(1.0) == pytest.approx(1.0, abs=1e-10)


def test_degenerate_truncated_gaussian_rejected():
    with pytest.raises(ValueError):
        from_json({"kind": "mixture", "components": [
            {"weight": 1.0, "kind": "gaussian", "mean": -10.0, "sd": 0.001},
        ]})


def test_from_json_settings_match():
    for which in ("L", "S", "uniform"):
        a = make_setting(which)
        b = from_json(json.dumps({"kind": which}))
        xs = np.linspace(0, 1, 17)
        assert np.allclose(a.cdf(xs), b.cdf(xs), atol=0)


def test_from_json_bad_specs():
    with pytest.raises(ValueError):
        from_json({"kind": "nope"})
    with pytest.raises(ValueError):
        from_json({"no_kind": 1})
    with pytest.raises(ValueError):
        from_json({"kind": "mixture", "components": [
            {"weight": 1.0, "kind": "nope"},
        ]})


def test_normal_cdf_against_quadrature():
    # the erfc-based normal CDF drives every Gaussian component
    from vfoldsel.densities import _std_normal_cdf

    for z in (-3.0, -1.0, 0.0, 0.5, 2.0):
        ref = integrate.quad(lambda t: math.exp(-t * t / 2) / math.sqrt(2 * math.pi),
                             -12.0, z, limit=300)[0]
        assert _std_normal_cdf(z) == pytest.approx(ref, abs=1e-12)
