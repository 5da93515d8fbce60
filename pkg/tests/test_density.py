import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats
from scipy.special import ndtr

from cnpullback import density as D
from cnpullback.contraction import build_profile
from cnpullback.potentials import Potential


def gauss(grid, m=0.0, s=1.0):
    return D.GridDensity.from_cdf(grid, lambda e: ndtr((e - m) / s))


def test_dirac_particles_give_single_spike():
    g = D.Grid(-1, 1, 20)
    d = D.from_particles(np.full(100, 0.33), g)
    assert np.count_nonzero(d.values) == 1
    assert d.mass == pytest.approx(1.0, abs=1e-12)


def test_histogram_of_normal_samples(rng):
    g = D.Grid(-8, 8, 400)
    d = D.from_particles(rng.standard_normal(1_000_000), g)
    assert D.l1_distance(d, gauss(g)) < 0.01


def test_kde_small_bandwidth_approaches_histogram():
    g = D.Grid(0, 10, 10)
    x = g.centres.repeat(3)
    h = D.from_particles(x, g)
    k = D.from_particles(x, g, "gaussian_kde", bandwidth=1e-4)
    assert D.l1_distance(h, k) < 1e-12


def test_kde_binned_path_matches_exact(rng):
    g = D.Grid(-6, 6, 600)
    x = rng.standard_normal(30_000)
    binned = D.from_particles(x, g, "gaussian_kde", bandwidth=0.2)
    assert D.l1_distance(binned, gauss(g, 0, math.sqrt(1 + 0.04))) < 0.03


def test_out_of_range_policy():
    g = D.Grid(-1, 1, 10)
    x = np.zeros(10_000)
    x[:5] = 5.0  # 0.05% outside: folded into the edge cell
    d = D.from_particles(x, g)
    assert d.mass == pytest.approx(1.0)
    x[:20] = 5.0  # 0.2% outside
    with pytest.raises(D.DensityError):
        D.from_particles(x, g)


def test_moments():
    g = D.Grid(-5, 5, 1000)
    assert D.mean(gauss(g)) == pytest.approx(0.0, abs=1e-14)
    u = D.GridDensity.normalized(D.Grid(0, 1, 7), np.ones(7))
    assert D.variance(u) == pytest.approx(1 / 12, abs=1e-15)
    # cell masses carry the dx^2/12 grouping term, the flat cells another dx^2/12
    g = D.Grid(-8, 8, 2048)
    assert D.variance(gauss(g, 0.3, 0.7)) == pytest.approx(0.49 + g.dx ** 2 / 6, rel=1e-6)


def test_l1_examples():
    g = D.Grid(-8, 8, 2048)
    d = gauss(g)
    assert D.l1_distance(d, d) == 0.0
    a = D.GridDensity.normalized(g, np.r_[np.ones(10), np.zeros(2038)])
    b = D.GridDensity.normalized(g, np.r_[np.zeros(2038), np.ones(10)])
    assert D.l1_distance(a, b) == pytest.approx(2.0)
    # |N(0,1) - N(0.5,1)| integrates to 2 (2 Phi(0.25) - 1)
    exact = 2 * (2 * ndtr(0.25) - 1)
    assert D.l1_distance(d, gauss(g, 0.5)) == pytest.approx(exact, abs=1e-4)


def test_grid_mismatch_rejected():
    with pytest.raises(D.DensityError):
        D.l1_distance(gauss(D.Grid(-5, 5, 100)), gauss(D.Grid(-5, 5, 101)))


def test_wasserstein_examples():
    g = D.Grid(-3, 3, 60)
    a = D.GridDensity.normalized(g, np.eye(60)[30])
    b = D.GridDensity.normalized(g, np.eye(60)[40])
    assert D.wasserstein1(a, b) == pytest.approx(1.0, abs=1e-12)
    g2 = D.Grid(-10, 10, 2000)
    assert D.wasserstein1(gauss(g2), gauss(g2, 1.0)) == pytest.approx(1.0, abs=1e-6)
    c = 0.37
    assert D.wasserstein1(gauss(g2, -1), gauss(g2, -1 + c, 1.0)) == pytest.approx(c, abs=g2.dx)


def test_wasserstein_matches_scipy_for_mixtures():
    g = D.Grid(-6, 6, 600)
    d1 = gauss(g, -1, 0.5)
    d2 = D.GridDensity.normalized(g, 0.5 * gauss(g, 1, 0.3).values + 0.5 * gauss(g, -2, 0.6).values)
    ref = stats.wasserstein_distance(g.centres, g.centres, d1.values, d2.values)
    assert D.wasserstein1(d1, d2) == pytest.approx(ref, abs=2 * g.dx)
    assert D.w1_quantile(d1, d2) == pytest.approx(D.wasserstein1(d1, d2), rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=9, max_size=9), st.lists(st.floats(0.2, 1.5), min_size=3, max_size=3))
def test_wasserstein_triangle(means, sds):
    g = D.Grid(-8, 8, 400)
    ds = [D.GridDensity.normalized(g, (gauss(g, means[3 * i], sds[i]).values
                                       + gauss(g, means[3 * i + 1], sds[i]).values)) for i in range(3)]
    ab, bc, ac = D.wasserstein1(ds[0], ds[1]), D.wasserstein1(ds[1], ds[2]), D.wasserstein1(ds[0], ds[2])
    assert ac <= ab + bc + 1e-10 * 16


@pytest.fixture(scope="module")
def dw_profile():
    return build_profile(Potential.double_well(1.0), 1.0, n_r=1500)


def test_wf_examples(dw_profile):
    g = D.Grid(-6, 6, 600)
    d = gauss(g)
    assert D.wf_upper(d, d, dw_profile) == 0.0


@settings(max_examples=25, deadline=None)
@given(m1=st.floats(-2, 2), m2=st.floats(-2, 2), s1=st.floats(0.2, 1.2), s2=st.floats(0.2, 1.2),
       sigma=st.sampled_from([0.5, 1.0, 2.0]))
def test_wf_sandwich(dw_profile, m1, m2, s1, s2, sigma):
    g = D.Grid(-8, 8, 800)
    d1, d2 = gauss(g, m1, s1), gauss(g, m2, s2)
    w1s = D.wasserstein1(d1, d2) / sigma
    wf = D.wf_upper(d1, d2, dw_profile, sigma)
    assert wf <= w1s * (1 + 1e-9) + 1e-12
    assert wf >= dw_profile.phi_R0 / 2 * w1s * (1 - 1e-9) - 1e-12


def test_wf_exact_for_translation(dw_profile):
    # a translate is coupled at constant distance c: cost f(c)
    g = D.Grid(-8, 8, 1600)
    c = 0.8
    d1, d2 = gauss(g, 0, 0.5), gauss(g, c, 0.5)
    assert D.wf_upper(d1, d2, dw_profile) == pytest.approx(float(dw_profile.f_at(c)), rel=1e-3)


def test_distance_report(dw_profile):
    g = D.Grid(-6, 6, 600)
    r = D.distance_report(gauss(g), gauss(g, 1), dw_profile)
    assert 0 <= r.l1 <= 2 and r.wf_upper <= r.w1
    assert r.f_profile_id == dw_profile.profile_id


def test_csv_roundtrip(tmp_path):
    g = D.Grid(-2, 3, 50)
    d = gauss(g, 0.5)
    d.to_csv(tmp_path / "d.csv")
    e = D.GridDensity.from_csv(tmp_path / "d.csv")
    np.testing.assert_array_equal(e.values, d.values)
    assert e.grid.same_as(g)
    D.write_overlay_csv(tmp_path / "o.csv", {"a": d, "b": gauss(g, 1)})


def test_remap_is_conservative():
    g = D.Grid(-5, 5, 300)
    d = gauss(g, 0.2, 0.8)
    r = d.remap(D.Grid(-6, 6, 517))
    assert r.mass == pytest.approx(1.0, abs=1e-12)
    assert D.mean(r) == pytest.approx(D.mean(d), abs=1e-3)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=5, max_size=40))
def test_normalization_invariant(vals):
    vals = np.asarray(vals)
    if vals.sum() <= 0:
        return
    d = D.GridDensity.normalized(D.Grid(0, 1, vals.size), vals)
    assert abs(d.mass - 1) < 1e-8
