import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cnpullback.contraction import (ContractionError, build_profile, compute_k, double_well_closed_form,
                                    verify_contraction)
from cnpullback.noise import NoiseStreamKey, StreamRole, sample_path
from cnpullback.potentials import Potential
from cnpullback.sde import SdeSpec


@pytest.fixture(scope="module")
def dw():
    return build_profile(Potential.double_well(1.0), 1.0)


def test_quadratic_constants():
    p = build_profile(Potential.quadratic(1.0), 1.0)
    assert np.max(np.abs(p.k_values - 2.0)) < 1e-12
    assert p.R0 == 0.0
    assert p.R1 == pytest.approx(2.0, rel=1e-6)
    assert p.c == pytest.approx(0.5, rel=1e-6)
    assert p.phi_R0 == 1.0 and p.K == 2.0
    p4 = build_profile(Potential.quadratic(4.0), 1.0)
    assert p4.R1 == pytest.approx(1.0, rel=1e-6)
    assert p4.c == pytest.approx(2.0, rel=1e-6)


def test_k_small_r_limit_is_twice_min_curvature():
    # for r -> 0 the divided difference tends to 2 inf V''
    pot = Potential.double_well(1.0)
    k = compute_k(pot, 1.0, np.array([0.0, 1e-6]))
    assert k == pytest.approx([-2.0, -2.0], abs=1e-9)


def test_double_well_closed_form(dw):
    cf = double_well_closed_form(1.0, 1.0)
    r = dw.r_grid
    assert np.max(np.abs(dw.k_values - cf["k"](r)) / (1 + np.abs(cf["k"](r)))) < 1e-6
    assert dw.R0 == pytest.approx(cf["R0"], rel=1e-6)
    assert dw.phi_R0 == pytest.approx(cf["phi_R0"], rel=1e-5)
    np.testing.assert_allclose(dw.phi, cf["phi"](r), rtol=1e-5)


def test_double_well_reference_values(dw):
    assert dw.R0 == pytest.approx(2.0, rel=1e-6)
    assert dw.R1 == pytest.approx(3.02575, rel=1e-4)
    assert dw.c == pytest.approx(0.175004, rel=1e-4)
    assert dw.K == pytest.approx(2.0 * math.exp(0.5), rel=1e-5)


def test_resolution_independence(dw):
    coarse = build_profile(Potential.double_well(1.0), 1.0, n_r=2000)
    for key in ("R0", "R1", "c"):
        assert getattr(coarse, key) == pytest.approx(getattr(dw, key), rel=0.01)


def test_rate_decreases_with_barrier_height():
    cs = [build_profile(Potential.double_well(a), 1.0, n_r=1500).c for a in (0.5, 1.0, 2.0)]
    assert cs[0] > cs[1] > cs[2]
    assert cs[0] == pytest.approx(0.274, rel=5e-3)
    assert cs[2] == pytest.approx(0.0516, rel=5e-3)


@settings(max_examples=12, deadline=None)
@given(a=st.floats(0.2, 2.5), sigma=st.floats(0.5, 2.0))
def test_profile_invariants(a, sigma):
    p = build_profile(Potential.double_well(a), sigma, n_r=800)
    assert p.check_valid()
    assert p.R1 > p.R0 >= 0 and p.c > 0 and p.alpha == 1.0
    assert np.all(np.diff(p.f) >= 0)
    assert p.f[0] == 0.0


def test_f_and_F_are_consistent(dw):
    r = np.linspace(0, 15, 301)
    F = dw.F_at(r)
    dF = np.gradient(F, r)
    np.testing.assert_allclose(dF[1:-1], dw.f_at(r)[1:-1], atol=2e-3)
    assert F[0] == 0.0


def test_csv_and_constants(dw, tmp_path):
    dw.to_csv(tmp_path / "p.csv")
    dw.write_constants(tmp_path / "c.json")
    import json
    c = json.loads((tmp_path / "c.json").read_text())
    assert c["c"] == dw.c and c["R0"] == dw.R0
    assert dw.profile_id.startswith("profile-")


def test_invalid_inputs():
    with pytest.raises(ContractionError):
        build_profile(Potential.double_well(1.0), 0.0)


def test_verify_contraction_quadratic():
    spec = SdeSpec(Potential.quadratic(1.0), 1.0, 0.5)
    prof = build_profile(spec.potential, 1.0, n_r=800)
    beta = sample_path(NoiseStreamKey(1, StreamRole.common), 0.0, 4.0, 1e-3)
    rep = verify_contraction(spec, beta, -1.0, 1.0, prof, checkpoints=(1.0, 2.0), N=5000, master_seed=2,
                             mc_allowance=0.05)
    assert rep.passed
    # for a quadratic the synchronous gap decays like e^{-t}; the W1 of the laws follows
    assert rep.w1_sigma[1] == pytest.approx(2.0 * math.exp(-1.0), abs=0.06)


def test_verify_contraction_double_well(dw):
    spec = SdeSpec(Potential.double_well(1.0), 1.0, 0.5)
    beta = sample_path(NoiseStreamKey(3, StreamRole.common), 0.0, 4.0, 1e-3)
    rep = verify_contraction(spec, beta, -1.0, 1.0, dw, checkpoints=(1.0, 2.0, 4.0), N=5000, master_seed=4,
                             mc_allowance=0.05)
    assert rep.passed
    assert rep.bound[0] == pytest.approx(1.1 * dw.K * 2.0 + 0.05)
    with pytest.raises(ContractionError):
        verify_contraction(spec, beta, 0.5, 0.5, dw, checkpoints=(1.0,), N=100)
