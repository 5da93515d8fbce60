import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cnpullback.noise import (BrownianPath, NoiseError, NoiseStreamKey, StreamRole, ensure_window,
                              extend_backwards, sample_path, wiener_shift)


def key(seed=3, pid=0):
    return NoiseStreamKey(seed, StreamRole.common, pid)


def test_anchor_is_zero_and_deterministic():
    p = sample_path(key(), -2.0, 3.0, 0.01)
    assert p(0.0)[0] == 0.0
    assert p.values[p.anchor, 0] == 0.0
    q = sample_path(key(), -2.0, 3.0, 0.01)
    np.testing.assert_array_equal(p.values, q.values)
    assert p.t_start == pytest.approx(-2.0) and p.t_end == pytest.approx(3.0)


def test_increment_variance_over_many_keys():
    dt = 0.01
    inc = np.array([sample_path(key(seed=s), 0.0, dt, dt).values[1, 0] for s in range(10_000)])
    assert inc.var() == pytest.approx(dt, rel=0.05)
    assert abs(inc.mean()) < 4 * np.sqrt(dt / inc.size)


def test_invalid_arguments():
    with pytest.raises(NoiseError):
        sample_path(key(), -1.0, 1.0, 0.0)
    with pytest.raises(NoiseError):
        sample_path(key(), 0.5, 1.0, 0.1)
    with pytest.raises(NoiseError):
        sample_path(key(), 0.0, 0.0, 0.1)


def test_refinement_consistency():
    # a longer window restricted to a shorter one reproduces it bit for bit
    short = sample_path(key(), -1.0, 2.0, 0.01)
    long = sample_path(key(), -5.0, 2.0, 0.01)
    i0 = long.anchor - short.anchor
    np.testing.assert_array_equal(long.values[i0:], short.values)


def test_extend_backwards_contract():
    p = sample_path(key(), -1.0, 1.0, 0.01)
    e = extend_backwards(p, 2.0)
    assert e.t_start == pytest.approx(-3.0)
    assert e(p.t_start)[0] == p(p.t_start)[0]
    np.testing.assert_array_equal(e.values[e.anchor - p.anchor:], p.values)
    twice = extend_backwards(extend_backwards(p, 1.0), 1.0)
    np.testing.assert_array_equal(twice.values, e.values)
    np.testing.assert_array_equal(e.values, sample_path(key(), -3.0, 1.0, 0.01).values)


def test_extended_segment_increment_variance():
    dt = 0.01
    p = extend_backwards(sample_path(key(seed=99), -0.5, 0.0, dt), 200.0)
    inc = np.diff(p.values[: p.anchor - 50, 0])
    assert inc.var() == pytest.approx(dt, rel=0.05)


def test_shift_identities():
    p = sample_path(key(), -4.0, 4.0, 0.01)
    assert wiener_shift(p, 0.0) is p
    s = wiener_shift(p, 1.5)
    assert s(0.0)[0] == 0.0
    # (theta_t xi)(s) = xi(s + t) - xi(t) on grid points
    for u in (-2.0, -0.37, 0.5, 2.49):
        assert s(u)[0] == pytest.approx(p(u + 1.5)[0] - p(1.5)[0], abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(a=st.integers(-150, 150), b=st.integers(-150, 150))
def test_shift_flow_property(a, b):
    p = sample_path(key(), -4.0, 4.0, 0.01)
    s, t = a * 0.01, b * 0.01
    left = wiener_shift(wiener_shift(p, s), t)
    right = wiener_shift(p, s + t)
    u = np.linspace(-0.9, 0.9, 37)
    np.testing.assert_allclose(left(u), right(u), atol=1e-12)


def test_shift_window_violation():
    p = sample_path(key(), -1.0, 1.0, 0.01)
    with pytest.raises(NoiseError):
        wiener_shift(p, 1.5)
    with pytest.raises(NoiseError):
        p(1.2)


def test_off_grid_shift_is_interpolated():
    p = sample_path(key(), -2.0, 2.0, 0.01)
    s = wiener_shift(p, 0.005)
    assert s(0.0)[0] == 0.0
    assert s(0.5)[0] == pytest.approx(p(0.505)[0] - p(0.005)[0], abs=1e-12)


def test_increments_are_exact_differences():
    p = sample_path(key(), -1.0, 1.0, 0.01)
    inc = p.increments(-0.5, 20, 0.01)
    np.testing.assert_array_equal(inc[:, 0], np.diff(p.values[50:71, 0]))
    fine = p.increments(-0.5, 40, 0.005)
    np.testing.assert_allclose(fine[0::2, 0] + fine[1::2, 0], inc[:, 0], atol=1e-15)


def test_csv_roundtrip(tmp_path):
    p = sample_path(key(), -0.3, 0.2, 0.01)
    p.to_csv(tmp_path / "beta.csv")
    q = BrownianPath.from_csv(tmp_path / "beta.csv")
    np.testing.assert_array_equal(q.values, p.values)
    assert q.anchor == p.anchor


def test_zero_path_extension_and_keyless_guard():
    z = BrownianPath.zeros(-1.0, 1.0, 0.1)
    assert np.all(ensure_window(z, -3.0, 1.0).values == 0)
    f = BrownianPath.from_function(lambda t: t, -1.0, 1.0, 0.1)
    with pytest.raises(NoiseError):
        extend_backwards(f, 1.0)


def test_multidimensional_paths_independent_components():
    p = sample_path(key(), 0.0, 200.0, 0.01, dim=2)
    inc = np.diff(p.values, axis=0)
    assert abs(np.corrcoef(inc.T)[0, 1]) < 0.05
    np.testing.assert_allclose(inc.var(axis=0), 0.01, rtol=0.05)


def test_key_validation():
    with pytest.raises(NoiseError):
        NoiseStreamKey(-1)
    with pytest.raises(NoiseError):
        NoiseStreamKey(0, StreamRole.common, 2 ** 48)
    k0, k1 = NoiseStreamKey(5, StreamRole.intrinsic, 7).philox_key
    assert int(k0) == 5 and int(k1) == (1 << 62) | 7
