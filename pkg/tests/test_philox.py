import numpy as np
import pytest
from scipy import stats

from cnpullback.kernels import philox
from conftest import requires_numba


def test_matches_numpy_philox():
    key = (0x1234, 0xABCDEF)
    bg = np.random.Philox(key=np.array(key, dtype=np.uint64), counter=np.array([5, 0, 0, 0], dtype=np.uint64))
    ref = bg.random_raw(4)
    # numpy increments the counter before producing a block
    out = philox.philox4x64(np.uint64(6), np.uint64(0), np.uint64(0), np.uint64(0), np.uint64(key[0]),
                            np.uint64(key[1]))
    np.testing.assert_array_equal(np.array(out, dtype=np.uint64).ravel(), ref)


def test_normals_are_standard(rng):
    z = philox.normals(0, 400_000, np.uint64(7), np.uint64(3))
    assert abs(z.mean()) < 5 * 1 / np.sqrt(z.size)
    assert abs(z.var() - 1) < 5 * np.sqrt(2 / z.size)
    assert stats.kstest(z[:50_000], "norm").pvalue > 1e-3


def test_normals_negative_start_consistent():
    k0, k1 = np.uint64(9), np.uint64(1)
    long = philox.normals(-13, 40, k0, k1)
    np.testing.assert_array_equal(philox.normals(-13, 5, k0, k1), long[:5])
    np.testing.assert_array_equal(philox.normals(2, 9, k0, k1), long[15:24])


def test_keys_give_distinct_streams():
    a = philox.normals(0, 1000, np.uint64(1), np.uint64(0))
    b = philox.normals(0, 1000, np.uint64(1), np.uint64(1))
    c = philox.normals(0, 1000, np.uint64(2), np.uint64(0))
    assert abs(np.corrcoef(a, b)[0, 1]) < 0.15
    assert abs(np.corrcoef(a, c)[0, 1]) < 0.15


@requires_numba
def test_numba_blocks_match_numpy():
    import numba

    @numba.njit
    def draw(n, k0, k1):
        out = np.empty((n, 4))
        for b in range(n):
            out[b, 0], out[b, 1], out[b, 2], out[b, 3] = philox.normals4_nb(np.uint64(b), k0, k1)
        return out

    nb = draw(5000, np.uint64(11), np.uint64(2 ** 62 + 5))
    npv = philox.normal_block(np.arange(5000), np.uint64(11), np.uint64(2 ** 62 + 5))
    np.testing.assert_allclose(nb, npv, rtol=0, atol=1e-14)
