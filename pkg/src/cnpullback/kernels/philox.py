"""Philox4x64-10 counter-based generator and Gaussian draws built on it.

Every random number in the package is a pure function of a (counter, key)
pair, so particle ``i`` at step ``n`` sees the same draw whatever the thread
layout or call splitting.  Raw output matches ``numpy.random.Philox`` for the
same counter and key.

Normals use the inverse CDF (Wichura AS241, ~1e-16 relative accuracy), one
uniform per normal, four normals per Philox block.
"""
import numpy as np

from ._accel import HAS_NUMBA, njit

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_TWO_M53 = 1.0 / 9007199254740992.0
_HALF_ULP = 0.5 / 9007199254740992.0

# AS241 (PPND16) coefficients, ascending powers
_A = np.array([3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
               1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
               3.3430575583588128105e4, 2.5090809287301226727e3])
_B = np.array([1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
               2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
               5.2264952788528545610e3])
_C = np.array([1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
               3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
               2.27238449892691845833e-2, 7.74545014278341407640e-4])
_D = np.array([1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
               1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
               1.05075007164441684324e-9])
_E = np.array([6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
               2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
               2.71155556874348757815e-5, 2.01033439929228813265e-7])
_F = np.array([1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
               7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
               2.04426310338993978564e-15])


def _poly(c, x):
    return (((((((c[7] * x + c[6]) * x + c[5]) * x + c[4]) * x + c[3]) * x + c[2]) * x + c[1]) * x + c[0])


def _umulhi_emulated(a, b):
    a_lo = a & _MASK32
    a_hi = a >> _S32
    b_lo = b & _MASK32
    b_hi = b >> _S32
    p0 = a_lo * b_lo
    p1 = a_lo * b_hi
    p2 = a_hi * b_lo
    p3 = a_hi * b_hi
    mid = (p0 >> _S32) + (p1 & _MASK32) + (p2 & _MASK32)
    return p3 + (p1 >> _S32) + (p2 >> _S32) + (mid >> _S32)


def _philox_np(c0, c1, c2, c3, k0, k1):
    for r in range(10):
        if r > 0:
            k0 = k0 + _W0
            k1 = k1 + _W1
        hi0 = _umulhi_emulated(_M0, c0)
        lo0 = _M0 * c0
        hi1 = _umulhi_emulated(_M1, c2)
        lo1 = _M1 * c2
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


def _to_unit(r):
    return (r >> _S11) * _TWO_M53 + _HALF_ULP


def _ndtri_np(p):
    p = np.asarray(p, dtype=np.float64)
    q = p - 0.5
    central = np.abs(q) <= 0.425
    out = np.empty_like(p)
    rc = 0.180625 - q[central] * q[central]
    out[central] = q[central] * _poly(_A, rc) / _poly(_B, rc)
    tail = ~central
    if np.any(tail):
        qt = q[tail]
        pt = p[tail]
        r = np.sqrt(-np.log(np.where(qt < 0, pt, 1.0 - pt)))
        near = r <= 5.0
        v = np.empty_like(r)
        rn = r[near] - 1.6
        v[near] = _poly(_C, rn) / _poly(_D, rn)
        rf = r[~near] - 5.0
        v[~near] = _poly(_E, rf) / _poly(_F, rf)
        out[tail] = np.where(qt < 0, -v, v)
    return out


def philox4x64(c0, c1, c2, c3, k0, k1):
    """Vectorized Philox4x64-10 on uint64 arrays (or numpy scalars)."""
    with np.errstate(over="ignore"):
        return _philox_np(c0, c1, c2, c3, k0, k1)


def as_u64(values):
    """Reinterpret signed integers (possibly negative) as uint64 counter words."""
    return np.asarray(values, dtype=np.int64).view(np.uint64)


def uniform_block(block, k0, k1):
    """Uniforms in (0, 1) for counters ``block`` under keys (k0, k1); trailing axis of 4."""
    c = as_u64(block)
    c, k0, k1 = np.broadcast_arrays(c, np.asarray(k0, dtype=np.uint64), np.asarray(k1, dtype=np.uint64))
    zero = np.zeros_like(c)
    with np.errstate(over="ignore"):
        r = _philox_np(c, zero, zero, zero, k0, k1)
    return np.stack([_to_unit(x) for x in r], axis=-1)


def normal_block(block, k0, k1):
    """Standard normals for counters ``block`` under keys (k0, k1); trailing axis of 4."""
    u = uniform_block(block, k0, k1)
    return _ndtri_np(u.reshape(-1)).reshape(u.shape)


def normals(start, count, k0, k1):
    """``count`` consecutive normals of stream (k0, k1) beginning at signed index ``start``."""
    if count <= 0:
        return np.empty(0)
    first = start // 4
    last = (start + count - 1) // 4
    blocks = np.arange(first, last + 1, dtype=np.int64)
    flat = normal_block(blocks, k0, k1).reshape(-1)
    off = start - 4 * first
    return flat[off:off + count]


if HAS_NUMBA:
    from llvmlite import ir
    from numba.core import types
    from numba.extending import intrinsic

    @intrinsic
    def _umulhi(typingctx, a, b):
        sig = types.uint64(types.uint64, types.uint64)

        def codegen(context, builder, signature, args):
            i128 = ir.IntType(128)
            p = builder.mul(builder.zext(args[0], i128), builder.zext(args[1], i128))
            return builder.trunc(builder.lshr(p, ir.Constant(i128, 64)), ir.IntType(64))

        return sig, codegen

    @njit(inline="always")
    def philox4x64_nb(c0, c1, c2, c3, k0, k1):
        for r in range(10):
            if r > 0:
                k0 = k0 + _W0
                k1 = k1 + _W1
            hi0 = _umulhi(_M0, c0)
            lo0 = _M0 * c0
            hi1 = _umulhi(_M1, c2)
            lo1 = _M1 * c2
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        return c0, c1, c2, c3

    @njit(inline="always")
    def _poly_nb(c, x):
        return (((((((c[7] * x + c[6]) * x + c[5]) * x + c[4]) * x + c[3]) * x + c[2]) * x + c[1]) * x + c[0])

    @njit(inline="always")
    def ndtri_nb(p):
        q = p - 0.5
        if abs(q) <= 0.425:
            r = 0.180625 - q * q
            return q * _poly_nb(_A, r) / _poly_nb(_B, r)
        r = p if q < 0 else 1.0 - p
        r = np.sqrt(-np.log(r))
        if r <= 5.0:
            r -= 1.6
            v = _poly_nb(_C, r) / _poly_nb(_D, r)
        else:
            r -= 5.0
            v = _poly_nb(_E, r) / _poly_nb(_F, r)
        return -v if q < 0 else v

    @njit(inline="always")
    def uniforms4_nb(c0, k0, k1):
        z = np.uint64(0)
        r0, r1, r2, r3 = philox4x64_nb(c0, z, z, z, k0, k1)
        return ((r0 >> _S11) * _TWO_M53 + _HALF_ULP, (r1 >> _S11) * _TWO_M53 + _HALF_ULP,
                (r2 >> _S11) * _TWO_M53 + _HALF_ULP, (r3 >> _S11) * _TWO_M53 + _HALF_ULP)

    @njit(inline="always")
    def normals4_nb(c0, k0, k1):
        u0, u1, u2, u3 = uniforms4_nb(c0, k0, k1)
        return ndtri_nb(u0), ndtri_nb(u1), ndtri_nb(u2), ndtri_nb(u3)
else:  # pragma: no cover
    philox4x64_nb = normals4_nb = uniforms4_nb = ndtri_nb = None
