"""Per-flow random streams.

Every traffic source owns a xoshiro256** generator (period 2**256 - 1).  The
four state words of flow ``f`` under run seed ``seed`` are the first four
outputs of splitmix64 started from ``mix64(seed) ^ mix64(f + 1)``, where
``mix64`` is the splitmix64 finaliser.  Streams therefore depend only on
``(seed, f)``, not on the switch configuration.
"""
import numba
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_U30, _U27, _U31 = np.uint64(30), np.uint64(27), np.uint64(31)
_U17, _U45, _U7, _U11 = np.uint64(17), np.uint64(45), np.uint64(7), np.uint64(11)
_FIVE, _NINE = np.uint64(5), np.uint64(9)
_INV53 = 1.0 / 9007199254740992.0   # 2**-53


@numba.njit(cache=True, inline="always", _nrt=False)
def mix64(z):
    z = (z ^ (z >> _U30)) * _M1
    z = (z ^ (z >> _U27)) * _M2
    return z ^ (z >> _U31)


@numba.njit(cache=True, inline="always", _nrt=False)
def _rotl(x, k):
    return (x << k) | (x >> (np.uint64(64) - k))


@numba.njit(cache=True)
def seed_streams(seed, count):
    """State array of shape (count, 4) for flows 0..count-1."""
    out = np.empty((count, 4), dtype=np.uint64)
    base = mix64(np.uint64(seed))
    for f in range(count):
        x = base ^ mix64(np.uint64(f + 1))
        for w in range(4):
            x = x + _GOLDEN
            out[f, w] = mix64(x)
    return out


@numba.njit(cache=True, inline="always", _nrt=False)
def next_u64(st, f):
    s0, s1, s2, s3 = st[f, 0], st[f, 1], st[f, 2], st[f, 3]
    result = _rotl(s1 * _FIVE, _U7) * _NINE
    t = s1 << _U17
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, _U45)
    st[f, 0], st[f, 1], st[f, 2], st[f, 3] = s0, s1, s2, s3
    return result


@numba.njit(cache=True, inline="always", _nrt=False)
def uniform_pos(st, f):
    """Uniform double in (0, 1]."""
    return (float(next_u64(st, f) >> _U11) + 1.0) * _INV53


def geometric_scale(p: float) -> float:
    """``1 / log(1 - p)`` for success probability ``0 < p <= 1``."""
    if p >= 1.0:
        return 0.0
    return 1.0 / np.log1p(-p)


@numba.njit(cache=True, inline="always", _nrt=False)
def trials_until_success(st, f, scale):
    """Geometric on {1, 2, ...}; ``scale`` comes from
    :func:`geometric_scale` of the success probability."""
    g = np.log(uniform_pos(st, f)) * scale
    if g > 4e18:
        return np.int64(4e18)
    return 1 + np.int64(g)
