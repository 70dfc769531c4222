"""Counter-based per-path random streams for the compiled path kernels.

Every simulated path owns an independent stream keyed by ``(seed, path_index)``.
The stream's initial state comes from one Philox4x64-10 block with key ``seed``
and counter ``(1, 0, path_index, sub)``; the numbers themselves are produced by
SFC64 from that state after 12 warm-up draws.  Seeding is therefore
random-access in the path index, while generation runs at SFC64 speed.

The words of a stream equal ``numpy.random.SFC64`` started from the same state,
and normal variates use numpy's 256-layer ziggurat, so the normals of a path
match ``numpy.random.Generator(SFC64).standard_normal()`` bit for bit (see
:func:`numpy_generator`).  A path's numbers depend only on ``(seed,
path_index)``, so results do not depend on batching or worker count.

:func:`uniform_at` gives random access to a separate Philox stream, used for
auxiliary draws whose position is data dependent.
"""

from __future__ import annotations

import math

import numba as nb
import numpy as np
from llvmlite import ir
from numba import types
from numba.extending import intrinsic

from .errors import DomainError

_PHILOX_M0 = np.uint64(0xD2E7470EE14C6C93)
_PHILOX_M1 = np.uint64(0xCA5A826395121157)
_PHILOX_W0 = np.uint64(0x9E3779B97F4A7C15)
_PHILOX_W1 = np.uint64(0xBB67AE8584CAA73B)

_U0 = np.uint64(0)
_U1 = np.uint64(1)
_U8 = np.uint64(8)
_U11 = np.uint64(11)
_MASK8 = np.uint64(0xFF)
_MASK52 = np.uint64(0x000FFFFFFFFFFFFF)
_TWO_M53 = 1.0 / 9007199254740992.0

# SFC64 state words [a, b, c, counter]
STATE_SIZE = 4


def _ziggurat_tables():
    try:
        from numba.np.random import _constants as c

        return (
            np.asarray(c.ki_double, dtype=np.uint64),
            np.asarray(c.wi_double, dtype=np.float64),
            np.asarray(c.fi_double, dtype=np.float64),
            float(c.ziggurat_nor_r),
            float(c.ziggurat_nor_inv_r),
        )
    except (ImportError, AttributeError):  # pragma: no cover - numba layout changed
        # Marsaglia-Tsang construction; statistically equivalent, not bit-identical to numpy
        r, v, m = 3.6541528853610088, 0.00492867323399, 2.0**52
        ki = np.zeros(256, np.uint64)
        wi = np.zeros(256)
        fi = np.zeros(256)
        q = v / math.exp(-0.5 * r * r)
        ki[0] = np.uint64(int((r / q) * m))
        wi[0], wi[255] = q / m, r / m
        fi[0], fi[255] = 1.0, math.exp(-0.5 * r * r)
        dn = tn = r
        for i in range(254, 0, -1):
            dn = math.sqrt(-2.0 * math.log(v / dn + math.exp(-0.5 * dn * dn)))
            ki[i + 1] = np.uint64(int((dn / tn) * m))
            tn = dn
            fi[i] = math.exp(-0.5 * dn * dn)
            wi[i] = dn / m
        return ki, wi, fi, r, 1.0 / r


KI, WI, FI, ZIG_R, ZIG_INV_R = _ziggurat_tables()


@intrinsic
def _mulhilo64(typingctx, a, b):
    sig = types.UniTuple(types.uint64, 2)(types.uint64, types.uint64)

    def codegen(context, builder, signature, args):
        i128 = ir.IntType(128)
        prod = builder.mul(builder.zext(args[0], i128), builder.zext(args[1], i128))
        lo = builder.trunc(prod, ir.IntType(64))
        hi = builder.trunc(builder.lshr(prod, ir.Constant(i128, 64)), ir.IntType(64))
        return context.make_tuple(builder, signature.return_type, (hi, lo))

    return sig, codegen


@nb.njit(inline="always")
def philox4x64(c0, c1, c2, c3, k0, k1):
    """Ten Philox rounds on one 256-bit counter block."""
    for _ in range(10):
        hi0, lo0 = _mulhilo64(_PHILOX_M0, c0)
        hi1, lo1 = _mulhilo64(_PHILOX_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = k0 + _PHILOX_W0
        k1 = k1 + _PHILOX_W1
    return c0, c1, c2, c3


@nb.njit(inline="always")
def _rotl24(x):
    return (x << np.uint64(24)) | (x >> np.uint64(40))


@nb.njit(inline="always")
def stream_init(st, seed, path_index, sub=0):
    """Point ``st`` at the start of stream ``(seed, path_index, sub)``; ``sub=0`` is the main stream."""
    a, b, c, _ = philox4x64(_U1, _U0, np.uint64(path_index), np.uint64(sub), np.uint64(seed), _U0)
    w = _U1
    for _ in range(12):
        tmp = a + b + w
        w += _U1
        a = b ^ (b >> _U11)
        b = c + (c << np.uint64(3))
        c = _rotl24(c) + tmp
    st[0] = a
    st[1] = b
    st[2] = c
    st[3] = w


@nb.njit(inline="always")
def next_u64(st):
    a = st[0]
    b = st[1]
    c = st[2]
    w = st[3]
    tmp = a + b + w
    st[3] = w + _U1
    st[0] = b ^ (b >> _U11)
    st[1] = c + (c << np.uint64(3))
    st[2] = _rotl24(c) + tmp
    return tmp


@nb.njit(inline="always")
def next_double(st):
    return np.float64(np.int64(next_u64(st) >> _U11)) * _TWO_M53


@nb.njit(inline="always")
def next_normal(st, ki, wi, fi):
    while True:
        r = next_u64(st)
        idx = np.int64(r & _MASK8)
        r = r >> _U8
        sign = r & _U1
        rabs = np.int64((r >> _U1) & _MASK52)
        x = np.float64(rabs) * wi[idx]
        if sign:
            x = -x
        if rabs < np.int64(ki[idx]):
            return x
        if idx == 0:
            while True:
                xx = -ZIG_INV_R * math.log1p(-next_double(st))
                yy = -math.log1p(-next_double(st))
                if yy + yy > xx * xx:
                    if (rabs >> 8) & 1:
                        return -(ZIG_R + xx)
                    return ZIG_R + xx
        else:
            if (fi[idx - 1] - fi[idx]) * next_double(st) + fi[idx] < math.exp(-0.5 * x * x):
                return x


@nb.njit(inline="always")
def _finish_rejected(st, idx, rabs, x, ki, wi, fi):
    # continuation of numpy's ziggurat after the fast acceptance test failed
    if idx == 0:
        while True:
            xx = -ZIG_INV_R * math.log1p(-next_double(st))
            yy = -math.log1p(-next_double(st))
            if yy + yy > xx * xx:
                if (rabs >> 8) & 1:
                    return -(ZIG_R + xx)
                return ZIG_R + xx
    if (fi[idx - 1] - fi[idx]) * next_double(st) + fi[idx] < math.exp(-0.5 * x * x):
        return x
    return next_normal(st, ki, wi, fi)


@nb.njit(inline="always")
def fill_normals(st, out, start, stop):
    """Write the next ``stop - start`` normals of the stream into ``out[start:stop]``.

    Same output as repeated :func:`next_normal`; the generator state lives in
    registers on the accept-first-try path.
    """
    ki, wi, fi = KI, WI, FI
    a = st[0]
    b = st[1]
    c = st[2]
    w = st[3]
    i = start
    while i < stop:
        r = a + b + w
        w += _U1
        a = b ^ (b >> _U11)
        b = c + (c << np.uint64(3))
        c = _rotl24(c) + r
        idx = np.int64(r & _MASK8)
        r = r >> _U8
        rabs = np.int64((r >> _U1) & _MASK52)
        x = np.float64(rabs) * wi[idx]
        if r & _U1:
            x = -x
        if rabs >= np.int64(ki[idx]):
            st[0] = a
            st[1] = b
            st[2] = c
            st[3] = w
            x = _finish_rejected(st, idx, rabs, x, ki, wi, fi)
            a = st[0]
            b = st[1]
            c = st[2]
            w = st[3]
        out[i] = x
        i += 1
    st[0] = a
    st[1] = b
    st[2] = c
    st[3] = w


@nb.njit(inline="always")
def fill_walk(st, out, m, sd, walk):
    """Random walk ``walk + sd * (z_1 + ... + z_i)`` into ``out[:m]`` from the next ``m`` normals.

    Returns the final walk value and the maximum of ``out[:m]``. Normals and
    summation order equal :func:`fill_normals` followed by a running sum.
    """
    ki, wi, fi = KI, WI, FI
    a = st[0]
    b = st[1]
    c = st[2]
    w = st[3]
    hi = -np.inf
    for i in range(m):
        r = a + b + w
        w += _U1
        a = b ^ (b >> _U11)
        b = c + (c << np.uint64(3))
        c = _rotl24(c) + r
        idx = np.int64(r & _MASK8)
        r = r >> _U8
        rabs = np.int64((r >> _U1) & _MASK52)
        x = np.float64(rabs) * wi[idx]
        if r & _U1:
            x = -x
        if rabs >= np.int64(ki[idx]):
            st[0] = a
            st[1] = b
            st[2] = c
            st[3] = w
            x = _finish_rejected(st, idx, rabs, x, ki, wi, fi)
            a = st[0]
            b = st[1]
            c = st[2]
            w = st[3]
        walk += sd * x
        out[i] = walk
        hi = max(hi, walk)
    st[0] = a
    st[1] = b
    st[2] = c
    st[3] = w
    return walk, hi


@nb.njit(inline="always")
def word_at(seed, path_index, sub, k):
    """Random access to word ``k`` of a stream, without touching any state."""
    blk = np.uint64(k // 4) + _U1
    a, b, c, d = philox4x64(blk, _U0, np.uint64(path_index), np.uint64(sub), np.uint64(seed), _U0)
    j = k % 4
    if j == 0:
        return a
    if j == 1:
        return b
    if j == 2:
        return c
    return d


@nb.njit(inline="always")
def uniform_at(seed, path_index, sub, k):
    """Word ``k`` of a stream mapped to [0, 1) like ``next_double``."""
    return np.float64(np.int64(word_at(seed, path_index, sub, k) >> _U11)) * _TWO_M53


@nb.njit(cache=True)
def _raw_stream(seed, path_index, count, sub):
    st = np.empty(STATE_SIZE, np.uint64)
    stream_init(st, seed, path_index, sub)
    out = np.empty(count, np.uint64)
    for i in range(count):
        out[i] = next_u64(st)
    return out


@nb.njit(cache=True)
def _normal_stream(seed, path_index, count, sub):
    st = np.empty(STATE_SIZE, np.uint64)
    stream_init(st, seed, path_index, sub)
    out = np.empty(count)
    fill_normals(st, out, 0, count)
    return out


def raw_stream(seed: int, path_index: int, count: int, sub: int = 0) -> np.ndarray:
    """First ``count`` raw 64-bit words of a path stream."""
    return _raw_stream(as_seed(seed), np.uint64(path_index), count, np.uint64(sub))


def normal_stream(seed: int, path_index: int, count: int, sub: int = 0) -> np.ndarray:
    """First ``count`` standard normals of a path stream."""
    return _normal_stream(as_seed(seed), np.uint64(path_index), count, np.uint64(sub))


def check_seed(seed: int) -> int:
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        raise DomainError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise DomainError(f"seed must fit in 64 unsigned bits, got {seed}")
    return seed


def initial_state(seed: int, path_index: int, sub: int = 0) -> np.ndarray:
    """SFC64 state of stream ``(seed, path_index, sub)`` after warm-up."""
    return _initial_state(as_seed(seed), np.uint64(path_index), np.uint64(sub))


@nb.njit(cache=True)
def _initial_state(seed, path_index, sub):
    st = np.empty(STATE_SIZE, np.uint64)
    stream_init(st, seed, path_index, sub)
    return st


def numpy_generator(seed: int, path_index: int, sub: int = 0) -> np.random.Generator:
    """A numpy Generator that reproduces stream ``(seed, path_index, sub)``."""
    bg = np.random.SFC64()
    bg.state = {
        "bit_generator": "SFC64",
        "state": {"state": initial_state(seed, path_index, sub)},
        "has_uint32": 0,
        "uinteger": 0,
    }
    return np.random.Generator(bg)


def as_seed(seed: int) -> np.uint64:
    """Validated seed in the form the compiled kernels accept."""
    return np.uint64(check_seed(seed))
