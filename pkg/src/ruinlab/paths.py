"""Brownian path simulation on uniform grids and occupation functionals.

Conventions used throughout the package:

* A grid of ``n_steps`` steps has values at ``t_k = k * dt``, ``k = 0..n_steps``,
  with ``values[0] = 0``.
* Path ``p`` of a run with seed ``seed`` draws its normals from stream
  ``(seed, p)``. A one-dimensional path uses normal ``k`` for step ``k``; a
  correlated pair uses normals ``2k`` (for B1) and ``2k + 1`` (for B2).
* Sojourn time is the left-endpoint sum ``dt * #{k < n_steps : values[k] > level}``.
  Suprema used for ruin are taken over the same index set, so with a zero
  budget the sojourn and ruin events coincide exactly.
* The occupation quantile for budget ``S`` is the ``(m + 1)``-th largest of
  ``values[0..n_steps-1]`` with ``m = floor(S / dt)``: the supremum of levels
  whose sojourn still exceeds ``S``.
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import BinaryIO, Callable

import numba as nb
import numpy as np

from . import rng
from .errors import DomainError
from .model import SojournBudget

CHUNK = 256  # normals generated per refill inside kernels
BATCH = 2048  # paths per scheduling unit
_BUDGET_EPS = 1e-9
_BRIDGE_CUTOFF = 40.0  # skip intervals whose exceedance probability is below exp(-40)


@dataclass(frozen=True)
class PathGrid:
    """A path sampled at ``t_k = k * horizon / n_steps`` starting from 0."""

    horizon: float
    n_steps: int
    values: np.ndarray

    def __post_init__(self):
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise DomainError(f"horizon must be positive, got {self.horizon}")
        if self.n_steps < 1 or len(self.values) != self.n_steps + 1:
            raise DomainError(f"expected {self.n_steps + 1} values, got {len(self.values)}")
        if self.values[0] != 0.0:
            raise DomainError("paths start at 0")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


@dataclass(frozen=True)
class PathPair:
    w1: PathGrid
    w2: PathGrid
    rho: float

    def __post_init__(self):
        if self.w1.horizon != self.w2.horizon or self.w1.n_steps != self.w2.n_steps:
            raise DomainError("paired grids must share horizon and n_steps")


def budget_steps(s: float, dt: float) -> int:
    """Number ``m = floor(s / dt)`` of grid cells a sojourn of length ``s`` covers."""
    return int(math.floor(s / dt + _BUDGET_EPS))


def _check_grid(horizon: float, n_steps: int):
    if not (horizon > 0 and math.isfinite(horizon)):
        raise DomainError(f"horizon must be positive and finite, got {horizon}")
    if int(n_steps) != n_steps or n_steps < 2:
        raise DomainError(f"n_steps must be an integer >= 2, got {n_steps}")


def _check_rho(rho: float):
    if not -1.0 < rho < 1.0:
        raise DomainError(f"rho must lie in (-1, 1), got {rho}")


def run_batches(fn: Callable[[int, int], None], n: int, workers: int = 1, batch: int = BATCH) -> None:
    """Call ``fn(start, count)`` over ``[0, n)`` in fixed batches.

    ``fn`` must write its results into per-path slots, so the outcome does not
    depend on ``workers``. Compiled kernels release the GIL, so threads run
    batches in parallel.
    """
    chunks = [(s, min(batch, n - s)) for s in range(0, n, batch)]
    if workers <= 1 or len(chunks) <= 1:
        for s, c in chunks:
            fn(s, c)
        return
    with ThreadPoolExecutor(max_workers=workers) as ex:
        for _ in ex.map(lambda sc: fn(*sc), chunks):
            pass


# ---------------------------------------------------------------------------
# compiled helpers


@nb.njit(inline="always")
def _select_desc(buf, lo, hi, k):
    """Rearrange ``buf[lo:hi]`` so that ``buf[k]`` is in descending sorted position; return it."""
    while hi - lo > 1:
        mid = (lo + hi - 1) // 2
        x, y, z = buf[lo], buf[mid], buf[hi - 1]
        if x < y:
            x, y = y, x
        if y < z:
            y = z
            if x < y:
                y = x
        pivot = y
        i = lo
        j = hi - 1
        while i <= j:
            while buf[i] > pivot:
                i += 1
            while buf[j] < pivot:
                j -= 1
            if i <= j:
                tmp = buf[i]
                buf[i] = buf[j]
                buf[j] = tmp
                i += 1
                j -= 1
        if k <= j:
            hi = j + 1
        elif k >= i:
            lo = i
        else:
            return pivot
    return buf[k]


@nb.njit(inline="always")
def _quantiles_into(v, p_len, ms_desc, buf, out_row, sdt):
    """Occupation quantiles of ``v[0:p_len]`` for budgets ``ms_desc`` (descending).

    Only values within a window below the maximum are copied and selected; the
    window widens until it holds enough values, so the result is exact.
    """
    mx = -np.inf
    for i in range(p_len):
        if v[i] > mx:
            mx = v[i]
    mtop = -1
    for j in range(ms_desc.shape[0]):
        m = ms_desc[j]
        if m >= p_len:
            out_row[j] = -np.inf
        elif m == 0:
            out_row[j] = mx
        elif m > mtop:
            mtop = m
    if mtop < 0:
        return
    width = 3.0 * math.sqrt(mtop + 1.0) * sdt + 8.0 * sdt
    while True:
        thr = mx - width
        c = 0
        for i in range(p_len):
            if v[i] > thr:
                buf[c] = v[i]
                c += 1
        if c > mtop or c == p_len:
            break
        width *= 4.0
    hi = c
    for j in range(ms_desc.shape[0]):
        m = ms_desc[j]
        if m >= p_len or m == 0:
            continue
        out_row[j] = _select_desc(buf, 0, hi, m)
        hi = m + 1


@nb.njit(inline="always")
def _bridge_max(seed, path, v, lo_k, hi_k, dt, floor_level):
    """Max of the Brownian-bridge interpolation over intervals ``[lo_k, hi_k)``.

    Each interval maximum is drawn exactly given its endpoints using uniform
    ``k`` of auxiliary stream 1; intervals that cannot beat ``floor_level`` with
    probability above exp(-40) are skipped.
    """
    best = floor_level
    inv2dt = 2.0 / dt
    gap = math.sqrt(0.5 * _BRIDGE_CUTOFF * dt)
    for k in range(lo_k, hi_k):
        a = v[k]
        b = v[k + 1]
        if a < best - gap and b < best - gap:
            continue
        if (best - a) * (best - b) * inv2dt > _BRIDGE_CUTOFF and a <= best and b <= best:
            continue
        u = rng.uniform_at(seed, path, 1, k)
        d = b - a
        m = 0.5 * (a + b + math.sqrt(d * d - 2.0 * dt * math.log1p(-u)))
        if m > best:
            best = m
    return best


@nb.njit(inline="always")
def _gen_1d(st, v, zbuf, n, sd, dt, mu_a, mu_b, k_switch):
    """Fill ``v[0..n]``; increments before step ``k_switch`` have drift ``mu_a``, after ``mu_b``."""
    v[0] = 0.0
    x = 0.0
    da = mu_a * dt
    db = mu_b * dt
    for c0 in range(0, n, CHUNK):
        c1 = min(n, c0 + CHUNK)
        rng.fill_normals(st, zbuf, 0, c1 - c0)
        for i in range(c1 - c0):
            k = c0 + i
            x += sd * zbuf[i] + (da if k < k_switch else db)
            v[k + 1] = x


@nb.njit(inline="always")
def _gen_pair(st, v1, v2, zbuf, n, sd, dt, rho, rc, d1, d2):
    """Fill ``v1[0..n]``, ``v2[0..n]`` for W1 = B1 - d1 t, W2 = rho B1 + rc B2 - d2 t."""
    v1[0] = 0.0
    v2[0] = 0.0
    b1 = 0.0
    b2 = 0.0
    for c0 in range(0, n, CHUNK):
        c1 = min(n, c0 + CHUNK)
        rng.fill_normals(st, zbuf, 0, 2 * (c1 - c0))
        for i in range(c1 - c0):
            k = c0 + i
            b1 += sd * zbuf[2 * i]
            b2 += sd * zbuf[2 * i + 1]
            t = (k + 1) * dt
            v1[k + 1] = b1 - d1 * t
            v2[k + 1] = rho * b1 + rc * b2 - d2 * t


@nb.njit(nogil=True, cache=True)
def _pair_paths_kernel(seed, start, count, n, dt, rho, c1, c2, out1, out2):
    st = np.empty(rng.STATE_SIZE, np.uint64)
    zbuf = np.empty(2 * CHUNK)
    sd = math.sqrt(dt)
    rc = math.sqrt(1.0 - rho * rho)
    for p in range(count):
        rng.stream_init(st, seed, start + p, 0)
        _gen_pair(st, out1[p], out2[p], zbuf, n, sd, dt, rho, rc, c1, c2)


@nb.njit(nogil=True, cache=True)
def _paths_1d_kernel(seed, start, count, n, dt, drift, out):
    st = np.empty(rng.STATE_SIZE, np.uint64)
    zbuf = np.empty(CHUNK)
    sd = math.sqrt(dt)
    for p in range(count):
        rng.stream_init(st, seed, start + p, 0)
        _gen_1d(st, out[p], zbuf, n, sd, dt, -drift, -drift, 0)


@nb.njit(nogil=True, cache=True)
def occupation_1d_kernel(seed, start, count, n, dt, drift, prefixes, ms_desc, bridge, mixture, w_mix, xi_out, logd_out):
    """Occupation quantiles of ``B(t) - drift t`` at nested prefix horizons.

    ``xi_out[p, i, j]`` is the quantile for budget ``ms_desc[j]`` on the first
    ``prefixes[i]`` grid values. With ``bridge`` set, zero budgets use the
    continuous supremum of the bridge interpolation over ``[0, prefixes[i] dt]``.

    With ``mixture`` set the path is drawn from the uniform mixture over
    ``k`` in ``0..n-1`` of the measures that add drift ``w_mix`` before step
    ``k``; auxiliary stream 2 picks ``k``. ``logd_out[p]`` then
    receives ``log(sum_{j<n} exp(w_mix * v_j) * dt)``.
    """
    st = np.empty(rng.STATE_SIZE, np.uint64)
    zbuf = np.empty(CHUNK)
    v = np.empty(n + 1)
    buf = np.empty(n + 1)
    sd = math.sqrt(dt)
    npref = prefixes.shape[0]
    for p in range(count):
        path = start + p
        rng.stream_init(st, seed, path, 0)
        if mixture:
            k_switch = min(int(rng.uniform_at(seed, path, 2, 0) * n), n - 1)
            _gen_1d(st, v, zbuf, n, sd, dt, w_mix - drift, -drift, k_switch)
            mx = v[0]
            for i in range(n):
                if v[i] > mx:
                    mx = v[i]
            acc = 0.0
            for i in range(n):
                acc += math.exp(w_mix * (v[i] - mx))
            logd_out[p] = w_mix * mx + math.log(acc * dt)
        else:
            _gen_1d(st, v, zbuf, n, sd, dt, -drift, -drift, 0)
        for i in range(npref):
            _quantiles_into(v, prefixes[i], ms_desc, buf, xi_out[p, i], sd)
        if bridge:
            lo_k = 0
            gm = v[0]
            bm = -np.inf
            for i in range(npref):
                hi_k = prefixes[i]
                for k in range(lo_k, hi_k + 1):
                    if v[k] > gm:
                        gm = v[k]
                cur = _bridge_max(seed, path, v, lo_k, hi_k, dt, gm if gm > bm else bm)
                if cur > bm:
                    bm = cur
                for j in range(ms_desc.shape[0]):
                    if ms_desc[j] == 0:
                        xi_out[p, i, j] = bm
                lo_k = hi_k


@nb.njit(nogil=True, cache=True)
def occupation_pair_kernel(seed, start, count, n, dt, rho, d1, d2, prefixes, ms1_desc, ms2_desc, xi1_out, xi2_out):
    """Occupation quantiles of both coordinates of a correlated pair at nested prefixes."""
    st = np.empty(rng.STATE_SIZE, np.uint64)
    zbuf = np.empty(2 * CHUNK)
    v1 = np.empty(n + 1)
    v2 = np.empty(n + 1)
    buf = np.empty(n + 1)
    sd = math.sqrt(dt)
    rc = math.sqrt(1.0 - rho * rho)
    for p in range(count):
        rng.stream_init(st, seed, start + p, 0)
        _gen_pair(st, v1, v2, zbuf, n, sd, dt, rho, rc, d1, d2)
        for i in range(prefixes.shape[0]):
            _quantiles_into(v1, prefixes[i], ms1_desc, buf, xi1_out[p, i], sd)
            _quantiles_into(v2, prefixes[i], ms2_desc, buf, xi2_out[p, i], sd)


RUIN1, RUIN2, SOJ1, SOJ2, SIMUL = 1, 2, 4, 8, 16

# no-NaN flags let reductions vectorize; no reassociation or contraction, so
# finite results are identical to strict evaluation
_FM = {"nnan", "ninf", "nsz"}


@nb.njit(nogil=True, cache=True, fastmath=_FM)
def ruin_pair_kernel(seed, start, count, n, dt, rho, c1, c2, lev1, lev2, need1, need2, tilted, tilt1, tilt2, flags_out, logw_out):
    """Ruin and sojourn indicators of a correlated pair for several barrier sets.

    For barrier set ``j`` the flags in ``flags_out[p, j]`` are RUIN1/RUIN2 (grid
    value above ``lev1[j]`` / ``lev2[j]`` at some ``k < n``), SOJ1/SOJ2 (at least
    ``need1[j]`` / ``need2[j]`` such indices) and SIMUL (both above at one index).
    With ``tilted`` set, step ``k`` adds drift ``tilt1[k]`` to B1 and ``tilt2[k]`` to
    B2 and ``logw_out[p]`` receives the log likelihood ratio of the increments used.
    """
    st = np.empty(rng.STATE_SIZE, np.uint64)
    zbuf = np.empty(2 * CHUNK)
    x1 = np.empty(CHUNK)
    x2 = np.empty(CHUNK)
    L = lev1.shape[0]
    cnt1 = np.empty(L, np.int64)
    cnt2 = np.empty(L, np.int64)
    sim = np.empty(L, np.bool_)
    sd = math.sqrt(dt)
    rc = math.sqrt(1.0 - rho * rho)
    for p in range(count):
        rng.stream_init(st, seed, start + p, 0)
        for j in range(L):
            cnt1[j] = 0
            cnt2[j] = 0
            sim[j] = False
        b1 = 0.0
        b2 = 0.0
        lw = 0.0
        # values at k = 0 are 0 and never exceed positive barriers
        for c0 in range(0, n - 1, CHUNK):
            m = min(n - 1, c0 + CHUNK) - c0
            rng.fill_normals(st, zbuf, 0, 2 * m)
            if tilted:
                for i in range(m):
                    z1 = zbuf[2 * i]
                    z2 = zbuf[2 * i + 1]
                    g1 = tilt1[c0 + i]
                    g2 = tilt2[c0 + i]
                    b1 += sd * z1 + g1 * dt
                    b2 += sd * z2 + g2 * dt
                    lw -= g1 * sd * z1 + g2 * sd * z2 + 0.5 * (g1 * g1 + g2 * g2) * dt
                    t = (c0 + i + 1) * dt
                    x1[i] = b1 - c1 * t
                    x2[i] = rho * b1 + rc * b2 - c2 * t
            else:
                for i in range(m):
                    b1 += sd * zbuf[2 * i]
                    b2 += sd * zbuf[2 * i + 1]
                    t = (c0 + i + 1) * dt
                    x1[i] = b1 - c1 * t
                    x2[i] = rho * b1 + rc * b2 - c2 * t
            for j in range(L):
                l1 = lev1[j]
                l2 = lev2[j]
                k1 = 0
                k2 = 0
                kb = 0
                for i in range(m):
                    h1 = x1[i] > l1
                    h2 = x2[i] > l2
                    k1 += h1
                    k2 += h2
                    kb += h1 & h2
                cnt1[j] += k1
                cnt2[j] += k2
                if kb > 0:
                    sim[j] = True
        for j in range(L):
            f = 0
            if cnt1[j] > 0:
                f |= RUIN1
            if cnt2[j] > 0:
                f |= RUIN2
            if cnt1[j] >= need1[j]:
                f |= SOJ1
            if cnt2[j] >= need2[j]:
                f |= SOJ2
            if sim[j]:
                f |= SIMUL
            flags_out[p, j] = f
        if tilted:
            logw_out[p] = lw


@nb.njit(inline="always", fastmath=_FM)
def _drift_max(xb, m, c0, dt, c, q0):
    # four accumulators break the serial max dependency
    q1 = q0
    q2 = q0
    q3 = q0
    m4 = m - m % 4
    for i in range(0, m4, 4):
        q0 = max(q0, xb[i] - c * ((c0 + i + 1) * dt))
        q1 = max(q1, xb[i + 1] - c * ((c0 + i + 2) * dt))
        q2 = max(q2, xb[i + 2] - c * ((c0 + i + 3) * dt))
        q3 = max(q3, xb[i + 3] - c * ((c0 + i + 4) * dt))
    for i in range(m4, m):
        q0 = max(q0, xb[i] - c * ((c0 + i + 1) * dt))
    return max(max(q0, q1), max(q2, q3))


@nb.njit(nogil=True, cache=True, fastmath=_FM)
def sup_1d_kernel(seed, start, count, n, dt, drifts, sup_out):
    """``sup_out[p, j]``: maximum of ``B - drifts[j] t`` over grid indices ``k < n``; all drifts share ``B``."""
    st = np.empty(rng.STATE_SIZE, np.uint64)
    xb = np.empty(CHUNK)
    J = drifts.shape[0]
    mx = np.empty(J)
    sd = math.sqrt(dt)
    for p in range(count):
        rng.stream_init(st, seed, start + p, 0)
        for j in range(J):
            mx[j] = 0.0
        b = 0.0
        for c0 in range(0, n - 1, CHUNK):
            m = min(n - 1, c0 + CHUNK) - c0
            b, hi = rng.fill_walk(st, xb, m, sd, b)
            for j in range(J):
                c = drifts[j]
                # skip chunks whose bound cannot raise the running maximum; rounding is monotone, so this is exact
                bound = hi - c * ((c0 + 1) * dt) if c >= 0.0 else hi - c * ((c0 + m) * dt)
                if bound > mx[j]:
                    mx[j] = _drift_max(xb, m, c0, dt, c, mx[j])
        for j in range(J):
            sup_out[p, j] = mx[j]


# ---------------------------------------------------------------------------
# public operations


def simulate_pair(rho: float, c1: float, c2: float, horizon: float, n_steps: int, seed: int, path_index: int = 0) -> PathPair:
    """One correlated pair ``W1 = B1 - c1 t``, ``W2 = rho B1 + sqrt(1-rho^2) B2 - c2 t`` with exact increments."""
    w1, w2 = simulate_pairs(rho, c1, c2, horizon, n_steps, seed, 1, start=path_index)
    return PathPair(PathGrid(horizon, n_steps, w1[0]), PathGrid(horizon, n_steps, w2[0]), rho)


def simulate_pairs(rho, c1, c2, horizon, n_steps, seed, count, start=0, workers=1):
    """Arrays ``(W1, W2)`` of shape ``(count, n_steps + 1)`` for paths ``start..start+count-1``."""
    _check_rho(rho)
    _check_grid(horizon, n_steps)
    s = rng.as_seed(seed)
    dt = horizon / n_steps
    out1 = np.empty((count, n_steps + 1))
    out2 = np.empty((count, n_steps + 1))

    def job(b, c):
        _pair_paths_kernel(s, start + b, c, n_steps, dt, rho, c1, c2, out1[b : b + c], out2[b : b + c])

    run_batches(job, count, workers)
    return out1, out2


def simulate_path(drift: float, horizon: float, n_steps: int, seed: int, path_index: int = 0) -> PathGrid:
    """One path of ``B(t) - drift t``."""
    return PathGrid(horizon, n_steps, simulate_paths(drift, horizon, n_steps, seed, 1, start=path_index)[0])


def simulate_paths(drift, horizon, n_steps, seed, count, start=0, workers=1) -> np.ndarray:
    _check_grid(horizon, n_steps)
    s = rng.as_seed(seed)
    dt = horizon / n_steps
    out = np.empty((count, n_steps + 1))

    def job(b, c):
        _paths_1d_kernel(s, start + b, c, n_steps, dt, drift, out[b : b + c])

    run_batches(job, count, workers)
    return out


def sojourn_time(path: PathGrid, level: float) -> float:
    """Left-endpoint occupation time above ``level``."""
    return path.dt * int(np.count_nonzero(path.values[:-1] > level))


def level_quantile(path: PathGrid, s: float) -> float:
    """Occupation quantile: the ``(floor(s/dt) + 1)``-th largest of ``values[0..n-1]``.

    Satisfies ``sojourn_time(path, x) > s`` exactly for ``x < level_quantile(path, s)``.
    """
    if not (0 <= s < path.horizon):
        raise DomainError(f"budget must lie in [0, horizon={path.horizon}), got {s}")
    m = budget_steps(s, path.dt)
    if m >= path.n_steps:
        raise DomainError(f"budget {s} leaves no grid cell on horizon {path.horizon}")
    vals = path.values[:-1]
    return float(-np.partition(-vals, m)[m])


def ruin_indicators(pair: PathPair, u: float, a: float, budget: SojournBudget) -> tuple[bool, bool, bool, bool]:
    """``(ruin1, ruin2, soj1_ok, soj2_ok)`` at barriers ``(u, a u)`` and budgets ``(S1, S2) / u^2``."""
    if budget.u is None or budget.u != u:
        raise DomainError("budget.u must be set and equal to u")
    h1, h2 = budget.times()
    dt = pair.w1.dt
    x1 = pair.w1.values[:-1]
    x2 = pair.w2.values[:-1]
    n1 = int(np.count_nonzero(x1 > u))
    n2 = int(np.count_nonzero(x2 > a * u))
    return n1 > 0, n2 > 0, n1 >= budget_steps(h1, dt) + 1, n2 >= budget_steps(h2, dt) + 1


# ---------------------------------------------------------------------------
# binary dump

_HEADER = struct.Struct("<dQQ")


def dump_paths(fh: BinaryIO, horizon: float, n_steps: int, w1: np.ndarray, w2: np.ndarray | None = None) -> None:
    """Write paths as little-endian float64: header (horizon, n_steps, count), then per path W1 then W2."""
    count = len(w1)
    fh.write(_HEADER.pack(float(horizon), int(n_steps), int(count)))
    for i in range(count):
        fh.write(np.ascontiguousarray(w1[i], dtype="<f8").tobytes())
        if w2 is not None:
            fh.write(np.ascontiguousarray(w2[i], dtype="<f8").tobytes())


def load_paths(fh: BinaryIO, paired: bool = True):
    horizon, n_steps, count = _HEADER.unpack(fh.read(_HEADER.size))
    width = n_steps + 1
    per = 2 if paired else 1
    data = np.frombuffer(fh.read(8 * width * per * count), dtype="<f8").reshape(count, per, width)
    if paired:
        return horizon, n_steps, data[:, 0, :].copy(), data[:, 1, :].copy()
    return horizon, n_steps, data[:, 0, :].copy(), None
