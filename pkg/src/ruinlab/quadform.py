"""Constrained quadratic rate q*_a(s, t) and its global minimization over [0, 1]^2.

For the covariance ``Sigma_{s,t}`` of ``(W1(s), W2(t))`` and a barrier vector
``a``, ``q_a(s,t) = a^T Sigma^{-1} a`` and ``q*_a(s,t) = min_{x >= a} q_x(s,t)``.
The inner minimum is a two-variable QP solved by enumerating active sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .gauss import BivCovariance
from .model import ModelParams


@dataclass(frozen=True)
class RateInput:
    """Covariance plus barrier vector ``avec``.

    ``u = None`` marks the asymptotic barrier ``(1, a)``; a finite ``u`` carries
    the drift correction ``(1 + c1 s / u, a + c2 t / u)``.
    """

    sigma: BivCovariance
    avec: tuple[float, float]
    u: float | None = None

    @classmethod
    def from_params(cls, params: ModelParams, s: float, t: float, u: float | None = None) -> "RateInput":
        sigma = BivCovariance(s, t, params.rho)
        if u is None or math.isinf(u):
            return cls(sigma, (1.0, params.a), None)
        return cls(sigma, (1.0 + params.c1 * s / u, params.a + params.c2 * t / u), float(u))


def q_value(inp: RateInput) -> tuple[float, np.ndarray]:
    """Return ``(q, b)`` with ``q = a^T Sigma^{-1} a`` and ``b = Sigma^{-1} a``."""
    (i11, i12), (_, i22) = inp.sigma.inverse()
    a1, a2 = inp.avec
    b = np.array([i11 * a1 + i12 * a2, i12 * a1 + i22 * a2])
    return float(a1 * b[0] + a2 * b[1]), b


def _qp_candidates(inp: RateInput):
    """Feasible KKT candidates ``(value, x)`` of min x^T Sigma^{-1} x over x >= a."""
    sg = inp.sigma
    s, t, c = sg.s, sg.t, sg.off_diag
    a1, a2 = inp.avec
    q, b = q_value(inp)
    out = []
    if b[0] >= 0 and b[1] >= 0:
        out.append((q, (a1, a2)))
    # x1 = a1 active, x2 free: x2 = c a1 / s, value a1^2 / s
    x2 = c * a1 / s
    if x2 >= a2:
        out.append((a1 * a1 / s, (a1, x2)))
    x1 = c * a2 / t
    if x1 >= a1:
        out.append((a2 * a2 / t, (x1, a2)))
    if a1 <= 0 and a2 <= 0:
        out.append((0.0, (0.0, 0.0)))
    return out


def q_star_point(inp: RateInput) -> float:
    """min_{x >= a} x^T Sigma^{-1} x by active-set enumeration."""
    cands = _qp_candidates(inp)
    if not cands:  # the both-active point is always feasible; only rounding lands here
        return q_value(inp)[0]
    return min(v for v, _ in cands)


def _q_star_st(params: ModelParams, u, s: float, t: float) -> float:
    return q_star_point(RateInput.from_params(params, s, t, u))


def _q_grid(params: ModelParams, u, grid: np.ndarray) -> np.ndarray:
    """Vectorized q* on grid x grid (rows index s, columns index t)."""
    S, T = np.meshgrid(grid, grid, indexing="ij")
    rho = params.rho
    if u is None or math.isinf(u):
        a1 = np.ones_like(S)
        a2 = np.full_like(S, params.a)
    else:
        a1 = 1.0 + params.c1 * S / u
        a2 = params.a + params.c2 * T / u
    c = rho * np.minimum(S, T)
    det = S * T - c * c
    b1 = (T * a1 - c * a2) / det
    b2 = (-c * a1 + S * a2) / det
    q = a1 * b1 + a2 * b2
    best = np.where((b1 >= 0) & (b2 >= 0), q, np.inf)
    best = np.where(c * a1 / S >= a2, np.minimum(best, a1 * a1 / S), best)
    best = np.where(c * a2 / T >= a1, np.minimum(best, a2 * a2 / T), best)
    best = np.where((a1 <= 0) & (a2 <= 0), 0.0, best)
    return np.where(np.isfinite(best), best, q)


def _refine(f, s: float, t: float, lo: float, h: float) -> tuple[float, float, float]:
    """Compass search with step halving until the step falls below 1e-10."""
    v = f(s, t)
    while h >= 1e-10:
        moved = False
        for ds, dt in ((h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h), (h, h), (-h, -h), (h, -h), (-h, h)):
            ns, nt = min(1.0, max(lo, s + ds)), min(1.0, max(lo, t + dt))
            nv = f(ns, nt)
            # ties move toward larger (s, t) so plateaus resolve deterministically
            if nv < v - 1e-16 or (abs(nv - v) <= 1e-16 and (ns, nt) > (s, t)):
                s, t, v, moved = ns, nt, nv, True
                break
        if not moved:
            h *= 0.5
    return v, s, t


def q_star_global(params: ModelParams, u: float | None = None, grid_n: int = 256):
    """Global minimum of q*_a(s, t) over [delta, 1]^2 with delta = 1/grid_n.

    Returns ``(value, minimizers)``. Every grid local minimum is refined by
    compass search; refined points within 1e-8 of the best value are kept and
    merged when closer than 1e-5. Ties in a flat valley resolve toward larger
    ``(s, t)``, so in dimension reduction the plateau reports ``(1, 1)``.
    """
    if grid_n < 64:
        raise DomainError(f"grid_n must be at least 64, got {grid_n}")
    lo = 1.0 / grid_n
    grid = np.linspace(lo, 1.0, grid_n)
    Q = _q_grid(params, u, grid)
    n = grid_n
    pad = np.pad(Q, 1, constant_values=np.inf)
    is_min = np.ones_like(Q, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di or dj:
                is_min &= Q <= pad[1 + di : 1 + di + n, 1 + dj : 1 + dj + n]
    qmin = Q.min()
    # local minima near the global level; the cutoff keeps the refinement work bounded
    cand = np.argwhere(is_min & (Q <= qmin + max(1e-3, 1e-3 * abs(qmin))))
    # one seed per plateau component: the entry with largest (s, t)
    seen: set[tuple[int, int]] = set()
    seeds = []
    cand_set = {tuple(c) for c in cand}
    for c in sorted(cand_set, reverse=True):
        if c in seen:
            continue
        stack, comp = [c], []
        seen.add(c)
        while stack:
            i, j = stack.pop()
            comp.append((i, j))
            for di in (-1, 0, 1):
                for dj in (-1, 0, 1):
                    nb_ = (i + di, j + dj)
                    if nb_ in cand_set and nb_ not in seen:
                        seen.add(nb_)
                        stack.append(nb_)
        seeds.append(max(comp, key=lambda ij: (-Q[ij], ij)))
    f = lambda s, t: _q_star_st(params, u, s, t)  # noqa: E731
    refined = [_refine(f, float(grid[i]), float(grid[j]), lo, float(grid[1] - grid[0])) for i, j in seeds]
    best = min(r[0] for r in refined)
    keep = sorted((r for r in refined if r[0] <= best + 1e-8), key=lambda r: (-r[1], -r[2]))
    merged: list[tuple[float, float, float]] = []
    for r in keep:
        if all(math.hypot(r[1] - m[1], r[2] - m[2]) > 1e-5 for m in merged):
            merged.append(r)
    return float(best), [(float(s), float(t)) for _, s, t in merged]


def log_rate(params: ModelParams, grid_n: int = 256) -> float:
    """Decay exponent: -lim u^{-2} log P(joint ruin) = q*/2."""
    return q_star_global(params, None, grid_n)[0] / 2.0
