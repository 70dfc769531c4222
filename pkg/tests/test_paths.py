import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ruinlab import rng
from ruinlab.errors import DomainError
from ruinlab.mc import _simulate_flags
from ruinlab.model import ModelParams, SojournBudget
from ruinlab.paths import (
    RUIN1, RUIN2, SIMUL, SOJ1, SOJ2, PathGrid, PathPair, budget_steps, dump_paths, level_quantile, load_paths,
    ruin_indicators, simulate_pair, simulate_pairs, simulate_path, simulate_paths, sojourn_time,
)


def ramp(n=2**14, lo=0.0, hi=1.0):
    return PathGrid(1.0, n, np.linspace(lo, hi, n + 1))


def test_pair_is_deterministic():
    a = simulate_pair(0.3, 1.0, -0.5, 2.0, 256, seed=5, path_index=3)
    b = simulate_pair(0.3, 1.0, -0.5, 2.0, 256, seed=5, path_index=3)
    assert np.array_equal(a.w1.values, b.w1.values) and np.array_equal(a.w2.values, b.w2.values)
    c = simulate_pair(0.3, 1.0, -0.5, 2.0, 256, seed=6, path_index=3)
    assert not np.array_equal(a.w1.values, c.w1.values)


def test_pair_increments_follow_the_stream():
    rho, c1, c2, h, n = -0.4, 0.7, 1.1, 1.5, 64
    p = simulate_pair(rho, c1, c2, h, n, seed=9, path_index=2)
    z = rng.normal_stream(9, 2, 2 * n)
    dt = h / n
    b1 = np.concatenate([[0.0], np.cumsum(z[0::2] * math.sqrt(dt))])
    b2 = np.concatenate([[0.0], np.cumsum(z[1::2] * math.sqrt(dt))])
    t = np.arange(n + 1) * dt
    np.testing.assert_allclose(p.w1.values, b1 - c1 * t, atol=1e-12)
    np.testing.assert_allclose(p.w2.values, rho * b1 + math.sqrt(1 - rho**2) * b2 - c2 * t, atol=1e-12)
    q = simulate_path(0.7, h, n, seed=9, path_index=2)
    z1 = rng.normal_stream(9, 2, n)
    np.testing.assert_allclose(q.values, np.concatenate([[0.0], np.cumsum(z1 * math.sqrt(dt))]) - 0.7 * t, atol=1e-12)


def test_batch_and_worker_independence():
    a1, a2 = simulate_pairs(0.2, 0.0, 0.0, 1.0, 32, seed=1, count=5000, workers=1)
    b1, b2 = simulate_pairs(0.2, 0.0, 0.0, 1.0, 32, seed=1, count=5000, workers=3)
    assert np.array_equal(a1, b1) and np.array_equal(a2, b2)
    c1, _ = simulate_pairs(0.2, 0.0, 0.0, 1.0, 32, seed=1, count=10, start=4990)
    assert np.array_equal(c1, a1[4990:])
    assert np.array_equal(simulate_paths(0.5, 1.0, 32, 4, 3000, workers=2), simulate_paths(0.5, 1.0, 32, 4, 3000))


@pytest.mark.parametrize("st_", [(0.5, 0.5), (0.5, 1.0), (1.0, 1.0)])
def test_cross_covariance(st_):
    s, t = st_
    rho, c1, c2 = 0.6, 1.0, -2.0
    n = 100_000
    w1, w2 = simulate_pairs(rho, c1, c2, 1.0, 64, seed=12, count=n)
    x = w1[:, int(s * 64)] + c1 * s
    y = w2[:, int(t * 64)] + c2 * t
    prod = (x - x.mean()) * (y - y.mean())
    se = prod.std(ddof=1) / math.sqrt(n)
    assert abs(prod.mean() - rho * min(s, t)) < 3 * se


def test_grid_refinement_raises_mean_sup():
    n = 4000
    coarse = simulate_paths(0.0, 1.0, 2**10, 2, n).max(axis=1).mean()
    fine = simulate_paths(0.0, 1.0, 2**14, 2, n).max(axis=1).mean()
    assert fine > coarse
    assert fine == pytest.approx(math.sqrt(2 / math.pi), rel=0.03)


def test_sojourn_examples():
    p = ramp()
    assert sojourn_time(PathGrid(1.0, 8, np.zeros(9)), 0.5) == 0.0
    assert sojourn_time(PathGrid(1.0, 8, np.r_[0.0, np.ones(8)]), 0.5) == pytest.approx(7 / 8)
    assert sojourn_time(PathGrid(1.0, 8, np.r_[0.0, np.ones(8)]), -0.5) == 1.0
    assert sojourn_time(p, 0.5) == pytest.approx(0.5, abs=p.dt)


def test_quantile_examples():
    p = ramp()
    assert level_quantile(p, 0.0) == pytest.approx(1.0, abs=p.dt)
    assert level_quantile(p, 0.25) == pytest.approx(0.75, abs=p.dt)
    assert level_quantile(p, 1.0 - p.dt) == pytest.approx(p.values.min(), abs=p.dt)
    with pytest.raises(DomainError):
        level_quantile(p, 1.0)
    q = simulate_path(0.0, 1.0, 512, seed=3)
    assert level_quantile(q, 0.0) == q.values[:-1].max()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 127))
def test_quantile_is_generalized_inverse(idx, m):
    p = simulate_path(0.3, 1.0, 128, seed=21, path_index=idx)
    s = m * p.dt
    x = level_quantile(p, s)
    assert sojourn_time(p, x) <= s + 1e-12
    assert sojourn_time(p, np.nextafter(x, -np.inf)) > s
    levels = np.sort(np.r_[p.values, x])
    soj = [sojourn_time(p, v) for v in levels]
    assert all(a >= b for a, b in zip(soj, soj[1:]))


def test_budget_steps_is_robust_to_rounding():
    assert budget_steps(0.3, 0.1) == 3
    assert budget_steps(1.0, 1 / 3) == 3
    assert budget_steps(0.0, 0.01) == 0


def test_ruin_indicators_ramps():
    n = 64
    up = PathGrid(1.0, n, np.linspace(0.0, 4.0, n + 1))
    pair = PathPair(up, PathGrid(1.0, n, np.linspace(0.0, 2.0, n + 1)), 0.0)
    assert ruin_indicators(pair, 2.0, 0.5, SojournBudget(0.3 * 4, 0.3 * 4, u=2.0)) == (True, True, True, True)
    r = ruin_indicators(pair, 2.0, 0.5, SojournBudget(1.01 * 4, 0.0, u=2.0))
    assert r[2] is False and r[0] is True
    with pytest.raises(DomainError):
        ruin_indicators(pair, 2.0, 0.5, SojournBudget(0, 0))


def test_kernel_flags_match_indicators():
    params = ModelParams(0.4, 0.7, 0.5, -0.2)
    n, steps, u = 10_000, 128, 1.2
    budget = SojournBudget(0.1, 0.2, u=u)
    flags, _ = _simulate_flags(params, [u], budget, n, steps, 17, 1.0, 1)
    for i in range(300):
        pair = simulate_pair(params.rho, params.c1, params.c2, 1.0, steps, 17, i)
        r1, r2, s1, s2 = ruin_indicators(pair, u, params.a, budget)
        f = int(flags[i, 0])
        assert bool(f & RUIN1) == r1 and bool(f & RUIN2) == r2
        assert bool(f & SOJ1) == s1 and bool(f & SOJ2) == s2
        both = np.any((pair.w1.values[:-1] > u) & (pair.w2.values[:-1] > params.a * u))
        assert bool(f & SIMUL) == both


def test_dump_round_trip():
    w1, w2 = simulate_pairs(0.1, 0.0, 0.0, 2.0, 16, seed=0, count=3)
    buf = io.BytesIO()
    dump_paths(buf, 2.0, 16, w1, w2)
    raw = buf.getvalue()
    assert len(raw) == 24 + 8 * 17 * 2 * 3
    assert np.frombuffer(raw[24:32], "<f8")[0] == 0.0
    h, n, a, b = load_paths(io.BytesIO(raw))
    assert (h, n) == (2.0, 16) and np.array_equal(a, w1) and np.array_equal(b, w2)


@pytest.mark.parametrize("kw", [dict(rho=1.0), dict(n_steps=1), dict(horizon=0.0)])
def test_domain_errors(kw):
    args = dict(rho=0.0, c1=0.0, c2=0.0, horizon=1.0, n_steps=8, seed=0)
    args.update(kw)
    with pytest.raises(DomainError):
        simulate_pair(**args)
