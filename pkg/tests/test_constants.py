import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from ruinlab.cache import ResultCache
from ruinlab.constants import (
    ConstantSpec, EstimatorResult, _clamped_exp, config_hash, estimate_H, estimate_H_many, estimate_P,
    estimate_P_many, estimate_R, estimate_R_many, lambda_table, paired_ratio,
)
from ruinlab.errors import DomainError, PreconditionError
from ruinlab.exact import one_dim_ruin
from ruinlab.model import ModelParams, classify
from ruinlab.paths import level_quantile, simulate_path, sojourn_time


def p_closed_form(w1, w2):
    return 2 * w1 / (w2 * (2 * w1 - w2))


@pytest.mark.parametrize("w1,w2", [(1, 1), (2, 2), (2, 1)])
def test_P_zero_budget_oracle(w1, w2):
    r = estimate_P(ConstantSpec.P(w1, w2, 0.0), n=20_000, seed=4, bridge=True)
    assert abs(r.estimate - p_closed_form(w1, w2)) < 3 * r.stderr
    assert r.details["final_horizon"] >= 10 / w1


def h_finite_delta(w, delta):
    """E[exp(2w M)] / (2w delta), M the supremum of B - w t on [0, delta], from its exact law."""
    def integrand(x):
        return 2 * w * math.exp(2 * w * x) * one_dim_ruin(w, x, delta)
    val, _ = integrate.quad(integrand, 0, 40 / w, limit=400, epsabs=1e-12, epsrel=1e-12)
    return (1 + val) / (2 * w * delta)


def test_H_finite_delta_values_match_exact_supremum_law():
    assert h_finite_delta(1.0, 4.0) == pytest.approx(1.24856, abs=1e-5)
    r = estimate_H(ConstantSpec.H(1.0, 2.0, 0.0), n=20_000, seed=1, bridge=True)
    for d, g, se in zip(r.details["deltas"], r.details["g"], r.details["g_stderr"]):
        assert abs(g - h_finite_delta(1.0, d)) < 3 * se
    assert abs(r.estimate - 1.0) < 3 * r.stderr + 0.01


def test_R_factorizes_at_zero_correlation():
    n = 20_000
    r = estimate_R(ConstantSpec.R(0.0, 0.5), n=n, seed=2)
    dt = r.details["dt"]
    p1 = estimate_P(ConstantSpec.P(1, 1, 0), n=n, seed=3, dt=dt)
    p2 = estimate_P(ConstantSpec.P(0.5, 0.5, 0), n=n, seed=5, dt=dt)
    prod = p1.estimate * p2.estimate
    se = math.sqrt(r.stderr**2 + prod**2 * (p1.rel_err**2 + p2.rel_err**2))
    assert abs(r.estimate - prod) < 3 * se
    # Continuous-time value is 2 * 4 = 8; the grid maximum sits slightly below.
    assert 0.85 * 8 < r.estimate < 8


BUDGETS = [0.0, 0.5, 1.0, 2.0]


def test_P_nonincreasing_pathwise():
    res = estimate_P_many(1.0, 1.0, BUDGETS, n=10_000, seed=8, adaptive=False, horizon=20.0)
    s = np.stack([r.samples for r in res])
    assert (np.diff(s, axis=0) <= 0).all()
    assert all(a.estimate >= b.estimate for a, b in zip(res, res[1:]))


def test_H_nonincreasing_pathwise():
    res = estimate_H_many(1.0, 2.0, BUDGETS, n=10_000, seed=8, keep_samples=True)
    s = np.stack([r.samples for r in res])
    assert (np.diff(s, axis=0) <= 0).all()
    for i in range(len(res[0].details["g"])):
        g = [r.details["g"][i] for r in res]
        assert all(a >= b for a, b in zip(g, g[1:]))


def test_R_nonincreasing_pathwise_in_each_component():
    grid = [(s1, s2) for s1 in BUDGETS for s2 in BUDGETS]
    res = estimate_R_many(0.5, 0.8, grid, n=10_000, seed=8, adaptive=False, horizon=20.0)
    table = {b: r.samples for b, r in zip(grid, res)}
    for (s1, s2), x in table.items():
        for t1, t2 in grid:
            if t1 >= s1 and t2 >= s2:
                assert (table[(t1, t2)] <= x).all()


@pytest.mark.parametrize(
    "fn",
    [lambda w: estimate_P_many(1.0, 1.0, [0.0, 1.0], n=6000, seed=9, workers=w),
     lambda w: estimate_H_many(1.0, 2.0, [0.0, 1.0], n=6000, seed=9, workers=w),
     lambda w: estimate_R_many(0.5, 0.8, [(0.0, 0.0), (1.0, 1.0)], n=6000, seed=9, workers=w)],
)
def test_worker_count_does_not_change_results(fn):
    a, b = fn(1), fn(3)
    for x, y in zip(a, b):
        assert x.estimate == y.estimate and x.stderr == y.stderr and x.config_hash == y.config_hash


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 1000), st.floats(0.2, 3.0), st.integers(0, 40))
def test_occupation_quantile_identity(idx, w, m):
    path = simulate_path(1.0, 10.0, 1000, seed=31, path_index=idx)
    s = m * path.dt
    xi = level_quantile(path, s)
    vals = np.sort(path.values[:-1])
    # the integrand is a step function with jumps at the path values
    lo = vals[0] - 1.0
    knots = np.r_[lo, vals]
    total = math.exp(w * lo) / w
    for a, b in zip(knots[:-1], knots[1:]):
        if sojourn_time(path, 0.5 * (a + b)) > s:
            total += (math.exp(w * b) - math.exp(w * a)) / w
    assert total == pytest.approx(math.exp(w * xi) / w, rel=1e-12)


def test_preconditions():
    with pytest.raises(PreconditionError):
        estimate_P(ConstantSpec.P(1.0, 2.0), n=1000, seed=0)
    with pytest.raises(PreconditionError):
        estimate_H(ConstantSpec.H(1.0, 1.5), n=1000, seed=0)
    with pytest.raises(PreconditionError):
        estimate_R(ConstantSpec.R(0.6, 0.5), n=1000, seed=0)
    with pytest.raises(DomainError):
        ConstantSpec.P(1.0, 1.0, -1.0).validate()
    with pytest.raises(DomainError):
        estimate_H_many(1.0, 2.0, [0.0, 4.0], n=1000, seed=0)
    assert issubclass(PreconditionError, DomainError)


def test_lambda_table_examples():
    p = ModelParams(0.5, 1.0)
    lt = lambda_table(classify(p), p)
    assert lt.lambda1 == pytest.approx(2 / 3, rel=1e-15) and lt.lambda2 == pytest.approx(2 / 3, rel=1e-15)
    p = ModelParams(-0.6, 0.9)
    reg = classify(p)
    lt = lambda_table(reg, p)
    assert lt.table == "l<k"
    assert lt.lambda1 == pytest.approx(1.54 / (1 - 0.36 * reg.t_star), rel=1e-14)
    assert lt.lambda1 == pytest.approx(2.08, rel=1e-12)
    with pytest.raises(DomainError):
        lambda_table(reg, p, "other")


def test_R_spec_weights():
    sp = ConstantSpec.R(0.5, 0.8)
    assert sp.lambda1 == pytest.approx((1 - 0.4) / 0.75) and sp.lambda2 == pytest.approx(0.3 / 0.75)


def test_config_hash_is_stable_and_sensitive():
    a = {"x": 1.0, "y": [1, 2], "z": "P"}
    assert config_hash(a) == config_hash({"z": "P", "y": [1, 2], "x": 1.0})
    assert config_hash(a) != config_hash({**a, "x": 1.0 + 1e-15})
    assert len(config_hash(a)) == 64


def test_clamp_counts_tail_loss():
    v, lost = _clamped_exp(np.array([1.0, 800.0, 701.0]))
    assert lost == 2 and np.isfinite(v).all()


def test_paired_ratio_uses_covariance():
    rng_ = np.random.default_rng(0)
    x = rng_.exponential(size=5000)
    y = x + 0.01 * rng_.normal(size=5000)
    mk = lambda s: EstimatorResult(float(s.mean()), float(s.std(ddof=1) / math.sqrt(len(s))), len(s), 0, "h",  # noqa: E731
                                   samples=s)
    r, se = paired_ratio(mk(x), mk(y))
    a, b = mk(x), mk(y)
    a.samples = b.samples = None
    _, se_ind = paired_ratio(a, b)
    assert r == pytest.approx(x.mean() / y.mean()) and se < se_ind / 10


def test_cache_round_trip(tmp_path):
    cache = ResultCache(tmp_path)
    first = estimate_P_many(1.0, 1.0, [0.0, 1.0], n=4000, seed=2, cache=cache)
    second = estimate_P_many(1.0, 1.0, [0.0, 1.0], n=4000, seed=2, cache=cache)
    for a, b in zip(first, second):
        assert not a.cached and b.cached
        assert a.estimate == b.estimate and a.stderr == b.stderr
        assert np.array_equal(a.samples, b.samples)
        assert "provenance" in b.details
    assert len(cache.entries()) == 2
    assert cache.clear() == 2 and not list(tmp_path.iterdir())


def test_result_serialization_round_trip():
    r = estimate_P(ConstantSpec.P(1.0, 1.0, 0.5), n=2000, seed=1)
    back = EstimatorResult.from_dict(r.to_dict())
    assert back.estimate == r.estimate and back.spec == r.spec and back.config == r.config
