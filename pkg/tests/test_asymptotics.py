import math

import pytest

from ruinlab.asymptotics import (
    ConstantsConfig, ConstantTable, case3_boundary_jumps, case3_factors, discrepancy_report, estimate_constants,
    limit, limit_theorem21, limit_theorem22, required_constants,
)
from ruinlab.constants import ConstantSpec, EstimatorResult
from ruinlab.errors import ConfigurationError, LogicError
from ruinlab.exact import printed_sojourn_constant
from ruinlab.gauss import std_normal_cdf
from ruinlab.model import ModelParams, RegimeKind, SojournBudget, classify, regime_boundary

SMALL = ConstantsConfig(n=20_000, seed=3, bridge_zero=True)
S_GRID = [0.0, 0.5, 1.0, 2.0]


def fake(spec, value, se=0.01):
    return EstimatorResult(value, se, 1000, 0, f"h{value}", spec)


def test_dimension_reduction_printed_and_trivial_oracle():
    assert limit_theorem21(0.0, "printed").value == 0.5
    assert limit_theorem21(2.0, "printed").value == pytest.approx(printed_sojourn_constant(2.0) / 2, rel=1e-15)
    assert limit_theorem21(2.0, "printed").value > 1
    r = limit_theorem21(0.0, "oracle", config=ConstantsConfig(n=2000, seed=1))
    assert r.value == 1.0 and r.stderr == 0.0
    with pytest.raises(ConfigurationError):
        limit_theorem21(0.0, "other")


def test_case1_zero_budget_is_exactly_one():
    p = ModelParams(0.5, 0.8, 1, 1)
    spec = ConstantSpec.R(0.5, 0.8)
    r = limit_theorem22(p, SojournBudget(0, 0), [fake(spec, 3.7)])
    assert r.value == 1.0 and r.regime == "Case1_Supercritical"


@pytest.mark.parametrize("params", [ModelParams(regime_boundary(0.5), 0.5), ModelParams(-0.5, 1, 1, 1)])
def test_zero_budget_normalization(params):
    r = limit(params, SojournBudget(0, 0), config=SMALL)
    assert abs(r.value - 1) < 3 * r.stderr
    assert r.stderr < 0.05


def test_zero_budget_formula_with_exact_constants():
    # S=0 constants P(w,w,0) = 2/w and H(w,2w,0) = w make every case evaluate to 1.
    for params in [ModelParams(regime_boundary(0.5), 0.5), ModelParams(-0.5, 1, 1, 1), ModelParams(-0.5, 1, 1, -0.7),
                   ModelParams(-0.6, 0.9), ModelParams(-0.8, 1, 0, 1)]:
        reg = classify(params)
        specs = required_constants(params, SojournBudget(0, 0), reg)
        table = ConstantTable(fake(s, 2 / s.w1 if s.kind == "P" else s.w1) for s in specs)
        v = limit_theorem22(params, SojournBudget(0, 0), table, reg).value
        if reg.kind is RegimeKind.CASE2 or reg.kind is RegimeKind.CASE3 and params.c2 > -0.5 * params.c1:
            assert v == pytest.approx(1.0, rel=1e-12)
        elif reg.kind in (RegimeKind.CASE4, RegimeKind.CASE5):
            lt_ratio = v  # -P H / (2 rho) with exact constants
            assert lt_ratio > 0


def test_missing_constant_is_configuration_error():
    p = ModelParams(regime_boundary(0.5), 0.5)
    with pytest.raises(ConfigurationError):
        limit_theorem22(p, SojournBudget(1, 0), ConstantTable())
    with pytest.raises(ConfigurationError):
        limit_theorem22(ModelParams(0.9, 0.5), SojournBudget(0, 0), ConstantTable())


def test_sign_sanity_is_logic_error():
    p = ModelParams(0.2, 0.9)
    with pytest.raises(LogicError):
        limit_theorem22(p, SojournBudget(0, 0), ConstantTable(), classify(p, force_case=4))


@pytest.mark.parametrize("params", [ModelParams(0.5, 0.8, 1, 1), ModelParams(regime_boundary(0.5), 0.5),
                                    ModelParams(-0.6, 0.9)])
def test_limit_nonincreasing_in_each_budget(params):
    reg = classify(params)
    budgets = [SojournBudget(s1, s2) for s1 in S_GRID for s2 in S_GRID]
    specs = {s.key(): s for b in budgets for s in required_constants(params, b, reg)}
    table = estimate_constants(list(specs.values()), ConstantsConfig(n=8000, seed=2))
    val = {(b.s1, b.s2): limit_theorem22(params, b, table, reg).value for b in budgets}
    for (s1, s2), v in val.items():
        for (t1, t2), w in val.items():
            if t1 >= s1 and t2 >= s2:
                assert w <= v + 1e-15


def test_case5_swap_symmetry():
    p = ModelParams(-0.8, 1, 0, 1)
    q = ModelParams(-0.8, 1, 1, 0)
    b, bs = SojournBudget(1.0, 2.0), SojournBudget(2.0, 1.0)
    specs = {s.key(): s for s in required_constants(p, b, classify(p)) + required_constants(q, bs, classify(q))}
    table = estimate_constants(list(specs.values()), ConstantsConfig(n=4000, seed=5))
    r1, r2 = limit_theorem22(p, b, table), limit_theorem22(q, bs, table)
    assert r1.value == r2.value
    assert r1.details["C5_branch"] != r2.details["C5_branch"]


def test_case3_factors_region_one():
    c1, c2 = 1.0, 1.0
    cp1, cp2, c3 = case3_factors(c1, c2)
    z = 1.5
    assert cp1 == pytest.approx(math.exp(-2 * z * z / 3) * std_normal_cdf(z), rel=1e-15)
    assert cp1 == cp2 and c3 == pytest.approx(cp1 + cp2, rel=1e-15)
    assert case3_factors(-1.0, -1.0) == (1.0, 1.0, 1.0)


def test_case3_boundary_jumps_are_reported():
    rep = case3_boundary_jumps(1.0)
    assert set(rep) == {"c2=-2c1", "c2=-c1/2"}
    for row in rep.values():
        assert len(row["jump"]) == 3 and all(math.isfinite(j) for j in row["jump"])
    assert any(abs(j) > 1e-3 for row in rep.values() for j in row["jump"])


def test_discrepancy_report_flags():
    rep = discrepancy_report(config=ConstantsConfig(n=10_000, seed=1, bridge_zero=True))
    assert [r["printed"] for r in rep["rows"]][0] == 1.0
    assert rep["printed_monotonicity_violated"] and rep["oracle_nonincreasing"]
    assert rep["rows"][0]["sup_method"] == "bridge"


def test_limit_result_carries_provenance():
    r = limit(ModelParams(0.9, 0.5), SojournBudget(1.0, 0), config=ConstantsConfig(n=4000, seed=1))
    assert r.regime == "DimReduction" and 0 < r.value < 1
    d = r.to_dict()
    assert all(c["seed"] == 1 and len(c["config_hash"]) == 64 for c in d["constants_used"])
    with pytest.raises(ConfigurationError):
        limit(ModelParams(0.5, 0.8), SojournBudget(0, 0), mode="printed")
