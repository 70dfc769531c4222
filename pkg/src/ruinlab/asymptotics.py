"""Limits of the conditional cumulative Parisian ruin ratio as the capital grows.

:func:`limit` is the entry point: it classifies the parameters, builds the
constant specifications the regime needs (weights from
:func:`ruinlab.constants.lambda_table`), estimates them and evaluates the
regime's formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .constants import (
    DEFAULT_DELTAS,
    DEFAULT_DT_NATURAL,
    ConstantSpec,
    EstimatorResult,
    estimate_H_many,
    estimate_P_many,
    estimate_R_many,
    lambda_table,
    paired_ratio,
)
from .errors import ConfigurationError, LogicError
from .exact import printed_sojourn_constant
from .gauss import std_normal_cdf
from .model import ModelParams, Regime, RegimeKind, SojournBudget, classify, t_star


@dataclass
class ConstantsConfig:
    """Monte Carlo settings used when a limit needs constant estimates.

    ``bridge_zero`` switches zero budgets to the continuous supremum of the
    bridge interpolation, removing the grid bias of the S = 0 values.
    """

    n: int = 100_000
    seed: int = 0
    dt_natural: float = DEFAULT_DT_NATURAL
    deltas: tuple[float, ...] = DEFAULT_DELTAS
    h_steps_per_unit: int = 64
    bridge_zero: bool = False
    max_doublings: int = 6
    workers: int = 1

    def as_dict(self) -> dict:
        return {
            "n": self.n, "seed": self.seed, "dt_natural": self.dt_natural, "deltas": list(self.deltas),
            "h_steps_per_unit": self.h_steps_per_unit, "bridge_zero": self.bridge_zero,
            "max_doublings": self.max_doublings,
        }


@dataclass
class LimitResult:
    value: float
    stderr: float
    regime: str
    mode: str
    constants_used: list[EstimatorResult] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def __float__(self) -> float:
        return float(self.value)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "stderr": self.stderr,
            "regime": self.regime,
            "mode": self.mode,
            "constants_used": [
                {"spec": c.spec.as_dict() if c.spec else None, "estimate": c.estimate, "stderr": c.stderr,
                 "seed": c.seed, "n": c.n, "config_hash": c.config_hash, "cached": c.cached}
                for c in self.constants_used
            ],
            "warnings": list(self.warnings),
            "details": self.details,
        }


# ---------------------------------------------------------------------------
# constant bookkeeping


class ConstantTable:
    """Estimates indexed by :meth:`ConstantSpec.key`."""

    def __init__(self, results: Iterable[EstimatorResult] = ()):
        self._d: dict[tuple, EstimatorResult] = {}
        for r in results:
            self.add(r)

    def add(self, r: EstimatorResult) -> None:
        if r.spec is None:
            raise ConfigurationError("constant estimate without a spec")
        self._d[r.spec.key()] = r

    def __getitem__(self, spec: ConstantSpec) -> EstimatorResult:
        try:
            return self._d[spec.key()]
        except KeyError:
            raise ConfigurationError(f"missing constant estimate for {spec}") from None

    def __contains__(self, spec: ConstantSpec) -> bool:
        return spec.key() in self._d

    def values(self):
        return self._d.values()


def _as_table(constants) -> ConstantTable:
    if isinstance(constants, ConstantTable):
        return constants
    if isinstance(constants, Mapping):
        return ConstantTable(constants.values())
    return ConstantTable(constants)


def required_constants(params: ModelParams, budget: SojournBudget, regime: Regime) -> list[ConstantSpec]:
    """Constant specifications the limit formula of ``regime`` consumes."""
    s1, s2 = budget.s1, budget.s2
    k = regime.kind
    if k is RegimeKind.DIM_REDUCTION:
        return [ConstantSpec.P(1.0, 1.0, s1), ConstantSpec.P(1.0, 1.0, 0.0)]
    if k is RegimeKind.CASE1:
        return [ConstantSpec.R(params.rho, params.a, s1, s2), ConstantSpec.R(params.rho, params.a, 0.0, 0.0)]
    lt = lambda_table(regime, params)
    if k in (RegimeKind.CASE2, RegimeKind.CASE4):
        return [ConstantSpec.P(lt.lambda1, lt.lambda1, s1), ConstantSpec.H(lt.drift2, 2.0 * lt.drift2, s2)]
    if k is RegimeKind.CASE3:
        return [
            ConstantSpec.P(lt.lambda1, lt.lambda1, s1), ConstantSpec.P(lt.lambda1, lt.lambda1, s2),
            ConstantSpec.H(lt.drift2, 2.0 * lt.drift2, s1), ConstantSpec.H(lt.drift2, 2.0 * lt.drift2, s2),
        ]
    if k is RegimeKind.CASE5:
        first = params.c1 <= params.c2
        sp, sh = (s1, s2) if first else (s2, s1)
        return [ConstantSpec.P(lt.lambda1, lt.lambda1, sp), ConstantSpec.H(lt.drift2, 2.0 * lt.drift2, sh)]
    raise LogicError(f"unhandled regime {k}")


def estimate_constants(specs: Sequence[ConstantSpec], config: ConstantsConfig | None = None, cache=None) -> ConstantTable:
    """Estimate ``specs``, sharing paths between specs that differ only in budget.

    Grid step and H windows are set in the natural time unit ``1/w1^2`` of
    each constant; windows are stretched so the shortest is at least twice
    the largest budget of its group.
    """
    cfg = config or ConstantsConfig()
    groups: dict[tuple, list[ConstantSpec]] = {}
    for sp in specs:
        sp.validate()
        gk = (sp.kind, sp.key()[1], sp.key()[2], sp.rho, sp.a)
        groups.setdefault(gk, [])
        if all(x.key() != sp.key() for x in groups[gk]):
            groups[gk].append(sp)
    table = ConstantTable()
    for (kind, _, _, rho, a), members in groups.items():
        w1, w2 = members[0].w1, members[0].w2
        budgets = [m.s for m in members]
        has_zero = any(b == 0.0 for b in budgets)
        if kind == "P":
            res = estimate_P_many(
                w1, w2, budgets, n=cfg.n, seed=cfg.seed, dt=cfg.dt_natural / (w1 * w1),
                bridge=cfg.bridge_zero and has_zero, max_doublings=cfg.max_doublings, workers=cfg.workers, cache=cache,
            )
        elif kind == "H":
            deltas = [d / (w1 * w1) for d in cfg.deltas]
            stretch = max(1.0, 2.0 * max(budgets) / deltas[0])
            res = estimate_H_many(
                w1, w2, budgets, deltas=[d * stretch for d in deltas],
                n_steps_per_unit=max(2, int(round(cfg.h_steps_per_unit * w1 * w1))), n=cfg.n, seed=cfg.seed,
                bridge=cfg.bridge_zero and has_zero, workers=cfg.workers, cache=cache,
            )
        else:
            res = estimate_R_many(
                rho, a, [(m.s, m.s2) for m in members], n=cfg.n, seed=cfg.seed, dt=cfg.dt_natural,
                max_doublings=cfg.max_doublings, workers=cfg.workers, cache=cache,
            )
        for r in res:
            table.add(r)
    return table


# ---------------------------------------------------------------------------
# error propagation


def _propagate(f: Callable[[Sequence[float]], float], results: Sequence[EstimatorResult]) -> tuple[float, float]:
    """Value of ``f`` at the estimates and a first-order standard error.

    Estimates from one grouped run (same kind and weights) share paths; their
    contributions are added linearly, which bounds any positive correlation.
    Separate runs are combined in quadrature.
    """
    x = [r.estimate for r in results]
    v = f(x)
    groups: dict[tuple, float] = {}
    for i, r in enumerate(results):
        h = 1e-6 * max(abs(x[i]), 1e-12)
        xp = list(x)
        xp[i] += h
        xm = list(x)
        xm[i] -= h
        d = (f(xp) - f(xm)) / (2 * h)
        gk = (r.spec.kind, r.spec.key()[1], r.spec.key()[2]) if r.spec else (i,)
        groups[gk] = groups.get(gk, 0.0) + abs(d) * r.stderr
    return v, math.sqrt(sum(g * g for g in groups.values()))


def _collect_warnings(results: Iterable[EstimatorResult]) -> list[str]:
    out = []
    for r in results:
        for w in r.warnings:
            tag = f"{r.spec.kind}({r.spec.w1:.6g},{r.spec.w2:.6g},S={r.spec.s:g})" if r.spec else "constant"
            out.append(f"{tag}: {w}")
    return out


# ---------------------------------------------------------------------------
# case (iii) factors


def _c3_term(x: float, y: float) -> float:
    """e^{-2 (x/2 + y)^2 / 3} Phi(y + x/2)."""
    z = 0.5 * x + y
    return math.exp(-2.0 * z * z / 3.0) * std_normal_cdf(z)


def case3_factors(c1: float, c2: float) -> tuple[float, float, float]:
    """``(C'_31, C'_32, C_3)`` as piecewise functions of the drifts."""
    e1 = _c3_term(c1, c2)
    e2 = _c3_term(c2, c1)
    cp1 = e1 if -0.5 * c1 < c2 else 1.0
    cp2 = e2 if -0.5 * c2 < c1 else 1.0
    if c2 > max(-0.5 * c1, -2.0 * c1):
        c3 = e1 + e2
    elif -0.5 * c1 < c2 <= -2.0 * c1:
        c3 = e1 + 0.5
    elif -2.0 * c1 < c2 <= -0.5 * c1:
        c3 = 0.5 + e2
    else:
        c3 = 1.0
    return cp1, cp2, c3


def case3_boundary_jumps(c1: float, eps: float = 1e-9) -> dict:
    """Jumps of ``C'_31``, ``C'_32`` and ``C_3`` as ``c2`` crosses ``-2 c1`` and ``-c1/2``."""
    out = {}
    for name, b in (("c2=-2c1", -2.0 * c1), ("c2=-c1/2", -0.5 * c1)):
        lo = case3_factors(c1, b - eps)
        hi = case3_factors(c1, b + eps)
        out[name] = {
            "c2": b,
            "below": list(lo),
            "above": list(hi),
            "jump": [h - l for h, l in zip(hi, lo)],
        }
    return out


# ---------------------------------------------------------------------------
# limits


def limit_theorem21(s1: float, mode: str = "oracle", constants=None, config: ConstantsConfig | None = None, cache=None) -> LimitResult:
    """Limit in the dimension-reduction regime.

    ``mode="printed"`` evaluates the closed form divided by two;
    ``mode="oracle"`` returns ``P-hat(1,1,S1) / P-hat(1,1,0)`` from shared paths.
    """
    if mode == "printed":
        return LimitResult(printed_sojourn_constant(s1) / 2.0, 0.0, RegimeKind.DIM_REDUCTION.value, mode)
    if mode != "oracle":
        raise ConfigurationError(f"mode must be 'printed' or 'oracle', got {mode!r}")
    specs = [ConstantSpec.P(1.0, 1.0, s1), ConstantSpec.P(1.0, 1.0, 0.0)]
    table = _as_table(constants) if constants is not None else estimate_constants(specs, config, cache)
    num, den = table[specs[0]], table[specs[1]]
    if specs[0].key() == specs[1].key():
        v, se = 1.0, 0.0
    else:
        v, se = paired_ratio(num, den)
    used = [num] if num is den else [num, den]
    return LimitResult(v, se, RegimeKind.DIM_REDUCTION.value, mode, used, _collect_warnings(used))


def limit_theorem22(params: ModelParams, budget: SojournBudget, constants, regime: Regime | None = None) -> LimitResult:
    """Evaluate the two-dimensional limit formula of ``regime`` from constant estimates."""
    regime = regime or classify(params)
    k = regime.kind
    if k is RegimeKind.DIM_REDUCTION:
        raise ConfigurationError("dimension-reduction parameters: use limit_theorem21")
    if k in (RegimeKind.CASE4, RegimeKind.CASE5) and not params.rho < 0:
        raise LogicError(f"case {k.value} requires rho < 0 for a positive limit, got rho={params.rho}")
    table = _as_table(constants)
    specs = required_constants(params, budget, regime)
    res = [table[s] for s in specs]
    rho, a = params.rho, params.a
    details: dict = {"table": lambda_table(regime, params).table}
    if k is RegimeKind.CASE1:
        if specs[0].key() == specs[1].key():
            v, se = 1.0, 0.0
        else:
            v, se = paired_ratio(res[0], res[1])
    elif k is RegimeKind.CASE2:
        pre = (1.0 - a * rho) / (2.0 * a * (1.0 - rho * rho))
        v, se = _propagate(lambda x: pre * x[0] * x[1], res)
    elif k is RegimeKind.CASE3:
        cp1, cp2, c3 = case3_factors(params.c1, params.c2)
        details.update({"C31_prime": cp1, "C32_prime": cp2, "C3": c3})
        # res: P(S1), P(S2), H(S1), H(S2)
        v, se = _propagate(lambda x: (x[0] * x[3] * cp1 + x[1] * x[2] * cp2) / c3, res)
    elif k in (RegimeKind.CASE4, RegimeKind.CASE5):
        if k is RegimeKind.CASE5:
            details["C5_branch"] = "c1<=c2" if params.c1 <= params.c2 else "c1>c2"
        v, se = _propagate(lambda x: -x[0] * x[1] / (2.0 * rho), res)
    else:  # pragma: no cover
        raise LogicError(f"unhandled regime {k}")
    if not v > 0:
        raise LogicError(f"non-positive limit {v} in {k.value}")
    used = []
    for r in res:
        if all(r is not u for u in used):
            used.append(r)
    return LimitResult(v, se, k.value, "oracle", used, _collect_warnings(used), details)


def limit(
    params: ModelParams,
    budget: SojournBudget,
    mode: str = "oracle",
    config: ConstantsConfig | None = None,
    cache=None,
    force_case: int | None = None,
    tol: float = 1e-12,
) -> LimitResult:
    """Classify, estimate the needed constants and evaluate the limit."""
    regime = classify(params, tol, force_case)
    t_star(params, regime)
    if regime.kind in (RegimeKind.CASE4, RegimeKind.CASE5) and not params.rho < 0:
        raise LogicError(f"case {regime.kind.value} requires rho < 0 for a positive limit, got rho={params.rho}")
    if regime.kind is RegimeKind.DIM_REDUCTION:
        r = limit_theorem21(budget.s1, mode, config=config, cache=cache)
    else:
        if mode == "printed":
            raise ConfigurationError("printed mode only applies to the dimension-reduction regime")
        table = estimate_constants(required_constants(params, budget, regime), config, cache)
        r = limit_theorem22(params, budget, table, regime)
    r.details["regime_record"] = {"A_a": regime.boundary, "t_star": regime.t_star, "forced": regime.forced}
    if config is not None:
        r.details["constants_config"] = config.as_dict()
    return r


def discrepancy_report(s_grid: Sequence[float] = (0.0, 1.0, 2.0), config: ConstantsConfig | None = None, cache=None) -> dict:
    """Closed-form one-dimensional constant next to its integral representation.

    The oracle column is ``E[e^{xi_S}] = P-hat(1,1,S)`` from one set of paths;
    by default the zero budget uses the bridge supremum, so that row carries no
    grid bias.
    """
    cfg = config or ConstantsConfig(bridge_zero=True)
    grid = [float(s) for s in s_grid]
    table = estimate_constants([ConstantSpec.P(1.0, 1.0, s) for s in grid], cfg, cache)
    rows = []
    for s in grid:
        r = table[ConstantSpec.P(1.0, 1.0, s)]
        pv = printed_sojourn_constant(s)
        rows.append({
            "S": s, "printed": pv, "oracle": r.estimate, "oracle_stderr": r.stderr, "ratio": pv / r.estimate,
            "sup_method": "bridge" if (s == 0.0 and cfg.bridge_zero) else "grid", "config_hash": r.config_hash,
        })
    printed_violations = [
        [rows[i]["S"], rows[i + 1]["S"]] for i in range(len(rows) - 1) if rows[i + 1]["printed"] > rows[i]["printed"]
    ]
    oracle_violations = [
        [rows[i]["S"], rows[i + 1]["S"]] for i in range(len(rows) - 1) if rows[i + 1]["oracle"] > rows[i]["oracle"]
    ]
    return {
        "rows": rows,
        "printed_monotonicity_violated": bool(printed_violations),
        "printed_violations": printed_violations,
        "oracle_nonincreasing": not oracle_violations,
        "config": cfg.as_dict(),
    }
