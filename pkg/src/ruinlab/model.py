"""Model parameters, regime classification and horizon rescaling."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .errors import DomainError, LogicError

DEFAULT_TOL = 1e-12


def _check_finite(**kw):
    for k, v in kw.items():
        if not math.isfinite(float(v)):
            raise DomainError(f"{k} must be finite, got {v!r}")


@dataclass(frozen=True)
class ModelParams:
    """Correlation ``rho``, barrier ratio ``a`` and drifts ``c1``, ``c2``."""

    rho: float
    a: float
    c1: float = 0.0
    c2: float = 0.0

    def __post_init__(self):
        _check_finite(rho=self.rho, a=self.a, c1=self.c1, c2=self.c2)
        if not -1.0 < self.rho < 1.0:
            raise DomainError(f"rho must lie in (-1, 1), got {self.rho}")
        if not 0.0 < self.a <= 1.0:
            raise DomainError(f"a must lie in (0, 1], got {self.a}")

    def as_dict(self) -> dict:
        return {"rho": self.rho, "a": self.a, "c1": self.c1, "c2": self.c2}


@dataclass(frozen=True)
class SojournBudget:
    """Scaled budgets; the time requirement at capital ``u`` is ``(s1, s2) / u**2``."""

    s1: float = 0.0
    s2: float = 0.0
    u: float | None = None

    def __post_init__(self):
        _check_finite(s1=self.s1, s2=self.s2)
        if self.s1 < 0 or self.s2 < 0:
            raise DomainError(f"budgets must be nonnegative, got ({self.s1}, {self.s2})")
        if self.u is not None:
            _check_finite(u=self.u)
            if self.u <= 0:
                raise DomainError(f"u must be positive, got {self.u}")

    def at(self, u: float) -> "SojournBudget":
        return SojournBudget(self.s1, self.s2, u)

    def times(self) -> tuple[float, float]:
        """Concrete budgets ``(s1/u^2, s2/u^2)``."""
        if self.u is None:
            raise DomainError("budget has no capital level u attached")
        return self.s1 / self.u**2, self.s2 / self.u**2

    def is_nonvacuous(self, horizon: float = 1.0) -> bool:
        h1, h2 = self.times()
        return h1 < horizon and h2 < horizon


class RegimeKind(str, enum.Enum):
    DIM_REDUCTION = "DimReduction"
    CASE1 = "Case1_Supercritical"
    CASE2 = "Case2_CriticalAlt1"
    CASE3 = "Case3_CriticalA1"
    CASE4 = "Case4_SubcriticalAlt1"
    CASE5 = "Case5_SubcriticalA1"

    @property
    def case_number(self) -> int:
        """1..5 for the two-dimensional cases, 0 for dimension reduction."""
        return _CASE_NUMBERS[self]


_CASE_NUMBERS = {
    RegimeKind.DIM_REDUCTION: 0,
    RegimeKind.CASE1: 1,
    RegimeKind.CASE2: 2,
    RegimeKind.CASE3: 3,
    RegimeKind.CASE4: 4,
    RegimeKind.CASE5: 5,
}
_BY_NUMBER = {v: k for k, v in _CASE_NUMBERS.items()}


@dataclass(frozen=True)
class Regime:
    kind: RegimeKind
    boundary: float
    t_star: float
    minimizers: tuple[tuple[float, float], ...] = field(default_factory=tuple)
    forced: bool = False


def regime_boundary(a: float) -> float:
    """Critical correlation A_a = (1 - sqrt(8a^2 + 1)) / (4a).

    Written in the cancellation-free form -2a / (1 + sqrt(8a^2 + 1)).
    """
    _check_finite(a=a)
    if not 0.0 < a <= 1.0:
        raise DomainError(f"a must lie in (0, 1], got {a}")
    return -2.0 * a / (1.0 + math.sqrt(8.0 * a * a + 1.0))


def _t_star_value(kind: RegimeKind, rho: float, a: float) -> float:
    if kind is RegimeKind.CASE4:
        return a / (rho * (2.0 * a * rho - 1.0))
    if kind is RegimeKind.CASE5:
        return 1.0 / (rho * (2.0 * rho - 1.0))
    return 1.0


def _minimizers(kind: RegimeKind, ts: float) -> tuple[tuple[float, float], ...]:
    if kind is RegimeKind.CASE4:
        return ((1.0, ts),)
    if kind is RegimeKind.CASE5:
        return ((1.0, ts), (ts, 1.0))
    return ((1.0, 1.0),)


def classify(params: ModelParams, tol: float = DEFAULT_TOL, force_case: int | None = None) -> Regime:
    """Asymptotic regime of ``params``.

    ``|rho - A_a| <= tol`` counts as the critical boundary. ``force_case``
    (0 for dimension reduction, 1..5 otherwise) overrides the classification;
    the forced regime still carries the boundary and optimizer of ``params``.
    """
    if not (tol >= 0 and math.isfinite(tol)):
        raise DomainError(f"tol must be a finite nonnegative number, got {tol}")
    rho, a = params.rho, params.a
    bnd = regime_boundary(a)
    if force_case is not None:
        if force_case not in _BY_NUMBER:
            raise DomainError(f"force_case must be one of 0..5, got {force_case}")
        kind = _BY_NUMBER[force_case]
    elif a <= rho:
        kind = RegimeKind.DIM_REDUCTION
    elif rho > bnd + tol:
        kind = RegimeKind.CASE1
    elif rho >= bnd - tol:
        kind = RegimeKind.CASE3 if a == 1.0 else RegimeKind.CASE2
    else:
        kind = RegimeKind.CASE5 if a == 1.0 else RegimeKind.CASE4
    ts = _t_star_value(kind, rho, a)
    if force_case is None and not 0.0 < ts <= 1.0:
        raise LogicError(f"t_star={ts} outside (0, 1] for rho={rho}, a={a}, regime={kind.value}")
    return Regime(kind, bnd, ts, _minimizers(kind, ts), forced=force_case is not None)


def t_star(params: ModelParams, regime: Regime) -> float:
    """Optimizer location t* for ``regime``; raises LogicError if it leaves (0, 1]."""
    ts = _t_star_value(regime.kind, params.rho, params.a)
    if not (0.0 < ts <= 1.0):
        raise LogicError(
            f"t_star={ts} outside (0, 1] for rho={params.rho}, a={params.a}, regime={regime.kind.value}"
        )
    return ts


def rescale_horizon(c: float, u: float, T: float) -> tuple[float, float]:
    """Map ``sup_{[0,T]} (B(t) - c t) > u`` to the unit horizon: returns ``(c sqrt(T), u / sqrt(T))``."""
    _check_finite(c=c, u=u, T=T)
    if T <= 0:
        raise DomainError(f"T must be positive, got {T}")
    r = math.sqrt(T)
    return c * r, u / r


def rescale_diagnostic(c: float, u: float, T: float) -> dict:
    """Compare the adopted rescaling with the variant that divides the drift by sqrt(T).

    Reports the exact one-dimensional ruin probability on ``[0, T]`` and on the
    unit horizon under both parameterizations.
    """
    from .exact import one_dim_ruin

    c_new, u_new = rescale_horizon(c, u, T)
    c_alt = c / math.sqrt(T)
    return {
        "original": one_dim_ruin(c, u, T),
        "adopted": {"c": c_new, "u": u_new, "value": one_dim_ruin(c_new, u_new, 1.0)},
        "drift_over_sqrtT": {"c": c_alt, "u": u_new, "value": one_dim_ruin(c_alt, u_new, 1.0)},
    }


def regime_record(params: ModelParams, regime: Regime) -> dict:
    """JSON-ready description of parameters and regime."""
    return {
        **params.as_dict(),
        "regime": regime.kind.value,
        "A_a": regime.boundary,
        "t_star": regime.t_star,
        "minimizers": [list(m) for m in regime.minimizers],
        "forced": regime.forced,
    }
