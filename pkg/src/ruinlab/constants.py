"""Monte Carlo estimators of the sojourn constants P-hat, H-hat and R-hat.

All three constants are exponentially weighted integrals over levels of a
sojourn probability. For a single path the integral over levels collapses to
the occupation quantile ``xi_S`` (see :mod:`ruinlab.paths`):

    int 1(sojourn above x > S) e^{w x} dx = e^{w xi_S} / w,

so each constant is an expectation of a per-path functional of ``xi_S``.
Budgets passed together share paths, which makes every estimate pathwise
nonincreasing in the budget.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import __version__, rng
from .errors import DomainError, PreconditionError
from .model import ModelParams, Regime, RegimeKind
from .paths import budget_steps, occupation_1d_kernel, occupation_pair_kernel, run_batches

EXP_CLAMP = 700.0
DEFAULT_DT_NATURAL = 0.0025  # time step in units of 1 / w1^2
DEFAULT_DELTAS = (4.0, 8.0, 16.0)


def _canon(x):
    if isinstance(x, float):
        return float(repr(x)) if math.isfinite(x) else str(x)
    if isinstance(x, (np.floating,)):
        return _canon(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, dict):
        return {str(k): _canon(v) for k, v in sorted(x.items())}
    if isinstance(x, (list, tuple)):
        return [_canon(v) for v in x]
    return x


def config_hash(payload: dict) -> str:
    """sha256 of the canonical JSON of ``payload`` plus the package version."""
    body = json.dumps({"config": _canon(payload), "version": __version__}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(body.encode()).hexdigest()


@dataclass(frozen=True)
class ConstantSpec:
    """Identity of one constant value.

    ``kind`` is ``"P"``, ``"H"`` or ``"R"``. P and H use drift ``w1``, exponent
    ``w2`` and budget ``s``. R uses ``rho``, ``a`` and budgets ``(s, s2)``;
    its weights ``w1, w2`` are the exponents ``lambda1, lambda2``.
    """

    kind: str
    w1: float
    w2: float
    s: float = 0.0
    s2: float = 0.0
    rho: float | None = None
    a: float | None = None

    @classmethod
    def P(cls, w1: float, w2: float, s: float = 0.0) -> "ConstantSpec":
        return cls("P", float(w1), float(w2), float(s))

    @classmethod
    def H(cls, w1: float, w2: float, s: float = 0.0) -> "ConstantSpec":
        return cls("H", float(w1), float(w2), float(s))

    @classmethod
    def R(cls, rho: float, a: float, s1: float = 0.0, s2: float = 0.0) -> "ConstantSpec":
        l1 = (1.0 - a * rho) / (1.0 - rho * rho)
        l2 = (a - rho) / (1.0 - rho * rho)
        return cls("R", l1, l2, float(s1), float(s2), float(rho), float(a))

    @property
    def lambda1(self) -> float:
        return self.w1

    @property
    def lambda2(self) -> float:
        return self.w2

    def validate(self) -> "ConstantSpec":
        vals = [self.w1, self.w2, self.s, self.s2]
        if not all(math.isfinite(v) for v in vals):
            raise DomainError(f"non-finite field in {self}")
        if self.s < 0 or self.s2 < 0:
            raise DomainError(f"budgets must be nonnegative, got {self}")
        if self.kind == "P":
            if not (self.w1 > 0 and self.w2 > 0):
                raise DomainError(f"P needs positive weights, got {self}")
            if not 2.0 * self.w1 > self.w2:
                raise PreconditionError(f"P(w1={self.w1}, w2={self.w2}) needs 2*w1 > w2 to be finite")
        elif self.kind == "H":
            if not self.w1 > 0:
                raise DomainError(f"H needs a positive drift, got {self}")
            if not math.isclose(self.w2, 2.0 * self.w1, rel_tol=1e-12):
                raise PreconditionError(f"H is only supported with w2 = 2*w1, got {self}")
        elif self.kind == "R":
            if self.rho is None or self.a is None:
                raise DomainError("R needs rho and a")
            ModelParams(self.rho, self.a)
            if not self.a > max(0.0, self.rho):
                raise PreconditionError(f"R needs a > max(0, rho), got rho={self.rho}, a={self.a}")
        else:
            raise DomainError(f"unknown constant kind {self.kind!r}")
        return self

    def key(self) -> tuple:
        """Hashable identity, rounded so recomputed weights compare equal."""
        r = lambda x: None if x is None else float(f"{x:.12g}")  # noqa: E731
        return (self.kind, r(self.w1), r(self.w2), r(self.s), r(self.s2), r(self.rho), r(self.a))

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class EstimatorResult:
    """Point estimate with standard error and the configuration that produced it."""

    estimate: float
    stderr: float
    n: int
    seed: int
    config_hash: str
    spec: ConstantSpec | None = None
    config: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    tail_loss: int = 0
    details: dict = field(default_factory=dict)
    cached: bool = False
    samples: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def rel_err(self) -> float:
        return self.stderr / abs(self.estimate) if self.estimate else math.inf

    def to_dict(self) -> dict:
        d = {
            "estimate": self.estimate,
            "stderr": self.stderr,
            "n": self.n,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "spec": None if self.spec is None else self.spec.as_dict(),
            "config": self.config,
            "warnings": list(self.warnings),
            "tail_loss": self.tail_loss,
            "details": self.details,
            "cached": self.cached,
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EstimatorResult":
        spec = None if d.get("spec") is None else ConstantSpec(**d["spec"])
        est = d["estimate"]
        return cls(
            estimate=math.nan if est is None else est,
            stderr=math.nan if d["stderr"] is None else d["stderr"],
            n=d["n"],
            seed=d["seed"],
            config_hash=d["config_hash"],
            spec=spec,
            config=d.get("config", {}),
            warnings=list(d.get("warnings", [])),
            tail_loss=d.get("tail_loss", 0),
            details=d.get("details", {}),
            cached=d.get("cached", False),
        )


def paired_ratio(num: EstimatorResult, den: EstimatorResult) -> tuple[float, float]:
    """Ratio of two estimates with a delta-method standard error.

    When both carry per-path samples from the same paths the covariance is
    used; otherwise the two are treated as independent.
    """
    r = num.estimate / den.estimate
    if num.samples is not None and den.samples is not None and len(num.samples) == len(den.samples):
        x, y = num.samples, den.samples
        resid = x - r * y
        se = float(np.std(resid, ddof=1) / math.sqrt(len(x)) / abs(den.estimate))
        return r, se
    return r, abs(r) * math.hypot(num.rel_err, den.rel_err)


def _mean_se(y: np.ndarray) -> tuple[float, float]:
    n = len(y)
    m = float(np.mean(y))
    se = float(np.std(y, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return m, se


def _clamped_exp(expo: np.ndarray) -> tuple[np.ndarray, int]:
    over = expo > EXP_CLAMP
    return np.exp(np.minimum(expo, EXP_CLAMP)), int(np.count_nonzero(over))


def _from_cache(cache, cfg: dict, budget_keys: list, need_samples: bool = False) -> list[EstimatorResult] | None:
    """All results of a grouped run if every budget is cached, else None.

    An entry stored without per-path samples counts as a miss when samples are
    needed, so paired ratios never silently fall back to the independent formula.
    """
    if cache is None:
        return None
    hits = [cache.get(config_hash({**cfg, "budget": b})) for b in budget_keys]
    if any(h is None or (need_samples and h.samples is None) for h in hits):
        return None
    if not need_samples:
        for h in hits:
            h.samples = None
    return hits


def _to_cache(cache, results: list[EstimatorResult]) -> None:
    if cache is not None:
        for r in results:
            cache.put(r)


# ---------------------------------------------------------------------------
# lambda tables


@dataclass(frozen=True)
class LambdaTable:
    lambda1: float
    lambda2: float
    drift1: float
    drift2: float
    table: str


def lambda_table(regime: Regime, params: ModelParams, table: str | None = None) -> LambdaTable:
    """Exponent weights and drifts of the local sojourn constants for ``regime``.

    ``table`` is ``"equal"`` (both coordinates at the same time), ``"l>k"`` or
    ``"l<k"``; by default Case1 and dimension reduction use ``"equal"`` and the
    remaining cases ``"l<k"``.
    """
    rho, a, ts = params.rho, params.a, regime.t_star
    if table is None:
        table = "equal" if regime.kind in (RegimeKind.CASE1, RegimeKind.DIM_REDUCTION) else "l<k"
    if table == "equal":
        d = ts * (1.0 - rho * rho)
        return LambdaTable((1.0 - a * rho) / d, (a - rho) / d, 1.0, a, table)
    if table == "l>k":
        d = ts - rho * rho
        return LambdaTable((ts - a * rho) / d, (a - rho) / d, 1.0, (a - rho) / d, table)
    if table == "l<k":
        l1 = (1.0 - a * rho) / (1.0 - rho * rho * ts)
        l2 = (a - rho * ts) / (ts - rho * rho * ts * ts)
        return LambdaTable(l1, l2, l1, a / ts, table)
    raise DomainError(f"unknown lambda table {table!r}")


# ---------------------------------------------------------------------------
# one-dimensional constants


def _desc_order(ms: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Unique budgets in descending order and, per input, its column."""
    uniq = sorted(set(int(m) for m in ms), reverse=True)
    col = {m: i for i, m in enumerate(uniq)}
    return np.array(uniq, dtype=np.int64), np.array([col[int(m)] for m in ms], dtype=np.int64)


def _run_occ1d(seed, n, n_steps, dt, drift, prefixes, ms, *, bridge=False, mixture=False, w_mix=0.0, workers=1, path_offset=0):
    ms_desc, cols = _desc_order(ms)
    pref = np.asarray(prefixes, dtype=np.int64)
    xi = np.empty((n, len(pref), len(ms_desc)))
    logd = np.empty(n if mixture else 1)
    s = rng.as_seed(seed)

    def job(b, c):
        occupation_1d_kernel(
            s, path_offset + b, c, n_steps, dt, drift, pref, ms_desc, bridge, mixture, w_mix,
            xi[b : b + c], logd[b : b + c] if mixture else logd,
        )

    run_batches(job, n, workers)
    return xi[:, :, cols], (logd if mixture else None)


def _adaptive(run_at, horizon: float, max_doublings: int):
    """Double the horizon until every estimate moves by less than half a standard error.

    ``run_at(H)`` returns per-budget sample arrays at horizons ``H`` and ``2H``.
    """
    warnings = []
    history = []
    for _ in range(max_doublings + 1):
        short, long_, extra = run_at(horizon)
        moves = []
        ok = True
        for ys, yl in zip(short, long_):
            ms_, _ = _mean_se(ys)
            ml, sl = _mean_se(yl)
            moves.append(ml - ms_)
            if not (abs(ml - ms_) < 0.5 * sl or ml == ms_):
                ok = False
        history.append({"horizon": 2.0 * horizon, "max_move": max(abs(m) for m in moves)})
        if ok:
            return long_, extra, 2.0 * horizon, history, warnings
        horizon *= 2.0
    warnings.append(f"horizon did not settle after {max_doublings} doublings; last horizon {horizon}")
    return long_, extra, horizon, history, warnings


def estimate_P_many(
    w1: float,
    w2: float,
    budgets: Sequence[float],
    *,
    n: int = 100_000,
    seed: int = 0,
    horizon: float | None = None,
    n_steps: int | None = None,
    dt: float | None = None,
    bridge: bool = False,
    adaptive: bool = True,
    max_doublings: int = 6,
    workers: int = 1,
    keep_samples: bool = True,
    resolution_check: bool = False,
    cache=None,
) -> list[EstimatorResult]:
    """P-hat(w1, w2, S) for several budgets ``S`` from one set of paths.

    Paths are ``B(t) - w1 t``. The horizon starts at ``10 / w1`` unless given
    and, with ``adaptive``, doubles until the estimates settle. The time step is
    ``horizon / n_steps`` when ``n_steps`` is given, else ``dt``, else
    ``0.0025 / w1^2``. With ``bridge`` the zero budget uses the continuous
    supremum of the Brownian-bridge interpolation.
    """
    specs = [ConstantSpec.P(w1, w2, s).validate() for s in budgets]
    n = int(n)
    if n < 2:
        raise DomainError("need at least two paths")
    h0 = 10.0 / w1 if horizon is None else float(horizon)
    if n_steps is not None:
        dt = h0 / int(n_steps)
    elif dt is None:
        dt = DEFAULT_DT_NATURAL / (w1 * w1)
    steps_h = max(2, int(round(h0 / dt)))
    ms = [budget_steps(s, dt) for s in budgets]
    cfg = {
        "kind": "P", "w1": w1, "w2": w2, "budgets": list(map(float, budgets)), "n": n, "seed": int(seed),
        "horizon": h0, "dt": dt, "bridge": bridge, "adaptive": adaptive, "max_doublings": max_doublings,
        "resolution_check": resolution_check,
    }
    hit = _from_cache(cache, cfg, [float(sp.s) for sp in specs], keep_samples)
    if hit is not None:
        return hit

    def samples(xi):
        return _clamped_exp(w2 * xi)

    def run_at(h_steps):
        xi, _ = _run_occ1d(seed, n, 2 * h_steps, dt, w1, [h_steps, 2 * h_steps], ms, bridge=bridge, workers=workers)
        return xi

    tail = [0] * len(ms)
    if adaptive:
        def run(hz):
            k = int(round(hz / dt))
            xi = run_at(k)
            short = [samples(xi[:, 0, j])[0] / w2 for j in range(len(ms))]
            long_ = []
            for j in range(len(ms)):
                y, t = samples(xi[:, 1, j])
                tail[j] = t
                long_.append(y / w2)
            return short, long_, None

        ys, _, h_final, history, warns = _adaptive(run, steps_h * dt, max_doublings)
    else:
        xi, _ = _run_occ1d(seed, n, steps_h, dt, w1, [steps_h], ms, bridge=bridge, workers=workers)
        ys = []
        for j in range(len(ms)):
            y, tail[j] = samples(xi[:, 0, j])
            ys.append(y / w2)
        h_final, history, warns = steps_h * dt, [], []

    coarse = None
    if resolution_check:
        coarse = estimate_P_many(
            w1, w2, budgets, n=n, seed=seed, horizon=h_final, dt=2 * dt, bridge=bridge, adaptive=False,
            workers=workers, keep_samples=False,
        )
    out = []
    for j, spec in enumerate(specs):
        m, se = _mean_se(ys[j])
        w = list(warns)
        if tail[j]:
            w.append(f"{tail[j]} paths hit the exponent clamp; estimate invalid")
        details = {"final_horizon": h_final, "dt": dt, "budget_steps": ms[j], "horizon_history": history}
        if coarse is not None:
            details["coarse_estimate"] = coarse[j].estimate
            details["resolution_shift"] = m - coarse[j].estimate
        out.append(
            EstimatorResult(
                m, se, n, int(seed), config_hash({**cfg, "budget": float(spec.s)}), spec, cfg, w, tail[j], details,
                samples=ys[j] if keep_samples else None,
            )
        )
    _to_cache(cache, out)
    return out


def estimate_P(spec: ConstantSpec, horizon: float | None = None, n_steps: int | None = None, n: int = 100_000, seed: int = 0, **kw) -> EstimatorResult:
    """P-hat for one spec; see :func:`estimate_P_many` for options."""
    if spec.kind != "P":
        raise DomainError(f"expected a P spec, got {spec.kind}")
    return estimate_P_many(spec.w1, spec.w2, [spec.s], n=n, seed=seed, horizon=horizon, n_steps=n_steps, **kw)[0]


def _wls_intercept(deltas, g, se):
    """Weighted least squares of ``g = c + b / delta``; returns ``(c, se_c, b, chi2, resid_z)``."""
    X = np.column_stack([np.ones(len(deltas)), 1.0 / np.asarray(deltas)])
    wts = 1.0 / np.maximum(np.asarray(se), 1e-300) ** 2
    XtW = X.T * wts
    cov = np.linalg.inv(XtW @ X)
    beta = cov @ (XtW @ np.asarray(g))
    resid = np.asarray(g) - X @ beta
    z = resid / np.asarray(se)
    chi2 = float(np.sum(z * z))
    dof = len(deltas) - 2
    infl = math.sqrt(max(1.0, chi2 / dof)) if dof > 0 else 1.0
    return float(beta[0]), float(math.sqrt(cov[0, 0]) * infl), float(beta[1]), chi2, z


def estimate_H_many(
    w1: float,
    w2: float,
    budgets: Sequence[float],
    *,
    deltas: Sequence[float] = DEFAULT_DELTAS,
    n_steps_per_unit: int = 64,
    n: int = 100_000,
    seed: int = 0,
    mode: str = "mixture",
    bridge: bool = False,
    workers: int = 1,
    keep_samples: bool = False,
    cache=None,
) -> list[EstimatorResult]:
    """H-hat(w1, 2 w1, S) for several budgets by extrapolation in the window length.

    For each window ``Delta`` the truncated value
    ``g(Delta) = E[e^{w2 xi_S}] / (w2 Delta)`` is estimated, then
    ``g(Delta) = c + b / Delta`` is fitted and ``c`` returned.

    ``mode="mixture"`` samples paths from the uniform mixture over grid times
    ``t_k`` of the measures tilted by ``e^{w2 X(t_k)}``; the weight
    ``Delta / D`` with ``D = sum_k e^{w2 X(t_k)} dt`` makes each window estimate
    exactly unbiased for its grid quantity with bounded per-path values.
    ``mode="naive"`` averages ``e^{w2 xi_S}`` directly; its variance grows like
    ``e^{2 w1^2 Delta}`` and it is kept for cross-checks at short windows.
    Windows use disjoint path index ranges of one seed.
    """
    specs = [ConstantSpec.H(w1, w2, s).validate() for s in budgets]
    deltas = [float(d) for d in deltas]
    if len(deltas) < 3 or any(b <= a for a, b in zip(deltas, deltas[1:])):
        raise DomainError("deltas must be strictly increasing with at least three values")
    if deltas[0] <= max(float(b) for b in budgets):
        raise DomainError(f"the shortest window {deltas[0]} must exceed the largest budget {max(budgets)}")
    if mode not in ("mixture", "naive"):
        raise DomainError(f"mode must be 'mixture' or 'naive', got {mode!r}")
    n = int(n)
    cfg = {
        "kind": "H", "w1": w1, "w2": w2, "budgets": list(map(float, budgets)), "deltas": deltas,
        "n_steps_per_unit": n_steps_per_unit, "n": n, "seed": int(seed), "mode": mode, "bridge": bridge,
    }
    hit = _from_cache(cache, cfg, [float(sp.s) for sp in specs], keep_samples)
    if hit is not None:
        return hit
    g = np.empty((len(deltas), len(budgets)))
    gse = np.empty_like(g)
    tails = np.zeros(len(budgets), dtype=int)
    per_delta_samples = []
    for i, dlt in enumerate(deltas):
        steps = max(2, int(round(dlt * n_steps_per_unit)))
        dt = dlt / steps
        ms = [budget_steps(s, dt) for s in budgets]
        xi, logd = _run_occ1d(
            seed, n, steps, dt, w1, [steps], ms, bridge=bridge, mixture=(mode == "mixture"), w_mix=w2,
            workers=workers, path_offset=i * n,
        )
        cols = []
        for j in range(len(budgets)):
            expo = w2 * xi[:, 0, j] - (logd if mode == "mixture" else math.log(dlt))
            y, t = _clamped_exp(expo)
            y /= w2
            tails[j] += t
            g[i, j], gse[i, j] = _mean_se(y)
            cols.append(y)
        per_delta_samples.append(cols)
    out = []
    for j, spec in enumerate(specs):
        c, se_c, b, chi2, z = _wls_intercept(deltas, g[:, j], gse[:, j])
        warns = []
        if np.any(np.abs(z) > 5.0):
            warns.append(f"window extrapolation residuals up to {np.max(np.abs(z)):.1f} standard errors")
        if tails[j]:
            warns.append(f"{tails[j]} paths hit the exponent clamp; estimate invalid")
        details = {
            "deltas": deltas, "g": g[:, j].tolist(), "g_stderr": gse[:, j].tolist(), "slope": b, "chi2": chi2,
        }
        samples = None
        if keep_samples:
            samples = np.stack([per_delta_samples[i][j] for i in range(len(deltas))])
        out.append(
            EstimatorResult(c, se_c, n, int(seed), config_hash({**cfg, "budget": float(spec.s)}), spec, cfg, warns,
                            int(tails[j]), details, samples=samples)
        )
    _to_cache(cache, out)
    return out


def estimate_H(spec: ConstantSpec, deltas: Sequence[float] = DEFAULT_DELTAS, n_steps_per_unit: int = 64, n: int = 100_000, seed: int = 0, **kw) -> EstimatorResult:
    """H-hat for one spec; see :func:`estimate_H_many`."""
    if spec.kind != "H":
        raise DomainError(f"expected an H spec, got {spec.kind}")
    return estimate_H_many(spec.w1, spec.w2, [spec.s], deltas=deltas, n_steps_per_unit=n_steps_per_unit, n=n, seed=seed, **kw)[0]


def estimate_R_many(
    rho: float,
    a: float,
    budgets: Sequence[tuple[float, float]],
    *,
    n: int = 100_000,
    seed: int = 0,
    horizon: float | None = None,
    n_steps: int | None = None,
    dt: float | None = None,
    adaptive: bool = True,
    max_doublings: int = 6,
    workers: int = 1,
    keep_samples: bool = True,
    cache=None,
) -> list[EstimatorResult]:
    """R-hat(S1, S2) for several budget pairs from one set of correlated pairs.

    Paths are ``(W1(t) - t, W2(t) - a t)``. The horizon starts at ``10 / a``
    unless given; the default time step is 0.0025.
    """
    specs = [ConstantSpec.R(rho, a, s1, s2).validate() for s1, s2 in budgets]
    l1, l2 = specs[0].lambda1, specs[0].lambda2
    n = int(n)
    h0 = 10.0 / min(1.0, a) if horizon is None else float(horizon)
    if n_steps is not None:
        dt = h0 / int(n_steps)
    elif dt is None:
        dt = DEFAULT_DT_NATURAL
    steps_h = max(2, int(round(h0 / dt)))
    m1 = [budget_steps(s1, dt) for s1, _ in budgets]
    m2 = [budget_steps(s2, dt) for _, s2 in budgets]
    d1, c1 = _desc_order(m1)
    d2, c2 = _desc_order(m2)
    cfg = {
        "kind": "R", "rho": rho, "a": a, "budgets": [list(map(float, b)) for b in budgets], "n": n,
        "seed": int(seed), "horizon": h0, "dt": dt, "adaptive": adaptive, "max_doublings": max_doublings,
    }
    hit = _from_cache(cache, cfg, [[sp.s, sp.s2] for sp in specs], keep_samples)
    if hit is not None:
        return hit
    s = rng.as_seed(seed)
    tail = [0] * len(budgets)

    def run_steps(prefixes):
        pref = np.asarray(prefixes, dtype=np.int64)
        x1 = np.empty((n, len(pref), len(d1)))
        x2 = np.empty((n, len(pref), len(d2)))

        def job(b, c):
            occupation_pair_kernel(s, b, c, int(pref[-1]), dt, rho, 1.0, a, pref, d1, d2, x1[b : b + c], x2[b : b + c])

        run_batches(job, n, workers)
        res = []
        for i in range(len(pref)):
            row = []
            for j in range(len(budgets)):
                y, t = _clamped_exp(l1 * x1[:, i, c1[j]] + l2 * x2[:, i, c2[j]])
                if i == len(pref) - 1:
                    tail[j] = t
                row.append(y / (l1 * l2))
            res.append(row)
        return res

    if adaptive:
        def run(hz):
            k = int(round(hz / dt))
            short, long_ = run_steps([k, 2 * k])
            return short, long_, None

        ys, _, h_final, history, warns = _adaptive(run, steps_h * dt, max_doublings)
    else:
        ys = run_steps([steps_h])[0]
        h_final, history, warns = steps_h * dt, [], []
    out = []
    for j, spec in enumerate(specs):
        m, se = _mean_se(ys[j])
        w = list(warns)
        if tail[j]:
            w.append(f"{tail[j]} paths hit the exponent clamp; estimate invalid")
        details = {"final_horizon": h_final, "dt": dt, "budget_steps": [m1[j], m2[j]], "horizon_history": history,
                   "lambda": [l1, l2]}
        out.append(
            EstimatorResult(m, se, n, int(seed), config_hash({**cfg, "budget": [spec.s, spec.s2]}), spec, cfg, w,
                            tail[j], details, samples=ys[j] if keep_samples else None)
        )
    _to_cache(cache, out)
    return out


def estimate_R(spec: ConstantSpec, horizon: float | None = None, n_steps: int | None = None, n: int = 100_000, seed: int = 0, **kw) -> EstimatorResult:
    """R-hat for one spec; see :func:`estimate_R_many`."""
    if spec.kind != "R":
        raise DomainError(f"expected an R spec, got {spec.kind}")
    return estimate_R_many(spec.rho, spec.a, [(spec.s, spec.s2)], n=n, seed=seed, horizon=horizon, n_steps=n_steps, **kw)[0]
