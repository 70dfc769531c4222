"""Direct Monte Carlo for joint ruin, cumulative Parisian ruin and their ratio.

For capital ``u`` the barriers are ``(u, a u)`` and the sojourn requirements
``(S1, S2) / u^2`` on the horizon. The conditional quantity is estimated as
the ratio of two unconditional frequencies over the same paths.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import rng
from .constants import EstimatorResult, config_hash
from .errors import DomainError
from .gauss import BivCovariance
from .model import ModelParams, SojournBudget, classify
from .paths import RUIN1, RUIN2, SIMUL, SOJ1, SOJ2, budget_steps, ruin_pair_kernel, run_batches, sup_1d_kernel
from .quadform import RateInput, _qp_candidates, q_star_global

MIN_PATHS = 10_000
NO_DATA = "no-data: no path reached joint ruin; raise n or lower u"


@dataclass
class ProbabilityEstimates:
    """Joint ruin ``pi_hat``, joint sojourn ruin ``s_hat`` and ``ratio = s_hat / pi_hat``."""

    pi_hat: EstimatorResult
    s_hat: EstimatorResult
    ratio: EstimatorResult
    simultaneous: EstimatorResult | None = None
    details: dict = field(default_factory=dict)

    def __iter__(self) -> Iterator[EstimatorResult]:
        return iter((self.pi_hat, self.s_hat, self.ratio))

    @property
    def no_data(self) -> bool:
        return bool(self.ratio.details.get("no_data"))

    def to_dict(self) -> dict:
        d = {"pi_hat": self.pi_hat.to_dict(), "s_hat": self.s_hat.to_dict(), "ratio": self.ratio.to_dict()}
        if self.simultaneous is not None:
            d["simultaneous"] = self.simultaneous.to_dict()
        d["details"] = self.details
        return d


def _weighted_mean(x: np.ndarray, w: np.ndarray | None) -> tuple[float, float]:
    y = x if w is None else x * w
    n = len(y)
    return float(y.mean()), float(y.std(ddof=1) / math.sqrt(n))


def _ratio_stats(num: np.ndarray, den: np.ndarray, w: np.ndarray | None) -> tuple[float, float, int]:
    """``sum(w num) / sum(w den)`` with a delta-method standard error; ``num`` is a sub-event of ``den``."""
    a = num if w is None else num * w
    b = den if w is None else den * w
    k = int(np.count_nonzero(den))
    sb = float(b.sum())
    if k == 0 or sb == 0.0:
        return math.nan, math.nan, k
    r = float(a.sum()) / sb
    n = len(a)
    resid = a - r * b
    se = float(resid.std(ddof=1) * math.sqrt(n) / sb)
    return r, se, k


def _results(flags: np.ndarray, logw: np.ndarray | None, cfg: dict, seed: int, n: int) -> ProbabilityEstimates:
    ruin = ((flags & RUIN1) > 0) & ((flags & RUIN2) > 0)
    soj = ((flags & SOJ1) > 0) & ((flags & SOJ2) > 0) & ruin
    sim = (flags & SIMUL) > 0
    w = None if logw is None else np.exp(logw)
    r_f, s_f, m_f = ruin.astype(np.float64), soj.astype(np.float64), sim.astype(np.float64)
    pm, pse = _weighted_mean(r_f, w)
    sm, sse = _weighted_mean(s_f, w)
    mm, mse = _weighted_mean(m_f, w)
    ratio, rse, k = _ratio_stats(s_f, r_f, w)
    h = config_hash(cfg)
    warns: list[str] = []
    det = {"ruin_count": k, "sojourn_count": int(soj.sum())}
    if w is not None:
        wr = w[ruin]
        ess = float(wr.sum() ** 2 / (wr * wr).sum()) if len(wr) else 0.0
        det["ess"] = ess
        if ess < 100:
            warns.append(f"effective sample size {ess:.1f} is below 100")
    if not int(soj.sum()) <= k:
        raise AssertionError("sojourn ruin counted outside joint ruin")
    rdet = dict(det)
    rwarn = list(warns)
    if k == 0:
        rdet["no_data"] = True
        rwarn.append(NO_DATA)
    mk = lambda est, se, tag, wl, dd: EstimatorResult(est, se, n, seed, h, None, {**cfg, "quantity": tag}, wl, 0, dd)  # noqa: E731
    return ProbabilityEstimates(
        mk(pm, pse, "pi", list(warns), dict(det)),
        mk(sm, sse, "s", list(warns), dict(det)),
        mk(ratio, rse, "ratio", rwarn, rdet),
        mk(mm, mse, "simultaneous", list(warns), dict(det)),
        det,
    )


def _levels(params: ModelParams, u_list, budget: SojournBudget, dt: float):
    lev1 = np.array([float(u) for u in u_list])
    lev2 = params.a * lev1
    need1 = np.array([budget_steps(budget.s1 / u**2, dt) + 1 for u in u_list], dtype=np.int64)
    need2 = np.array([budget_steps(budget.s2 / u**2, dt) + 1 for u in u_list], dtype=np.int64)
    return lev1, lev2, need1, need2


def _simulate_flags(params, u_list, budget, n, n_steps, seed, horizon, workers, tilt=None):
    if n < MIN_PATHS:
        raise DomainError(f"n must be at least {MIN_PATHS}, got {n}")
    if int(n_steps) != n_steps or n_steps < 2:
        raise DomainError(f"n_steps must be an integer >= 2, got {n_steps}")
    dt = horizon / n_steps
    lev1, lev2, need1, need2 = _levels(params, u_list, budget, dt)
    flags = np.empty((n, len(u_list)), np.uint8)
    tilted = tilt is not None
    t1, t2 = (tilt if tilted else (np.zeros(1), np.zeros(1)))
    logw = np.empty(n if tilted else 1)
    s = rng.as_seed(seed)

    def job(b, c):
        ruin_pair_kernel(
            s, b, c, n_steps, dt, params.rho, params.c1, params.c2, lev1, lev2, need1, need2, tilted, t1, t2,
            flags[b : b + c], logw[b : b + c] if tilted else logw,
        )

    run_batches(job, n, workers)
    return flags, (logw if tilted else None)


def _base_cfg(params, u, budget, n, n_steps, seed, horizon, method):
    return {
        "params": params.as_dict(), "u": u, "s1": budget.s1, "s2": budget.s2, "n": int(n), "n_steps": int(n_steps),
        "seed": int(seed), "horizon": horizon, "method": method,
    }


def estimate_probabilities(
    params: ModelParams,
    u: float,
    budget: SojournBudget,
    n: int = 100_000,
    n_steps: int = 4096,
    seed: int = 0,
    *,
    horizon: float = 1.0,
    workers: int = 1,
) -> ProbabilityEstimates:
    """Plain Monte Carlo estimates of joint ruin, joint sojourn ruin and their ratio."""
    if budget.u is not None and budget.u != u:
        raise DomainError("budget.u must equal u")
    flags, _ = _simulate_flags(params, [u], budget, n, n_steps, seed, horizon, workers)
    cfg = _base_cfg(params, u, budget, n, n_steps, seed, horizon, "plain")
    return _results(flags[:, 0], None, cfg, int(seed), int(n))


def tilt_drifts(params: ModelParams, u: float, n_steps: int, horizon: float = 1.0, scale: float = 1.0, minimizer=None):
    """Per-step drifts of ``(B1, B2)`` steering the mean path to the barriers at the rate minimizer.

    With ``b = Sigma^{-1} x*`` for the optimal point ``x*`` of the constrained
    problem at ``(s*, t*)``, B1 receives ``b1`` on ``[0, s*]`` plus ``rho b2`` on
    ``[0, t*]`` and B2 receives ``sqrt(1 - rho^2) b2`` on ``[0, t*]``, so that the
    mean of ``(W1(s*) + c1 s*, W2(t*) + c2 t*)`` equals ``x*``. Times are in
    units of ``horizon``.
    """
    if minimizer is None:
        _, mins = q_star_global(params, u / math.sqrt(horizon))
        minimizer = mins[0]
    s_, t_ = minimizer
    s_abs, t_abs = s_ * horizon, t_ * horizon
    sig = BivCovariance(s_abs, t_abs, params.rho)
    inp = RateInput(sig, (u + params.c1 * s_abs, params.a * u + params.c2 * t_abs), u)
    cands = _qp_candidates(inp)
    _, x = min(cands) if cands else (None, inp.avec)
    (i11, i12), (_, i22) = sig.inverse()
    b1 = i11 * x[0] + i12 * x[1]
    b2 = i12 * x[0] + i22 * x[1]
    dt = horizon / n_steps
    tk = np.arange(n_steps) * dt  # left end of step k
    in_s = tk < s_abs
    in_t = tk < t_abs
    rc = math.sqrt(1.0 - params.rho**2)
    g1 = scale * (b1 * in_s + params.rho * b2 * in_t)
    g2 = scale * (rc * b2 * in_t)
    return g1.astype(np.float64), g2.astype(np.float64), {"minimizer": [s_, t_], "x_star": list(map(float, x)), "b": [b1, b2]}


def tilted_estimate(
    params: ModelParams,
    u: float,
    budget: SojournBudget,
    n: int = 100_000,
    n_steps: int = 4096,
    seed: int = 0,
    *,
    horizon: float = 1.0,
    scale: float = 1.0,
    minimizer: tuple[float, float] | None = None,
    workers: int = 1,
) -> ProbabilityEstimates:
    """Importance-sampling version of :func:`estimate_probabilities`.

    Paths are drawn with the drifts of :func:`tilt_drifts` and reweighted by the
    exact likelihood ratio of the increments. ``scale=0`` reproduces the plain
    estimates exactly. When several minimizers exist the first is used.
    """
    if budget.u is not None and budget.u != u:
        raise DomainError("budget.u must equal u")
    classify(params)
    g1, g2, info = tilt_drifts(params, u, n_steps, horizon, scale, minimizer)
    flags, logw = _simulate_flags(params, [u], budget, n, n_steps, seed, horizon, workers, tilt=(g1, g2))
    cfg = _base_cfg(params, u, budget, n, n_steps, seed, horizon, "tilted")
    cfg["tilt"] = {"scale": scale, **info}
    out = _results(flags[:, 0], logw, cfg, int(seed), int(n))
    out.details["tilt"] = info
    return out


def one_dim_ruin_mc(cases: Sequence[tuple[float, float]], T: float = 1.0, n: int = 1_000_000, n_steps: int = 1 << 14, seed: int = 0, workers: int = 1) -> list[EstimatorResult]:
    """Grid estimates of ``P(sup (B(t) - c t) > u)`` for ``(c, u)`` pairs sharing one set of paths."""
    drifts = sorted({float(c) for c, _ in cases})
    col = {c: i for i, c in enumerate(drifts)}
    dt = T / n_steps
    sup = np.empty((int(n), len(drifts)))
    s = rng.as_seed(seed)
    darr = np.array(drifts)

    def job(b, c):
        sup_1d_kernel(s, b, c, int(n_steps), dt, darr, sup[b : b + c])

    run_batches(job, int(n), workers)
    out = []
    for c, u in cases:
        hit = (sup[:, col[float(c)]] > u).astype(np.float64)
        m, se = _weighted_mean(hit, None)
        cfg = {"c": c, "u": u, "T": T, "n": int(n), "n_steps": int(n_steps), "seed": int(seed), "quantity": "one_dim_ruin"}
        out.append(EstimatorResult(m, se, int(n), int(seed), config_hash(cfg), None, cfg))
    return out


# ---------------------------------------------------------------------------
# convergence table

CSV_COLUMNS = ("u", "pi_hat", "pi_se", "s_hat", "s_se", "ratio", "ratio_lo", "ratio_hi", "limit", "regime")


@dataclass
class ConvergeRow:
    u: float
    pi_hat: float
    pi_se: float
    s_hat: float
    s_se: float
    ratio: float
    ratio_se: float
    limit: float
    limit_se: float
    regime: str
    no_data: bool = False

    @property
    def ratio_lo(self) -> float:
        return self.ratio - 1.96 * self.ratio_se

    @property
    def ratio_hi(self) -> float:
        return self.ratio + 1.96 * self.ratio_se

    @property
    def gap(self) -> float:
        return self.ratio - self.limit

    def as_dict(self) -> dict:
        return {
            "u": self.u, "pi_hat": self.pi_hat, "pi_se": self.pi_se, "s_hat": self.s_hat, "s_se": self.s_se,
            "ratio": self.ratio, "ratio_se": self.ratio_se, "ratio_lo": self.ratio_lo, "ratio_hi": self.ratio_hi,
            "limit": self.limit, "limit_se": self.limit_se, "gap": self.gap, "regime": self.regime,
            "no_data": self.no_data,
        }


@dataclass
class ConvergeTable:
    rows: list[ConvergeRow]
    config: dict
    config_hash: str
    limit_info: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(CSV_COLUMNS)
        for r in self.rows:
            d = r.as_dict()
            wr.writerow([d[c] if isinstance(d[c], str) else format(float(d[c]), ".17g") for c in CSV_COLUMNS])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"rows": [r.as_dict() for r in self.rows], "config": self.config, "config_hash": self.config_hash,
                "limit": self.limit_info}

    def to_json(self) -> str:
        from .jsonio import dumps

        return dumps(self.to_dict())


def converge_table(
    params: ModelParams,
    budget: SojournBudget,
    u_list: Sequence[float],
    n: int = 100_000,
    n_steps: int = 4096,
    seed: int = 0,
    *,
    limit: float | None = None,
    limit_se: float = 0.0,
    limit_info: dict | None = None,
    constants_config=None,
    horizon: float = 1.0,
    workers: int = 1,
) -> ConvergeTable:
    """Ratio estimates along increasing capitals next to the asymptotic limit.

    All capitals are evaluated on the same paths, so differences between rows
    are not blurred by independent noise. When ``limit`` is not given it is
    computed by :func:`ruinlab.asymptotics.limit`.
    """
    u_list = [float(u) for u in u_list]
    if any(b <= a for a, b in zip(u_list, u_list[1:])):
        raise DomainError("u_list must be strictly increasing")
    regime = classify(params)
    if limit is None:
        from .asymptotics import limit as asym_limit

        lr = asym_limit(params, budget, config=constants_config)
        limit, limit_se = lr.value, lr.stderr
        limit_info = lr.to_dict()
    flags, _ = _simulate_flags(params, u_list, budget, int(n), n_steps, seed, horizon, workers)
    cfg = {
        "params": params.as_dict(), "s1": budget.s1, "s2": budget.s2, "u_list": u_list, "n": int(n),
        "n_steps": int(n_steps), "seed": int(seed), "horizon": horizon, "method": "plain",
    }
    rows = []
    for j, u in enumerate(u_list):
        res = _results(flags[:, j], None, {**cfg, "u": u}, int(seed), int(n))
        rows.append(
            ConvergeRow(u, res.pi_hat.estimate, res.pi_hat.stderr, res.s_hat.estimate, res.s_hat.stderr,
                        res.ratio.estimate, res.ratio.stderr, float(limit), float(limit_se), regime.kind.value,
                        res.no_data)
        )
    return ConvergeTable(rows, cfg, config_hash(cfg), limit_info or {"value": limit, "stderr": limit_se})
