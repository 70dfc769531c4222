"""Command-line front end.

Every subcommand writes one JSON document to standard output. Stochastic
outputs carry the seed, sample count, discretization, configuration hash and
the argument vector that reproduces them.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence


from . import __version__
from .errors import ConfigurationError, DomainError, LogicError

EXIT_OK, EXIT_USER, EXIT_LOGIC = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with status 2
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of numbers, got {text!r}") from None


def _add_model(p, need_drifts=True):
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--a", type=float, required=True)
    if need_drifts:
        p.add_argument("--c1", type=float, default=0.0)
        p.add_argument("--c2", type=float, default=0.0)


def _add_mc(p, n_default, steps_default=None):
    p.add_argument("--n", type=int, default=n_default)
    if steps_default is not None:
        p.add_argument("--steps", type=int, default=steps_default)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)


def _add_cache(p):
    p.add_argument("--cache-dir", default=None, help="defaults to $RUINLAB_CACHE_DIR or .ruinlab-cache")
    p.add_argument("--no-cache", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ruinlab", description="Joint ruin of correlated Brownian surpluses with sojourn budgets.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("classify", help="regime of (rho, a)")
    _add_model(p)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--force-case", type=int, default=None)

    p = sub.add_parser("exact-ruin", help="one-dimensional finite-horizon ruin probability")
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--u", type=float, required=True)
    p.add_argument("--T", type=float, default=1.0)

    p = sub.add_parser("qopt", help="global minimum of the constrained quadratic rate")
    _add_model(p)
    p.add_argument("--u", type=float, default=None, help="finite capital; omit for the asymptotic barrier")
    p.add_argument("--grid-n", type=int, default=256)

    p = sub.add_parser("simulate-paths", help="simulate correlated pairs and dump them")
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--c1", type=float, default=0.0)
    p.add_argument("--c2", type=float, default=0.0)
    p.add_argument("--horizon", type=float, default=1.0)
    _add_mc(p, 16, 1024)
    p.add_argument("--out", required=True, help="binary output file")

    p = sub.add_parser("constant", help="estimate P, H or R")
    p.add_argument("--kind", choices=("P", "H", "R"), required=True)
    p.add_argument("--w1", type=float, default=None)
    p.add_argument("--w2", type=float, default=None)
    p.add_argument("--s", type=float, default=0.0, help="budget (S1 for R)")
    p.add_argument("--s2", type=float, default=0.0, help="second budget for R")
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--a", type=float, default=None)
    p.add_argument("--delta-list", type=_floats, default=None)
    p.add_argument("--steps", type=int, default=None, help="grid steps on the initial horizon (P, R) or per unit time (H)")
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--sup", choices=("bridge", "grid"), default="bridge",
                   help="supremum for a zero budget (P, H): bridge interpolation or grid maximum")
    p.add_argument("--mode", choices=("mixture", "naive"), default="mixture", help="H estimator")
    _add_mc(p, 100_000)
    _add_cache(p)

    p = sub.add_parser("limit", help="asymptotic conditional ratio")
    _add_model(p)
    p.add_argument("--s1", type=float, default=0.0)
    p.add_argument("--s2", type=float, default=0.0)
    p.add_argument("--mode", choices=("printed", "oracle"), default="oracle")
    p.add_argument("--force-case", type=int, default=None)
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--sup", choices=("bridge", "grid"), default="grid",
                   help="supremum for zero budgets; grid keeps one discretization across ratio terms")
    _add_mc(p, 100_000)
    _add_cache(p)

    p = sub.add_parser("mc-ratio", help="direct Monte Carlo of ruin, sojourn ruin and their ratio")
    _add_model(p)
    p.add_argument("--u", type=float, required=True)
    p.add_argument("--s1", type=float, default=0.0)
    p.add_argument("--s2", type=float, default=0.0)
    p.add_argument("--tilted", action="store_true")
    _add_mc(p, 100_000, 4096)

    p = sub.add_parser("converge", help="ratio estimates along capitals next to the limit")
    _add_model(p)
    p.add_argument("--s1", type=float, default=0.0)
    p.add_argument("--s2", type=float, default=0.0)
    p.add_argument("--u-list", type=_floats, required=True)
    p.add_argument("--limit-n", type=int, default=100_000, help="paths per constant estimate")
    p.add_argument("--out", default=None, help="CSV output file")
    _add_mc(p, 100_000, 4096)
    _add_cache(p)

    p = sub.add_parser("cache", help="inspect or clear the result cache")
    p.add_argument("action", choices=("list", "clear"))
    p.add_argument("--cache-dir", default=None)
    return ap


def _cache(args):
    from .cache import ResultCache

    if getattr(args, "no_cache", False):
        return None
    return ResultCache(args.cache_dir)


def _replay(argv: Sequence[str]) -> dict:
    return {"argv": list(argv), "version": __version__}


def _cmd_classify(args, argv):
    from .model import ModelParams, classify, regime_record

    params = ModelParams(args.rho, args.a, args.c1, args.c2)
    return regime_record(params, classify(params, args.tol, args.force_case))


def _cmd_exact(args, argv):
    from .exact import one_dim_ruin
    from .model import rescale_diagnostic

    out = {"value": one_dim_ruin(args.c, args.u, args.T), "inputs": {"c": args.c, "u": args.u, "T": args.T}}
    if args.T != 1.0:
        out["rescale"] = rescale_diagnostic(args.c, args.u, args.T)
    return out


def _cmd_qopt(args, argv):
    from .model import ModelParams, classify
    from .quadform import q_star_global

    params = ModelParams(args.rho, args.a, args.c1, args.c2)
    q, mins = q_star_global(params, args.u, args.grid_n)
    return {
        "q_star": q, "log_rate": q / 2.0, "minimizers": [list(m) for m in mins],
        "regime": classify(params).kind.value, "u": args.u, "grid_n": args.grid_n, "inputs": params.as_dict(),
    }


def _cmd_simulate(args, argv):
    from .constants import config_hash
    from .paths import dump_paths, simulate_pairs

    w1, w2 = simulate_pairs(args.rho, args.c1, args.c2, args.horizon, args.steps, args.seed, args.n, workers=args.workers)
    with open(args.out, "wb") as fh:
        dump_paths(fh, args.horizon, args.steps, w1, w2)
    cfg = {"rho": args.rho, "c1": args.c1, "c2": args.c2, "horizon": args.horizon, "n_steps": args.steps,
           "n": args.n, "seed": args.seed}
    return {"out": str(args.out), "count": args.n, "n_steps": args.steps, "horizon": args.horizon, "seed": args.seed,
            "n": args.n, "config": cfg, "config_hash": config_hash(cfg), "bytes": Path(args.out).stat().st_size,
            "replay": _replay(argv)}


def _cmd_constant(args, argv):
    from .constants import ConstantSpec, estimate_H_many, estimate_P_many, estimate_R_many

    cache = _cache(args)
    if args.kind == "R":
        if args.rho is None or args.a is None:
            raise ConfigurationError("--kind R needs --rho and --a")
        spec = ConstantSpec.R(args.rho, args.a, args.s, args.s2).validate()
        kw = {}
        if args.steps is not None:
            kw["n_steps"] = args.steps
        res = estimate_R_many(args.rho, args.a, [(args.s, args.s2)], n=args.n, seed=args.seed, horizon=args.horizon,
                              workers=args.workers, cache=cache, keep_samples=False, **kw)[0]
    else:
        if args.w1 is None or args.w2 is None:
            raise ConfigurationError(f"--kind {args.kind} needs --w1 and --w2")
        if args.kind == "P":
            kw = {"n_steps": args.steps} if args.steps is not None else {}
            res = estimate_P_many(args.w1, args.w2, [args.s], n=args.n, seed=args.seed, horizon=args.horizon,
                                  bridge=args.sup == "bridge", workers=args.workers, cache=cache, keep_samples=False, **kw)[0]
        else:
            kw = {"n_steps_per_unit": args.steps} if args.steps is not None else {}
            if args.delta_list is not None:
                kw["deltas"] = args.delta_list
            res = estimate_H_many(args.w1, args.w2, [args.s], n=args.n, seed=args.seed, mode=args.mode,
                                  bridge=args.sup == "bridge", workers=args.workers, cache=cache, **kw)[0]
        spec = res.spec
    out = res.to_dict()
    out["spec"] = spec.as_dict()
    out["replay"] = _replay(argv)
    return out


def _cmd_limit(args, argv):
    from .asymptotics import ConstantsConfig, limit
    from .model import ModelParams, SojournBudget

    params = ModelParams(args.rho, args.a, args.c1, args.c2)
    cfg = ConstantsConfig(n=args.n, seed=args.seed, bridge_zero=args.sup == "bridge", workers=args.workers)
    r = limit(params, SojournBudget(args.s1, args.s2), args.mode, cfg, _cache(args), args.force_case, args.tol)
    d = r.to_dict()
    return {"regime": r.regime, "limit": r.value, "stderr": r.stderr, "mode": r.mode,
            "constants_used": d["constants_used"], "warnings": r.warnings, "details": d["details"],
            "inputs": {**params.as_dict(), "s1": args.s1, "s2": args.s2}, "seed": args.seed, "n": args.n,
            "replay": _replay(argv)}


def _cmd_mc(args, argv):
    from .mc import estimate_probabilities, tilted_estimate
    from .model import ModelParams, SojournBudget

    params = ModelParams(args.rho, args.a, args.c1, args.c2)
    budget = SojournBudget(args.s1, args.s2, args.u)
    fn = tilted_estimate if args.tilted else estimate_probabilities
    res = fn(params, args.u, budget, args.n, args.steps, args.seed, workers=args.workers)
    out = res.to_dict()
    out.update({"seed": args.seed, "n": args.n, "n_steps": args.steps, "config_hash": res.ratio.config_hash,
                "replay": _replay(argv)})
    return out


def _cmd_converge(args, argv):
    from .asymptotics import ConstantsConfig
    from .mc import converge_table
    from .model import ModelParams, SojournBudget

    params = ModelParams(args.rho, args.a, args.c1, args.c2)
    cfg = ConstantsConfig(n=args.limit_n, seed=args.seed, workers=args.workers)
    from .asymptotics import limit

    lr = limit(params, SojournBudget(args.s1, args.s2), config=cfg, cache=_cache(args))
    tab = converge_table(params, SojournBudget(args.s1, args.s2), args.u_list, args.n, args.steps, args.seed,
                         limit=lr.value, limit_se=lr.stderr, limit_info=lr.to_dict(), workers=args.workers)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(tab.to_csv())
    out = tab.to_dict()
    out.update({"seed": args.seed, "n": args.n, "n_steps": args.steps, "csv": args.out, "replay": _replay(argv)})
    return out


def _cmd_cache(args, argv):
    from .cache import ResultCache

    c = ResultCache(args.cache_dir)
    if args.action == "clear":
        return {"cache_dir": str(c.root), "removed": c.clear()}
    return {"cache_dir": str(c.root), "entries": [p.stem for p in c.entries()]}


_COMMANDS = {
    "classify": _cmd_classify,
    "exact-ruin": _cmd_exact,
    "qopt": _cmd_qopt,
    "simulate-paths": _cmd_simulate,
    "constant": _cmd_constant,
    "limit": _cmd_limit,
    "mc-ratio": _cmd_mc,
    "converge": _cmd_converge,
    "cache": _cmd_cache,
}


def run(argv: Sequence[str] | None = None, stdout=None) -> int:
    """Execute one subcommand and return its exit code."""
    from .jsonio import dumps

    argv = list(sys.argv[1:] if argv is None else argv)
    stdout = stdout or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        result = _COMMANDS[args.command](args, argv)
    except _UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USER
    except (DomainError, ConfigurationError) as e:
        print(f"ruinlab: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_USER
    except LogicError as e:
        print(f"ruinlab: internal error: {e}", file=sys.stderr)
        return EXIT_LOGIC
    except OSError as e:
        print(f"ruinlab: {e}", file=sys.stderr)
        return EXIT_USER
    stdout.write(dumps(result) + "\n")
    return EXIT_OK


def main() -> None:
    sys.exit(run())
