"""Command-line interface.

Exit status: 0 success, 1 a verification check failed, 2 data error,
3 configuration error, 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import discrete, io, optimality, toy
from .exceptions import ConfigurationError, DataError, DomainError, UnsupportedKindError
from .hedgetune import HedgeData, best_integer_n, expected_truth, find_threshold
from .policies import PolicyKind, PolicySpec, policy_kl, policy_mean
from .samplers import select_many
from .softmax import McConfig, sbon_mean_kl

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_DATA = 2
EXIT_CONFIG = 3
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_grid(text: str) -> np.ndarray:
    """``lo:hi:lin|log:count`` to an ascending grid."""
    parts = text.split(":")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError(f"grid must be lo:hi:scale:count, got {text!r}")
    try:
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[3])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number in grid {text!r}") from None
    scale = parts[2]
    if scale not in ("lin", "log"):
        raise argparse.ArgumentTypeError(f"grid scale must be lin or log, got {scale!r}")
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi and count >= 2):
        raise argparse.ArgumentTypeError(f"grid needs finite lo < hi and count >= 2, got {text!r}")
    if scale == "log":
        if lo <= 0:
            raise argparse.ArgumentTypeError("log grid needs lo > 0")
        return np.geomspace(lo, hi, count)
    return np.linspace(lo, hi, count)


def parse_bracket(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bracket must be lo:hi, got {text!r}") from None
    return lo, hi


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="")
    else:
        sys.stdout.write(text)


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def _need_seed(args, why: str) -> int:
    if args.seed is None:
        raise ConfigurationError(f"--seed is required for {why}")
    return args.seed


def _hedge_data(args) -> HedgeData:
    if (args.data is None) == (args.toy_p is None):
        raise ConfigurationError("give exactly one of --data or --toy-p")
    if args.toy_p is not None:
        p = args.toy_p
        if not p > 0:
            raise ConfigurationError("--toy-p must be positive")
        return HedgeData.exact(lambda u: toy.toy_truth(u, p))
    pools, _ = io.load_pools(args.data, require_truth=True)
    return HedgeData.from_pools(pools)


def cmd_toy(args) -> int:
    cfg = toy.ToyConfig(args.p, args.prompts, args.candidates, args.seed)
    m = toy.generate_toy(cfg, args.out)
    _emit(_dumps({"path": m.path, "pools": m.pools, "candidates_total": m.candidates_total,
                  "truth_present": m.truth_present, "checksum": f"{m.checksum:016x}"}), None)
    return EXIT_OK


def _curve_points(kind, grid, data, cfg, n) -> list:
    points = []
    for theta in grid:
        theta = float(theta)
        true_mean = expected_truth(kind, theta, data, cfg, n=n).mean
        if kind is PolicyKind.SBON:
            est = sbon_mean_kl(n, theta, cfg)
            proxy_mean, kl = est.mean.mean, est.kl.mean
        else:
            spec = PolicySpec(kind, **{"n" if kind is PolicyKind.BON else "mu": theta})
            proxy_mean, kl = policy_mean(spec), policy_kl(spec)
        points.append(io.RewardCurvePoint(theta, true_mean, proxy_mean, kl))
    return points


def cmd_curves(args) -> int:
    kind = PolicyKind(args.policy)
    data = _hedge_data(args)
    cfg = None
    if kind is PolicyKind.SBON:
        if args.n is None:
            raise ConfigurationError("--n is required for sbon curves")
        cfg = McConfig(samples=args.samples, seed=_need_seed(args, "sbon curves"))
    points = _curve_points(kind, args.grid, data, cfg, args.n)
    _emit(io.format_curves(points), args.out)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    kind = PolicyKind(args.method)
    data = _hedge_data(args)
    cfg = None
    if kind is PolicyKind.SBON:
        cfg = McConfig(samples=args.samples, seed=_need_seed(args, "sbon calibration"))
    res = find_threshold(kind, data, args.bracket, args.tol, cfg, n=args.n)
    row = io.calibration_row(res)
    if kind is PolicyKind.BON and args.n_max:
        n_dag, value = best_integer_n(data, args.n_max)
        row["n_integer"], row["f_n_integer"] = n_dag, value
    if args.out:
        lo, hi = res.bracket
        grid = np.geomspace(lo, hi, args.curve_points) if lo > 0 else np.linspace(lo, hi, args.curve_points)
        io.write_report(args.out, [res], _curve_points(kind, grid, data, cfg, args.n))
    _emit(_dumps(row), None)
    return EXIT_OK


def cmd_select(args) -> int:
    spec = PolicySpec(PolicyKind(args.policy), n=args.n, mu=args.mu, lam=args.lam)
    if spec.kind is PolicyKind.TILTED:
        raise ConfigurationError("the tilted policy cannot select from a finite pool")
    seed = _need_seed(args, "select")
    pools, _ = io.load_pools(args.data)
    sels = select_many(spec, pools, seed, args.repetitions)
    lines = []
    for i, s in enumerate(sels):
        pool = pools[i // args.repetitions]
        lines.append(json.dumps({
            "prompt_id": pool.prompt_id,
            "repetition": i % args.repetitions,
            "candidate_id": pool.candidates[s.chosen_index].candidate_id,
            "pool_size_used": s.pool_size_used,
            "capped": s.capped,
        }))
    _emit("".join(line + "\n" for line in lines), args.out)
    return EXIT_OK


def cmd_verify_bop(args) -> int:
    sweep = optimality.kl_gap_sweep(args.mu_grid)
    if args.csv:
        optimality.write_sweep_csv(args.csv, sweep)
    gaps = np.array([r.kl_gap for r in sweep])
    alpha = optimality.sup_log_ratio(args.sup_grid, args.u_resolution, args.side)
    bound = optimality.gap_bound(alpha)
    checks = {
        "gaps_nonnegative": bool(gaps.min() >= -1e-9),
        "gaps_below_8e-4": bool(gaps.max() <= 8e-4),
        "gaps_below_bound": bool(gaps.max() <= bound + 1e-12),
    }
    report = {
        "mu_points": len(sweep),
        "max_gap": float(gaps.max()),
        "min_gap": float(gaps.min()),
        "argmax_mu": sweep[int(gaps.argmax())].mu,
        "alpha": alpha,
        "alpha_side": args.side,
        "gap_bound": bound,
        "checks": checks,
    }
    _emit(_dumps(report), args.out)
    return EXIT_OK if all(checks.values()) else EXIT_CHECK_FAILED


def _load_base(path: str) -> discrete.DiscreteBase:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc.msg})") from None
    if not isinstance(doc, dict) or "pmf" not in doc or "truths" not in doc:
        raise DataError(f"{path}: expected an object with 'pmf' and 'truths'")
    return discrete.DiscreteBase(doc["pmf"], doc["truths"])


def _finite_or_none(x: float):
    return x if math.isfinite(x) else None


def cmd_discrete(args) -> int:
    base = _load_base(args.spec)
    kind = PolicyKind(args.kind)
    t1, t2 = args.thetas if args.thetas else ((2.0, 3.0) if kind is PolicyKind.BON else (1.0, 2.0))
    tp2 = discrete.check_tp2(base, kind, t1, t2)
    theta = args.theta if args.theta is not None else 0.5 * (t1 + t2)
    mono = discrete.check_score_monotone(base, kind, theta)
    grid = args.grid if args.grid is not None else (
        np.geomspace(1, 200, 400) if kind is PolicyKind.BON else np.linspace(0, 200, 400))
    curve = discrete.discrete_reward_curve(base, kind, grid)
    values = [v for _, v in curve]
    n_max, n_min = discrete.count_extrema(values, atol=1e-12 * max(1.0, max(abs(v) for v in values)))
    report = {
        "m": base.m,
        "kind": kind.value,
        "tp2": {"thetas": [t1, t2], "passed": tp2.passed, "worst": _finite_or_none(tp2.worst)},
        "score_monotone": {"theta": theta, "passed": mono.passed, "worst": _finite_or_none(mono.worst)},
        "curve": {"points": len(curve), "interior_maxima": n_max, "interior_minima": n_min,
                  "unimodal": n_max + n_min <= 1},
    }
    if args.mu is not None:
        exact, bound = discrete.discrete_bop_kl(base, args.mu)
        report["bop_kl"] = {"mu": args.mu, "exact": exact, "bound": bound, "within_bound": exact <= bound + 1e-6}
    _emit(_dumps(report), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hedgekit", description="Selection-policy analytics and hacking-threshold calibration.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("toy", help="write the synthetic toy dataset")
    p.add_argument("--p", type=float, default=12.0)
    p.add_argument("--prompts", type=int, default=100)
    p.add_argument("--candidates", type=int, default=512)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_toy)

    def data_args(q):
        g = q.add_mutually_exclusive_group()
        g.add_argument("--data", help="JSON Lines dataset with true scores")
        g.add_argument("--toy-p", type=float, help="use the exact toy truth with this exponent")

    p = sub.add_parser("curves", help="sweep a parameter grid and emit reward/KL curves")
    p.add_argument("--policy", choices=["bon", "bop", "sbon"], required=True)
    p.add_argument("--grid", type=parse_grid, required=True)
    data_args(p)
    p.add_argument("--n", type=int, help="pool size for sbon")
    p.add_argument("--samples", type=int, default=20_000)
    p.add_argument("--seed", type=_seed)
    p.add_argument("--out")
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("calibrate", help="locate the hacking threshold")
    p.add_argument("--method", choices=["bon", "bop", "sbon"], required=True)
    data_args(p)
    p.add_argument("--bracket", type=parse_bracket)
    p.add_argument("--tol", type=float, default=1e-3)
    p.add_argument("--n", type=int, help="pool size for sbon")
    p.add_argument("--n-max", type=int, help="also run the integer search for bon up to this n")
    p.add_argument("--samples", type=int, default=4000)
    p.add_argument("--seed", type=_seed)
    p.add_argument("--out", help="directory for calibration.json and curves.csv")
    p.add_argument("--curve-points", type=int, default=40, help="bracket grid size for the report curves")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("select", help="apply a policy to every pool")
    p.add_argument("--policy", choices=["bon", "sbon", "bop", "sbop"], required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--mu", type=float)
    p.add_argument("--lam", type=float)
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--seed", type=_seed)
    p.add_argument("--out")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("verify-bop", help="KL-gap sweep and log-ratio bound for BoP")
    p.add_argument("--mu-grid", type=parse_grid, default=parse_grid("0.5:32:log:25"))
    p.add_argument("--sup-grid", type=parse_grid, default=parse_grid("0.01:100:log:60"))
    p.add_argument("--u-resolution", type=int, default=2000)
    p.add_argument("--side", choices=["upper", "abs"], default="upper")
    p.add_argument("--csv", help="also write the sweep as CSV")
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify_bop)

    p = sub.add_parser("discrete", help="finite-alphabet TP2, score, curve and KL checks")
    p.add_argument("--spec", required=True, help='JSON file {"pmf": [...], "truths": [...]}')
    p.add_argument("--kind", choices=["bon", "bop"], required=True)
    p.add_argument("--thetas", type=parse_bracket, help="theta1:theta2 for the TP2 check")
    p.add_argument("--theta", type=float, help="parameter for the score check")
    p.add_argument("--grid", type=parse_grid)
    p.add_argument("--mu", type=float, help="also report the BoP KL and its bound")
    p.add_argument("--out")
    p.set_defaults(func=cmd_discrete)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigurationError, DomainError, UnsupportedKindError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
