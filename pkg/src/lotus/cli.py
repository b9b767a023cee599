"""Command-line entry point: ``lotus {run,compare,mlp,account,bench-svd}``."""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from . import bench, harness
from .config import load_config
from .errors import ConfigError, LotusError
from .optimizer import memory_accounting
from .policy import PolicyKind, SwitchConfig

# flag name -> RunConfig field
_COMMON_FLAGS = {
    "--config": None,
    "--policy": "policy",
    "--gamma": "gamma",
    "--eta": "eta",
    "--t-min": "t_min",
    "--fixed-interval": "fixed_interval",
    "--rank": "rank",
    "--seed": "seed",
    "--max-steps": "max_steps",
    "--eps": "eps",
    "--out": "out",
    "--format": "format",
    "--problem": "problem",
    "--dims": "dims",
    "--drift-rate": "drift_rate",
    "--noise-std": "noise_std",
    "--lr": "lr",
    "--scale": "scale",
    "--projection": "projection",
    "--tolerance-mode": "tolerance_mode",
}


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--policy", choices=[k.value for k in PolicyKind])
    p.add_argument("--gamma", type=float)
    p.add_argument("--eta", type=int, help="verification gap in steps")
    p.add_argument("--t-min", type=int)
    p.add_argument("--fixed-interval", type=int)
    p.add_argument("--rank", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--eps", type=float, help="gradient tolerance")
    p.add_argument("--out", help="trace output path")
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--problem", choices=["drift", "quadratic", "logistic", "mlp"])
    p.add_argument("--dims", help="comma-separated problem sizes")
    p.add_argument("--drift-rate", type=float)
    p.add_argument("--noise-std", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--scale", type=float)
    p.add_argument("--projection", choices=["rsvd", "svd"])
    p.add_argument("--tolerance-mode", choices=["window", "cumulative"])
    p.add_argument("--timing", action="store_true", default=None, help="record per-step wall time")


def _config(args):
    overrides = {field: getattr(args, flag[2:].replace("-", "_")) for flag, field in _COMMON_FLAGS.items() if field}
    overrides["timing"] = args.timing
    for extra in ("epochs", "batch_size"):
        if hasattr(args, extra):
            overrides[extra] = getattr(args, extra)
    return load_config(args.config, overrides)


def _emit(trace, cfg, path=None):
    path = path or cfg.out
    if path:
        harness.emit_trace(trace, path, cfg.format)


def cmd_run(args) -> int:
    cfg = _config(args)
    trace = harness.run_experiment(
        cfg.problem_spec(), cfg.hyperparams(), cfg.max_steps, cfg.eps, cfg.tolerance_mode, cfg.timing
    )
    _emit(trace, cfg)
    print(json.dumps(trace.summary()))
    return trace.status.exit_code


def _parse_policies(text, cfg):
    out = []
    for item in text.split(","):
        name, _, arg = item.strip().partition(":")
        interval = int(arg) if arg else None
        cfg_item = cfg.switch_config(PolicyKind(name).value, interval)
        out.append(cfg_item)
    return out


def cmd_compare(args) -> int:
    cfg = _config(args)
    policies = _parse_policies(args.policies, cfg)
    report = harness.compare_policies(
        cfg.problem_spec(),
        cfg.hyperparams(),
        policies,
        cfg.max_steps,
        cfg.eps,
        workers=args.workers,
        tolerance_mode=cfg.tolerance_mode,
        record_timing=cfg.timing,
    )
    if cfg.out:
        stem, dot, ext = cfg.out.rpartition(".")
        for i, outcome in enumerate(report.outcomes):
            path = f"{stem}.{i}.{ext}" if dot else f"{cfg.out}.{i}"
            harness.emit_trace(outcome.trace, path, cfg.format)
    print(report.table())
    statuses = {o.trace.status for o in report.outcomes}
    if harness.RunStatus.NUMERICAL_FAILURE in statuses:
        return 3
    return 0 if statuses == {harness.RunStatus.CONVERGED} else 2


def cmd_mlp(args) -> int:
    if args.dims is None and args.config is None:
        args.dims = "8,16,4"
    if args.problem is None:
        args.problem = "mlp"
    cfg = _config(args)
    trace = harness.mlp_train(cfg.problem_spec(), cfg.hyperparams(), cfg.epochs, record_timing=cfg.timing)
    _emit(trace, cfg)
    print(json.dumps(trace.summary()))
    return 3 if trace.status is harness.RunStatus.NUMERICAL_FAILURE else 0


def _shape(text):
    m, _, n = text.lower().partition("x")
    return int(m), int(n or m)


def cmd_account(args) -> int:
    shapes = [_shape(s) for s in args.shape] or [(256, 256), (2048, 2048)]
    print(f"{'shape':>12} {'rank':>6} {'full_adam':>12} {'low_rank':>12} {'reduction':>10}")
    for shape in shapes:
        ranks = args.rank or [max(1, min(shape) // 4)]
        for r in ranks:
            rep = memory_accounting(shape, r)
            print(
                f"{shape[0]:>5}x{shape[1]:<6} {r:>6} {rep.full_adam_total:>12} "
                f"{rep.low_rank_total:>12} {100 * rep.reduction:>9.2f}%"
            )
    return 0


def cmd_bench_svd(args) -> int:
    rows = bench.bench_svd(_shape(args.size), args.rank, args.repeats, args.seed)
    for row in rows:
        times = " ".join(f"{t:.4f}" for t in row.times_s)
        print(f"{row.method:>5} {row.size[0]}x{row.size[1]} rank={row.rank} median={row.median_s:.4f}s runs=[{times}]")
    print(f"ratio rsvd/svd = {rows[0].median_s / rows[1].median_s:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lotus", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="single experiment")
    _add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run several switching policies on one problem")
    _add_common(p)
    p.add_argument("--policies", default="avg,fixed", help="e.g. avg,rho,fixed:500")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("mlp", help="train the teacher-student MLP")
    _add_common(p)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.set_defaults(func=cmd_mlp)

    p = sub.add_parser("account", help="gradient + optimizer-state scalar counts")
    p.add_argument("--shape", action="append", default=[], help="MxN, repeatable")
    p.add_argument("--rank", type=int, action="append", help="repeatable; default min(M,N)/4")
    p.set_defaults(func=cmd_account)

    p = sub.add_parser("bench-svd", help="rSVD vs exact-SVD projector timing")
    p.add_argument("--size", default="1024x1024")
    p.add_argument("--rank", type=int, default=32)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench_svd)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except LotusError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
