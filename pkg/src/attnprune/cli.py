"""Command-line interface.

Exit codes: 0 success, 2 validation/config error, 3 infeasible budget.
Errors are printed to stderr as ``error[<code>]: <message>`` so wrappers
can translate them back into typed errors.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import ABI_VERSION
from .costmodel import (
    full_model_flops,
    schedule_average_flops,
    solve_ratio,
    step_flops,
)
from .errors import ConfigError, InfeasibleBudgetError, ValidationError
from .io import (
    default_meta_path,
    load_matrix,
    load_scores,
    load_series,
    save_matrix,
    save_scores,
)
from .maps import FeatureMap, HeadStack, average_heads, validate_attention
from .masks import PruneMask, build_mask, random_mask
from .pagerank import ImportanceScores, ScoringOptions, pagerank_scores, score_stack
from .schedule import SkipPolicy, build_schedule, recommend_tau
from .simulate import (
    RECOVERY_METHODS,
    SimulationConfig,
    _recover,
    load_topology,
    mapper_from_spec,
    recovery_benchmark,
    run_simulation,
)

MAPPER_NAMES = ("self", "entropy", "hardclip", "softclip", "power")


def _add_schedule_args(parser, with_ratio=True):
    parser.add_argument("--steps", type=int, default=50)
    parser.add_argument("--tau", type=int, default=0)
    parser.add_argument("--policy", default="FL")
    parser.add_argument("--include-mid", action="store_true")
    parser.add_argument("--invert", action="store_true")
    parser.add_argument("--always-exempt", nargs="*", default=[])
    if with_ratio:
        parser.add_argument("--ratio", type=float, default=0.0)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="attnprune",
        description="Attention-map token pruning toolkit",
    )
    parser.add_argument(
        "--abi", action="store_true", help="print the bridge ABI tag and exit"
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("profile", help="FLOPs ledger and budget solving")
    p.add_argument("--topology", default="default")
    p.add_argument("--resolution", type=int, default=1024)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--ratio", type=float)
    group.add_argument("--target-tflops", type=float)
    p.add_argument("--tau", type=int, default=0)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--policy", default="FL")
    p.add_argument("--include-mid", action="store_true")
    p.add_argument("--invert", action="store_true")
    p.add_argument("--always-exempt", nargs="*", default=[])
    p.add_argument("--prune-before-ff", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("score", help="importance scores for an attention map")
    p.add_argument("--map", required=True, dest="map_path")
    p.add_argument("--meta")
    p.add_argument("--mapper", choices=MAPPER_NAMES, default="self")
    p.add_argument("--eta", type=float, default=0.2)
    p.add_argument("--alpha", type=float, default=5.0)
    p.add_argument("--beta", type=float)
    p.add_argument("--epsilon", type=float, default=1e-4)
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--out", required=True)

    p = sub.add_parser("mask", help="build a top-k or random pruning mask")
    p.add_argument("--scores")
    p.add_argument("--random", action="store_true")
    p.add_argument("--total", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--ratio", type=float, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("recover", help="rebuild a complete feature map")
    p.add_argument("--method", choices=RECOVERY_METHODS, required=True)
    p.add_argument("--pruned", required=True)
    p.add_argument("--pruned-meta")
    p.add_argument("--mask", required=True, dest="mask_path")
    p.add_argument("--attn")
    p.add_argument("--attn-meta")
    p.add_argument("--cached")
    p.add_argument("--cached-meta")
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--out-meta")

    p = sub.add_parser("schedule", help="build a schedule or recommend tau")
    p.add_argument("mode", nargs="?", choices=["build", "recommend-tau"], default="build")
    _add_schedule_args(p)
    p.add_argument("--topology", default="default")
    p.add_argument("--variances")
    p.add_argument("--threshold", type=float, default=1e-5)
    p.add_argument("--out")

    p = sub.add_parser("simulate", help="run the end-to-end pipeline simulation")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("bench-recovery", help="compare recovery methods on fixtures")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    return parser


def _cmd_profile(args) -> int:
    topology = load_topology(args.topology)
    policy = SkipPolicy.from_code(args.policy, args.include_mid)
    template = build_schedule(
        args.steps, args.tau, policy, topology, 0.0,
        invert=args.invert, always_exempt=tuple(args.always_exempt),
    )
    solved = args.target_tflops is not None
    if solved:
        result = solve_ratio(
            topology, template, args.target_tflops * 1e12, args.resolution,
            prune_before_ff=args.prune_before_ff,
        )
        ratio = result.ratio
    else:
        ratio = args.ratio if args.ratio is not None else 0.0
    average = schedule_average_flops(
        topology, template, args.resolution,
        ratio=ratio, prune_before_ff=args.prune_before_ff,
    )
    full = full_model_flops(topology, args.resolution)
    normal_exempt = template.per_step[-1].exempt if not args.invert else template.per_step[0].exempt
    ledger = step_flops(
        topology, normal_exempt, ratio, args.resolution,
        prune_before_ff=args.prune_before_ff,
    )
    doc = {
        "topology": topology.name,
        "resolution": args.resolution,
        "ratio": ratio,
        "tau": args.tau,
        "steps": args.steps,
        "policy": policy.code,
        "prune_before_ff": args.prune_before_ff,
        "solved": solved,
        "target_flops": args.target_tflops * 1e12 if solved else None,
        "full_step_flops": full,
        "average_step_flops": average,
        "saving_vs_full": 1.0 - average / full,
        "ledger": json.loads(ledger.to_json()),
    }
    Path(args.out).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return 0


def _cmd_score(args) -> int:
    heads = load_matrix(args.map_path, args.meta)
    spec = {"kind": args.mapper, "eta": args.eta, "alpha": args.alpha}
    if args.beta is not None:
        spec["beta"] = args.beta
    mapper = mapper_from_spec(spec)
    options = ScoringOptions(epsilon=args.epsilon, max_iters=args.max_iters)
    maps = [validate_attention(h) for h in heads]
    if len(maps) == 1:
        scores = pagerank_scores(maps[0], mapper, options).scores
    else:
        scores = score_stack(maps, mapper, options)
    save_scores(args.out, scores.values)
    return 0


def _cmd_mask(args) -> int:
    if args.random:
        if args.total is None or args.seed is None:
            raise ConfigError("--random needs --total and --seed")
        mask = random_mask(args.total, args.ratio, args.seed)
    else:
        if not args.scores:
            raise ConfigError("need --scores (or --random --total --seed)")
        values = load_scores(args.scores)
        mask = build_mask(ImportanceScores(values, norm="raw"), args.ratio)
    Path(args.out).write_text(mask.to_json() + "\n", encoding="utf-8")
    return 0


def _grid_dims(args, total: int) -> tuple[int, int]:
    if (args.height is None) != (args.width is None):
        raise ConfigError("give both --height and --width or neither")
    if args.height is not None:
        if args.height * args.width != total:
            raise ConfigError(f"{args.height}x{args.width} != {total} tokens")
        return args.height, args.width
    side = int(round(total**0.5))
    if side * side != total:
        raise ConfigError(f"{total} tokens is not square; pass --height/--width")
    return side, side


def _cmd_recover(args) -> int:
    mask = PruneMask.from_json(Path(args.mask_path).read_text(encoding="utf-8"))
    rows = load_matrix(args.pruned, args.pruned_meta)[0]
    height, width = _grid_dims(args, mask.total)
    pruned = FeatureMap(height, width, rows, index_map=mask.retained)
    attn_avg = None
    cached = None
    if args.method == "simcopy":
        if not args.attn:
            raise ConfigError("simcopy needs --attn")
        stack = load_matrix(args.attn, args.attn_meta)
        maps = [validate_attention(h) for h in stack]
        attn_avg = maps[0] if len(maps) == 1 else average_heads(HeadStack(tuple(maps)))
    if args.method == "directcopy":
        if not args.cached:
            raise ConfigError("directcopy needs --cached")
        cached = FeatureMap(height, width, load_matrix(args.cached, args.cached_meta)[0])
    recovered = _recover(args.method, pruned, mask, attn_avg, cached)
    save_matrix(args.out, recovered.values, args.out_meta or default_meta_path(args.out))
    return 0


def _cmd_schedule(args) -> int:
    if args.mode == "recommend-tau":
        if not args.variances:
            raise ConfigError("recommend-tau needs --variances")
        tau = recommend_tau(load_series(args.variances), args.threshold)
        print(tau)
        if args.out:
            Path(args.out).write_text(f"{tau}\n", encoding="utf-8")
        return 0
    if not args.out:
        raise ConfigError("schedule build needs --out")
    topology = load_topology(args.topology)
    schedule = build_schedule(
        args.steps,
        args.tau,
        SkipPolicy.from_code(args.policy, args.include_mid),
        topology,
        args.ratio,
        invert=args.invert,
        always_exempt=tuple(args.always_exempt),
    )
    Path(args.out).write_text(schedule.to_json() + "\n", encoding="utf-8")
    return 0


def _cmd_simulate(args) -> int:
    config = SimulationConfig.load(args.config)
    started = time.perf_counter()
    report = run_simulation(config)
    Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
    print(
        f"simulated {config.total_steps} steps in {time.perf_counter() - started:.2f}s: "
        f"ratio={report.ratio:.4f} average={report.average_flops:.4e} "
        f"saving={report.saving_vs_full:.1%}",
        file=sys.stderr,
    )
    return 0


def _cmd_bench(args) -> int:
    doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    known = {"grid", "channels", "heads", "ratio", "seed", "random_fixtures"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown benchmark config keys: {sorted(unknown)}")
    rows = recovery_benchmark(**doc)
    lines = ["fixture,method,l2_error"]
    lines += [f"{r['fixture']},{r['method']},{r['l2_error']:.17g}" for r in rows]
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return 0


_COMMANDS = {
    "profile": _cmd_profile,
    "score": _cmd_score,
    "mask": _cmd_mask,
    "recover": _cmd_recover,
    "schedule": _cmd_schedule,
    "simulate": _cmd_simulate,
    "bench-recovery": _cmd_bench,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.abi:
        print(ABI_VERSION)
        return 0
    if not args.command:
        parser.print_help()
        return 2
    try:
        return _COMMANDS[args.command](args)
    except InfeasibleBudgetError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 3
    except ValidationError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error[file_not_found]: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error[config_invalid]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
