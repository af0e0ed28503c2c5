"""Command line entry point ``vpsa``.

Exit codes: 0 success, 2 configuration error, 3 divergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .exceptions import ConfigError, DivergenceError, VirtualParticleError
from .functionals import check_assumptions
from .harness import benchmark_complexity, load_experiment, resample, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_IO = 0, 2, 3, 4

DEFAULT_BENCH_N = (1, 10, 100)
DEFAULT_BENCH_T = (10, 50, 100)


def _say(args, text):
    if not args.quiet:
        print(text)


def _cmd_run(args):
    summary = run_experiment(args.config, seed=args.seed, out_dir=args.out_dir)
    final = summary["final"]
    _say(args, f"config_hash={summary['config_hash']} eval_count={summary['eval_count']} step={final['step']}")
    if final.get("oracle_kl") is not None:
        _say(args, f"oracle_kl={final['oracle_kl']:.6g} oracle_w2={final['oracle_w2']:.6g}")
    return EXIT_OK


def _cmd_resample(args):
    exp = load_experiment(args.config, seed=args.seed, out_dir=args.out_dir)
    witness = Path(args.witness) if args.witness else exp.output_dir / "witness.vpw"
    out = Path(args.output) if args.output else exp.output_dir / "resample.csv"
    resample(args.config, witness, args.n_extra, args.seed_offset, out_path=out, seed=args.seed)
    _say(args, f"wrote {args.n_extra} samples to {out}")
    return EXIT_OK


def _cmd_bench(args):
    exp = load_experiment(args.config, seed=args.seed, out_dir=args.out_dir)
    bench = exp.raw.get("bench", {})
    grid = [(n, T) for n in bench.get("n", DEFAULT_BENCH_N) for T in bench.get("T", DEFAULT_BENCH_T)]
    exp.output_dir.mkdir(parents=True, exist_ok=True)
    out = exp.output_dir / "bench.csv"
    rows, fit = benchmark_complexity(grid, exp.functional, exp.config.master_seed,
                                     batch_size=exp.config.batch_size, eta=exp.config.eta,
                                     baseline=bench.get("baseline", True), out_path=out)
    _say(args, f"wrote {len(rows)} rows to {out}; counts match: {fit['all_counts_match']}; "
               f"log-log slope {fit['slope']:.3f}")
    return EXIT_OK if fit["all_counts_match"] else 1


def _cmd_check(args):
    exp = load_experiment(args.config, seed=args.seed, out_dir=args.out_dir)
    C = exp.raw.get("plan", {}).get("C_LSI")
    report = check_assumptions(exp.functional, C_LSI=C)
    _say(args, report.to_json(indent=2))
    return EXIT_OK if report.passed else 1


def _cmd_plan(args):
    exp = load_experiment(args.config, seed=args.seed, out_dir=args.out_dir)
    if exp.plan is None:
        raise ConfigError("config has no plan block")
    _say(args, json.dumps(exp.plan.to_dict(), indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="experiment JSON file")
    common.add_argument("--out-dir", default=None, help="output directory (overrides the config)")
    common.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    common.add_argument("--quiet", action="store_true", help="suppress normal output")

    parser = argparse.ArgumentParser(prog="vpsa", description="Virtual particle sampler for mean-field dynamics")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run an experiment").set_defaults(func=_cmd_run)
    p = sub.add_parser("resample", parents=[common], help="draw more samples from a stored witness path")
    p.add_argument("--witness", default=None, help="witness file (default: <out-dir>/witness.vpw)")
    p.add_argument("--n-extra", type=int, required=True)
    p.add_argument("--seed-offset", type=int, default=0)
    p.add_argument("--output", default=None, help="CSV path (default: <out-dir>/resample.csv)")
    p.set_defaults(func=_cmd_resample)
    sub.add_parser("bench", parents=[common], help="evaluation-count benchmark").set_defaults(func=_cmd_bench)
    sub.add_parser("check", parents=[common], help="assumption checks only").set_defaults(func=_cmd_check)
    sub.add_parser("plan", parents=[common], help="schedule planner only").set_defaults(func=_cmd_plan)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ConfigError, VirtualParticleError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
