"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

import numpy as np

from . import harness
from .design import frank_wolfe
from .instances import EmpiricalCounts, HardInstanceSpec, fit_env_from_counts, make_hard_instance

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bordaduel", description="Borda-regret dueling bandit experiments.")
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("config")
    run.add_argument("--T", type=int, dest="T")
    run.add_argument("--repetitions", type=int)
    run.add_argument("--base-seed", type=int, dest="base_seed")
    run.add_argument("--output")
    run.add_argument("--stride", type=int)
    run.add_argument("--workers", type=int)

    des = sub.add_parser("design", help="dump a Frank-Wolfe G-optimal design as CSV")
    des.add_argument("--env", required=True, help="inline JSON env spec or path to a spec/instance file")
    des.add_argument("--iters", type=int, default=20)
    des.add_argument("--out", help="CSV path (default: stdout)")

    fit = sub.add_parser("fit", help="fit a logistic environment to win counts")
    fit.add_argument("--counts", required=True)
    fit.add_argument("--dim", type=int, default=5)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--iters", type=int, default=100)
    fit.add_argument("--out", help="also save the fitted environment as an instance file")

    inst = sub.add_parser("make-instance", help="write a hard instance as JSON")
    inst.add_argument("--d", type=int, required=True, dest="d_core")
    inst.add_argument("--delta", type=float)
    inst.add_argument("--signs", help="comma-separated +1/-1 pattern (default: random from --seed)")
    inst.add_argument("--seed", type=int, default=0)
    inst.add_argument("--out", required=True)
    return parser


def _cmd_run(args) -> int:
    overrides = {k: getattr(args, k) for k in ("T", "repetitions", "base_seed", "output", "stride", "workers")}
    config = harness.ExperimentConfig.from_file(args.config, overrides)
    result = harness.run_experiment(config)
    paths = harness.write_outputs(result, config)
    for label, agg in result.aggregates.items():
        print(f"{label}: final regret {agg.final_mean:.6g} +/- {agg.final_std:.6g}")
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return EXIT_OK


def _cmd_design(args) -> int:
    spec, base = harness.parse_env_arg(args.env)
    env = harness.build_env(spec, base)
    res = frank_wolfe(env.features, args.iters)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["i", "j", "weight"])
        for (i, j), w in res.design.weights.items():
            writer.writerow([i, j, harness.fmt(w)])
    finally:
        if args.out:
            out.close()
    print(f"g = {res.g:.6g}, d_eff = {res.d_eff}, support = {len(res.design)}", file=sys.stderr)
    return EXIT_OK


def _cmd_fit(args) -> int:
    counts = EmpiricalCounts.from_csv(args.counts)
    env, report = fit_env_from_counts(counts, args.dim, np.random.default_rng(args.seed), mle_iterations=args.iters)
    if args.out:
        harness.save_instance(env, args.out)
    print(json.dumps(report.to_json(), indent=2))
    return EXIT_OK


def _cmd_make_instance(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.signs:
        signs = tuple(int(s) for s in args.signs.split(","))
        delta = args.delta if args.delta is not None else 1.0 / (4 * args.d_core)
        spec = HardInstanceSpec(args.d_core, delta, signs)
    else:
        spec = HardInstanceSpec.random(args.d_core, rng, args.delta)
    env = make_hard_instance(spec)
    harness.save_instance(env, args.out)
    print(f"wrote {args.out}: K={env.K}, d_core={spec.d_core}, ambient dim={env.d}, winner={env.winner}")
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "design": _cmd_design, "fit": _cmd_fit, "make-instance": _cmd_make_instance}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (harness.ConfigError, ValueError, OSError, KeyError) as exc:
        print(f"bordaduel {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
