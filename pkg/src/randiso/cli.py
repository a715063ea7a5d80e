"""Command line: ``randiso run | verify | list``.

Exit codes: 0 success, 1 a criterion or experiment check failed, 2 bad
configuration or arguments.
"""

import argparse
import sys

from . import io
from .experiments import EXPERIMENTS, run_experiment

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def _build_parser():
    p = _Parser(prog="randiso", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run one experiment from a config file")
    r.add_argument("experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int, help="replace the seed list with this single seed")
    r.add_argument("--sigma", type=float, help="override the model noise amplitude")
    r.add_argument("--out", help="output directory (a run subdirectory is created inside)")
    v = sub.add_parser("verify", help="run the acceptance suite")
    v.add_argument("--level", choices=("quick", "full"), default="quick")
    v.add_argument("--only", type=int, nargs="+", metavar="N", help="criterion numbers")
    v.add_argument("--dt", type=float, help="step size for the flow-accuracy criteria")
    sub.add_parser("list", help="list experiments")
    return p


def _run(args):
    try:
        workers = io.thread_count()
        cfg = io.load_config(args.config, EXPERIMENTS)
    except io.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.experiment != args.experiment:
        print(f"config error: {args.config} describes {cfg.experiment!r}, "
              f"not {args.experiment!r}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.seeds = [args.seed]
    if args.sigma is not None:
        if args.sigma < 0:
            print("config error: --sigma must be non-negative", file=sys.stderr)
            return EXIT_CONFIG
        cfg.model_params["sigma"] = args.sigma
    if args.out:
        cfg.out = args.out
    run_dir, checks, report = run_experiment(cfg, workers)
    for sec, items in report.items():
        print(f"[{sec}]")
        for k, v in items.items():
            print(f"  {k} = {v}")
    for c in checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']} value={c['value']:.6g} "
              f"tol={c['tol']:.6g}")
    print(f"outputs: {run_dir}")
    return EXIT_OK if all(c["passed"] for c in checks) else EXIT_FAIL


def _verify(args):
    from .acceptance import CRITERIA, run_suite
    try:
        io.thread_count()
    except io.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.only and not set(args.only) <= set(CRITERIA):
        print(f"config error: criteria are numbered 1..{len(CRITERIA)}", file=sys.stderr)
        return EXIT_CONFIG
    if args.dt is not None and not args.dt > 0:
        print("config error: --dt must be positive", file=sys.stderr)
        return EXIT_CONFIG
    results = run_suite(args.level, args.only, args.dt, out=lambda s: print(s, flush=True))
    n_pass = sum(c.passed for c in results)
    print(f"SUMMARY passed={n_pass} failed={len(results) - n_pass} level={args.level}")
    return EXIT_OK if n_pass == len(results) else EXIT_FAIL


def _list(args):
    for e in EXPERIMENTS.values():
        print(f"{e.name:<26} {e.summary} [default model: {e.model}]")
    return EXIT_OK


def main(argv=None):
    args = _build_parser().parse_args(argv)
    return {"run": _run, "verify": _verify, "list": _list}[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
