"""Command-line entry point: ``bregcd run|sweep|check|gen|plot``.

Exit codes: 0 success, 1 usage error, 2 check failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import __version__
from .diagnostics import SUITES, report_json, report_text, run_suite
from .experiment import OUTPUT_ENV, DEFAULT_OUTPUT, ConfigError, parse_config, run_experiment
from .problems import save_instance, synth_instance

EXIT_OK, EXIT_USAGE, EXIT_CHECK, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad input; 2 is reserved for failed checks here
    def error(self, message):
        raise UsageError(message)


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with configuration keys; flags override it")
    p.add_argument("--problem", help="poisson, relent or quadratic")
    p.add_argument("--solver", help="comma-separated: rbcd, arbcd, arbcd-efficient, bpg, abpg")
    p.add_argument("--m", type=int, help="rows of A")
    p.add_argument("--n", type=int, help="columns of A (coordinates)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--gamma", help="comma-separated exponents for the accelerated solvers")
    p.add_argument("--seed", "--seeds", dest="seed", help="seed list or range, e.g. 1..10 or 1,3,5")
    p.add_argument("--beta-schedule", choices=["closed", "equality"])
    p.add_argument("--domain", choices=["residual", "orthant"],
                   help="when an accelerated iterate counts as diverged (default: residual)")
    p.add_argument("--instance", help="instance file to use instead of synthetic data")
    p.add_argument("--output-dir", help=f"defaults to ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT}")
    p.add_argument("--no-timing", action="store_true", help="write 0 in the elapsed_s column")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    p.add_argument("--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bregcd", description="Bregman coordinate descent experiments and checks")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    for name in ("run", "sweep"):
        _add_run_args(sub.add_parser(name, help="run solvers and write one CSV trace per run"))

    chk = sub.add_parser("check", help="run diagnostic suites")
    chk.add_argument("suite", choices=("all",) + SUITES)
    chk.add_argument("--seed", type=int, default=0)
    chk.add_argument("--seeds", type=int, default=20, help="runs per rate check")
    chk.add_argument("--ref", choices=["euclidean", "shannon", "burg"], help="reference for the gti suite")
    chk.add_argument("--gamma", type=float, help="exponent for the gti suite")
    chk.add_argument("--problem", help="family for the rates suite")
    chk.add_argument("--output-dir")

    gen = sub.add_parser("gen", help="write a synthetic instance file")
    gen.add_argument("--problem", default="poisson")
    gen.add_argument("--m", type=int, required=True)
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)

    plot = sub.add_parser("plot", help="render PNG curves from the CSVs in a directory")
    plot.add_argument("directory")
    return parser


def _output_dir(value) -> str:
    return value or os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT)


def cmd_run(args, out) -> int:
    overrides = {
        "problem": args.problem, "solvers": args.solver, "m": args.m, "n": args.n,
        "epochs": args.epochs, "gammas": args.gamma, "seeds": args.seed,
        "beta_schedule": args.beta_schedule, "domain": args.domain,
        "instance": args.instance, "output_dir": args.output_dir,
    }
    if args.no_timing:
        overrides["timing"] = False
    if args.no_figures:
        overrides["figures"] = False
    config = parse_config(overrides, args.config)
    log = None if args.quiet else (lambda s: print(s, file=out))
    print("config: " + ", ".join(f"{k}={v}" for k, v in config.to_dict().items()), file=out)
    results, summary = run_experiment(config, log=log)
    print("solver,gamma,runs,diverged,median_final_objective", file=out)
    for r in summary:
        print(f"{r['solver']},{r['gamma']},{r['runs']},{r['diverged']},{r['median_final_objective']:.17g}", file=out)
    if config.figures:
        from .plotting import render_figures

        for path in render_figures(config.output_dir):
            print(f"figure: {path}", file=out)
    return EXIT_OK


def cmd_check(args, out) -> int:
    opts = {"seeds": args.seeds}
    if args.ref is not None:
        opts["ref"] = args.ref
    if args.gamma is not None:
        opts["gamma"] = args.gamma
    if args.problem is not None:
        opts["problem"] = args.problem
    if args.suite != "gti" and ("ref" in opts or "gamma" in opts):
        raise UsageError("--ref/--gamma only apply to the gti suite")
    reports = run_suite(args.suite, args.seed, **opts)
    text = report_text(reports)
    out_dir = _output_dir(args.output_dir)
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, f"check_{args.suite}.txt"), "w") as fh:
        fh.write(text)
    with open(os.path.join(out_dir, f"check_{args.suite}.json"), "w") as fh:
        fh.write(report_json(reports))
    out.write(text)
    return EXIT_OK if all(r.ok for r in reports) else EXIT_CHECK


def cmd_gen(args, out) -> int:
    p = synth_instance(args.problem, args.m, args.n, args.seed)
    save_instance(args.out, p.A, p.b)
    print(f"wrote {args.out}", file=out)
    return EXIT_OK


def cmd_plot(args, out) -> int:
    from .plotting import render_figures

    if not os.path.isdir(args.directory):
        raise OSError(f"{args.directory} is not a directory")
    for path in render_figures(args.directory):
        print(f"figure: {path}", file=out)
    return EXIT_OK


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required (run, sweep, check, gen, plot)")
        handler = {"run": cmd_run, "sweep": cmd_run, "check": cmd_check, "gen": cmd_gen, "plot": cmd_plot}[args.command]
        return handler(args, out)
    except (UsageError, ConfigError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
