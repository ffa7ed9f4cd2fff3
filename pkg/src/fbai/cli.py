"""Command-line front end.

    fbai bounds   --means 0.9,0.1,0.1 --algos audibert,sr
    fbai simulate --family stair --m 10 --algos sr,crc,cra --budgets 3000,5000
    fbai gen      --family linear --k 10
    fbai repro    [--only bounds] [--runs 4000]

Exit codes: 0 success, 1 acceptance failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from . import acceptance
from .core import Instance, instance_to_json, load_instance, make_instance
from .guarantees import guarantee_report
from .montecarlo import DEFAULT_RUNS, DEFAULT_SEED, FAMILIES, AlgorithmSpec, ExperimentConfig, generate_instance, run_experiment
from .policies import DEFAULT_THETA0

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _floats(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _names(text: str) -> List[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _add_instance_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("instance (exactly one of --means, --file, --family)")
    g.add_argument("--means", type=_floats, help="comma-separated arm means, e.g. 0.9,0.1,0.1")
    g.add_argument("--file", type=Path, help='instance JSON file {"means": [...], "label": ...}')
    g.add_argument("--family", choices=FAMILIES, help="generated instance family")
    g.add_argument("--k", type=int, help="number of arms for --family (all families except stair)")
    g.add_argument("--m", type=int, help="number of levels for --family stair (K = M(M+1)/2)")


def resolve_instance(args) -> Instance:
    sources = [x for x in (args.means, args.file, args.family) if x is not None]
    if len(sources) != 1:
        raise UsageError("give exactly one instance source: --means, --file or --family")
    if args.means is not None:
        return make_instance(args.means)
    if args.file is not None:
        try:
            return load_instance(args.file)
        except OSError as exc:
            raise UsageError(f"cannot read {args.file}: {exc}") from exc
    return family_instance(args)


def family_instance(args) -> Instance:
    if args.family == "stair":
        if args.m is None or args.k is not None:
            raise UsageError("--family stair takes --m (number of levels), not --k")
        return generate_instance("stair", args.m)
    if args.k is None or args.m is not None:
        raise UsageError(f"--family {args.family} takes --k (number of arms), not --m")
    return generate_instance(args.family, args.k)


def _write(text: str, out: Optional[Path]) -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    try:
        out.write_text(text if text.endswith("\n") else text + "\n")
    except OSError as exc:
        raise UsageError(f"cannot write {out}: {exc}") from exc


# -- subcommands ----------------------------------------------------------------

def cmd_bounds(args) -> int:
    inst = resolve_instance(args)
    budgets = args.budget or []
    reports = [guarantee_report(inst.means, name, budgets) for name in args.algos]
    if args.format == "json":
        _write(json.dumps([r.to_dict() for r in reports], indent=2), args.out)
        return EXIT_OK
    lines = []
    header = ["algorithm", "rate", "j_min"] + [f"bound_T{T}" for T in budgets]
    lines.append(",".join(header))
    for r in reports:
        row = [r.algorithm, f"{r.rate:.6g}", str(r.j_min)] + [f"{r.bound_at_T[T]:.6g}" for T in budgets]
        lines.append(",".join(row))
    _write("\n".join(lines), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    inst = resolve_instance(args)
    family = args.family or inst.family_label or "custom"
    params = {"theta0": args.theta0}
    algos = [AlgorithmSpec.of(a, params) for a in args.algos]
    config = ExperimentConfig(inst, algos, args.budgets, runs=args.runs, base_seed=args.seed,
                              parallelism=args.parallelism, family=family)
    results, text = run_experiment(config, args.out, args.format)
    if args.out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        for r in results:
            print(f"{r.algorithm:>6} T={r.T:<6} error={100 * r.error_rate:.3f}% "
                  f"[{100 * r.ci_low:.3f}, {100 * r.ci_high:.3f}] ({r.errors}/{r.runs})", file=sys.stderr)
    return EXIT_OK


def cmd_gen(args) -> int:
    if args.family is None:
        raise UsageError("gen needs --family")
    _write(instance_to_json(family_instance(args)), args.out)
    return EXIT_OK


def cmd_repro(args) -> int:
    if args.runs < 1:
        raise UsageError("--runs must be positive")
    results = acceptance.run_acceptance(args.only, runs=args.runs, seed=args.seed, parallelism=args.parallelism)
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed"
          + (f"; failed: {', '.join(map(str, failed))}" if failed else ""))
    return EXIT_FAIL if failed else EXIT_OK


# -- parser -------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):  # unknown flags and bad values exit with the usage code
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fbai", description="Fixed-budget best-arm identification: bounds, simulation, reproduction.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("bounds", help="error-exponent guarantees and exp(-T rate) bounds")
    _add_instance_args(p)
    p.add_argument("--algos", type=_names, default=["sr", "crc", "cra"],
                   help="comma list from sr, sr-kl, crc, cra, audibert, barrier (default sr,crc,cra)")
    p.add_argument("--budget", "--budgets", dest="budget", type=_ints, default=None,
                   help="budgets T at which to print exp(-T rate)")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="output format (default csv)")
    p.add_argument("--out", type=Path, help="write output here instead of stdout")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("simulate", help="Monte Carlo error rates with Wilson intervals")
    _add_instance_args(p)
    p.add_argument("--algos", type=_names, required=True, help="comma list from sr, crc, cra, sh, ugape")
    p.add_argument("--budgets", "--budget", dest="budgets", type=_ints, required=True, help="comma list of budgets T")
    p.add_argument("--runs", type=int, default=DEFAULT_RUNS, help=f"runs per cell (default {DEFAULT_RUNS})")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"base seed (default {DEFAULT_SEED})")
    p.add_argument("--theta0", type=float, default=DEFAULT_THETA0, help=f"CR warm-up fraction (default {DEFAULT_THETA0:g})")
    p.add_argument("--parallelism", type=int, default=1, help="worker processes (results do not depend on it)")
    p.add_argument("--format", choices=("csv", "json"), default="csv", help="output format (default csv)")
    p.add_argument("--out", type=Path, help="write results here; a summary goes to stderr")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen", help="write a family instance as JSON")
    p.add_argument("--family", choices=FAMILIES, required=True, help="instance family")
    p.add_argument("--k", type=int, help="number of arms (all families except stair)")
    p.add_argument("--m", type=int, help="number of levels (stair)")
    p.add_argument("--out", type=Path, help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser(
        "repro",
        help="run the acceptance battery, one PASS/FAIL line per criterion",
        description="Runs the acceptance criteria and exits 1 if any fails. Monte Carlo tolerances are "
                    "stated for 40000 runs; with --runs N < 40000 they are widened by sqrt(40000/N).",
    )
    p.add_argument("--only", type=_names, default=None,
                   help="comma list of groups: bounds (1-4), montecarlo (5-6), properties (7-8)")
    p.add_argument("--runs", type=int, default=DEFAULT_RUNS,
                   help=f"Monte Carlo runs per cell (default {DEFAULT_RUNS}); fewer runs widen tolerances by sqrt(40000/runs)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"base seed (default {DEFAULT_SEED})")
    p.add_argument("--parallelism", type=int, default=1, help="worker processes for Monte Carlo")
    p.set_defaults(func=cmd_repro)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ValueError) as exc:
        print(f"fbai {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
