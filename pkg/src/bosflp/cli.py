"""Command-line entry point (``bosflp``)."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import experiments as ex
from .biobab import run
from .bruteforce import enumerate_front
from .instance import (
    GeneratorParams,
    ParseError,
    dumps_instance,
    dumps_scenarios,
    generate_instance,
    generate_scenarios,
    read_instance,
    read_scenarios,
)
from .master import Settings, Strategy

EXIT_OK, EXIT_USAGE, EXIT_MISMATCH, EXIT_BUDGET = 0, 1, 2, 3
SETTINGS = [s.value for s in Strategy]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _pair(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition(",")
    if not sep:
        raise argparse.ArgumentTypeError("expected LO,HI")
    return int(lo), int(hi)


def _sizes(text: str) -> list[int]:
    try:
        sizes = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma-separated integers") from None
    if not sizes or min(sizes) < 1:
        raise argparse.ArgumentTypeError("sample sizes must be positive")
    return sizes


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--setting", choices=SETTINGS, default="incumbent-vi")
    p.add_argument("--cut-mode", choices=("multi", "single"), default="multi")
    p.add_argument("--partial-k", type=int, default=4)
    p.add_argument("--time-limit", type=float, default=None, help="CPU seconds")


def _settings(args) -> Settings:
    return Settings(
        strategy=Strategy(args.setting), cut_mode=args.cut_mode, partial_k=args.partial_k, time_limit=args.time_limit
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bosflp", description="Exact Pareto fronts for the bi-objective stochastic facility location problem.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-instance", help="generate a random instance file")
    p.add_argument("--vertices", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cost", type=_pair, default=None, metavar="LO,HI")
    p.add_argument("--capacity", type=_pair, default=None, metavar="LO,HI")
    p.add_argument("--demand", type=_pair, default=None, metavar="LO,HI")
    p.add_argument("--name", default=None)
    p.add_argument("--out", default=".")

    p = sub.add_parser("gen-scenarios", help="draw demand scenarios for an instance")
    p.add_argument("instance")
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--cv", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")

    for name, text in (("solve", "solve with one setting"), ("compare", "solve and check against enumeration")):
        p = sub.add_parser(name, help=text)
        p.add_argument("instance")
        p.add_argument("scenarios")
        _add_solver_flags(p)
        p.add_argument("--out", default=None)

    p = sub.add_parser("brute", help="front by exhaustive enumeration (n <= 20)")
    p.add_argument("instance")
    p.add_argument("scenarios")
    p.add_argument("--out", default=None)

    p = sub.add_parser("bench", help="run settings x instances x sample sizes")
    p.add_argument("instances", nargs="+")
    p.add_argument("--samples", type=_sizes, default=[10], help="comma-separated sizes")
    p.add_argument("--setting", choices=SETTINGS + ["all"], default="all")
    p.add_argument("--cut-mode", choices=("multi", "single", "both"), default="multi")
    p.add_argument("--partial-k", type=int, default=4)
    p.add_argument("--cv", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--time-limit", type=float, default=7200.0, help="CPU seconds per run")
    p.add_argument("--out", default="bench")

    p = sub.add_parser("profile", help="performance profiles from a stats.csv")
    p.add_argument("stats")
    p.add_argument("--out", default=None)
    return parser


def _emit(text: str, out: str | None, filename: str) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        ex.atomic_write(Path(out) / filename, text)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return _dispatch(args)
    except (ParseError, ValueError, OSError) as exc:
        print(f"bosflp: {exc}", file=sys.stderr)
        return EXIT_USAGE


def _dispatch(args) -> int:
    cmd = args.command
    if cmd == "gen-instance":
        defaults = GeneratorParams()
        params = GeneratorParams(
            cost=args.cost or defaults.cost,
            capacity=args.capacity or defaults.capacity,
            demand=args.demand or defaults.demand,
        )
        inst = generate_instance(args.vertices, args.seed, params)
        name = args.name or f"r{args.vertices}_s{args.seed}"
        ex.atomic_write(Path(args.out) / f"{name}.inst", dumps_instance(inst))
        print(Path(args.out) / f"{name}.inst")
        return EXIT_OK
    if cmd == "gen-scenarios":
        inst = read_instance(args.instance)
        scen = generate_scenarios(inst, args.samples, args.cv, args.seed)
        target = Path(args.out) / f"{inst.name}_N{args.samples}_s{args.seed}.scen"
        ex.atomic_write(target, dumps_scenarios(scen))
        print(target)
        return EXIT_OK

    if cmd in ("solve", "compare", "brute"):
        inst = read_instance(args.instance)
        scen = read_scenarios(args.scenarios)
        if scen.n != inst.n:
            raise ValueError(f"scenario file has {scen.n} columns, instance has {inst.n} nodes")
        if cmd == "brute":
            _emit(ex.front_csv(enumerate_front(inst, scen), scen.count), args.out, "front_brute.csv")
            return EXIT_OK
        settings = _settings(args)
        ub, stats = run(inst, scen, settings)
        record = ex.RunRecord.from_stats(inst, scen.count, ex.setting_label(settings), stats)
        _emit(ex.front_csv(ub.entries, scen.count), args.out, "front.csv")
        if args.out is not None:
            ex.atomic_write(Path(args.out) / "stats.csv", ex.stats_csv([record]))
        print(
            f"{record.setting}: {len(ub)} points, {record.lps} LPs, {record.bb_nodes} nodes, "
            f"{record.cuts} cuts, {record.cpu_seconds:.2f}s cpu" + ("" if record.converged else ", NOT converged"),
            file=sys.stderr,
        )
        if not stats.converged:
            return EXIT_BUDGET
        if cmd == "compare":
            ref = enumerate_front(inst, scen)
            got = [(p.f1, p.f2) for p in ub.entries]
            want = [(p.f1, p.f2) for p in ref]
            if got != want:
                print(f"front mismatch: solver {got} vs enumeration {want}", file=sys.stderr)
                return EXIT_MISMATCH
            print("fronts agree", file=sys.stderr)
        return EXIT_OK

    if cmd == "bench":
        instances = [read_instance(path) for path in args.instances]
        modes = ("multi", "single") if args.cut_mode == "both" else (args.cut_mode,)
        settings = [
            Settings(strategy=s, cut_mode=m, partial_k=args.partial_k)
            for s in (Strategy if args.setting == "all" else [Strategy(args.setting)])
            for m in modes
        ]
        records = ex.run_experiments(instances, args.samples, settings, args.time_limit, args.out, args.cv, args.seed)
        print(Path(args.out) / "stats.csv")
        return EXIT_OK if all(r.converged for r in records) else EXIT_BUDGET

    if cmd == "profile":
        table = ex.performance_profile(ex.read_stats_csv(args.stats))
        _emit(ex.profile_csv(table), args.out, "profile.csv")
        return EXIT_OK
    raise AssertionError(cmd)


if __name__ == "__main__":
    sys.exit(main())
