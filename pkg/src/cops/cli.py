"""Command-line interface: ``cops solve|convert|generate|bench|export``.

Exit codes: 0 success, 1 unreadable or malformed input (including bad
arguments), 2 infeasible instance.
"""
from __future__ import annotations

import argparse
import csv
import io
import statistics
import sys
import time
from pathlib import Path

from . import bench
from .core import InfeasibleInstanceError, SemanticError
from .exact import SizeLimitError, build_ilp, export_lp, solve_exact
from .io import GeneratorConfig, ParseError, adapt_cop, adapt_sop, generate, read_instance, write_cops
from .render import render_route_svg
from .tabu import SearchParams, solve_tabu_best_of

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE = 0, 1, 2


class CliError(Exception):
    pass


def _err(msg: str) -> None:
    print(f"cops: {msg}", file=sys.stderr)


def _load(path: str):
    p = Path(path)
    if not p.is_file():
        raise CliError(f"no such file: {path}")
    try:
        return read_instance(p)
    except (ParseError, SemanticError) as exc:
        raise CliError(f"{path}: {exc}") from None


def _int_pair(text: str) -> tuple[int, int]:
    parts = text.split(",")
    if len(parts) == 1:
        parts = parts * 2
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}")
    return int(parts[0]), int(parts[1])


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated reals, got {text!r}") from None


def _search_params(args) -> SearchParams:
    try:
        return SearchParams(
            alpha=args.alpha,
            beta=args.beta,
            old_removal_threshold=args.old_removal,
            lambda_=args.lambda_,
            seed=args.seed,
            max_iterations=args.max_iterations,
        )
    except ValueError as exc:
        raise CliError(str(exc)) from None


def _add_search_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("tabu search")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--alpha", type=int, default=10, help="tabu tenure (default 10)")
    g.add_argument("--beta", type=int, default=300, help="iterations without improvement before stopping")
    g.add_argument("--lambda", dest="lambda_", type=int, default=5,
                   help="consecutive over-budget insertions that end the greedy start")
    g.add_argument("--old-removal", type=int, default=None, help="eta cutoff of the old-removal move (default: beta)")
    g.add_argument("--max-iterations", type=int, default=None)
    g.add_argument("--vertex-limit", type=int, default=20, help="exact solver size cap")


def cmd_solve(args) -> int:
    inst = _load(args.input)
    params = _search_params(args)
    t0 = time.perf_counter()
    if args.solver == "exact":
        sol = solve_exact(inst, vertex_limit=args.vertex_limit)
        runs = []
        seed = None
    else:
        sol, stats, runs = solve_tabu_best_of(inst, params, args.runs, record_trace=bool(args.trace))
        seed = stats.seed
    seconds = time.perf_counter() - t0 if args.timing else None
    row = bench.row_for(inst, args.solver, sol, seed, seconds)
    sys.stdout.write(bench.rows_to_csv([row]))

    if len(runs) > 1:
        rewards = [s.reward for s, _ in runs]
        msg = f"runs={len(runs)} best_R={sol.reward:.12g} mean_R={statistics.fmean(rewards):.12g} sd_R={statistics.stdev(rewards):.12g}"
        if args.timing:
            times = [st.wall_time for _, st in runs]
            msg += f" mean_T={statistics.fmean(times):.4f} sd_T={statistics.stdev(times):.4f}"
        print(msg, file=sys.stderr)
    if args.out_route:
        Path(args.out_route).write_text(
            f"ROUTE {' '.join(map(str, sol.route))}\n"
            f"SELECTED {' '.join(map(str, sol.selected))}\n"
            f"REWARD {sol.reward!r}\nCOST {sol.cost!r}\n",
            encoding="utf-8",
        )
    if args.svg:
        Path(args.svg).write_text(render_route_svg(inst, sol), encoding="utf-8")
    if args.trace:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["seed", "iteration", "move", "subgroup", "reward", "cost", "best_reward", "best_cost"])
        for _, st in runs:
            for t in st.trace:
                w.writerow([st.seed, t.iteration, t.move, t.subgroup, repr(t.reward), repr(t.cost),
                            repr(t.best_reward), repr(t.best_cost)])
        Path(args.trace).write_text(buf.getvalue(), encoding="utf-8")
    return EXIT_OK


def cmd_convert(args) -> int:
    p = Path(args.input)
    if not p.is_file():
        raise CliError(f"no such file: {args.input}")
    adapter = adapt_sop if args.from_ == "sop" else adapt_cop
    try:
        inst = adapter(p.read_text(encoding="utf-8"), budget=args.budget, strict=args.strict,
                       round_costs=args.round_costs)
    except (ParseError, SemanticError) as exc:
        raise CliError(f"{args.input}: {exc}") from None
    text = write_cops(inst)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_generate(args) -> int:
    cfg = GeneratorConfig(
        n_clusters=args.clusters,
        subgroups_per_cluster=args.subgroups,
        vertices_per_subgroup=args.vertices,
        coordinate_box=(0.0, 0.0, args.box, args.box),
        reward_range=(args.reward_min, args.reward_max),
        budget_factor=args.budget_factor,
        circular=not args.non_circular,
        n_end_vertices=args.end_vertices,
        share_probability=args.share,
        integer_rewards=args.integer_rewards,
        seed=args.seed,
        name=args.name,
    )
    try:
        text = write_cops(generate(cfg))
    except ValueError as exc:
        raise CliError(str(exc)) from None
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_export(args) -> int:
    inst = _load(args.input)
    model = build_ilp(inst, args.subtours, args.max_subset)
    text = export_lp(model)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_bench(args) -> int:
    suite = Path(args.suite)
    if not suite.is_dir():
        raise CliError(f"no such directory: {args.suite}")
    instances = [_load(str(p)) for p in bench.suite_files(suite)]
    solvers = [s.strip() for s in args.solvers.split(",") if s.strip()]
    for s in solvers:
        if s not in ("tabu", "exact"):
            raise CliError(f"unknown solver {s!r}")
    params = _search_params(args)
    seeds = [args.seed + k for k in range(args.runs)]
    tasks = bench.make_tasks(instances, solvers, args.budget_sweep, seeds, params,
                             args.vertex_limit, timing=not args.no_timing)
    rows = bench.run_tasks(tasks)
    text = bench.rows_to_csv(rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    summary = bench.summarize(rows)
    summary_text = bench.summary_to_csv(summary)
    if args.summary:
        Path(args.summary).write_text(summary_text, encoding="utf-8")
    if summary:
        sys.stderr.write(summary_text)
    if rows and all(r.status != "ok" for r in rows):
        _err("every benchmark run failed")
        return EXIT_INPUT
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cops", description="Clustered orienteering with subgroups: solvers and tools")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one cops-1 instance and print a CSV row")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--solver", choices=("tabu", "exact"), default="tabu")
    p.add_argument("--runs", type=int, default=1, help="best of N tabu runs, seeds seed..seed+N-1")
    p.add_argument("--out-route")
    p.add_argument("--svg")
    p.add_argument("--trace", help="per-iteration CSV trace (tabu)")
    p.add_argument("--timing", action="store_true", help="fill the T column with wall-clock seconds")
    _add_search_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("convert", help="convert an SOP/COP source to cops-1")
    p.add_argument("--from", dest="from_", choices=("sop", "cop"), required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out")
    p.add_argument("--budget", type=float, default=None, help="override TMAX")
    p.add_argument("--strict", action="store_true", help="reject unknown sections")
    p.add_argument("--round-costs", action="store_true", help="round Euclidean costs to the nearest integer")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("generate", help="write a seeded random instance")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--clusters", type=int, default=3)
    p.add_argument("--subgroups", type=_int_pair, default=(1, 3), help="LO,HI per cluster")
    p.add_argument("--vertices", type=_int_pair, default=(1, 3), help="LO,HI per subgroup")
    p.add_argument("--box", type=float, default=100.0)
    p.add_argument("--reward-min", type=float, default=1.0)
    p.add_argument("--reward-max", type=float, default=10.0)
    p.add_argument("--integer-rewards", action="store_true")
    p.add_argument("--budget-factor", type=float, default=0.5)
    p.add_argument("--non-circular", action="store_true")
    p.add_argument("--end-vertices", type=int, default=2)
    p.add_argument("--share", type=float, default=0.15, help="probability of reusing a vertex within a cluster")
    p.add_argument("--name")
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("bench", help="run solvers over a directory of cops-1 files")
    p.add_argument("--suite", required=True)
    p.add_argument("--solvers", default="tabu")
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--budget-sweep", type=_float_list, default=None)
    p.add_argument("--out")
    p.add_argument("--summary")
    p.add_argument("--no-timing", action="store_true")
    _add_search_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export", help="write the integer program in LP format")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--subtours", choices=("none", "lazy", "all"), default="lazy")
    p.add_argument("--max-subset", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_export)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    if getattr(args, "runs", 1) < 1:
        _err("--runs must be positive")
        return EXIT_INPUT
    try:
        return args.func(args)
    except CliError as exc:
        _err(str(exc))
        return EXIT_INPUT
    except InfeasibleInstanceError as exc:
        _err(f"infeasible: {exc}")
        return EXIT_INFEASIBLE
    except (SizeLimitError, SemanticError, ValueError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    except OSError as exc:
        _err(str(exc))
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
