"""Benchmark rows and the suite runner behind ``cops bench``."""
from __future__ import annotations

import csv
import io
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

from .core import InfeasibleInstanceError, Instance, Solution
from .exact import SizeLimitError, solve_exact
from .tabu import SearchParams, solve_tabu


@dataclass(frozen=True)
class BenchRow:
    """One solver run; ``R``, ``L`` and ``T`` are reward, route length and seconds."""

    instance: str
    size: int
    budget: float
    solver: str
    seed: int | None
    R: float | None
    L: float | None
    T: float | None
    status: str = "ok"
    selected: tuple[int, ...] = ()
    route: tuple[int, ...] = ()

    @classmethod
    def header(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def cells(self) -> list[str]:
        def num(x, spec=".12g"):
            return "" if x is None else format(x, spec)

        return [
            self.instance,
            str(self.size),
            num(self.budget),
            self.solver,
            "" if self.seed is None else str(self.seed),
            num(self.R),
            num(self.L),
            num(self.T, ".4f"),
            self.status,
            " ".join(map(str, self.selected)),
            " ".join(map(str, self.route)),
        ]


def row_for(
    instance: Instance, solver: str, sol: Solution | None, seed: int | None, seconds: float | None, status="ok"
) -> BenchRow:
    return BenchRow(
        instance=instance.name,
        size=instance.n_vertices,
        budget=instance.budget,
        solver=solver,
        seed=seed,
        R=None if sol is None else sol.reward,
        L=None if sol is None else sol.cost,
        T=seconds,
        status=status,
        selected=() if sol is None else sol.selected,
        route=() if sol is None else sol.route,
    )


def rows_to_csv(rows: Iterable[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BenchRow.header())
    for r in rows:
        w.writerow(r.cells())
    return buf.getvalue()


def parse_rows(text: str) -> list[dict[str, str]]:
    return list(csv.DictReader(io.StringIO(text)))


@dataclass(frozen=True)
class Task:
    instance: Instance
    solver: str
    seed: int | None
    params: SearchParams
    vertex_limit: int = 20
    timing: bool = True


def run_task(task: Task) -> BenchRow:
    inst = task.instance
    t0 = time.perf_counter()
    try:
        if task.solver == "tabu":
            sol, _ = solve_tabu(inst, replace(task.params, seed=task.seed))
        elif task.solver == "exact":
            sol = solve_exact(inst, vertex_limit=task.vertex_limit)
        else:
            raise ValueError(f"unknown solver {task.solver!r}")
    except InfeasibleInstanceError as exc:
        return row_for(inst, task.solver, None, task.seed, None, f"infeasible: {exc}")
    except (SizeLimitError, ValueError) as exc:
        return row_for(inst, task.solver, None, task.seed, None, f"error: {exc}")
    seconds = time.perf_counter() - t0 if task.timing else None
    return row_for(inst, task.solver, sol, task.seed, seconds)


def worker_count() -> int:
    cap = os.environ.get("COPS_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = max(1, min(n, int(cap)))
        except ValueError:
            pass
    return n


def run_tasks(tasks: Sequence[Task], workers: int | None = None) -> list[BenchRow]:
    """Run every task; rows come back in task order whatever the completion order."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(tasks) <= 1:
        return [run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_task, tasks))


def make_tasks(
    instances: Sequence[Instance],
    solvers: Sequence[str],
    budgets: Sequence[float] | None,
    seeds: Sequence[int],
    params: SearchParams,
    vertex_limit: int = 20,
    timing: bool = True,
) -> list[Task]:
    """Cross product instances x budgets x solvers x seeds.

    The exact solver is deterministic and runs once per (instance, budget).
    """
    tasks = []
    for inst in instances:
        for b in budgets or [inst.budget]:
            variant = inst if b == inst.budget else inst.replace(budget=float(b))
            for solver in solvers:
                for seed in seeds if solver == "tabu" else [None]:
                    tasks.append(Task(variant, solver, seed, params, vertex_limit, timing))
    return tasks


@dataclass(frozen=True)
class SummaryRow:
    instance: str
    solver: str
    budget: float
    runs: int
    failures: int
    best_R: float | None
    best_L: float | None
    mean_R: float | None
    sd_R: float | None
    mean_T: float | None
    sd_T: float | None


def summarize(rows: Sequence[BenchRow]) -> list[SummaryRow]:
    """Best-of-N and mean/sd per (instance, solver, budget), in first-seen order."""
    groups: dict[tuple, list[BenchRow]] = {}
    for r in rows:
        groups.setdefault((r.instance, r.solver, r.budget), []).append(r)
    out = []
    for (name, solver, budget), rs in groups.items():
        ok = [r for r in rs if r.status == "ok"]
        best = None
        for r in ok:
            if best is None or r.R > best.R + 1e-9 or (abs(r.R - best.R) <= 1e-9 and r.L < best.L):
                best = r
        rewards = [r.R for r in ok]
        times = [r.T for r in ok if r.T is not None]
        out.append(
            SummaryRow(
                instance=name,
                solver=solver,
                budget=budget,
                runs=len(rs),
                failures=len(rs) - len(ok),
                best_R=None if best is None else best.R,
                best_L=None if best is None else best.L,
                mean_R=statistics.fmean(rewards) if rewards else None,
                sd_R=statistics.stdev(rewards) if len(rewards) > 1 else (0.0 if rewards else None),
                mean_T=statistics.fmean(times) if times else None,
                sd_T=statistics.stdev(times) if len(times) > 1 else (0.0 if times else None),
            )
        )
    return out


def summary_to_csv(rows: Sequence[SummaryRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f.name for f in fields(SummaryRow)])
    for r in rows:
        w.writerow(["" if v is None else (format(v, ".12g") if isinstance(v, float) else v) for v in astuple(r)])
    return buf.getvalue()


def suite_files(directory: str | Path) -> list[Path]:
    return sorted(p for p in Path(directory).iterdir() if p.is_file() and p.suffix == ".cops")
