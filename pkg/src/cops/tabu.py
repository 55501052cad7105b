"""Tabu search for COPS.

The search keeps a signed long-term memory ``eta`` per subgroup: positive
while the subgroup is on the current route (iterations since insertion),
non-positive while it is off (minus iterations since removal).  A subgroup
is tabu to insert while ``eta > -alpha`` and tabu to remove while
``eta < alpha``.  Each iteration takes the first plausible (budget-feasible)
neighbour from six moves tried in a fixed order, adopts it unconditionally,
and the run stops after ``beta`` iterations without improving the best
solution.
"""
from __future__ import annotations

import csv
import enum
import io as _io
import time
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

from ._rng import SplitMix64
from .core import (
    FEAS_TOL,
    InfeasibleInstanceError,
    InvalidArgumentError,
    Instance,
    Solution,
    check_instance,
    evaluate,
    is_better,
    nearest_end_vertex,
)

IMPROVE_EPS = 1e-9
_CACHE_LIMIT = 20000


@dataclass(frozen=True)
class SearchParams:
    alpha: int = 10
    beta: int = 300
    #: eta cutoff for the "old removal" move; ``None`` means ``beta``
    old_removal_threshold: int | None = None
    lambda_: int = 5
    seed: int = 0
    max_iterations: int | None = None

    def __post_init__(self):
        for name in ("alpha", "beta", "lambda_"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.old_removal_threshold is not None and self.old_removal_threshold < 1:
            raise ValueError("old_removal_threshold must be a positive integer")
        if self.alpha >= self.beta:
            raise ValueError("alpha must be smaller than beta")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.max_iterations is not None and self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")

    @property
    def old_removal(self) -> int:
        return self.beta if self.old_removal_threshold is None else self.old_removal_threshold


class Move(str, enum.Enum):
    NON_TABU_INSERTION = "non_tabu_insertion"
    OLD_REMOVAL = "old_removal"
    TABU_INSERTION = "tabu_insertion"
    RANDOM_INSERTION = "random_insertion"
    NON_TABU_REMOVAL = "non_tabu_removal"
    RANDOM_REMOVAL = "random_removal"
    NONE = "none"


INSERTIONS = (Move.NON_TABU_INSERTION, Move.TABU_INSERTION, Move.RANDOM_INSERTION)


class Neighbor(NamedTuple):
    solution: Solution
    move: Move
    subgroup: int


@dataclass
class TabuState:
    eta: list[int]
    aspiration: list[float]
    current: Solution
    best: Solution
    end_rotation_counter: int = 0
    iterations_without_improvement: int = 0
    insert_cache: dict = field(default_factory=dict, repr=False, compare=False)


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    move: str
    subgroup: int
    reward: float
    cost: float
    best_reward: float
    best_cost: float


@dataclass
class RunStats:
    seed: int
    iterations: int = 0
    wall_time: float = 0.0
    #: (iteration, reward, cost) each time the best solution improved
    improvements: list[tuple[int, float, float]] = field(default_factory=list)
    trace: list[TraceRow] = field(default_factory=list)
    rotations: int = 0


# --------------------------------------------------------------------------
# route operators


def two_opt(instance: Instance, route: Sequence[int], circular: bool | None = None) -> list[int]:
    """Best-improvement 2-opt.

    The first vertex never moves, nor does the last one on a non-circular
    route.  Stops when no segment reversal gains more than 1e-9.
    """
    if circular is None:
        circular = instance.is_circular
    d = instance.dist
    r = list(route)
    n = len(r)
    # j runs to n-1 on a tour (successor wraps to r[0]) and to n-2 on a path
    j_end = n if circular else n - 1
    while True:
        ext = r + [r[0]] if circular else r
        best_gain = IMPROVE_EPS
        best_ij = None
        for i in range(1, j_end - 1):
            a = ext[i - 1]
            b = ext[i]
            da = d[a]
            db = d[b]
            base = da[b]
            for j in range(i + 1, j_end):
                c = ext[j]
                e = ext[j + 1]
                gain = base + d[c][e] - da[c] - db[e]
                if gain > best_gain:
                    best_gain = gain
                    best_ij = (i, j)
        if best_ij is None:
            return r
        i, j = best_ij
        r[i : j + 1] = r[i : j + 1][::-1]


def cheapest_insertion(instance: Instance, route: list[int], v: int, circular: bool) -> list[int]:
    d = instance.dist
    n = len(route)
    stop = n + 1 if circular else n
    best_pos, best_delta = 1, float("inf")
    for k in range(1, stop):
        a = route[k - 1]
        b = route[k % n]
        delta = d[a][v] + d[v][b] - d[a][b]
        if delta < best_delta:
            best_delta, best_pos = delta, k
    return route[:best_pos] + [v] + route[best_pos:]


def _served_clusters(instance: Instance, selected) -> set[int]:
    out: set[int] = set()
    for s in selected:
        out.update(instance.clusters_of[s])
    return out


def insert_subgroup(instance: Instance, solution: Solution, subgroup: int) -> Solution:
    """Add ``subgroup`` to the selection and route its missing vertices.

    Missing vertices go in one at a time, in subgroup order, each at its
    cheapest position; then 2-opt runs on the whole route.  The budget is
    not checked.
    """
    if not 0 <= subgroup < len(instance.subgroups):
        raise InvalidArgumentError(f"unknown subgroup {subgroup}")
    if subgroup in solution.selected_subgroups:
        raise InvalidArgumentError(f"subgroup {subgroup} is already selected")
    served = _served_clusters(instance, solution.selected_subgroups)
    clash = served.intersection(instance.clusters_of[subgroup])
    if clash:
        raise InvalidArgumentError(
            f"subgroup {subgroup}: cluster {min(clash)} already has a selected subgroup"
        )
    circular = instance.is_circular
    route = list(solution.route)
    on_route = set(route)
    added = False
    for v in instance.subgroups[subgroup].vertex_ids:
        if v not in on_route:
            route = cheapest_insertion(instance, route, v, circular)
            on_route.add(v)
            added = True
    if added:
        route = two_opt(instance, route, circular)
    return evaluate(instance, route, solution.selected_subgroups | {subgroup})


def remove_subgroup(instance: Instance, solution: Solution, subgroup: int) -> Solution:
    """Drop ``subgroup`` and splice out the vertices only it needed.

    Vertices still required by another selected subgroup stay, as do the
    start and end vertices.  No re-optimisation is done.
    """
    if subgroup not in solution.selected_subgroups:
        raise InvalidArgumentError(f"subgroup {subgroup} is not selected")
    remaining = solution.selected_subgroups - {subgroup}
    keep: set[int] = {solution.route[0]}
    if not instance.is_circular:
        keep.add(solution.route[-1])
    for s in remaining:
        keep.update(instance.subgroups[s].vertex_ids)
    drop = set(instance.subgroups[subgroup].vertex_ids) - keep
    route = [v for v in solution.route if v not in drop]
    return evaluate(instance, route, remaining)


# --------------------------------------------------------------------------
# initial solution


def initial_solution(
    instance: Instance, params: SearchParams, rng: SplitMix64 | None = None
) -> Solution:
    """Greedy start: clusters in random order, most profitable subgroup first.

    Profitability is reward divided by the subgroup's vertex count.  An
    insertion that breaks the budget is rolled back; ``lambda_`` consecutive
    rollbacks end the construction.
    """
    if rng is None:
        rng = SplitMix64(params.seed)
    sol = _start_solution(instance)
    clients = set(instance.client_subgroups)
    order = list(instance.client_clusters)
    rng.shuffle(order)
    fails = 0
    for g in order:
        served = _served_clusters(instance, sol.selected_subgroups)
        if g in served:
            continue
        cands = [
            s
            for s in sorted(instance.clusters[g].subgroup_ids)
            if s in clients and not served.intersection(instance.clusters_of[s])
        ]
        if not cands:
            continue
        sg = instance.subgroups
        pick = max(cands, key=lambda s: (sg[s].reward / len(sg[s].vertex_ids), -s))
        trial = insert_subgroup(instance, sol, pick)
        if trial.cost <= instance.budget + FEAS_TOL:
            sol = trial
            fails = 0
        else:
            fails += 1
            if fails >= params.lambda_:
                break
    return sol


def _start_solution(instance: Instance) -> Solution:
    if instance.is_circular:
        return evaluate(instance, [instance.start_vertex], ())
    end = nearest_end_vertex(instance)
    sol = evaluate(instance, [instance.start_vertex, end], ())
    if sol.cost > instance.budget + FEAS_TOL:
        raise InfeasibleInstanceError(
            f"no end vertex of cluster {instance.end_cluster} is within budget {instance.budget}"
        )
    return sol


# --------------------------------------------------------------------------
# neighbourhood


def _in_solution(instance: Instance, sol: Solution) -> set[int]:
    inside = set(sol.selected_subgroups)
    inside.add(instance.start_subgroup)
    if not instance.is_circular:
        end_sg = instance.end_subgroup_of_vertex.get(sol.route[-1])
        if end_sg is not None:
            inside.add(end_sg)
    return inside


def init_state(instance: Instance, params: SearchParams, start: Solution) -> TabuState:
    """Fresh memory around ``start``.

    Subgroups on the route get ``eta = 1``; subgroups never inserted start at
    ``-alpha`` so that they are not tabu on the first iteration.
    """
    inside = _in_solution(instance, start)
    eta = [1 if s in inside else -params.alpha for s in range(len(instance.subgroups))]
    asp = [start.reward if s in inside else 0.0 for s in range(len(instance.subgroups))]
    return TabuState(eta=eta, aspiration=asp, current=start, best=start)


def _try_insert(instance: Instance, state: TabuState, s: int) -> Solution | None:
    cur = state.current
    key = (cur.route, cur.selected_subgroups, s)
    cache = state.insert_cache
    if key in cache:
        return cache[key]
    cand = insert_subgroup(instance, cur, s)
    res = cand if cand.cost <= instance.budget + FEAS_TOL else None
    if len(cache) >= _CACHE_LIMIT:
        cache.clear()
    cache[key] = res
    return res


def _try_remove(instance: Instance, state: TabuState, s: int) -> Solution | None:
    cand = remove_subgroup(instance, state.current, s)
    return cand if cand.cost <= instance.budget + FEAS_TOL else None


def next_neighbor(
    instance: Instance, state: TabuState, params: SearchParams, rng: SplitMix64
) -> Neighbor | None:
    """First plausible neighbour of ``state.current``, or ``None`` if there is none.

    Within a move, candidates are tried in random order (tabu insertion:
    by decreasing aspiration) until one keeps the route within budget.
    """
    cur = state.current
    eta = state.eta
    alpha = params.alpha
    selected = cur.selected_subgroups
    served = _served_clusters(instance, selected)
    clients = instance.client_subgroups
    insertable = [
        s for s in clients if s not in selected and not served.intersection(instance.clusters_of[s])
    ]
    removable = [s for s in clients if s in selected]

    def first(move: Move, cands: list[int], op, shuffle: bool = True) -> Neighbor | None:
        cands = list(cands)
        if shuffle:
            rng.shuffle(cands)
        for s in cands:
            sol = op(instance, state, s)
            if sol is not None:
                return Neighbor(sol, move, s)
        return None

    tabu_ins = [s for s in insertable if eta[s] > -alpha]
    tabu_ins.sort(key=lambda s: (-state.aspiration[s], s))
    steps = (
        (Move.NON_TABU_INSERTION, [s for s in insertable if eta[s] <= -alpha], _try_insert, True),
        (Move.OLD_REMOVAL, [s for s in removable if eta[s] > params.old_removal], _try_remove, True),
        (Move.TABU_INSERTION, tabu_ins, _try_insert, False),
        (Move.RANDOM_INSERTION, insertable, _try_insert, True),
        (Move.NON_TABU_REMOVAL, [s for s in removable if eta[s] >= alpha], _try_remove, True),
        (Move.RANDOM_REMOVAL, removable, _try_remove, True),
    )
    for move, cands, op, shuffle in steps:
        nb = first(move, cands, op, shuffle)
        if nb is not None:
            return nb
    return None


def rotate_endpoint(instance: Instance, state: TabuState) -> int:
    """Move the route's end to the end subgroup that has been out longest.

    Picks the end subgroup with minimum ``eta`` (lowest id on ties), swaps
    it in as the last vertex and re-runs 2-opt.  If that breaks the budget,
    client subgroups are dropped, largest saving first, until it fits; if
    even the bare route does not fit, the endpoint is left unchanged.
    Returns the (possibly unchanged) end vertex.
    """
    if instance.is_circular:
        raise InvalidArgumentError("rotate_endpoint needs a non-circular instance")
    state.end_rotation_counter = 0
    cur = state.current
    old_end = cur.route[-1]
    pick = min(instance.end_subgroups, key=lambda s: (state.eta[s], s))
    new_end = instance.subgroups[pick].vertex_ids[0]
    if new_end == old_end:
        return old_end
    route = two_opt(instance, list(cur.route[:-1]) + [new_end], False)
    sol = evaluate(instance, route, cur.selected_subgroups)
    while sol.cost > instance.budget + FEAS_TOL and sol.selected_subgroups:
        # selected is sorted, so min() keeps the lowest id among equal costs
        sol = min((remove_subgroup(instance, sol, s) for s in sol.selected), key=lambda o: o.cost)
    if sol.cost > instance.budget + FEAS_TOL:
        return old_end
    state.eta[instance.end_subgroup_of_vertex[old_end]] = 0
    state.eta[pick] = 1
    for s in cur.selected_subgroups - sol.selected_subgroups:
        state.eta[s] = 0
    state.current = sol
    _update_aspiration(instance, state, sol)
    return new_end


def _update_aspiration(instance: Instance, state: TabuState, sol: Solution) -> None:
    for s in _in_solution(instance, sol):
        if sol.reward > state.aspiration[s]:
            state.aspiration[s] = sol.reward


# --------------------------------------------------------------------------
# driver


def solve_tabu(
    instance: Instance,
    params: SearchParams | None = None,
    *,
    record_trace: bool = False,
    callback: Callable[[TabuState, TraceRow], None] | None = None,
) -> tuple[Solution, RunStats]:
    """Run the tabu search once and return ``(best, stats)``."""
    params = params or SearchParams()
    check_instance(instance)
    t0 = time.perf_counter()
    rng = SplitMix64(params.seed)
    start = initial_solution(instance, params, rng)
    state = init_state(instance, params, start)
    stats = RunStats(seed=params.seed)
    stats.improvements.append((0, start.reward, start.cost))
    circular = instance.is_circular
    n_end = len(instance.end_subgroups)
    rotate_every = max(1, params.beta // n_end) if n_end else 0
    n_sub = len(instance.subgroups)
    it = 0
    while state.iterations_without_improvement <= params.beta:
        if params.max_iterations is not None and it >= params.max_iterations:
            break
        it += 1
        inside = _in_solution(instance, state.current)
        eta = state.eta
        for s in range(n_sub):
            eta[s] += 1 if s in inside else -1

        nb = next_neighbor(instance, state, params, rng)
        improved = False
        if nb is not None:
            state.current = nb.solution
            eta[nb.subgroup] = 1 if nb.move in INSERTIONS else 0
            _update_aspiration(instance, state, nb.solution)
            if is_better(nb.solution, state.best):
                state.best = nb.solution
                improved = True

        if not circular:
            state.end_rotation_counter = 0 if improved else state.end_rotation_counter + 1
            if state.end_rotation_counter >= rotate_every:
                rotate_endpoint(instance, state)
                stats.rotations += 1
                if is_better(state.current, state.best):
                    state.best = state.current
                    improved = True

        if improved:
            state.iterations_without_improvement = 0
            stats.improvements.append((it, state.best.reward, state.best.cost))
        else:
            state.iterations_without_improvement += 1

        if record_trace or callback is not None:
            row = TraceRow(
                iteration=it,
                move=(nb.move if nb is not None else Move.NONE).value,
                subgroup=nb.subgroup if nb is not None else -1,
                reward=state.current.reward,
                cost=state.current.cost,
                best_reward=state.best.reward,
                best_cost=state.best.cost,
            )
            if record_trace:
                stats.trace.append(row)
            if callback is not None:
                callback(state, row)

    stats.iterations = it
    stats.wall_time = time.perf_counter() - t0
    return state.best, stats


def solve_tabu_best_of(
    instance: Instance, params: SearchParams | None = None, runs: int = 1, **kwargs
) -> tuple[Solution, RunStats, list[tuple[Solution, RunStats]]]:
    """Best of ``runs`` independent runs seeded ``seed, seed+1, ...``.

    Returns the best solution, its stats, and every run's result in seed order.
    """
    from dataclasses import replace

    params = params or SearchParams()
    if runs < 1:
        raise ValueError("runs must be positive")
    results = [
        solve_tabu(instance, replace(params, seed=(params.seed + k) % 2**64), **kwargs)
        for k in range(runs)
    ]
    best_sol, best_stats = results[0]
    for sol, st in results[1:]:
        if is_better(sol, best_sol):
            best_sol, best_stats = sol, st
    return best_sol, best_stats, results


def trace_to_csv(trace: Sequence[TraceRow]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "move", "subgroup", "reward", "cost", "best_reward", "best_cost"])
    for r in trace:
        w.writerow([r.iteration, r.move, r.subgroup, repr(r.reward), repr(r.cost), repr(r.best_reward), repr(r.best_cost)])
    return buf.getvalue()
