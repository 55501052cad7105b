"""Domain types and evaluation functions for COPS instances.

A COPS instance is a complete undirected graph whose vertices are grouped
into subgroups, which are in turn grouped into clusters.  A subgroup's reward
is collected only if every one of its vertices is on the route, and at most
one subgroup per cluster may be rewarded.  The route starts at the single
vertex of the start cluster and either returns to it (circular instance) or
stops at one vertex of the end cluster.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

#: absolute tolerance for budget and cost/reward consistency checks
FEAS_TOL = 1e-9


class InvalidArgumentError(ValueError):
    """An operation received an id or argument it cannot work with."""


class SemanticError(ValueError):
    """An instance breaks one of the structural rules of the problem.

    ``entity`` names the offending object, e.g. ``"cluster 3"``.
    """

    def __init__(self, entity: str, message: str):
        super().__init__(f"{entity}: {message}")
        self.entity = entity


class InfeasibleInstanceError(ValueError):
    """No route satisfies the budget (e.g. every end vertex is out of reach)."""


class Metric(str, enum.Enum):
    EUCLIDEAN = "EUCLIDEAN"
    MATRIX = "MATRIX"


@dataclass(frozen=True)
class Subgroup:
    id: int
    reward: float
    vertex_ids: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "vertex_ids", tuple(int(v) for v in self.vertex_ids))
        object.__setattr__(self, "reward", float(self.reward))


@dataclass(frozen=True)
class Cluster:
    id: int
    subgroup_ids: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "subgroup_ids", tuple(int(s) for s in self.subgroup_ids))


@dataclass(frozen=True)
class Instance:
    """Immutable problem definition.

    Exactly one of ``points`` (Euclidean metric) or ``matrix`` (explicit
    symmetric costs) is set.  Structural rules are checked by
    :func:`check_instance`, not at construction, so that malformed instances
    can still be built and reported on.
    """

    name: str
    metric: Metric
    subgroups: tuple[Subgroup, ...]
    clusters: tuple[Cluster, ...]
    start_cluster: int
    end_cluster: int
    budget: float
    points: tuple[tuple[float, float], ...] | None = None
    matrix: tuple[tuple[float, ...], ...] | None = None
    round_costs: bool = False

    def __post_init__(self):
        object.__setattr__(self, "metric", Metric(self.metric))
        object.__setattr__(self, "subgroups", tuple(self.subgroups))
        object.__setattr__(self, "clusters", tuple(self.clusters))
        object.__setattr__(self, "budget", float(self.budget))
        if self.points is not None:
            pts = tuple((float(x), float(y)) for x, y in self.points)
            object.__setattr__(self, "points", pts)
        if self.matrix is not None:
            mat = tuple(tuple(float(c) for c in row) for row in self.matrix)
            object.__setattr__(self, "matrix", mat)

    def replace(self, **changes) -> "Instance":
        from dataclasses import replace

        return replace(self, **changes)

    @property
    def n_vertices(self) -> int:
        if self.metric is Metric.EUCLIDEAN:
            return len(self.points or ())
        return len(self.matrix or ())

    @property
    def is_circular(self) -> bool:
        return self.start_cluster == self.end_cluster

    @cached_property
    def dist_array(self) -> np.ndarray:
        if self.metric is Metric.EUCLIDEAN:
            p = np.asarray(self.points, dtype=float).reshape(-1, 2)
            diff = p[:, None, :] - p[None, :, :]
            d = np.hypot(diff[..., 0], diff[..., 1])
        else:
            d = np.asarray(self.matrix, dtype=float).reshape(self.n_vertices, self.n_vertices)
        if self.round_costs:
            # TSPLIB nint
            d = np.floor(d + 0.5)
        d.setflags(write=False)
        return d

    @cached_property
    def dist(self) -> list[list[float]]:
        # plain lists index faster than numpy scalars in the search loops
        return self.dist_array.tolist()

    @cached_property
    def start_subgroup(self) -> int:
        return self.clusters[self.start_cluster].subgroup_ids[0]

    @cached_property
    def start_vertex(self) -> int:
        return self.subgroups[self.start_subgroup].vertex_ids[0]

    @cached_property
    def end_subgroups(self) -> tuple[int, ...]:
        """Subgroups of the end cluster; empty for circular instances."""
        if self.is_circular:
            return ()
        return tuple(sorted(self.clusters[self.end_cluster].subgroup_ids))

    @cached_property
    def end_vertices(self) -> tuple[int, ...]:
        return tuple(sorted({v for s in self.end_subgroups for v in self.subgroups[s].vertex_ids}))

    @cached_property
    def depot_vertices(self) -> frozenset[int]:
        """Vertices of the start and end clusters."""
        out: set[int] = set()
        for c in {self.start_cluster, self.end_cluster}:
            for s in self.clusters[c].subgroup_ids:
                out.update(self.subgroups[s].vertex_ids)
        return frozenset(out)

    @cached_property
    def client_vertices(self) -> tuple[int, ...]:
        return tuple(v for v in range(self.n_vertices) if v not in self.depot_vertices)

    @cached_property
    def client_subgroups(self) -> tuple[int, ...]:
        """Subgroups made only of client vertices; the only ones solvers select."""
        depots = self.depot_vertices
        return tuple(
            s.id for s in self.subgroups if not any(v in depots for v in s.vertex_ids)
        )

    @cached_property
    def client_clusters(self) -> tuple[int, ...]:
        return tuple(
            c.id for c in self.clusters if c.id not in (self.start_cluster, self.end_cluster)
        )

    @cached_property
    def clusters_of(self) -> tuple[tuple[int, ...], ...]:
        """clusters_of[s] lists the clusters containing subgroup s."""
        acc: list[list[int]] = [[] for _ in self.subgroups]
        for c in self.clusters:
            for s in c.subgroup_ids:
                if 0 <= s < len(acc):
                    acc[s].append(c.id)
        return tuple(tuple(sorted(a)) for a in acc)

    @cached_property
    def end_subgroup_of_vertex(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for s in self.end_subgroups:
            out.setdefault(self.subgroups[s].vertex_ids[0], s)
        return out

    def reward_upper_bound(self) -> float:
        """Sum over clusters of the best subgroup reward in that cluster."""
        return sum(max(self.subgroups[s].reward for s in c.subgroup_ids) for c in self.clusters)


@dataclass(frozen=True)
class Solution:
    route: tuple[int, ...]
    selected_subgroups: frozenset[int]
    cost: float
    reward: float

    @property
    def selected(self) -> tuple[int, ...]:
        return tuple(sorted(self.selected_subgroups))


@dataclass(frozen=True)
class Violation:
    constraint: str
    entity: str
    detail: str = ""

    def __str__(self) -> str:
        return f"[{self.constraint}] {self.entity}: {self.detail}"


def check_instance(instance: Instance) -> Instance:
    """Raise :class:`SemanticError` unless ``instance`` is well formed.

    Returns the instance unchanged so the call can be chained.
    """
    n = instance.n_vertices
    if instance.metric is Metric.EUCLIDEAN:
        if instance.points is None or instance.matrix is not None:
            raise SemanticError("vertices", "Euclidean metric needs coordinates and no matrix")
        for i, (x, y) in enumerate(instance.points):
            if not (math.isfinite(x) and math.isfinite(y)):
                raise SemanticError(f"vertex {i}", "non-finite coordinate")
    else:
        if instance.matrix is None or instance.points is not None:
            raise SemanticError("vertices", "matrix metric needs a matrix and no coordinates")
        for i, row in enumerate(instance.matrix):
            if len(row) != n:
                raise SemanticError(f"matrix row {i}", f"expected {n} entries, got {len(row)}")
        d = np.asarray(instance.matrix, dtype=float)
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise SemanticError("matrix", "costs must be finite and non-negative")
        if not np.allclose(d, d.T, rtol=0.0, atol=FEAS_TOL):
            raise SemanticError("matrix", "costs must be symmetric")
        if np.any(np.abs(np.diag(d)) > 0):
            raise SemanticError("matrix", "self-costs must be zero")
    if n == 0:
        raise SemanticError("vertices", "instance has no vertices")
    if not (math.isfinite(instance.budget) and instance.budget >= 0):
        raise SemanticError("budget", f"must be a non-negative real, got {instance.budget}")

    covered = [False] * n
    for idx, sg in enumerate(instance.subgroups):
        ent = f"subgroup {sg.id}"
        if sg.id != idx:
            raise SemanticError(ent, f"ids must be 0..k-1 in order (found at position {idx})")
        if not sg.vertex_ids:
            raise SemanticError(ent, "has no vertices")
        if len(set(sg.vertex_ids)) != len(sg.vertex_ids):
            raise SemanticError(ent, "lists a vertex twice")
        if not (math.isfinite(sg.reward) and sg.reward >= 0):
            raise SemanticError(ent, f"reward must be a non-negative real, got {sg.reward}")
        for v in sg.vertex_ids:
            if not 0 <= v < n:
                raise SemanticError(ent, f"references unknown vertex {v}")
            covered[v] = True
    for v, ok in enumerate(covered):
        if not ok:
            raise SemanticError(f"vertex {v}", "belongs to no subgroup")

    in_cluster = [False] * len(instance.subgroups)
    for idx, cl in enumerate(instance.clusters):
        ent = f"cluster {cl.id}"
        if cl.id != idx:
            raise SemanticError(ent, f"ids must be 0..l-1 in order (found at position {idx})")
        if not cl.subgroup_ids:
            raise SemanticError(ent, "has no subgroups")
        if len(set(cl.subgroup_ids)) != len(cl.subgroup_ids):
            raise SemanticError(ent, "lists a subgroup twice")
        for s in cl.subgroup_ids:
            if not 0 <= s < len(instance.subgroups):
                raise SemanticError(ent, f"references unknown subgroup {s}")
            in_cluster[s] = True
    for s, ok in enumerate(in_cluster):
        if not ok:
            raise SemanticError(f"subgroup {s}", "belongs to no cluster")

    nc = len(instance.clusters)
    for label, cid in (("start cluster", instance.start_cluster), ("end cluster", instance.end_cluster)):
        if not 0 <= cid < nc:
            raise SemanticError(label, f"unknown cluster {cid}")
    start = instance.clusters[instance.start_cluster]
    if len(start.subgroup_ids) != 1:
        raise SemanticError(
            f"start cluster {start.id}", f"must hold exactly one subgroup, has {len(start.subgroup_ids)}"
        )
    if len(instance.subgroups[start.subgroup_ids[0]].vertex_ids) != 1:
        raise SemanticError(
            f"start cluster {start.id}", "its subgroup must hold exactly one vertex"
        )
    if not instance.is_circular:
        end = instance.clusters[instance.end_cluster]
        for s in end.subgroup_ids:
            if len(instance.subgroups[s].vertex_ids) != 1:
                raise SemanticError(
                    f"end cluster {end.id}", f"subgroup {s} must hold exactly one vertex"
                )
        v1 = instance.subgroups[start.subgroup_ids[0]].vertex_ids[0]
        if any(instance.subgroups[s].vertex_ids[0] == v1 for s in end.subgroup_ids):
            raise SemanticError(f"end cluster {end.id}", "contains the start vertex")
    return instance


def _check_vertex(instance: Instance, v: int) -> None:
    if not (isinstance(v, (int, np.integer)) and 0 <= v < instance.n_vertices):
        raise InvalidArgumentError(f"unknown vertex id {v!r}")


def edge_cost(instance: Instance, u: int, v: int) -> float:
    _check_vertex(instance, u)
    _check_vertex(instance, v)
    return instance.dist[u][v]


def route_cost(instance: Instance, route: Sequence[int], circular: bool | None = None) -> float:
    """Sum of consecutive edge costs; closes the tour when ``circular``.

    ``circular`` defaults to the instance's own route type.
    """
    if len(route) == 0:
        raise InvalidArgumentError("route is empty")
    for v in route:
        _check_vertex(instance, v)
    if circular is None:
        circular = instance.is_circular
    d = instance.dist
    total = 0.0
    for a, b in zip(route, route[1:]):
        total += d[a][b]
    if circular and len(route) > 1:
        total += d[route[-1]][route[0]]
    return total


def evaluate(instance: Instance, route: Iterable[int], selected: Iterable[int]) -> Solution:
    """Build a :class:`Solution` with recomputed cost and reward.

    Constraint violations are not errors here; see :func:`validate`.
    """
    route = tuple(int(v) for v in route)
    sel = frozenset(int(s) for s in selected)
    for s in sel:
        if not 0 <= s < len(instance.subgroups):
            raise InvalidArgumentError(f"unknown subgroup id {s}")
    cost = route_cost(instance, route)
    reward = float(sum(instance.subgroups[s].reward for s in sorted(sel)))
    return Solution(route=route, selected_subgroups=sel, cost=cost, reward=reward)


def validate(instance: Instance, solution: Solution) -> list[Violation]:
    out: list[Violation] = []
    route = solution.route
    n = instance.n_vertices
    bad = [v for v in route if not (isinstance(v, (int, np.integer)) and 0 <= v < n)]
    if bad:
        out.append(Violation("unknown-id", "route", f"unknown vertices {bad}"))
    bad_s = [s for s in solution.selected_subgroups if not 0 <= s < len(instance.subgroups)]
    if bad_s:
        out.append(Violation("unknown-id", "selection", f"unknown subgroups {sorted(bad_s)}"))
    if out:
        return out
    if not route:
        return [Violation("start", "route", "route is empty")]

    v1 = instance.start_vertex
    if route[0] != v1:
        out.append(Violation("start", f"vertex {route[0]}", f"route must start at vertex {v1}"))
    seen: set[int] = set()
    for v in route:
        if v in seen:
            out.append(Violation("duplicate-vertex", f"vertex {v}", "visited more than once"))
        seen.add(v)

    if not instance.is_circular:
        ends = set(instance.end_vertices)
        if len(route) < 2 or route[-1] not in ends:
            out.append(
                Violation("end", f"vertex {route[-1]}", f"route must end in cluster {instance.end_cluster}")
            )
        for v in route[1:-1]:
            if v in ends:
                out.append(Violation("end", f"vertex {v}", "end-cluster vertex visited mid-route"))

    for s in sorted(solution.selected_subgroups):
        missing = [v for v in instance.subgroups[s].vertex_ids if v not in seen]
        if missing:
            out.append(Violation("coverage", f"subgroup {s}", f"vertices {missing} not on route"))

    per_cluster: dict[int, list[int]] = {}
    for s in solution.selected_subgroups:
        for c in instance.clusters_of[s]:
            per_cluster.setdefault(c, []).append(s)
    for c in sorted(per_cluster):
        if len(per_cluster[c]) > 1:
            out.append(
                Violation("cluster", f"cluster {c}", f"subgroups {sorted(per_cluster[c])} all selected")
            )

    cost = route_cost(instance, route)
    if solution.cost > instance.budget + FEAS_TOL:
        out.append(
            Violation("budget", "route", f"cost {solution.cost!r} exceeds budget {instance.budget!r}")
        )
    if abs(cost - solution.cost) > FEAS_TOL:
        out.append(Violation("cost", "route", f"stored cost {solution.cost!r} != recomputed {cost!r}"))
    reward = sum(instance.subgroups[s].reward for s in sorted(solution.selected_subgroups))
    if abs(reward - solution.reward) > FEAS_TOL:
        out.append(
            Violation("reward", "selection", f"stored reward {solution.reward!r} != recomputed {reward!r}")
        )
    return out


def is_better(a: Solution, b: Solution) -> bool:
    """Strictly more reward, or equal reward at strictly lower cost."""
    if a.reward > b.reward + FEAS_TOL:
        return True
    return abs(a.reward - b.reward) <= FEAS_TOL and a.cost < b.cost - FEAS_TOL


def empty_solution(instance: Instance, end_vertex: int | None = None) -> Solution:
    """The zero-reward route: ``[v1]``, or ``[v1, end]`` for non-circular instances."""
    route = [instance.start_vertex]
    if not instance.is_circular:
        if end_vertex is None:
            end_vertex = nearest_end_vertex(instance)
        route.append(end_vertex)
    return evaluate(instance, route, ())


def nearest_end_vertex(instance: Instance) -> int:
    d = instance.dist[instance.start_vertex]
    return min(instance.end_vertices, key=lambda e: (d[e], e))
