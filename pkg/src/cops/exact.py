"""Exact solving and the integer-programming model.

``solve_exact`` enumerates every admissible subgroup selection and prices
each one with a Held-Karp table computed once over all selectable vertices,
so it is exact up to roughly 20 distinct vertices.  ``build_ilp`` writes the
integer program (edge, vertex, subgroup and cluster binaries) for use with an
external MILP solver; ``export_lp`` renders it in LP format and
``separate_subtours`` produces the subtour cuts a lazy-constraint loop needs.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import networkx as nx
import numpy as np

from .core import (
    FEAS_TOL,
    InfeasibleInstanceError,
    Instance,
    InvalidArgumentError,
    Solution,
    check_instance,
    evaluate,
)


class SizeLimitError(ValueError):
    """The instance has more selectable vertices than the exact solver accepts."""


# --------------------------------------------------------------------------
# Held-Karp


def _popcount(a: np.ndarray) -> np.ndarray:
    return np.bitwise_count(a.astype(np.uint64)).astype(np.int64)


def held_karp_table(dist: np.ndarray, start: int, nodes: Sequence[int]) -> np.ndarray:
    """Minimum path costs from ``start`` over every subset of ``nodes``.

    ``table[mask, j]`` is the cheapest path that leaves ``start``, visits
    exactly the nodes in ``mask`` and ends at ``nodes[j]`` (``inf`` when
    ``j`` is not in ``mask``).  Row 0 is all ``inf``.
    """
    dist = np.asarray(dist, dtype=float)
    m = len(nodes)
    size = 1 << m
    table = np.full((size, m), np.inf)
    if m == 0:
        return table
    idx = np.asarray(nodes, dtype=np.int64)
    sub = dist[np.ix_(idx, idx)]
    for j in range(m):
        table[1 << j, j] = dist[start, idx[j]]
    masks = np.arange(size, dtype=np.int64)
    pc = _popcount(masks)
    for k in range(2, m + 1):
        layer = masks[pc == k]
        for j in range(m):
            bit = 1 << j
            with_j = layer[(layer & bit) != 0]
            prev = table[with_j ^ bit]
            table[with_j, j] = (prev + sub[:, j][None, :]).min(axis=1)
    return table


def _backtrack(table: np.ndarray, sub: np.ndarray, mask: int, j: int) -> list[int]:
    """Node indices (into ``nodes``) of an optimal path ending at ``j``."""
    order = [j]
    while mask != (1 << j):
        prev = mask ^ (1 << j)
        k = int(np.argmin(table[prev] + sub[:, j]))
        order.append(k)
        mask, j = prev, k
    order.reverse()
    return order


def _best_route(
    dist: np.ndarray,
    start: int,
    nodes: Sequence[int],
    table: np.ndarray,
    mask: int,
    end: int | None,
) -> tuple[float, list[int]]:
    """Cheapest route over ``nodes[mask]``: a tour (``end is None``) or a path to ``end``."""
    close_to = start if end is None else end
    if mask == 0:
        cost = 0.0 if end is None else float(dist[start, end])
        return cost, [start] + ([] if end is None else [end])
    idx = np.asarray(nodes, dtype=np.int64)
    totals = table[mask] + dist[idx, close_to]
    j = int(np.argmin(totals))
    sub = dist[np.ix_(idx, idx)]
    path = [int(idx[k]) for k in _backtrack(table, sub, mask, j)]
    return float(totals[j]), [start] + path + ([] if end is None else [end])


def held_karp_tour(dist, start: int, nodes: Sequence[int]) -> tuple[float, list[int]]:
    """Shortest closed tour from ``start`` through ``nodes``."""
    dist = np.asarray(dist, dtype=float)
    nodes = [v for v in nodes if v != start]
    table = held_karp_table(dist, start, nodes)
    return _best_route(dist, start, nodes, table, (1 << len(nodes)) - 1, None)


def held_karp_path(dist, start: int, nodes: Sequence[int], end: int) -> tuple[float, list[int]]:
    """Shortest path from ``start`` through ``nodes`` ending at ``end``."""
    dist = np.asarray(dist, dtype=float)
    nodes = [v for v in nodes if v not in (start, end)]
    table = held_karp_table(dist, start, nodes)
    return _best_route(dist, start, nodes, table, (1 << len(nodes)) - 1, end)


# --------------------------------------------------------------------------
# exact solver


def _selections(instance: Instance) -> Iterable[tuple[int, ...]]:
    """Every set of client subgroups with at most one subgroup per cluster."""
    subs = sorted(instance.client_subgroups)
    clusters_of = instance.clusters_of

    def rec(i: int, used: frozenset, chosen: tuple[int, ...]):
        if i == len(subs):
            yield chosen
            return
        yield from rec(i + 1, used, chosen)
        s = subs[i]
        cs = clusters_of[s]
        if not used.intersection(cs):
            yield from rec(i + 1, used.union(cs), chosen + (s,))

    yield from rec(0, frozenset(), ())


def solve_exact(instance: Instance, vertex_limit: int = 20) -> Solution:
    """Optimal solution by enumeration plus Held-Karp.

    Ties go to the lower cost, then to the lexicographically smallest list of
    selected subgroup ids.  Raises :class:`SizeLimitError` when the client
    subgroups span more than ``vertex_limit`` distinct vertices and
    :class:`~cops.core.InfeasibleInstanceError` when no end vertex is
    reachable within budget.
    """
    check_instance(instance)
    nodes = sorted({v for s in instance.client_subgroups for v in instance.subgroups[s].vertex_ids})
    if len(nodes) > vertex_limit:
        raise SizeLimitError(
            f"{len(nodes)} selectable vertices exceed the exact-solver limit of {vertex_limit}"
        )
    dist = instance.dist_array
    start = instance.start_vertex
    pos = {v: k for k, v in enumerate(nodes)}
    table = held_karp_table(dist, start, nodes)
    idx = np.asarray(nodes, dtype=np.int64)

    # closing cost per subset, and the end vertex achieving it
    if instance.is_circular:
        close = (table + dist[idx, start][None, :]).min(axis=1) if nodes else np.empty(1)
        close[0] = 0.0
        end_for = None
    else:
        ends = list(instance.end_vertices)
        per_end = np.stack(
            [
                np.concatenate(([dist[start, e]], (table[1:] + dist[idx, e][None, :]).min(axis=1, initial=np.inf)))
                for e in ends
            ]
        )
        choice = np.argmin(per_end, axis=0)  # lowest end id on ties
        close = per_end[choice, np.arange(per_end.shape[1])]
        end_for = [ends[c] for c in choice]

    mask_of = {
        s: sum(1 << pos[v] for v in instance.subgroups[s].vertex_ids) for s in instance.client_subgroups
    }
    rewards = {s: instance.subgroups[s].reward for s in instance.client_subgroups}
    limit = instance.budget + FEAS_TOL / 2
    best = None  # (reward, cost, selection, mask)
    for sel in _selections(instance):
        mask = 0
        reward = 0.0
        for s in sel:
            mask |= mask_of[s]
            reward += rewards[s]
        cost = float(close[mask])
        if cost > limit:
            continue
        if best is None:
            best = (reward, cost, sel, mask)
            continue
        br, bc, bsel, _ = best
        if reward > br + FEAS_TOL:
            best = (reward, cost, sel, mask)
        elif abs(reward - br) <= FEAS_TOL and (cost < bc or (cost == bc and sel < bsel)):
            best = (reward, cost, sel, mask)
    if best is None:
        raise InfeasibleInstanceError(
            f"no end vertex of cluster {instance.end_cluster} is within budget {instance.budget}"
        )
    _, _, sel, mask = best
    end = None if end_for is None else end_for[mask]
    _, route = _best_route(dist, start, nodes, table, mask, end)
    return evaluate(instance, route, sel)


# --------------------------------------------------------------------------
# ILP model


@dataclass(frozen=True)
class Row:
    name: str
    terms: tuple[tuple[str, float], ...]
    sense: str  # "<=", ">=" or "="
    rhs: float

    def lhs(self, values: Mapping[str, float]) -> float:
        return sum(c * values.get(v, 0.0) for v, c in self.terms)

    def satisfied(self, values: Mapping[str, float], tol: float = 1e-9) -> bool:
        lhs = self.lhs(values)
        if self.sense == "<=":
            return lhs <= self.rhs + tol
        if self.sense == ">=":
            return lhs >= self.rhs - tol
        return abs(lhs - self.rhs) <= tol


@dataclass
class IlpModel:
    name: str
    objective: list[tuple[str, float]]
    constraints: list[Row] = field(default_factory=list)
    x_vars: list[str] = field(default_factory=list)
    y_vars: list[str] = field(default_factory=list)
    z_vars: list[str] = field(default_factory=list)
    w_vars: list[str] = field(default_factory=list)
    sense: str = "max"

    @property
    def variables(self) -> list[str]:
        return self.x_vars + self.y_vars + self.z_vars + self.w_vars

    def rows(self, prefix: str) -> list[Row]:
        return [r for r in self.constraints if r.name.startswith(prefix)]

    def violated_rows(self, values: Mapping[str, float], tol: float = 1e-9) -> list[Row]:
        return [r for r in self.constraints if not r.satisfied(values, tol)]

    def objective_value(self, values: Mapping[str, float]) -> float:
        return sum(c * values.get(v, 0.0) for v, c in self.objective)


def xname(u: int, v: int) -> str:
    if u > v:
        u, v = v, u
    return f"x_e{u}_{v}"


def _delta(vertices: Iterable[int], n: int) -> list[str]:
    inside = set(vertices)
    return [xname(u, v) for u in sorted(inside) for v in range(n) if v not in inside]


def _subtour_row(name: str, U: Sequence[int], n: int) -> Row:
    frac = 1.0 / len(U)
    terms = [(x, 1.0) for x in sorted(_delta(U, n), key=_var_key)]
    terms += [(f"y{j}", -frac) for j in sorted(U)]
    return Row(name, tuple(terms), ">=", 0.0)


def _var_key(name: str):
    if name.startswith("x_e"):
        u, v = name[3:].split("_")
        return (0, int(u), int(v))
    return ("xyzw".index(name[0]), int(name[1:]), 0)


def build_ilp(
    instance: Instance, subtour_mode: str = "lazy", max_subset_size: int | None = None
) -> IlpModel:
    """Integer program for ``instance``.

    ``subtour_mode`` is ``"none"`` (no subtour rows), ``"lazy"`` (none now;
    add them from :func:`separate_subtours`) or ``"all"`` (one row per client
    vertex subset of size up to ``max_subset_size``, default all sizes).
    """
    check_instance(instance)
    if subtour_mode not in ("none", "lazy", "all"):
        raise InvalidArgumentError(f"unknown subtour mode {subtour_mode!r}")
    n = instance.n_vertices
    d = instance.dist
    model = IlpModel(
        name=instance.name,
        objective=[(f"z{s.id}", s.reward) for s in instance.subgroups],
        x_vars=[xname(u, v) for u, v in itertools.combinations(range(n), 2)],
        y_vars=[f"y{j}" for j in range(n)],
        z_vars=[f"z{s.id}" for s in instance.subgroups],
        w_vars=[f"w{c.id}" for c in instance.clusters],
    )
    rows = model.constraints
    v1 = instance.start_vertex
    rows.append(Row("start_visited", ((f"y{v1}", 1.0),), "=", 1.0))
    for j in instance.client_vertices:
        terms = [(xname(j, v), 1.0) for v in range(n) if v != j]
        terms.sort(key=lambda t: _var_key(t[0]))
        rows.append(Row(f"degree_{j}", tuple(terms) + ((f"y{j}", -2.0),), "=", 0.0))
    start_verts = {instance.subgroups[s].vertex_ids[0] for s in instance.clusters[instance.start_cluster].subgroup_ids}
    rows.append(
        Row("start_degree", tuple((x, 1.0) for x in sorted(_delta(start_verts, n), key=_var_key)), "<=", 2.0)
    )
    rows.append(
        Row(
            "budget",
            tuple((xname(u, v), d[u][v]) for u, v in itertools.combinations(range(n), 2)),
            "<=",
            instance.budget,
        )
    )
    if subtour_mode == "all":
        clients = list(instance.client_vertices)
        kmax = len(clients) if max_subset_size is None else min(max_subset_size, len(clients))
        count = 0
        for k in range(1, kmax + 1):
            for U in itertools.combinations(clients, k):
                rows.append(_subtour_row(f"subtour_{count}", U, n))
                count += 1
    for s in instance.subgroups:
        for j in s.vertex_ids:
            rows.append(Row(f"link_{s.id}_{j}", ((f"z{s.id}", 1.0), (f"y{j}", -1.0)), "<=", 0.0))
    for c in instance.clusters:
        terms = tuple((f"z{s}", 1.0) for s in sorted(c.subgroup_ids)) + ((f"w{c.id}", -1.0),)
        rows.append(Row(f"cluster_{c.id}", terms, "=", 0.0))
    rows.append(
        Row(
            "vertex_count",
            tuple((f"y{j}", 1.0) for j in range(n))
            + tuple((f"z{s.id}", -float(len(s.vertex_ids))) for s in instance.subgroups),
            "<=",
            0.0,
        )
    )
    if not instance.is_circular:
        ends = instance.end_vertices
        rows.append(Row("end_visited", tuple((f"y{j}", 1.0) for j in ends), "=", 1.0))
        rows.append(
            Row("end_degree", tuple((x, 1.0) for x in sorted(_delta(ends, n), key=_var_key)), "=", 1.0)
        )
    return model


def induced_assignment(instance: Instance, solution: Solution) -> dict[str, float]:
    """0/1 values of the model variables for a route and selection.

    Start and terminal end subgroups count as served (their vertices are on
    every route).  Edge values count multiplicity, so the out-and-back route
    ``[v1, a]`` gives ``x = 2`` on its single edge.
    """
    n = instance.n_vertices
    values = {x: 0.0 for x in (xname(u, v) for u, v in itertools.combinations(range(n), 2))}
    route = list(solution.route)
    edges = list(zip(route, route[1:]))
    if instance.is_circular and len(route) > 1:
        edges.append((route[-1], route[0]))
    for u, v in edges:
        values[xname(u, v)] += 1.0
    on = set(route)
    for j in range(n):
        values[f"y{j}"] = 1.0 if j in on else 0.0
    z = set(solution.selected_subgroups)
    z.add(instance.start_subgroup)
    if not instance.is_circular:
        z.add(instance.end_subgroup_of_vertex[route[-1]])
    for s in instance.subgroups:
        values[f"z{s.id}"] = 1.0 if s.id in z else 0.0
    for c in instance.clusters:
        values[f"w{c.id}"] = float(sum(1 for s in c.subgroup_ids if s in z))
    return values


def separate_subtours(
    instance: Instance, x_values: Mapping, y_values: Mapping
) -> list[Row]:
    """Subtour cuts violated by an integral assignment.

    ``x_values`` maps ``(u, v)`` pairs or ``x_e{u}_{v}`` names to values;
    ``y_values`` maps vertex ids or ``y{j}`` names to values.  One cut is
    returned per connected component of the edge support that holds visited
    client vertices but not the start vertex.
    """
    n = instance.n_vertices

    def integral(val, what):
        f = float(val)
        if abs(f - round(f)) > 1e-6:
            raise InvalidArgumentError(f"{what} has non-integral value {val}")
        return round(f)

    g = nx.Graph()
    g.add_nodes_from(range(n))
    for key, val in x_values.items():
        if isinstance(key, str):
            u, v = (int(t) for t in key[3:].split("_"))
        else:
            u, v = key
        if integral(val, f"x[{u},{v}]") > 0:
            g.add_edge(int(u), int(v))
    visited = set()
    for key, val in y_values.items():
        j = int(key[1:]) if isinstance(key, str) else int(key)
        if integral(val, f"y[{j}]") > 0:
            visited.add(j)
    clients = set(instance.client_vertices)
    cuts = []
    comps = sorted((sorted(c) for c in nx.connected_components(g)), key=lambda c: c[0])
    for comp in comps:
        if instance.start_vertex in comp:
            continue
        U = [v for v in comp if v in clients and v in visited]
        if U:
            cuts.append(_subtour_row(f"cut_{'_'.join(map(str, U))}", U, n))
    return cuts


# --------------------------------------------------------------------------
# LP format


def _fmt_coef(c: float) -> str:
    c = float(c)
    return str(int(c)) if c.is_integer() else format(c, ".12g")


def _expr(terms: Sequence[tuple[str, float]], width: int = 8) -> list[str]:
    parts = []
    for k, (v, c) in enumerate(terms):
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        tok = v if mag == 1 else f"{_fmt_coef(mag)} {v}"
        if k == 0:
            parts.append(("- " if sign == "-" else "") + tok)
        else:
            parts.append(f"{sign} {tok}")
    return [" ".join(parts[i : i + width]) for i in range(0, len(parts), width)] or ["0"]


def format_rows(rows: Sequence[Row]) -> str:
    """Rows in LP ``Subject To`` syntax, one constraint per block."""
    out = []
    ops = {"<=": "<=", ">=": ">=", "=": "="}
    for r in rows:
        chunks = _expr(r.terms)
        chunks[-1] += f" {ops[r.sense]} {_fmt_coef(r.rhs)}"
        out.append(f" {r.name}: {chunks[0]}")
        out.extend(f"   {c}" for c in chunks[1:])
    return "\n".join(out) + ("\n" if out else "")


def export_lp(model: IlpModel, extra_rows: Sequence[Row] = ()) -> str:
    """LP-format text (Maximize / Subject To / Binary / End), deterministic."""
    lines = [f"\\ Problem: {model.name}", "Maximize"]
    obj = _expr(model.objective)
    lines.append(f" obj: {obj[0]}")
    lines.extend(f"   {c}" for c in obj[1:])
    rows = list(model.constraints) + list(extra_rows)
    if rows:
        lines.append("Subject To")
        lines.append(format_rows(rows).rstrip("\n"))
    lines.append("Binary")
    vars_ = model.variables
    for i in range(0, len(vars_), 10):
        lines.append(" " + " ".join(vars_[i : i + 10]))
    lines.append("End")
    return "\n".join(lines) + "\n"
