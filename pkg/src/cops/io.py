"""Reading, writing and generating COPS instances.

Native format (``cops-1``) is line oriented, UTF-8, ``#`` starts a comment::

    FORMAT cops-1
    NAME demo
    METRIC EUCLIDEAN
    BUDGET 25
    START_CLUSTER 0
    END_CLUSTER 0
    ROUND_COSTS NEAREST_INT        # optional
    VERTICES 3
    0 0 0
    1 3 4
    2 6 0
    SUBGROUPS 2
    0 0 0                          # id reward vertex-ids...
    1 5 1 2
    CLUSTERS 2
    0 0                            # id subgroup-ids...
    1 1
    EOF

With ``METRIC MATRIX`` the ``VERTICES <n>`` line is followed by a ``MATRIX``
line and ``n`` rows of ``n`` costs instead of coordinates.

The adapter grammar (``adapt_sop``/``adapt_cop``) is TSPLIB-like: header
lines ``KEY: value`` (``NAME``, ``TMAX``, ``DEPOT``, ``START_SET``, ...),
a ``NODE_COORD_SECTION`` of ``<id> <x> <y>`` lines, an optional
``NODE_REWARD_SECTION`` of ``<id> <reward>`` lines, and a ``SET_SECTION``
(alias ``GTSP_SET_SECTION``) of ``<set-id> [<reward>] <vertex-id>... [-1]``
lines.  Set lines carry a reward exactly when no node rewards are given.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterator

from ._rng import SplitMix64
from .core import (
    Cluster,
    Instance,
    Metric,
    SemanticError,
    Subgroup,
    check_instance,
)

SCHEMA_VERSION = "cops-1"


class ParseError(ValueError):
    """Syntax error in an input document; ``line`` is 1-based (0 if unknown)."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


def fmt_real(x: float) -> str:
    """9-significant-digit text for a real; integral values drop the point."""
    s = format(float(x), ".9g")
    if s == "-0":
        s = "0"
    return s


def quantize(x: float) -> float:
    """Round ``x`` to what :func:`fmt_real` can represent exactly."""
    return float(fmt_real(x))


# --------------------------------------------------------------------------
# cops-1


def _lines(text: str) -> Iterator[tuple[int, list[str]]]:
    for no, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield no, line.split()


def _real(tok: str, no: int, what: str) -> float:
    try:
        val = float(tok)
    except ValueError:
        raise ParseError(no, f"expected a real for {what}, got {tok!r}") from None
    if not math.isfinite(val):
        raise ParseError(no, f"{what} must be finite")
    return val


def _int(tok: str, no: int, what: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ParseError(no, f"expected an integer for {what}, got {tok!r}") from None


def parse_cops(text: str) -> Instance:
    """Parse a cops-1 document and check it with :func:`check_instance`.

    Raises :class:`ParseError` for syntax problems and
    :class:`~cops.core.SemanticError` for structural ones.
    """
    it = _lines(text)
    head: dict[str, tuple[int, list[str]]] = {}
    points: list[tuple[int, float, float]] | None = None
    matrix: list[list[float]] | None = None
    subgroups: list[Subgroup] = []
    clusters: list[Cluster] = []
    saw_eof = False
    last_no = 0

    def take(n_rows: int, section: str, no: int) -> list[tuple[int, list[str]]]:
        rows = []
        for _ in range(n_rows):
            try:
                rows.append(next(it))
            except StopIteration:
                raise ParseError(no, f"{section}: expected {n_rows} rows, input ended") from None
        return rows

    for no, toks in it:
        last_no = no
        key = toks[0].upper()
        if saw_eof:
            raise ParseError(no, "content after EOF")
        if key in ("FORMAT", "NAME", "METRIC", "BUDGET", "START_CLUSTER", "END_CLUSTER", "ROUND_COSTS"):
            if key in head:
                raise ParseError(no, f"duplicate {key}")
            if len(toks) < 2:
                raise ParseError(no, f"{key} needs a value")
            head[key] = (no, toks[1:])
        elif key == "VERTICES":
            if len(toks) != 2:
                raise ParseError(no, "VERTICES takes one count")
            n = _int(toks[1], no, "vertex count")
            if n < 0:
                raise ParseError(no, "vertex count must be non-negative")
            metric = head.get("METRIC", (0, ["EUCLIDEAN"]))[1][0].upper()
            if metric == "MATRIX":
                rows = take(1, "VERTICES", no)
                if rows[0][1] != ["MATRIX"]:
                    raise ParseError(rows[0][0], "expected MATRIX after VERTICES for METRIC MATRIX")
                matrix = []
                for rno, rt in take(n, "MATRIX", no):
                    if len(rt) != n:
                        raise ParseError(rno, f"matrix row needs {n} entries, got {len(rt)}")
                    matrix.append([_real(t, rno, "cost") for t in rt])
            else:
                points = []
                for rno, rt in take(n, "VERTICES", no):
                    if len(rt) != 3:
                        raise ParseError(rno, "vertex line is '<id> <x> <y>'")
                    points.append((_int(rt[0], rno, "vertex id"), _real(rt[1], rno, "x"), _real(rt[2], rno, "y")))
        elif key == "SUBGROUPS":
            k = _int(toks[1], no, "subgroup count") if len(toks) == 2 else None
            if k is None or k < 0:
                raise ParseError(no, "SUBGROUPS takes one non-negative count")
            for rno, rt in take(k, "SUBGROUPS", no):
                if len(rt) < 2:
                    raise ParseError(rno, "subgroup line is '<id> <reward> <vertex-id>...'")
                subgroups.append(
                    Subgroup(
                        _int(rt[0], rno, "subgroup id"),
                        _real(rt[1], rno, "reward"),
                        tuple(_int(t, rno, "vertex id") for t in rt[2:]),
                    )
                )
        elif key == "CLUSTERS":
            m = _int(toks[1], no, "cluster count") if len(toks) == 2 else None
            if m is None or m < 0:
                raise ParseError(no, "CLUSTERS takes one non-negative count")
            for rno, rt in take(m, "CLUSTERS", no):
                clusters.append(
                    Cluster(_int(rt[0], rno, "cluster id"), tuple(_int(t, rno, "subgroup id") for t in rt[1:]))
                )
        elif key == "EOF":
            saw_eof = True
        else:
            raise ParseError(no, f"unknown keyword {toks[0]!r}")

    if not saw_eof:
        raise ParseError(last_no, "missing EOF")
    for req in ("BUDGET", "START_CLUSTER", "END_CLUSTER"):
        if req not in head:
            raise ParseError(0, f"missing {req}")
    if "FORMAT" in head and head["FORMAT"][1] != [SCHEMA_VERSION]:
        no, val = head["FORMAT"]
        raise ParseError(no, f"unsupported format {' '.join(val)!r}")
    mno, mval = head.get("METRIC", (0, ["EUCLIDEAN"]))
    try:
        metric = Metric(mval[0].upper())
    except ValueError:
        raise ParseError(mno, f"unknown metric {mval[0]!r}") from None
    rno, rval = head.get("ROUND_COSTS", (0, ["NONE"]))
    if rval[0].upper() not in ("NONE", "NEAREST_INT"):
        raise ParseError(rno, f"unknown ROUND_COSTS mode {rval[0]!r}")
    if metric is Metric.EUCLIDEAN and points is None:
        raise ParseError(0, "missing VERTICES")
    if metric is Metric.MATRIX and matrix is None:
        raise ParseError(0, "missing VERTICES/MATRIX")

    if points is not None:
        points.sort()
        for idx, (vid, _, _) in enumerate(points):
            if vid != idx:
                raise SemanticError(f"vertex {vid}", "vertex ids must be 0..n-1 without gaps")
    subgroups.sort(key=lambda s: s.id)
    clusters.sort(key=lambda c: c.id)
    bno, bval = head["BUDGET"]
    inst = Instance(
        name=" ".join(head.get("NAME", (0, ["unnamed"]))[1]),
        metric=metric,
        subgroups=tuple(subgroups),
        clusters=tuple(clusters),
        start_cluster=_int(head["START_CLUSTER"][1][0], head["START_CLUSTER"][0], "start cluster"),
        end_cluster=_int(head["END_CLUSTER"][1][0], head["END_CLUSTER"][0], "end cluster"),
        budget=_real(bval[0], bno, "budget"),
        points=None if points is None else tuple((x, y) for _, x, y in points),
        matrix=None if matrix is None else tuple(tuple(r) for r in matrix),
        round_costs=rval[0].upper() == "NEAREST_INT",
    )
    return check_instance(inst)


def write_cops(instance: Instance) -> str:
    """Canonical cops-1 text: sorted ids, fixed field order, 9-digit reals."""
    check_instance(instance)
    if "\n" in instance.name or "#" in instance.name:
        raise SemanticError("name", "must not contain newlines or '#'")
    out = [
        f"FORMAT {SCHEMA_VERSION}",
        f"NAME {instance.name or 'unnamed'}",
        f"METRIC {instance.metric.value}",
        f"BUDGET {fmt_real(instance.budget)}",
        f"START_CLUSTER {instance.start_cluster}",
        f"END_CLUSTER {instance.end_cluster}",
    ]
    if instance.round_costs:
        out.append("ROUND_COSTS NEAREST_INT")
    out.append(f"VERTICES {instance.n_vertices}")
    if instance.metric is Metric.EUCLIDEAN:
        out.extend(f"{i} {fmt_real(x)} {fmt_real(y)}" for i, (x, y) in enumerate(instance.points))
    else:
        out.append("MATRIX")
        out.extend(" ".join(fmt_real(c) for c in row) for row in instance.matrix)
    out.append(f"SUBGROUPS {len(instance.subgroups)}")
    for s in instance.subgroups:
        out.append(" ".join([str(s.id), fmt_real(s.reward), *map(str, s.vertex_ids)]))
    out.append(f"CLUSTERS {len(instance.clusters)}")
    for c in instance.clusters:
        out.append(" ".join([str(c.id), *map(str, c.subgroup_ids)]))
    out.append("EOF")
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# TSPLIB-like SOP / COP sources

_KEY_RE = re.compile(r"^([A-Z_][A-Z0-9_]*)\s*(?::\s*(.*))?$")
_SECTIONS = {"NODE_COORD_SECTION", "SET_SECTION", "GTSP_SET_SECTION", "NODE_REWARD_SECTION"}
_HEADERS = {
    "NAME", "TYPE", "COMMENT", "DIMENSION", "EDGE_WEIGHT_TYPE", "TMAX", "DEPOT",
    "START_SET", "END_SET", "SETS", "GTSP_SETS",
}


@dataclass
class _Source:
    name: str
    coords: list[tuple[float, float]]
    index_of: dict[int, int]
    node_rewards: dict[int, float] | None
    # (set id, reward or None, member vertex indices)
    sets: list[tuple[int, float | None, list[int]]]
    tmax: float | None
    depot: int | None
    start_set: int | None


def _read_source(text: str, strict: bool) -> _Source:
    header: dict[str, str] = {}
    sections: dict[str, list[tuple[int, list[str]]]] = {}
    current: str | None = None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        m = _KEY_RE.match(line)
        if m and not line[0].isdigit():
            key, val = m.group(1), m.group(2)
            if key == "EOF":
                break
            if key in _SECTIONS:
                current = "SET_SECTION" if key == "GTSP_SET_SECTION" else key
                sections.setdefault(current, [])
                continue
            if key in _HEADERS:
                header[key] = (val or "").strip()
                current = None
                continue
            if strict:
                raise ParseError(no, f"unknown section or keyword {key!r}")
            current = "__skip__" if key.endswith("_SECTION") or val is None else None
            continue
        if current is None:
            if strict:
                raise ParseError(no, "data line outside any section")
            continue
        if current != "__skip__":
            sections[current].append((no, line.split()))

    if "NODE_COORD_SECTION" not in sections:
        raise ParseError(0, "missing NODE_COORD_SECTION")
    coords: list[tuple[float, float]] = []
    index_of: dict[int, int] = {}
    for no, toks in sections["NODE_COORD_SECTION"]:
        if len(toks) < 3:
            raise ParseError(no, "coordinate line is '<id> <x> <y>'")
        vid = _int(toks[0], no, "vertex id")
        if vid in index_of:
            raise ParseError(no, f"duplicate vertex id {vid}")
        index_of[vid] = len(coords)
        coords.append((_real(toks[1], no, "x"), _real(toks[2], no, "y")))

    def vertex(tok: str, no: int) -> int:
        vid = _int(tok, no, "vertex id")
        if vid not in index_of:
            raise SemanticError(f"vertex {vid}", "referenced but has no coordinates")
        return index_of[vid]

    node_rewards = None
    if "NODE_REWARD_SECTION" in sections:
        node_rewards = {}
        for no, toks in sections["NODE_REWARD_SECTION"]:
            if len(toks) != 2:
                raise ParseError(no, "reward line is '<vertex-id> <reward>'")
            node_rewards[vertex(toks[0], no)] = _real(toks[1], no, "reward")

    if "SET_SECTION" not in sections:
        raise ParseError(0, "missing SET_SECTION")
    sets: list[tuple[int, float | None, list[int]]] = []
    seen_ids: set[int] = set()
    for no, toks in sections["SET_SECTION"]:
        if toks and toks[-1] == "-1":
            toks = toks[:-1]
        need = 1 if node_rewards is not None else 2
        if len(toks) < need:
            raise ParseError(no, "set line is '<set-id> [<reward>] <vertex-id>... [-1]'")
        sid = _int(toks[0], no, "set id")
        if sid in seen_ids:
            raise ParseError(no, f"duplicate set id {sid}")
        seen_ids.add(sid)
        if node_rewards is None:
            reward = _real(toks[1], no, "set reward")
            members = toks[2:]
        else:
            reward = None
            members = toks[1:]
        idx = [vertex(t, no) for t in members]
        if not idx:
            raise SemanticError(f"set {sid}", "has no vertices")
        if len(set(idx)) != len(idx):
            raise SemanticError(f"set {sid}", "lists a vertex twice")
        sets.append((sid, reward, idx))

    def opt_real(key: str) -> float | None:
        if key not in header:
            return None
        return _real(header[key].split()[0], 0, key)

    def opt_int(key: str) -> int | None:
        if key not in header:
            return None
        return _int(header[key].split()[0], 0, key)

    depot = opt_int("DEPOT")
    if depot is not None:
        if depot not in index_of:
            raise SemanticError(f"depot {depot}", "unknown vertex")
        depot = index_of[depot]
    return _Source(
        name=header.get("NAME", "unnamed").split()[0] if header.get("NAME") else "unnamed",
        coords=coords,
        index_of=index_of,
        node_rewards=node_rewards,
        sets=sets,
        tmax=opt_real("TMAX"),
        depot=depot,
        start_set=opt_int("START_SET"),
    )


def _assemble(
    src: _Source,
    groups: list[tuple[int, list[tuple[float, list[int]]]]],
    budget: float | None,
    round_costs: bool,
) -> Instance:
    """Build an instance from per-set subgroup lists; sets become clusters.

    The start cluster is the set containing the depot, which must be a
    singleton.  A depot that appears in no set gets its own zero-reward
    cluster.
    """
    if budget is None:
        budget = src.tmax
    if budget is None:
        raise SemanticError("budget", "source has no TMAX and no budget override was given")
    n = len(src.coords)
    if src.start_set is not None:
        match = [g for g in groups if g[0] == src.start_set]
        if not match:
            raise SemanticError(f"start set {src.start_set}", "no such set")
        subs = match[0][1]
        if len(subs) != 1 or len(subs[0][1]) != 1:
            raise SemanticError(f"start set {src.start_set}", "must contain exactly one vertex")
        depot = subs[0][1][0]
    else:
        depot = src.depot if src.depot is not None else 0

    covered = {v for _, subs in groups for _, vs in subs for v in vs}
    groups = list(groups)
    if depot not in covered:
        groups.insert(0, (-1, [(0.0, [depot])]))
    for v in range(n):
        if v not in covered and v != depot:
            ext = [k for k, i in src.index_of.items() if i == v][0]
            raise SemanticError(f"vertex {ext}", "belongs to no set")

    subgroups: list[Subgroup] = []
    clusters: list[Cluster] = []
    start_cluster = None
    for sid, subs in groups:
        ids = []
        for reward, verts in subs:
            ids.append(len(subgroups))
            subgroups.append(Subgroup(len(subgroups), reward, tuple(verts)))
        if any(depot in verts for _, verts in subs):
            if len(subs) != 1 or len(subs[0][1]) != 1:
                raise SemanticError(f"start set {sid}", "the depot's set must contain only the depot")
            start_cluster = len(clusters)
        clusters.append(Cluster(len(clusters), tuple(ids)))
    inst = Instance(
        name=src.name,
        metric=Metric.EUCLIDEAN,
        subgroups=tuple(subgroups),
        clusters=tuple(clusters),
        start_cluster=start_cluster,
        end_cluster=start_cluster,
        budget=budget,
        points=tuple(src.coords),
        round_costs=round_costs,
    )
    return check_instance(inst)


def adapt_sop(
    text: str, *, budget: float | None = None, strict: bool = False, round_costs: bool = False
) -> Instance:
    """Reduce a Set Orienteering instance to COPS.

    Every (set, vertex) membership becomes a one-vertex subgroup carrying the
    vertex reward (``NODE_REWARD_SECTION``) or else the set reward; every set
    becomes a cluster.  For disjoint sets this is one subgroup per vertex.
    """
    src = _read_source(text, strict)
    groups = []
    for sid, set_reward, members in src.sets:
        subs = []
        for v in members:
            r = src.node_rewards.get(v, 0.0) if src.node_rewards is not None else set_reward
            subs.append((r, [v]))
        groups.append((sid, subs))
    return _assemble(src, groups, budget, round_costs)


def adapt_cop(
    text: str, *, budget: float | None = None, strict: bool = False, round_costs: bool = False
) -> Instance:
    """Reduce a Clustered Orienteering instance to COPS.

    Each COP cluster becomes one subgroup holding all its vertices and the
    cluster reward, wrapped in a cluster of its own.  Sources that give
    per-node rewards instead of cluster rewards are rejected.
    """
    src = _read_source(text, strict)
    if src.node_rewards is not None:
        raise SemanticError("SET_SECTION", "COP sources need a reward on every set, not per node")
    groups = [(sid, [(reward, members)]) for sid, reward, members in src.sets]
    return _assemble(src, groups, budget, round_costs)


# --------------------------------------------------------------------------
# random instances


@dataclass(frozen=True)
class GeneratorConfig:
    n_clusters: int = 3
    subgroups_per_cluster: tuple[int, int] = (1, 3)
    vertices_per_subgroup: tuple[int, int] = (1, 3)
    coordinate_box: tuple[float, float, float, float] = (0.0, 0.0, 100.0, 100.0)
    reward_range: tuple[float, float] = (1.0, 10.0)
    budget_factor: float = 0.5
    circular: bool = True
    seed: int = 0
    #: end-cluster size when ``circular`` is false
    n_end_vertices: int = 2
    #: chance that a subgroup vertex is reused from an earlier subgroup of its cluster
    share_probability: float = 0.15
    integer_rewards: bool = False
    name: str | None = None


def _check_range(label: str, lo, hi, positive: bool = True) -> None:
    if lo > hi:
        raise ValueError(f"{label}: empty range ({lo}, {hi})")
    if positive and lo <= 0:
        raise ValueError(f"{label}: values must be positive")


def nearest_neighbor_tour_length(instance: Instance) -> float:
    """Closed greedy nearest-neighbour tour over every vertex from the start vertex."""
    d = instance.dist
    cur = instance.start_vertex
    left = set(range(instance.n_vertices)) - {cur}
    total = 0.0
    while left:
        nxt = min(left, key=lambda v: (d[cur][v], v))
        total += d[cur][nxt]
        left.discard(nxt)
        cur = nxt
    return total + d[cur][instance.start_vertex]


def generate(config: GeneratorConfig) -> Instance:
    """Seeded random instance; identical configs give identical instances.

    Vertex 0 is the start vertex.  All reals are quantised to 9 significant
    digits so that the instance survives a cops-1 round trip unchanged.
    """
    if config.n_clusters < 1:
        raise ValueError("n_clusters must be positive")
    _check_range("subgroups_per_cluster", *config.subgroups_per_cluster)
    _check_range("vertices_per_subgroup", *config.vertices_per_subgroup)
    _check_range("reward_range", *config.reward_range)
    x0, y0, x1, y1 = config.coordinate_box
    if x0 > x1 or y0 > y1:
        raise ValueError("coordinate_box: empty box")
    if not 0 < config.budget_factor <= 1:
        raise ValueError("budget_factor must lie in (0, 1]")
    if not 0 <= config.share_probability <= 1:
        raise ValueError("share_probability must lie in [0, 1]")
    if not config.circular and config.n_end_vertices < 1:
        raise ValueError("n_end_vertices must be positive for non-circular instances")

    rng = SplitMix64(config.seed)

    def point() -> tuple[float, float]:
        return quantize(rng.uniform(x0, x1)), quantize(rng.uniform(y0, y1))

    def reward() -> float:
        lo, hi = config.reward_range
        if config.integer_rewards:
            return float(rng.randint(math.ceil(lo), math.floor(hi)))
        return quantize(rng.uniform(lo, hi))

    points = [point()]
    subgroups = [Subgroup(0, 0.0, (0,))]
    clusters = [Cluster(0, (0,))]
    for _ in range(config.n_clusters):
        sids = []
        pool: list[int] = []
        for _ in range(rng.randint(*config.subgroups_per_cluster)):
            size = rng.randint(*config.vertices_per_subgroup)
            verts: list[int] = []
            while len(verts) < size:
                spare = [v for v in pool if v not in verts]
                if spare and rng.random() < config.share_probability:
                    verts.append(rng.choice(spare))
                else:
                    verts.append(len(points))
                    points.append(point())
            pool.extend(v for v in verts if v not in pool)
            sids.append(len(subgroups))
            subgroups.append(Subgroup(len(subgroups), reward(), tuple(verts)))
        clusters.append(Cluster(len(clusters), tuple(sids)))
    end_cluster = 0
    if not config.circular:
        sids = []
        for _ in range(config.n_end_vertices):
            sids.append(len(subgroups))
            subgroups.append(Subgroup(len(subgroups), 0.0, (len(points),)))
            points.append(point())
        end_cluster = len(clusters)
        clusters.append(Cluster(end_cluster, tuple(sids)))

    inst = Instance(
        name=config.name or f"gen-s{config.seed}",
        metric=Metric.EUCLIDEAN,
        subgroups=tuple(subgroups),
        clusters=tuple(clusters),
        start_cluster=0,
        end_cluster=end_cluster,
        budget=0.0,
        points=tuple(points),
    )
    budget = quantize(config.budget_factor * nearest_neighbor_tour_length(inst))
    return check_instance(inst.replace(budget=budget))


def read_instance(path) -> Instance:
    with open(path, encoding="utf-8") as fh:
        return parse_cops(fh.read())


def save_instance(instance: Instance, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(write_cops(instance))


def bundled_instance(name: str = "budget_demo") -> Instance:
    """Load one of the instances shipped in ``cops/data``."""
    from importlib.resources import files

    return parse_cops(files("cops").joinpath("data", f"{name}.cops").read_text(encoding="utf-8"))
