"""SVG drawing of an instance and a route."""
from __future__ import annotations

from xml.sax.saxutils import escape

from shapely.geometry import LineString, MultiPoint, Polygon

from .core import Instance, Metric, Solution

PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


def render_route_svg(instance: Instance, solution: Solution, size: int = 600, margin: int = 30) -> str:
    """Vertices coloured by cluster, subgroup hulls, and the route as a polyline."""
    if instance.metric is not Metric.EUCLIDEAN:
        raise ValueError("cannot draw an explicit-matrix instance: it has no coordinates")
    pts = instance.points
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    span = max(max(xs) - min(xs), max(ys) - min(ys)) or 1.0
    scale = (size - 2 * margin) / span
    x0, y0 = min(xs), min(ys)

    def sx(x: float) -> str:
        return f"{margin + (x - x0) * scale:.2f}"

    def sy(y: float) -> str:
        return f"{size - margin - (y - y0) * scale:.2f}"

    def color_of_cluster(c: int) -> str:
        return PALETTE[c % len(PALETTE)]

    vertex_cluster = {}
    for s in instance.subgroups:
        for v in s.vertex_ids:
            for c in instance.clusters_of[s.id]:
                vertex_cluster[v] = min(c, vertex_cluster.get(v, c))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f"<title>{escape(instance.name)}: reward {solution.reward:g}, cost {solution.cost:.4f}</title>",
        '<rect width="100%" height="100%" fill="white"/>',
        '<g class="hulls">',
    ]
    for s in instance.subgroups:
        if len(s.vertex_ids) < 2:
            continue
        hull = MultiPoint([pts[v] for v in s.vertex_ids]).convex_hull
        color = color_of_cluster(instance.clusters_of[s.id][0])
        style = f'stroke="{color}" stroke-opacity="0.6" data-subgroup="{s.id}"'
        if isinstance(hull, Polygon):
            coords = " ".join(f"{sx(x)},{sy(y)}" for x, y in list(hull.exterior.coords)[:-1])
            out.append(f'<polygon class="hull" points="{coords}" fill="{color}" fill-opacity="0.15" {style}/>')
        elif isinstance(hull, LineString):
            coords = " ".join(f"{sx(x)},{sy(y)}" for x, y in hull.coords)
            out.append(f'<polyline class="hull" points="{coords}" fill="none" stroke-width="8" {style}/>')
    out.append("</g>")

    route = list(solution.route)
    if instance.is_circular and len(route) > 1:
        route.append(route[0])
    coords = " ".join(f"{sx(pts[v][0])},{sy(pts[v][1])}" for v in route)
    out.append(f'<polyline class="route" points="{coords}" fill="none" stroke="#0050ff" stroke-width="2"/>')

    out.append('<g class="vertices">')
    for v, (x, y) in enumerate(pts):
        color = color_of_cluster(vertex_cluster.get(v, 0))
        extra = ' stroke="black" stroke-width="2"' if v == instance.start_vertex else ""
        out.append(f'<circle class="vertex" data-id="{v}" cx="{sx(x)}" cy="{sy(y)}" r="5" fill="{color}"{extra}/>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
