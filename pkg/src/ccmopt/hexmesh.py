"""Honeycomb discretization of a rectangular design domain.

The rectangle [0, Lx] x [0, Ly] is tiled by nx*ny hexagonal cells arranged in
ny horizontal rows of nx cells.  Adjacent rows interlock with a half-cell
horizontal offset.  The offset is absorbed at the domain sides by clipping one
cell per row to a half hexagon (even rows at the right edge, odd rows at the
left edge), and the bottom/top rows lose their outward-pointing tips, so every
cell is a convex polygon with 4 to 6 vertices and the tiling covers the
rectangle exactly.

All vertices live on the integer lattice (ix * hx, iy * hy) with
hx = Lx / (2*nx - 1) and hy = Ly / (3*ny - 1).  Cell construction and
clipping are done in integer lattice units, so node identification between
neighboring cells is exact and mesh generation is bit-deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ParameterError

IntPoint = tuple[int, int]


@dataclass(frozen=True)
class BoundaryLoop:
    """Closed polyline over mesh nodes (first node not repeated at the end).

    ``ccw`` is True for outer loops, False for hole loops.  Directed edges of
    a loop always keep the active material on their left.
    """

    node_indices: tuple[int, ...]
    ccw: bool

    def edges(self) -> Iterable[tuple[int, int]]:
        n = len(self.node_indices)
        for i in range(n):
            yield self.node_indices[i], self.node_indices[(i + 1) % n]


@dataclass(frozen=True)
class HexMesh:
    """Immutable honeycomb mesh of a rectangular domain."""

    nodes: np.ndarray                           # (n_nodes, 2) mm
    elements: tuple[tuple[int, ...], ...]       # CCW node ids, 4-6 per cell
    elem_centroid: np.ndarray                   # (n_elem, 2) mm
    elem_area: np.ndarray                       # (n_elem,) mm^2
    elem_neighbors: tuple[tuple[int, ...], ...]  # edge-adjacent elements
    node_to_elems: tuple[tuple[int, ...], ...]
    domain_size: tuple[float, float]
    grid_dims: tuple[int, int]
    # vectorization helpers: node ids padded to 6 by repeating the last
    # vertex, true vertex counts, and centroid-to-vertex radii
    elem_vert_pad: np.ndarray = field(repr=False, default=None)   # (n_elem, 6) int
    elem_nvert: np.ndarray = field(repr=False, default=None)      # (n_elem,) int
    elem_circumradius: np.ndarray = field(repr=False, default=None)  # (n_elem,) mm
    # (min_node, max_node) -> (elem ids...); shared helper for boundary walks
    edge_elems: dict[tuple[int, int], tuple[int, ...]] = field(repr=False, default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elems(self) -> int:
        return len(self.elements)


def _polygon_area_centroid(pts: np.ndarray) -> tuple[float, np.ndarray]:
    """Signed shoelace area and area centroid of a simple polygon."""
    x, y = pts[:, 0], pts[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * float(np.sum(cross))
    if abs(area) < 1e-300:
        return 0.0, pts.mean(axis=0)
    cx = float(np.sum((x + xn) * cross)) / (6.0 * area)
    cy = float(np.sum((y + yn) * cross)) / (6.0 * area)
    return area, np.array([cx, cy])


def _clip_halfplane(poly: list[IntPoint], axis: int, bound: int, keep_le: bool) -> list[IntPoint]:
    """Sutherland-Hodgman clip of an integer polygon against an axis line.

    Clip lines always pass through lattice points of the honeycomb, so every
    intersection lands on the integer lattice; this is asserted.
    """
    out: list[IntPoint] = []
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        a_in = a[axis] <= bound if keep_le else a[axis] >= bound
        b_in = b[axis] <= bound if keep_le else b[axis] >= bound
        if a_in and (not out or out[-1] != a):
            out.append(a)
        if a_in != b_in:
            den = b[axis] - a[axis]
            num = bound - a[axis]
            pt = []
            for c in range(2):
                val, rem = divmod(a[c] * den + (b[c] - a[c]) * num, den)
                assert rem == 0, "clip intersection off the lattice"
                pt.append(val)
            p = (pt[0], pt[1])
            if not out or out[-1] != p:
                out.append(p)
    if len(out) > 1 and out[0] == out[-1]:
        out.pop()
    return out


def _cell_lattice_polygon(row: int, col: int, nx: int, ny: int) -> list[IntPoint]:
    """Integer-lattice polygon of cell (row, col), clipped to the domain."""
    icx = 2 * col + 1 if row % 2 == 0 else 2 * col
    iy0 = 3 * row
    poly: list[IntPoint] = [
        (icx, iy0 - 1),      # bottom tip
        (icx + 1, iy0),      # lower right
        (icx + 1, iy0 + 2),  # upper right
        (icx, iy0 + 3),      # top tip
        (icx - 1, iy0 + 2),  # upper left
        (icx - 1, iy0),      # lower left
    ]
    for axis, bound, keep_le in (
        (0, 0, False),
        (0, 2 * nx - 1, True),
        (1, 0, False),
        (1, 3 * ny - 1, True),
    ):
        poly = _clip_halfplane(poly, axis, bound, keep_le)
    return poly


def generate_hex_mesh(nx: int, ny: int, lx: float, ly: float) -> HexMesh:
    """Generate the nx*ny honeycomb tiling of [0, lx] x [0, ly]."""
    if nx < 1 or ny < 1:
        raise ParameterError(f"element counts must be >= 1, got {nx}x{ny}")
    if lx <= 0 or ly <= 0:
        raise ParameterError(f"domain dimensions must be positive, got {lx}x{ly}")

    hx = lx / (2 * nx - 1)
    hy = ly / (3 * ny - 1)

    node_id: dict[IntPoint, int] = {}
    node_coords: list[IntPoint] = []
    elements: list[tuple[int, ...]] = []

    for row in range(ny):
        for col in range(nx):
            poly = _cell_lattice_polygon(row, col, nx, ny)
            conn = []
            for p in poly:
                idx = node_id.get(p)
                if idx is None:
                    idx = len(node_coords)
                    node_id[p] = idx
                    node_coords.append(p)
                conn.append(idx)
            elements.append(tuple(conn))

    lattice = np.asarray(node_coords, dtype=float)
    nodes = np.column_stack([lattice[:, 0] * hx, lattice[:, 1] * hy])

    n_elem = len(elements)
    centroids = np.empty((n_elem, 2))
    areas = np.empty(n_elem)
    for e, conn in enumerate(elements):
        area, cen = _polygon_area_centroid(nodes[list(conn)])
        assert area > 0, "cell polygon must be CCW with positive area"
        areas[e] = area
        centroids[e] = cen

    edge_elems: dict[tuple[int, int], list[int]] = {}
    for e, conn in enumerate(elements):
        k = len(conn)
        for i in range(k):
            a, b = conn[i], conn[(i + 1) % k]
            edge_elems.setdefault((min(a, b), max(a, b)), []).append(e)

    neighbors: list[list[int]] = [[] for _ in range(n_elem)]
    for elems in edge_elems.values():
        if len(elems) == 2:
            neighbors[elems[0]].append(elems[1])
            neighbors[elems[1]].append(elems[0])

    node_elems: list[list[int]] = [[] for _ in range(len(nodes))]
    for e, conn in enumerate(elements):
        for n in conn:
            node_elems[n].append(e)

    vert_pad = np.empty((n_elem, 6), dtype=np.intp)
    nvert = np.empty(n_elem, dtype=np.intp)
    for e, conn in enumerate(elements):
        k = len(conn)
        nvert[e] = k
        vert_pad[e, :k] = conn
        vert_pad[e, k:] = conn[-1]
    circum = np.sqrt(
        np.max(np.sum((nodes[vert_pad] - centroids[:, None, :]) ** 2, axis=2), axis=1)
    )

    for arr in (nodes, centroids, areas, vert_pad, nvert, circum):
        arr.setflags(write=False)

    return HexMesh(
        nodes=nodes,
        elements=tuple(elements),
        elem_centroid=centroids,
        elem_area=areas,
        elem_neighbors=tuple(tuple(sorted(nb)) for nb in neighbors),
        node_to_elems=tuple(tuple(ne) for ne in node_elems),
        domain_size=(float(lx), float(ly)),
        grid_dims=(nx, ny),
        edge_elems={k: tuple(v) for k, v in edge_elems.items()},
        elem_vert_pad=vert_pad,
        elem_nvert=nvert,
        elem_circumradius=circum,
    )


def extract_boundary(mesh: HexMesh, active: Iterable[int], coords: np.ndarray | None = None) -> list[BoundaryLoop]:
    """Loops of edges that belong to exactly one active element.

    Orientation follows the owning element's CCW polygon, so outer loops come
    out CCW and hole loops CW; either way the active material lies on the
    left of every directed edge.  ``coords`` (defaults to the mesh nodes) is
    only used to decide the ccw flag of each loop.
    """
    active_set = set(int(a) for a in active)
    if not active_set:
        raise ParameterError("active element set must be non-empty")
    if coords is None:
        coords = mesh.nodes

    succ: dict[int, int] = {}
    for e in active_set:
        conn = mesh.elements[e]
        k = len(conn)
        for i in range(k):
            a, b = conn[i], conn[(i + 1) % k]
            owners = mesh.edge_elems[(min(a, b), max(a, b))]
            n_active = sum(1 for o in owners if o in active_set)
            if n_active == 1:
                # honeycomb vertices carry at most one outgoing boundary edge
                assert a not in succ, "non-manifold boundary node"
                succ[a] = b

    loops: list[BoundaryLoop] = []
    visited: set[int] = set()
    for start in sorted(succ):
        if start in visited:
            continue
        loop = [start]
        visited.add(start)
        cur = succ[start]
        while cur != start:
            loop.append(cur)
            visited.add(cur)
            cur = succ[cur]
        area, _ = _polygon_area_centroid(coords[loop])
        loops.append(BoundaryLoop(node_indices=tuple(loop), ccw=area > 0))
    return loops


def volume_fraction(mesh: HexMesh, active: Iterable[int]) -> float:
    """Active material area over total domain area."""
    idx = list(active)
    if not idx:
        return 0.0
    lx, ly = mesh.domain_size
    return float(np.sum(mesh.elem_area[idx])) / (lx * ly)
