"""Mesh generation, boundary extraction, and volume bookkeeping."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from shapely.geometry import Polygon, box

from ccmopt.errors import ParameterError
from ccmopt.hexmesh import extract_boundary, generate_hex_mesh, volume_fraction


def shapely_honeycomb(nx, ny, lx, ly):
    """Independent row-offset lattice construction via polygon clipping.

    Enumerates hexagon centers directly in physical coordinates and clips
    each cell against the rectangle with shapely.  Used as the oracle for
    node counts, areas, and adjacency on small meshes.
    """
    w = lx / (nx - 0.5)
    h = w / 2.0
    s = ly / (1.5 * ny - 0.5)
    domain = box(0.0, 0.0, lx, ly)
    cells = []
    for row in range(ny):
        cy = 0.5 * s + 1.5 * s * row
        for col in range(nx):
            cx = (col + 0.5) * w if row % 2 == 0 else col * w
            hexagon = Polygon(
                [
                    (cx, cy - s),
                    (cx + h, cy - s / 2),
                    (cx + h, cy + s / 2),
                    (cx, cy + s),
                    (cx - h, cy + s / 2),
                    (cx - h, cy - s / 2),
                ]
            )
            cells.append(hexagon.intersection(domain))
    return cells


def _vertex_key(pt, scale):
    return (round(pt[0] / scale * 1e9), round(pt[1] / scale * 1e9))


class TestGeneration:
    def test_paper_grid_element_count(self):
        mesh = generate_hex_mesh(30, 30, 200.0, 100.0)
        assert mesh.n_elems == 900
        assert mesh.grid_dims == (30, 30)

    def test_single_cell_covers_domain(self):
        mesh = generate_hex_mesh(1, 1, 10.0, 10.0)
        assert mesh.n_elems == 1
        assert mesh.elem_area[0] == pytest.approx(100.0, rel=1e-12)

    def test_two_by_two_matches_lattice_oracle(self):
        mesh = generate_hex_mesh(2, 2, 10.0, 10.0)
        cells = shapely_honeycomb(2, 2, 10.0, 10.0)
        assert mesh.n_elems == 4

        scale = 10.0
        oracle_vertices = set()
        oracle_cells = []
        for poly in cells:
            keys = {_vertex_key(p, scale) for p in poly.exterior.coords[:-1]}
            oracle_cells.append(keys)
            oracle_vertices |= keys
        assert mesh.n_nodes == len(oracle_vertices)

        mesh_cells = [
            {_vertex_key(mesh.nodes[n], scale) for n in conn} for conn in mesh.elements
        ]
        for mc, oc, poly in zip(mesh_cells, oracle_cells, cells):
            assert mc == oc
            e = mesh_cells.index(mc)
            assert mesh.elem_area[e] == pytest.approx(poly.area, rel=1e-9)

        # adjacency: oracle declares neighbors as cells sharing >= 2 vertices
        for a, b in itertools.combinations(range(4), 2):
            oracle_adjacent = len(oracle_cells[a] & oracle_cells[b]) >= 2
            assert (b in mesh.elem_neighbors[a]) == oracle_adjacent

    def test_invalid_parameters_rejected(self):
        with pytest.raises(ParameterError):
            generate_hex_mesh(0, 3, 10.0, 10.0)
        with pytest.raises(ParameterError):
            generate_hex_mesh(3, 3, -1.0, 10.0)

    def test_deterministic(self):
        a = generate_hex_mesh(5, 4, 35.0, 20.0)
        b = generate_hex_mesh(5, 4, 35.0, 20.0)
        assert np.array_equal(a.nodes, b.nodes)
        assert a.elements == b.elements


@pytest.mark.parametrize(
    "nx,ny,lx,ly",
    [(1, 1, 10, 10), (2, 2, 10, 10), (3, 5, 20, 7), (6, 6, 60, 60), (30, 30, 200, 100)],
)
class TestInvariants:
    def test_area_sum_matches_domain(self, nx, ny, lx, ly):
        mesh = generate_hex_mesh(nx, ny, lx, ly)
        assert np.sum(mesh.elem_area) == pytest.approx(lx * ly, rel=1e-9)

    def test_polygons_convex_ccw(self, nx, ny, lx, ly):
        mesh = generate_hex_mesh(nx, ny, lx, ly)
        for conn in mesh.elements:
            assert 4 <= len(conn) <= 6
            assert len(set(conn)) == len(conn)
            pts = mesh.nodes[list(conn)]
            n = len(pts)
            for i in range(n):
                a, b, c = pts[i], pts[(i + 1) % n], pts[(i + 2) % n]
                u, v = b - a, c - b
                assert u[0] * v[1] - u[1] * v[0] > 0  # strictly convex, CCW

    def test_node_sharing_implies_edge_sharing(self, nx, ny, lx, ly):
        mesh = generate_hex_mesh(nx, ny, lx, ly)
        edge_sets = []
        for conn in mesh.elements:
            k = len(conn)
            edge_sets.append(
                {frozenset((conn[i], conn[(i + 1) % k])) for i in range(k)}
            )
        for n_elems in mesh.node_to_elems:
            for a, b in itertools.combinations(n_elems, 2):
                shared_edges = edge_sets[a] & edge_sets[b]
                assert len(shared_edges) == 1
                shared_nodes = set(mesh.elements[a]) & set(mesh.elements[b])
                assert shared_nodes == set(next(iter(shared_edges)))

    def test_node_incidence_degrees(self, nx, ny, lx, ly):
        mesh = generate_hex_mesh(nx, ny, lx, ly)
        lx_, ly_ = mesh.domain_size
        eps = 1e-9 * max(lx_, ly_)
        for n, elems in enumerate(mesh.node_to_elems):
            x, y = mesh.nodes[n]
            on_boundary = min(x, y, lx_ - x, ly_ - y) < eps
            if on_boundary:
                assert 1 <= len(elems) <= 3
            else:
                assert len(elems) == 3


def brute_force_boundary_edges(mesh, active):
    """Undirected edges incident to exactly one active element."""
    count = {}
    for e in active:
        conn = mesh.elements[e]
        k = len(conn)
        for i in range(k):
            key = frozenset((conn[i], conn[(i + 1) % k]))
            count[key] = count.get(key, 0) + 1
    return {k for k, v in count.items() if v == 1}


class TestBoundary:
    def test_full_mesh_single_outer_loop(self):
        mesh = generate_hex_mesh(2, 2, 10.0, 10.0)
        loops = extract_boundary(mesh, range(mesh.n_elems))
        assert len(loops) == 1
        assert loops[0].ccw

    def test_interior_cavity_yields_cw_hole(self):
        mesh = generate_hex_mesh(4, 4, 40.0, 40.0)
        interior = [
            e
            for e in range(mesh.n_elems)
            if len(mesh.elem_neighbors[e]) == 6 and len(mesh.elements[e]) == 6
        ]
        hole = interior[0]
        active = [e for e in range(mesh.n_elems) if e != hole]
        loops = extract_boundary(mesh, active)
        assert len(loops) == 2
        outer = max(loops, key=lambda lp: len(lp.node_indices))
        inner = min(loops, key=lambda lp: len(lp.node_indices))
        assert outer.ccw and not inner.ccw
        assert len(inner.node_indices) == 6
        assert set(inner.node_indices) == set(mesh.elements[hole])

    @given(data=st.data())
    @settings(max_examples=60)
    def test_random_subsets_match_edge_incidence_oracle(self, data):
        mesh = generate_hex_mesh(5, 5, 25.0, 25.0)
        active = data.draw(
            st.sets(st.integers(0, mesh.n_elems - 1), min_size=1, max_size=mesh.n_elems)
        )
        loops = extract_boundary(mesh, active)
        loop_edges = set()
        for lp in loops:
            for a, b in lp.edges():
                loop_edges.add(frozenset((a, b)))
        assert loop_edges == brute_force_boundary_edges(mesh, active)
        # each node appears in exactly one loop, once
        seen = [n for lp in loops for n in lp.node_indices]
        assert len(seen) == len(set(seen))

    def test_empty_active_rejected(self):
        mesh = generate_hex_mesh(2, 2, 10.0, 10.0)
        with pytest.raises(ParameterError):
            extract_boundary(mesh, [])


class TestVolumeFraction:
    def test_extremes(self):
        mesh = generate_hex_mesh(4, 4, 20.0, 20.0)
        assert volume_fraction(mesh, range(mesh.n_elems)) == pytest.approx(1.0, rel=1e-12)
        assert volume_fraction(mesh, []) == 0.0

    def test_half_strip_matches_direct_area_sum(self):
        mesh = generate_hex_mesh(8, 2, 40.0, 10.0)
        half = [e for e in range(mesh.n_elems) if mesh.elem_centroid[e, 0] < 20.0]
        expected = float(np.sum(mesh.elem_area[half])) / (40.0 * 10.0)
        assert volume_fraction(mesh, half) == pytest.approx(expected, rel=1e-12)
        assert abs(volume_fraction(mesh, half) - 0.5) < 0.15  # clipping correction only

    @given(data=st.data())
    def test_additive_over_disjoint_sets(self, data):
        mesh = generate_hex_mesh(4, 3, 12.0, 9.0)
        universe = list(range(mesh.n_elems))
        a = data.draw(st.sets(st.sampled_from(universe)))
        b = data.draw(st.sets(st.sampled_from(universe)))
        b -= a
        total = volume_fraction(mesh, a | b)
        assert total == pytest.approx(
            volume_fraction(mesh, a) + volume_fraction(mesh, b), abs=1e-12
        )
