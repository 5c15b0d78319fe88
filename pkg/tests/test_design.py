"""Mask removal, smoothing, rigid circles, and design validation."""

import math
import random

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from scipy.sparse.csgraph import connected_components
from shapely.geometry import Point, Polygon

from ccmopt.design import (
    DesignBounds,
    DesignVector,
    Mask,
    MechModel,
    apply_masks,
    build_model,
    build_rigid_surfaces,
    corner_support_nodes,
    initial_design,
    main_component,
    nearest_node,
    smooth_boundary,
    two_step_removal,
    validate_design,
)
from ccmopt.errors import InvalidDesignError, ParameterError
from ccmopt.hexmesh import BoundaryLoop, extract_boundary, generate_hex_mesh

BOUNDS = DesignBounds(x=(0.0, 10.0), y=(0.0, 10.0), r=(0.1, 6.0), force=(-1000.0, 1000.0))


@pytest.fixture(scope="module")
def mesh5():
    return generate_hex_mesh(5, 5, 10.0, 10.0)


def mask_strategy(lx=10.0, ly=10.0):
    return st.builds(
        Mask,
        x=st.floats(0.0, lx),
        y=st.floats(0.0, ly),
        r=st.floats(0.3, 6.0),
        s=st.sampled_from([0, 1]),
        f=st.floats(0.1, 0.9),
    )


class TestApplyMasks:
    def test_no_masks(self, mesh5):
        assert apply_masks(mesh5, []) == set()

    def test_giant_mask_removes_all(self, mesh5):
        m = Mask(x=5.0, y=5.0, r=math.hypot(10.0, 10.0), s=0, f=0.5)
        assert apply_masks(mesh5, [m]) == set(range(mesh5.n_elems))

    @given(masks=st.lists(mask_strategy(), max_size=6))
    def test_matches_centroid_scan(self, mesh5, masks):
        expected = {
            e
            for e in range(mesh5.n_elems)
            if any(
                math.dist(mesh5.elem_centroid[e], (m.x, m.y)) < m.r for m in masks
            )
        }
        assert apply_masks(mesh5, masks) == expected

    @given(masks=st.lists(mask_strategy(), max_size=5), extra=mask_strategy())
    def test_monotone_in_mask_list(self, mesh5, masks, extra):
        assert apply_masks(mesh5, masks) <= apply_masks(mesh5, masks + [extra])


class TestSmoothing:
    def test_zero_steps_identity(self, mesh5):
        loops = extract_boundary(mesh5, range(mesh5.n_elems))
        out = smooth_boundary(loops, mesh5.nodes, 0)
        assert np.array_equal(out, mesh5.nodes)

    def test_right_angle_notch_apex_moves_to_midpoint(self):
        # apex (0,0) flanked by straight runs through (0,1) and (1,0)
        coords = np.array(
            [[0.0, 2.0], [0.0, 1.0], [0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [2.0, 2.0]]
        )
        loop = BoundaryLoop(node_indices=(0, 1, 2, 3, 4, 5), ccw=True)
        out = smooth_boundary([loop], coords, 1)
        assert tuple(out[2]) == (0.5, 0.5)
        # settled: more steps leave the apex where its notch was filled
        again = smooth_boundary([loop], coords, 10)
        assert tuple(again[2]) == (0.5, 0.5)

    def test_evenly_spaced_collinear_nodes_are_fixed(self):
        # square outline sampled at unit spacing: edge midpoints must not move
        pts, loop_ids = [], []
        for k in range(3):
            pts.append([float(k), 0.0])
        for k in range(3):
            pts.append([3.0, float(k)])
        for k in range(3):
            pts.append([3.0 - k, 3.0])
        for k in range(3):
            pts.append([0.0, 3.0 - k])
        coords = np.array(pts)
        loop = BoundaryLoop(node_indices=tuple(range(12)), ccw=True)
        out = smooth_boundary([loop], coords, 1)
        for i in (1, 4, 7, 10):  # mid-edge nodes, evenly spaced collinear
            assert np.array_equal(out[i], coords[i])
        for i in (0, 3, 6, 9):  # corners get cut
            assert not np.array_equal(out[i], coords[i])

    def test_interior_nodes_never_move(self, mesh5):
        loops = extract_boundary(mesh5, range(mesh5.n_elems))
        on_loop = {n for lp in loops for n in lp.node_indices}
        out = smooth_boundary(loops, mesh5.nodes, 7)
        for n in range(mesh5.n_nodes):
            if n not in on_loop:
                assert np.array_equal(out[n], mesh5.nodes[n])

    @given(masks=st.lists(mask_strategy(), min_size=1, max_size=4), data=st.data())
    @settings(max_examples=40)
    def test_loop_length_non_increasing_each_step(self, mesh5, masks, data):
        removed = apply_masks(mesh5, masks)
        active = [e for e in range(mesh5.n_elems) if e not in removed]
        if not active:
            return
        loops = extract_boundary(mesh5, active)

        def total_length(coords):
            return sum(
                math.dist(coords[a], coords[b]) for lp in loops for a, b in lp.edges()
            )

        coords = mesh5.nodes
        lengths = [total_length(coords)]
        for _ in range(4):
            coords = smooth_boundary(loops, coords, 1)
            lengths.append(total_length(coords))
        for before, after in zip(lengths, lengths[1:]):
            assert after <= before + 1e-12 * before

    def test_negative_steps_rejected(self, mesh5):
        with pytest.raises(ParameterError):
            smooth_boundary([], mesh5.nodes, -1)


def two_step_oracle(mesh, masks, steps):
    """Independent re-scan: shapely point-polygon distances for overlap."""
    removed = {
        e
        for e in range(mesh.n_elems)
        if any(math.dist(mesh.elem_centroid[e], (m.x, m.y)) < m.r for m in masks)
    }
    active1 = [e for e in range(mesh.n_elems) if e not in removed]
    if not active1:
        raise InvalidDesignError("empty")
    loops1 = extract_boundary(mesh, active1)
    coords1 = smooth_boundary(loops1, mesh.nodes, steps)
    moved = np.any(np.abs(coords1 - mesh.nodes) > 1e-12 * max(mesh.domain_size), axis=1)
    second = set()
    for e in active1:
        if any(moved[n] for n in mesh.elements[e]):
            continue
        poly = Polygon(mesh.nodes[list(mesh.elements[e])])
        if any(Point(m.x, m.y).distance(poly) < m.r for m in masks):
            second.add(e)
    active2 = sorted(set(active1) - second)
    if not active2:
        raise InvalidDesignError("empty")
    loops2 = extract_boundary(mesh, active2, coords1)
    coords2 = smooth_boundary(loops2, coords1, steps)
    return tuple(active2), coords2


class TestTwoStepRemoval:
    def test_no_masks_equals_double_smoothing(self, mesh5):
        active, coords, loops = two_step_removal(mesh5, [], 3)
        assert active == tuple(range(mesh5.n_elems))
        expect = smooth_boundary(
            extract_boundary(mesh5, active), mesh5.nodes, 3
        )
        expect = smooth_boundary(extract_boundary(mesh5, active), expect, 3)
        assert np.allclose(coords, expect, rtol=0, atol=0)

    def test_small_mask_without_centroid_still_bites(self, mesh5):
        # disk at an interior node covers no centroid; pass 2 must remove the
        # elements it touches
        node = nearest_node(mesh5, (5.0, 5.0))
        x, y = mesh5.nodes[node]
        mask = Mask(x=float(x), y=float(y), r=0.4, s=0, f=0.5)
        assert apply_masks(mesh5, [mask]) == set()
        active, _, _ = two_step_removal(mesh5, [mask], 2)
        gone = set(range(mesh5.n_elems)) - set(active)
        assert gone == set(mesh5.node_to_elems[node])

    @given(
        masks=st.lists(mask_strategy(), min_size=1, max_size=5),
        steps=st.integers(0, 3),
    )
    @settings(max_examples=40)
    def test_matches_rescan_oracle(self, mesh5, masks, steps):
        try:
            expect_active, expect_coords = two_step_oracle(mesh5, masks, steps)
        except InvalidDesignError:
            with pytest.raises(InvalidDesignError):
                two_step_removal(mesh5, masks, steps)
            return
        active, coords, _ = two_step_removal(mesh5, masks, steps)
        assert active == expect_active
        assert np.allclose(coords, expect_coords, rtol=0, atol=1e-12)

    def test_all_removed_raises(self, mesh5):
        giant = Mask(x=5.0, y=5.0, r=15.0, s=0, f=0.5)
        with pytest.raises(InvalidDesignError):
            two_step_removal(mesh5, [giant], 2)


class TestRigidSurfaces:
    def test_no_flags_no_surfaces(self):
        masks = [Mask(x=1.0, y=1.0, r=2.0, s=0, f=0.5) for _ in range(3)]
        assert build_rigid_surfaces(masks, 0.02) == []

    def test_radius_fraction(self):
        surf, = build_rigid_surfaces([Mask(x=4.0, y=3.0, r=5.0, s=1, f=0.60)], 0.05)
        assert surf.radius == pytest.approx(3.0, abs=1e-15)
        assert surf.center == (4.0, 3.0)

    @pytest.mark.parametrize("r,tol", [(5.0, 0.05), (2.0, 0.02), (0.1, 0.02), (6.0, 0.5)])
    def test_sagitta_below_tolerance_and_minimal(self, r, tol):
        surf, = build_rigid_surfaces([Mask(x=0.0, y=0.0, r=r, s=1, f=0.6)], tol)
        n = surf.segments.shape[0]
        radius = 0.6 * r
        # vertices on the circle, equal arcs
        d = np.hypot(surf.segments[:, 0], surf.segments[:, 1])
        assert np.allclose(d, radius, rtol=1e-12)
        sagitta = radius * (1.0 - math.cos(math.pi / n))
        assert sagitta <= tol + 1e-12
        if n > 3:
            worse = radius * (1.0 - math.cos(math.pi / (n - 1)))
            assert worse > tol

    def test_ccw_and_closed(self):
        surf, = build_rigid_surfaces([Mask(x=1.0, y=2.0, r=3.0, s=1, f=0.5)], 0.01)
        pts = surf.segments
        x, y = pts[:, 0], pts[:, 1]
        area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        assert area > 0

    def test_order_independent(self):
        masks = [
            Mask(x=1.0, y=1.0, r=2.0, s=1, f=0.3),
            Mask(x=5.0, y=5.0, r=1.0, s=0, f=0.5),
            Mask(x=8.0, y=2.0, r=3.0, s=1, f=0.7),
        ]
        fwd = build_rigid_surfaces(masks, 0.02)
        rev = build_rigid_surfaces(masks[::-1], 0.02)
        assert len(fwd) == len(rev) == 2
        by_center = {s.center: s for s in rev}
        for s in fwd:
            t = by_center[s.center]
            assert t.radius == s.radius
            assert np.array_equal(t.segments, s.segments)

    def test_bad_tolerance(self):
        with pytest.raises(ParameterError):
            build_rigid_surfaces([], 0.0)


def _model_with_active(mesh, active, input_node, output_node, fixed):
    return MechModel(
        mesh=mesh,
        coords=mesh.nodes,
        active=tuple(sorted(active)),
        loops=(),
        rigid_surfaces=(),
        fixed_nodes=tuple(sorted(fixed)),
        input_node=input_node,
        input_dir=(1.0, 0.0),
        output_node=output_node,
    )


def components_oracle(mesh, active):
    active = sorted(active)
    idx = {e: i for i, e in enumerate(active)}
    rows, cols = [], []
    for e in active:
        for nb in mesh.elem_neighbors[e]:
            if nb in idx:
                rows.append(idx[e])
                cols.append(idx[nb])
    graph = sp.coo_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(len(active), len(active))
    )
    _, labels = connected_components(graph, directed=False)
    return {e: int(labels[i]) for e, i in idx.items()}


class TestValidation:
    def test_full_mesh_valid(self, mesh5):
        design = initial_design((2, 2), (10.0, 10.0), BOUNDS, 100.0)
        no_removal = DesignVector(
            masks=tuple(), force=design.force, bounds=BOUNDS
        )
        model = build_model(
            mesh5,
            no_removal,
            input_point=(0.0, 5.0),
            input_dir=(1.0, 0.0),
            output_point=(10.0, 5.0),
            smoothing_steps=2,
            chord_tol=0.02,
        )
        assert validate_design(model) is None

    def test_output_region_removed(self, mesh5):
        killer = DesignVector(
            masks=(Mask(x=10.0, y=5.0, r=2.6, s=0, f=0.5),),
            force=100.0,
            bounds=BOUNDS,
        )
        model = build_model(
            mesh5,
            killer,
            input_point=(0.0, 5.0),
            input_dir=(1.0, 0.0),
            output_point=(10.0, 5.0),
            smoothing_steps=2,
            chord_tol=0.02,
        )
        assert validate_design(model) == "output location lost"

    def test_two_islands_disconnected(self):
        mesh = generate_hex_mesh(4, 1, 20.0, 5.0)
        active = [0, 3]
        model = _model_with_active(
            mesh,
            active,
            input_node=mesh.elements[0][0],
            output_node=mesh.elements[3][0],
            fixed=mesh.elements[0],
        )
        assert validate_design(model) == "disconnected"

    @given(data=st.data())
    @settings(max_examples=60)
    def test_verdict_matches_component_oracle(self, data):
        mesh = generate_hex_mesh(4, 4, 12.0, 12.0)
        active = sorted(
            data.draw(
                st.sets(st.integers(0, mesh.n_elems - 1), min_size=1, max_size=16)
            )
        )
        input_node = data.draw(st.integers(0, mesh.n_nodes - 1))
        output_node = data.draw(st.integers(0, mesh.n_nodes - 1))
        fixed = corner_support_nodes(mesh)
        model = _model_with_active(mesh, active, input_node, output_node, fixed)

        comp = components_oracle(mesh, active)
        active_set = set(active)

        def comps_of_node(n):
            return {comp[e] for e in mesh.node_to_elems[n] if e in active_set}

        support = set()
        for n in fixed:
            support |= comps_of_node(n)
        shared = comps_of_node(input_node) & comps_of_node(output_node) & support
        assert (validate_design(model) is None) == bool(shared)


class TestMainComponent:
    def test_island_dropped_matches_component_oracle(self):
        mesh = generate_hex_mesh(4, 4, 12.0, 12.0)
        # column 0 plus a detached island in the far corner
        active = [e for e in range(mesh.n_elems) if e % 4 == 0] + [15]
        comp = components_oracle(mesh, active)
        input_node = mesh.elements[0][0]
        model = _model_with_active(
            mesh, active, input_node, mesh.elements[8][0], mesh.elements[0]
        )
        restricted = main_component(model)
        want = sorted(e for e in active if comp[e] == comp[0])
        assert list(restricted.active) == want
        assert 15 not in restricted.active
        got_loops = [lp.node_indices for lp in restricted.loops]
        oracle_loops = [
            lp.node_indices for lp in extract_boundary(mesh, want, model.coords)
        ]
        assert got_loops == oracle_loops
        assert restricted.input_node == model.input_node
        assert restricted.fixed_nodes == model.fixed_nodes
        assert restricted.rigid_surfaces == model.rigid_surfaces

    def test_connected_model_returned_unchanged(self, mesh5):
        model = _model_with_active(
            mesh5,
            range(mesh5.n_elems),
            input_node=0,
            output_node=mesh5.n_nodes - 1,
            fixed=mesh5.elements[0],
        )
        assert main_component(model) is model

    def test_lost_input_rejected(self):
        mesh = generate_hex_mesh(4, 1, 20.0, 5.0)
        used = set(mesh.elements[0]) | set(mesh.elements[3])
        orphan = next(n for n in mesh.elements[1] if n not in used)
        model = _model_with_active(
            mesh, [0, 3], input_node=orphan, output_node=0, fixed=mesh.elements[0]
        )
        with pytest.raises(InvalidDesignError):
            main_component(model)


class TestDesignVector:
    def test_array_round_trip(self):
        design = initial_design((3, 2), (10.0, 10.0), BOUNDS, -42.5)
        again = DesignVector.from_array(design.to_array(), BOUNDS)
        assert again == design

    def test_bounds_enforced(self):
        with pytest.raises(ParameterError):
            DesignVector(
                masks=(Mask(x=11.0, y=5.0, r=1.0, s=0, f=0.5),),
                force=0.0,
                bounds=BOUNDS,
            )
        with pytest.raises(ParameterError):
            DesignVector(masks=(), force=1e6, bounds=BOUNDS)

    def test_mask_invariants(self):
        with pytest.raises(ParameterError):
            Mask(x=0.0, y=0.0, r=1.0, s=2, f=0.5)
        with pytest.raises(ParameterError):
            Mask(x=0.0, y=0.0, r=1.0, s=0, f=1.0)

    def test_initial_layout(self):
        design = initial_design((4, 2), (10.0, 8.0), BOUNDS, 100.0)
        assert len(design.masks) == 8
        assert design.masks[0].x == pytest.approx(1.25)
        assert design.masks[0].y == pytest.approx(2.0)
        assert {m.s for m in design.masks} == {0}
        assert all(m.r == pytest.approx(3.05) for m in design.masks)
        assert design.force == 100.0


class TestModelAssembly:
    def test_corner_supports_cover_four_corners(self, mesh5):
        fixed = corner_support_nodes(mesh5)
        pts = mesh5.nodes[list(fixed)]
        lx, ly = mesh5.domain_size
        for corner in ((0, 0), (lx, 0), (lx, ly), (0, ly)):
            assert np.min(np.hypot(pts[:, 0] - corner[0], pts[:, 1] - corner[1])) < 1e-9

    def test_snap_points_to_nodes(self, mesh5):
        n = nearest_node(mesh5, (0.0, 5.0))
        assert np.hypot(*(mesh5.nodes[n] - (0.0, 5.0))) <= np.min(
            np.hypot(mesh5.nodes[:, 0] - 0.0, mesh5.nodes[:, 1] - 5.0)
        )

    def test_zero_direction_rejected(self, mesh5):
        design = DesignVector(masks=(), force=10.0, bounds=BOUNDS)
        with pytest.raises(ParameterError):
            build_model(
                mesh5,
                design,
                input_point=(0.0, 5.0),
                input_dir=(0.0, 0.0),
                output_point=(10.0, 5.0),
                smoothing_steps=1,
                chord_tol=0.02,
            )

    def test_direction_normalized(self, mesh5):
        design = DesignVector(masks=(), force=10.0, bounds=BOUNDS)
        model = build_model(
            mesh5,
            design,
            input_point=(0.0, 5.0),
            input_dir=(3.0, 4.0),
            output_point=(10.0, 5.0),
            smoothing_steps=1,
            chord_tol=0.02,
        )
        assert model.input_dir == pytest.approx((0.6, 0.8))
