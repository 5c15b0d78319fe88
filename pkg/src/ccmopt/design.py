"""Design parameterization: negative circular masks over a honeycomb domain.

A design is a fixed-size list of masks plus a signed input force magnitude.
Masks delete the material they cover, and a mask whose contact flag is set
also spawns a concentric rigid circle that the deforming structure can press
against.  Material removal runs in two passes with boundary smoothing in
between: the first pass deletes elements whose centroids are covered, the
second deletes elements a mask overlaps but smoothing left untouched.  The
second pass lets masks smaller than an element bite, which is how slender
members and controlled volume reduction emerge from few variables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidDesignError, ParameterError
from .hexmesh import BoundaryLoop, HexMesh, extract_boundary


@dataclass(frozen=True)
class Mask:
    """Circular negative mask; (s, f) control the embedded rigid circle."""

    x: float
    y: float
    r: float
    s: int    # contact flag: 1 spawns a rigid circle of radius f*r
    f: float  # rigid circle radius as a fraction of r, in (0, 1)

    def __post_init__(self):
        if self.s not in (0, 1):
            raise ParameterError(f"mask contact flag must be 0 or 1, got {self.s}")
        if not 0.0 < self.f < 1.0:
            raise ParameterError(f"mask radius fraction must lie in (0, 1), got {self.f}")
        if self.r <= 0.0:
            raise ParameterError(f"mask radius must be positive, got {self.r}")


@dataclass(frozen=True)
class DesignBounds:
    """Box constraints for the mutable design variables."""

    x: tuple[float, float]
    y: tuple[float, float]
    r: tuple[float, float]
    force: tuple[float, float]

    def __post_init__(self):
        for name in ("x", "y", "r", "force"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ParameterError(f"empty {name} bound interval [{lo}, {hi}]")
        if self.r[0] <= 0.0:
            raise ParameterError("mask radius lower bound must be positive")


@dataclass(frozen=True)
class DesignVector:
    """All search variables: per-mask (x, y, r, s, f) plus the input force."""

    masks: tuple[Mask, ...]
    force: float
    bounds: DesignBounds

    def __post_init__(self):
        object.__setattr__(self, "masks", tuple(self.masks))
        b = self.bounds
        for i, m in enumerate(self.masks):
            for name, v in (("x", m.x), ("y", m.y), ("r", m.r)):
                lo, hi = getattr(b, name)
                if not lo <= v <= hi:
                    raise ParameterError(f"mask {i}: {name}={v} outside [{lo}, {hi}]")
        lo, hi = b.force
        if not lo <= self.force <= hi:
            raise ParameterError(f"force {self.force} outside [{lo}, {hi}]")

    @property
    def n_vars(self) -> int:
        return 5 * len(self.masks) + 1

    def to_array(self) -> np.ndarray:
        """Flatten to [x0, y0, r0, s0, f0, x1, ..., force]."""
        out = np.empty(self.n_vars)
        for i, m in enumerate(self.masks):
            out[5 * i : 5 * i + 5] = (m.x, m.y, m.r, m.s, m.f)
        out[-1] = self.force
        return out

    @staticmethod
    def from_array(arr, bounds: DesignBounds) -> "DesignVector":
        arr = np.asarray(arr, dtype=float)
        if arr.ndim != 1 or arr.size % 5 != 1:
            raise ParameterError(f"design array must have 5*N+1 entries, got shape {arr.shape}")
        masks = tuple(
            Mask(
                x=float(arr[5 * i]),
                y=float(arr[5 * i + 1]),
                r=float(arr[5 * i + 2]),
                s=int(round(arr[5 * i + 3])),
                f=float(arr[5 * i + 4]),
            )
            for i in range((arr.size - 1) // 5)
        )
        return DesignVector(masks=masks, force=float(arr[-1]), bounds=bounds)


@dataclass(frozen=True)
class RigidSurface:
    """Immovable circular obstacle discretized as a closed CCW polyline.

    ``segments[i] -> segments[(i+1) % n]`` are the polyline edges; the
    sagitta of every edge stays below the chord tolerance it was built with.
    """

    center: tuple[float, float]
    radius: float
    segments: np.ndarray


@dataclass(frozen=True)
class MechModel:
    """Analyzable structure: smoothed geometry, supports, load and probe nodes."""

    mesh: HexMesh
    coords: np.ndarray                 # (n_nodes, 2) smoothed positions
    active: tuple[int, ...]            # surviving element ids, sorted
    loops: tuple[BoundaryLoop, ...]    # boundary of the active region
    rigid_surfaces: tuple[RigidSurface, ...]
    fixed_nodes: tuple[int, ...]       # corner support nodes (full-mesh ids)
    input_node: int
    input_dir: tuple[float, float]     # unit vector; applied force = force * input_dir
    output_node: int


def apply_masks(mesh: HexMesh, masks) -> set[int]:
    """Element ids whose centroid lies strictly inside any mask disk."""
    if not masks:
        return set()
    centers = np.array([[m.x, m.y] for m in masks])
    radii = np.array([m.r for m in masks])
    d2 = np.sum((mesh.elem_centroid[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    hit = np.any(d2 < radii[None, :] ** 2, axis=1)
    return set(np.nonzero(hit)[0].tolist())


def smooth_boundary(loops, node_coords, steps: int) -> np.ndarray:
    """Corner-cutting smoother that subdues V-notches on boundary loops.

    Per step, every loop node sitting at a notch moves to the midpoint of
    its two loop neighbors, all nodes updated simultaneously from the
    previous positions.  A node is at a notch when the boundary turn
    direction oscillates there: its own turn is nonzero and differs from
    the turn of at least one neighbor (a straight run or an opposite bend
    beside it).  Nodes inside a same-direction bending run are fixed
    points - they trace genuine curvature, such as the rim of a hole, not a
    notch - and so are collinear nodes, no matter how unevenly their
    straight run is spaced.  Each node also carries a displacement budget,
    the distance from its starting position to the starting midpoint of its
    neighbors (the depth of its own notch), and never accepts a move beyond
    it.  A notch apex therefore fills its notch exactly and then stops;
    without the budget, midpoint averaging is a contraction map on every
    closed loop and iterating it shrinks small interior holes toward their
    centroids, folding the cells around them inside out.  Every move lands
    on the chord between the node's current neighbors, so total loop length
    is non-increasing step by step.  Interior nodes never move.
    """
    if steps < 0:
        raise ParameterError(f"smoothing step count must be >= 0, got {steps}")
    coords = np.array(node_coords, dtype=float)
    if steps == 0 or not loops:
        return coords
    idx, prv, nxt = [], [], []
    for lp in loops:
        nodes = lp.node_indices
        k = len(nodes)
        for i, n in enumerate(nodes):
            idx.append(n)
            prv.append(nodes[i - 1])
            nxt.append(nodes[(i + 1) % k])
    idx = np.asarray(idx)
    prv = np.asarray(prv)
    nxt = np.asarray(nxt)
    start = coords[idx].copy()
    mid0 = 0.5 * (coords[prv] + coords[nxt])
    budget = np.hypot(*(mid0 - start).T)
    # Two apexes filling symmetric notches can land on the same point and
    # collapse the loop edge between them; no edge may shrink below this
    # share of its length at entry.
    floor = 0.1 * np.hypot(*(coords[nxt] - coords[idx]).T)
    sign = np.zeros(len(coords), dtype=np.int8)
    for _ in range(steps):
        uin = coords[idx] - coords[prv]
        uout = coords[nxt] - coords[idx]
        cross = uin[:, 0] * uout[:, 1] - uin[:, 1] * uout[:, 0]
        lu = np.hypot(uin[:, 0], uin[:, 1])
        lv = np.hypot(uout[:, 0], uout[:, 1])
        si = np.sign(cross) * (np.abs(cross) > 1e-12 * lu * lv)
        sign[idx] = si.astype(np.int8)
        notch = (si != 0) & ((sign[prv] != si) | (sign[nxt] != si))
        mid = 0.5 * (coords[prv] + coords[nxt])
        drift = np.hypot(*(mid - start).T)
        ok = notch & (drift <= budget)
        while True:
            trial = coords.copy()
            trial[idx] = np.where(ok[:, None], mid, coords[idx])
            moved = np.zeros(len(coords), dtype=bool)
            moved[idx] = ok
            short = (
                (np.hypot(*(trial[nxt] - trial[idx]).T) < floor)
                & (moved[idx] | moved[nxt])
            )
            if not short.any():
                break
            vetoed = np.zeros(len(coords), dtype=bool)
            vetoed[idx[short]] = True
            vetoed[nxt[short]] = True
            ok &= ~vetoed[idx]
        coords = trial
    return coords


def _disk_polygon_overlap(centers, radii, verts) -> np.ndarray:
    """Strict overlap test between disks and padded convex CCW polygons.

    centers (P, 2), radii (P,), verts (P, 6, 2) with short polygons padded by
    a repeated last vertex.  Padding adds zero-length edges, which are
    harmless to both the containment and the edge-distance checks.
    """
    a = verts
    b = np.roll(verts, -1, axis=1)
    e = b - a
    ca = centers[:, None, :] - a
    cross = e[:, :, 0] * ca[:, :, 1] - e[:, :, 1] * ca[:, :, 0]
    inside = np.all(cross >= 0.0, axis=1)
    len2 = np.sum(e * e, axis=2)
    t = np.sum(ca * e, axis=2)
    t = np.divide(t, len2, out=np.zeros_like(t), where=len2 > 0.0)
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[:, :, None] * e
    d2 = np.min(np.sum((centers[:, None, :] - closest) ** 2, axis=2), axis=1)
    return inside | (d2 < radii**2)


def _overlapped_untouched(mesh: HexMesh, masks, active, elem_touched) -> set[int]:
    """Active elements some mask overlaps whose nodes smoothing never moved."""
    if not masks:
        return set()
    pool = active[~elem_touched[active]]
    if pool.size == 0:
        return set()
    centers = np.array([[m.x, m.y] for m in masks])
    radii = np.array([m.r for m in masks])
    d = np.sqrt(np.sum((mesh.elem_centroid[pool][:, None, :] - centers[None, :, :]) ** 2, axis=2))
    near_e, near_m = np.nonzero(d < radii[None, :] + mesh.elem_circumradius[pool][:, None])
    if near_e.size == 0:
        return set()
    elems = pool[near_e]
    hit = _disk_polygon_overlap(
        centers[near_m], radii[near_m], mesh.nodes[mesh.elem_vert_pad[elems]]
    )
    return set(elems[hit].tolist())


def two_step_removal(mesh: HexMesh, masks, smoothing_steps: int):
    """Two removal passes with boundary smoothing after each.

    Pass 1 removes every element whose centroid falls inside a mask disk and
    smooths the resulting boundary.  Pass 2 removes the still-active elements
    that a mask disk overlaps but whose nodes pass-1 smoothing left in place,
    then smooths again (continuing from the pass-1 coordinates).  Elements
    reshaped by smoothing are protected, so pass 2 only bites where a mask
    covers material without having carved a hole next to it.

    Returns (active element ids, smoothed node coordinates, boundary loops).
    Raises InvalidDesignError if either pass empties the mesh.
    """
    removed = apply_masks(mesh, masks)
    active1 = np.array(
        [e for e in range(mesh.n_elems) if e not in removed], dtype=np.intp
    )
    if active1.size == 0:
        raise InvalidDesignError("masks removed every element")
    loops1 = extract_boundary(mesh, active1)
    coords1 = smooth_boundary(loops1, mesh.nodes, smoothing_steps)

    lx, ly = mesh.domain_size
    moved = np.any(np.abs(coords1 - mesh.nodes) > 1e-12 * max(lx, ly), axis=1)
    elem_touched = moved[mesh.elem_vert_pad].any(axis=1)
    second = _overlapped_untouched(mesh, masks, active1, elem_touched)
    active2 = np.array(sorted(set(active1.tolist()) - second), dtype=np.intp)
    if active2.size == 0:
        raise InvalidDesignError("second removal pass emptied the mesh")

    loops2 = extract_boundary(mesh, active2, coords1)
    coords2 = smooth_boundary(loops2, coords1, smoothing_steps)
    return tuple(int(e) for e in active2), coords2, tuple(loops2)


def build_rigid_surfaces(masks, chord_tol: float) -> list[RigidSurface]:
    """One rigid circle per mask with its contact flag set.

    Each circle of radius f*r is split into the fewest equal arcs whose
    sagitta stays at or below chord_tol, with at least 3 segments.
    """
    if chord_tol <= 0.0:
        raise ParameterError(f"chord tolerance must be positive, got {chord_tol}")
    out = []
    for m in masks:
        if m.s != 1:
            continue
        radius = m.f * m.r
        arg = max(-1.0, 1.0 - chord_tol / radius)
        n = max(3, math.ceil(math.pi / math.acos(arg)))
        ang = 2.0 * math.pi * np.arange(n) / n
        seg = np.column_stack([m.x + radius * np.cos(ang), m.y + radius * np.sin(ang)])
        seg.setflags(write=False)
        out.append(RigidSurface(center=(m.x, m.y), radius=radius, segments=seg))
    return out


def corner_support_nodes(mesh: HexMesh) -> tuple[int, ...]:
    """Nodes of the element nearest each domain corner, merged and sorted."""
    lx, ly = mesh.domain_size
    fixed: set[int] = set()
    for corner in ((0.0, 0.0), (lx, 0.0), (lx, ly), (0.0, ly)):
        e = int(np.argmin(np.sum((mesh.elem_centroid - corner) ** 2, axis=1)))
        fixed.update(mesh.elements[e])
    return tuple(sorted(fixed))


def nearest_node(mesh: HexMesh, point) -> int:
    """Mesh node closest to a physical point (lowest index wins ties)."""
    d2 = np.sum((mesh.nodes - np.asarray(point, dtype=float)) ** 2, axis=1)
    return int(np.argmin(d2))


def validate_design(model: MechModel) -> str | None:
    """None when the structure is analyzable, else a short reason.

    Flood-fills the active elements through shared edges; the input node,
    output node, and at least one support node must all touch active
    elements of a single component.
    """
    mesh = model.mesh
    active_set = set(model.active)
    comp: dict[int, int] = {}
    cid = 0
    for seed in model.active:
        if seed in comp:
            continue
        comp[seed] = cid
        stack = [seed]
        while stack:
            e = stack.pop()
            for nb in mesh.elem_neighbors[e]:
                if nb in active_set and nb not in comp:
                    comp[nb] = cid
                    stack.append(nb)
        cid += 1

    def node_component(n: int) -> int | None:
        # active elements around one node are always edge-connected, so the
        # first hit decides
        for e in mesh.node_to_elems[n]:
            if e in active_set:
                return comp[e]
        return None

    ci = node_component(model.input_node)
    if ci is None:
        return "input location lost"
    co = node_component(model.output_node)
    if co is None:
        return "output location lost"
    support = {node_component(n) for n in model.fixed_nodes} - {None}
    if not support:
        return "supports lost"
    if ci == co and ci in support:
        return None
    return "disconnected"


def main_component(model: MechModel) -> MechModel:
    """Model restricted to the element component carrying the input node.

    Mask layouts routinely strand material islands that touch nothing; their
    rigid-body modes make the global stiffness exactly singular, so the
    mechanical model keeps only the load-bearing component.  Stranded
    material still counts toward the volume fraction (model.active of the
    unrestricted model), it just never enters the analysis.  Call after
    validate_design, which guarantees the input, output, and a support all
    sit on this component.
    """
    mesh = model.mesh
    active_set = set(model.active)
    seeds = [e for e in mesh.node_to_elems[model.input_node] if e in active_set]
    if not seeds:
        raise InvalidDesignError("input location lost")
    comp = {seeds[0]}
    stack = [seeds[0]]
    while stack:
        e = stack.pop()
        for nb in mesh.elem_neighbors[e]:
            if nb in active_set and nb not in comp:
                comp.add(nb)
                stack.append(nb)
    if comp == active_set:
        return model
    active2 = tuple(sorted(comp))
    loops2 = extract_boundary(mesh, active2, model.coords)
    return MechModel(
        mesh=mesh,
        coords=model.coords,
        active=active2,
        loops=tuple(loops2),
        rigid_surfaces=model.rigid_surfaces,
        fixed_nodes=model.fixed_nodes,
        input_node=model.input_node,
        input_dir=model.input_dir,
        output_node=model.output_node,
    )


def build_model(
    mesh: HexMesh,
    design: DesignVector,
    *,
    input_point,
    input_dir,
    output_point,
    smoothing_steps: int,
    chord_tol: float,
) -> MechModel:
    """Assemble the analyzable structure for one design.

    Load and probe locations are snapped to the nearest full-mesh node once;
    whether those nodes survive removal is judged later by validate_design.
    """
    d = np.asarray(input_dir, dtype=float)
    norm = float(np.hypot(d[0], d[1]))
    if norm == 0.0:
        raise ParameterError("input force direction must be a nonzero vector")
    d = d / norm

    active, coords, loops = two_step_removal(mesh, design.masks, smoothing_steps)
    rigid = build_rigid_surfaces(design.masks, chord_tol)
    coords.setflags(write=False)
    return MechModel(
        mesh=mesh,
        coords=coords,
        active=active,
        loops=loops,
        rigid_surfaces=tuple(rigid),
        fixed_nodes=corner_support_nodes(mesh),
        input_node=nearest_node(mesh, input_point),
        input_dir=(float(d[0]), float(d[1])),
        output_node=nearest_node(mesh, output_point),
    )


def initial_design(grid, domain, bounds: DesignBounds, force: float) -> DesignVector:
    """Uniform starting layout: grid-centered masks, midpoint radii, no circles."""
    nxm, nym = grid
    if nxm < 1 or nym < 1:
        raise ParameterError(f"mask grid must be at least 1x1, got {nxm}x{nym}")
    lx, ly = domain
    r0 = 0.5 * (bounds.r[0] + bounds.r[1])
    masks = tuple(
        Mask(x=(i + 0.5) * lx / nxm, y=(j + 0.5) * ly / nym, r=r0, s=0, f=0.5)
        for j in range(nym)
        for i in range(nxm)
    )
    return DesignVector(masks=masks, force=force, bounds=bounds)
