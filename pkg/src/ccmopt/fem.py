"""Large-deformation finite elements on polygonal (hexagon-dominant) cells.

Kinematics are plane strain with a compressible neo-Hookean energy

    W(F) = mu/2 (I1 - 2) - mu ln J + lambda/2 (ln J)^2,

whose stress and consistent tangent are assembled with mean-value-coordinate
shape functions integrated by a centroid-fan of triangles with 3-point Gauss
rules.  Shape function values and reference gradients are precomputed per
model, so each Newton iteration is a handful of einsums plus one sparse
factorization.  Internal forces evaluate the first Piola-Kirchhoff stress
against reference gradients; this is algebraically identical to integrating
the Cauchy stress against current-configuration gradients, just cheaper.

The solver applies the external load in equal increments, halving an
increment (up to a cap) when Newton stalls or an element inverts, and records
the output-node position after each scheduled increment.  Contact enters
through a duck-typed context providing penalty forces/tangents inside the
Newton loop and multiplier updates in an outer loop per load step.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import AnalysisFailure, ElementError, ParameterError

# barycentric stations and weights of the degree-2 triangle rule
_TRI_PTS = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])
_TRI_WTS = np.array([1 / 3, 1 / 3, 1 / 3])


@dataclass(frozen=True)
class Material:
    """Isotropic hyperelastic material, plane strain."""

    E: float
    nu: float

    def __post_init__(self):
        if self.E <= 0:
            raise ParameterError(f"Young's modulus must be positive, got {self.E}")
        if not 0.0 <= self.nu < 0.5:
            raise ParameterError(f"Poisson's ratio must lie in [0, 0.5), got {self.nu}")

    @property
    def mu(self) -> float:
        return self.E / (2.0 * (1.0 + self.nu))

    @property
    def lam(self) -> float:
        return self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))


@dataclass(frozen=True)
class OutputPath:
    """Output-node positions: undeformed start plus one point per load step."""

    points: np.ndarray


@dataclass
class SolverState:
    """Result of an incremental solve.

    Keeps references to the discretization and contact context it was
    produced with, so callers can evaluate residuals, gaps and diagnostics
    at the converged displacement.
    """

    u: np.ndarray                    # (2n,) nodal displacements, fixed dofs zero
    load_step: int
    lagrange: np.ndarray | None
    converged: bool
    output_trace: OutputPath | None
    fem: "FEModel | None" = None
    contact: object | None = None
    u_steps: tuple | None = None     # converged u after each scheduled step


def mvc_batch(verts: np.ndarray, pts: np.ndarray):
    """Mean value coordinates and gradients at batched interior points.

    verts (..., k, 2) polygon vertices, pts (..., 2) evaluation points
    broadcast against the leading axes.  Returns (N, G) with shapes
    (..., k) and (..., k, 2); G are derivatives with respect to the point.
    """
    e = verts - pts[..., None, :]                      # (..., k, 2)
    r = np.sqrt(np.sum(e * e, axis=-1))                # (..., k)
    if np.any(r < 1e-14):
        raise ElementError("shape function point coincides with a vertex")
    e_n = np.roll(e, -1, axis=-2)
    r_n = np.roll(r, -1, axis=-1)
    cross = e[..., 0] * e_n[..., 1] - e[..., 1] * e_n[..., 0]
    dot = np.sum(e * e_n, axis=-1)
    if np.any(np.abs(cross) < 1e-14 * r * r_n):
        raise ElementError("shape function point lies on an edge line")
    num = r * r_n - dot
    t = num / cross

    dr = -e / r[..., None]
    dcross = np.stack([e[..., 1] - e_n[..., 1], e_n[..., 0] - e[..., 0]], axis=-1)
    ddot = -(e + e_n)
    dnum = r_n[..., None] * dr + r[..., None] * np.roll(dr, -1, axis=-2) - ddot
    dt = (dnum * cross[..., None] - num[..., None] * dcross) / (cross**2)[..., None]

    w = (np.roll(t, 1, axis=-1) + t) / r
    dw = (np.roll(dt, 1, axis=-2) + dt) / r[..., None] + (w / r**2)[..., None] * e
    wsum = np.sum(w, axis=-1, keepdims=True)
    N = w / wsum
    G = (dw - N[..., None] * np.sum(dw, axis=-2, keepdims=True)) / wsum[..., None]
    return N, G


def shape_functions(polygon, point):
    """Shape values and gradients at one point of one polygon.

    Interior points get mean value coordinates with analytic gradients.
    A point at a vertex returns the one-hot interpolation values with
    gradients None; points elsewhere on the boundary are rejected.
    """
    verts = np.asarray(polygon, dtype=float)
    p = np.asarray(point, dtype=float)
    if verts.ndim != 2 or verts.shape[0] < 3 or verts.shape[1] != 2:
        raise ElementError(f"polygon must be (k>=3, 2), got {verts.shape}")
    d = np.sqrt(np.sum((verts - p) ** 2, axis=1))
    scale = float(np.max(d))
    if scale == 0.0:
        raise ElementError("degenerate polygon")
    hit = d < 1e-12 * scale
    if np.any(hit):
        N = np.zeros(verts.shape[0])
        N[int(np.argmax(hit))] = 1.0
        return N, None
    N, G = mvc_batch(verts[None, :, :], p[None, :])
    return N[0], G[0]


def _polygon_centroid(verts: np.ndarray):
    """Area centroids of batched closed polygons (..., k, 2)."""
    x, y = verts[..., 0], verts[..., 1]
    xn, yn = np.roll(x, -1, axis=-1), np.roll(y, -1, axis=-1)
    cr = x * yn - xn * y
    area = 0.5 * np.sum(cr, axis=-1)
    cx = np.sum((x + xn) * cr, axis=-1) / (6.0 * area)
    cy = np.sum((y + yn) * cr, axis=-1) / (6.0 * area)
    return np.stack([cx, cy], axis=-1), area


@dataclass
class ElementGroup:
    """All active elements with the same vertex count, batched."""

    k: int
    conn: np.ndarray     # (E, k) compact node ids
    qw: np.ndarray       # (E, Q) quadrature weights (area measure)
    shape: np.ndarray    # (E, Q, k)
    grad: np.ndarray     # (E, Q, k, 2) reference gradients
    dof: np.ndarray      # (E, 2k) global dof ids, (node, component) fastest
    rows: np.ndarray = field(repr=False, default=None)
    cols: np.ndarray = field(repr=False, default=None)
    gg: np.ndarray = field(repr=False, default=None)  # (E, k, k) weighted grad-grad


@dataclass
class FEModel:
    """Discretization over the active part of a design."""

    coords: np.ndarray             # (n, 2) compact reference coordinates
    groups: list[ElementGroup]
    free: np.ndarray               # (2n,) bool, False at constrained dofs
    compact_of_full: np.ndarray    # full node id -> compact id or -1
    full_of_compact: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def n_dof(self) -> int:
        return 2 * self.coords.shape[0]

    def node_dofs(self, compact_node: int) -> tuple[int, int]:
        return 2 * compact_node, 2 * compact_node + 1


def build_fe_model(coords, elements, active, fixed) -> FEModel:
    """Compact the active region and precompute quadrature and shape data.

    coords: (n_full, 2) node positions; elements: sequence of CCW node-id
    tuples; active: iterable of element ids; fixed: iterable of
    (full node id, component) pairs to constrain to zero.
    """
    active = sorted(set(int(a) for a in active))
    if not active:
        raise ParameterError("no active elements")
    coords = np.asarray(coords, dtype=float)

    used = sorted({n for e in active for n in elements[e]})
    compact_of_full = np.full(coords.shape[0], -1, dtype=np.intp)
    compact_of_full[used] = np.arange(len(used))
    full_of_compact = np.asarray(used, dtype=np.intp)
    ccoords = coords[full_of_compact]

    free = np.ones(2 * len(used), dtype=bool)
    for node, comp in fixed:
        c = compact_of_full[node]
        if c >= 0:
            free[2 * c + comp] = False

    groups: list[ElementGroup] = []
    by_k: dict[int, list[int]] = {}
    for e in active:
        by_k.setdefault(len(elements[e]), []).append(e)

    for k, elems in sorted(by_k.items()):
        conn = np.array([[compact_of_full[n] for n in elements[e]] for e in elems])
        verts = ccoords[conn]                                   # (E, k, 2)
        cen, _ = _polygon_centroid(verts)
        v_a = verts
        v_b = np.roll(verts, -1, axis=1)
        tri_area = 0.5 * (
            (v_a[..., 0] - cen[:, None, 0]) * (v_b[..., 1] - cen[:, None, 1])
            - (v_a[..., 1] - cen[:, None, 1]) * (v_b[..., 0] - cen[:, None, 0])
        )
        if np.any(tri_area <= 0.0):
            raise ElementError("cell not star-shaped around its centroid")
        # fan triangle (centroid, v_a, v_b), 3 Gauss points each
        b = _TRI_PTS                                            # (3, 3)
        qp = (
            b[:, 0][None, None, :, None] * cen[:, None, None, :]
            + b[:, 1][None, None, :, None] * v_a[:, :, None, :]
            + b[:, 2][None, None, :, None] * v_b[:, :, None, :]
        )                                                       # (E, k, 3, 2)
        qw = tri_area[:, :, None] * _TRI_WTS[None, None, :]     # (E, k, 3)
        E_n = len(elems)
        qp = qp.reshape(E_n, 3 * k, 2)
        qw = qw.reshape(E_n, 3 * k)

        N, G = mvc_batch(verts[:, None, :, :], qp)
        if not (np.all(np.isfinite(N)) and np.all(np.isfinite(G))):
            raise ElementError("degenerate cell geometry")
        punity = np.max(np.abs(np.sum(N, axis=-1) - 1.0))
        lincomp = np.max(np.abs(np.einsum("eqk,ekx->eqx", N, verts) - qp))
        if punity > 1e-9 or lincomp > 1e-9 * float(np.max(np.abs(verts))):
            raise ElementError("shape functions failed consistency checks")

        dof = (2 * conn[:, :, None] + np.arange(2)[None, None, :]).reshape(E_n, 2 * k)
        rows = np.repeat(dof, 2 * k, axis=1).ravel()
        cols = np.tile(dof, (1, 2 * k)).ravel()
        gg = np.einsum("eq,eqaJ,eqbJ->eab", qw, G, G)
        groups.append(
            ElementGroup(
                k=k, conn=conn, qw=qw, shape=N, grad=G, dof=dof, rows=rows, cols=cols, gg=gg
            )
        )

    return FEModel(
        coords=ccoords,
        groups=groups,
        free=free,
        compact_of_full=compact_of_full,
        full_of_compact=full_of_compact,
    )


def _def_grad(group: ElementGroup, u: np.ndarray):
    """Deformation gradient, its determinant and inverse transpose per qp."""
    ue = u.reshape(-1, 2)[group.conn]                           # (E, k, 2)
    F = np.einsum("eki,eqkJ->eqiJ", ue, group.grad)
    F[..., 0, 0] += 1.0
    F[..., 1, 1] += 1.0
    J = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    if np.any(J <= 0.0):
        raise ElementError("element inversion (non-positive Jacobian)")
    invT = np.empty_like(F)
    invT[..., 0, 0] = F[..., 1, 1]
    invT[..., 1, 1] = F[..., 0, 0]
    invT[..., 0, 1] = -F[..., 1, 0]
    invT[..., 1, 0] = -F[..., 0, 1]
    invT /= J[..., None, None]
    return F, J, invT


def cauchy_stress(material: Material, F) -> np.ndarray:
    """Cauchy stress of the plane-strain neo-Hookean law for one 2x2 F."""
    F = np.asarray(F, dtype=float)
    J = F[0, 0] * F[1, 1] - F[0, 1] * F[1, 0]
    if J <= 0.0:
        raise ElementError(f"non-positive Jacobian {J}")
    b = F @ F.T
    mu, lam = material.mu, material.lam
    return (mu / J) * (b - np.eye(2)) + (lam * np.log(J) / J) * np.eye(2)


def strain_energy_density(material: Material, F) -> float:
    F = np.asarray(F, dtype=float)
    J = F[0, 0] * F[1, 1] - F[0, 1] * F[1, 0]
    if J <= 0.0:
        raise ElementError(f"non-positive Jacobian {J}")
    I1 = float(np.sum(F * F))
    lnJ = np.log(J)
    return 0.5 * material.mu * (I1 - 2.0) - material.mu * lnJ + 0.5 * material.lam * lnJ**2


def strain_energy(fem: FEModel, material: Material, u: np.ndarray) -> float:
    mu, lam = material.mu, material.lam
    total = 0.0
    for g in fem.groups:
        F, J, _ = _def_grad(g, u)
        I1 = np.einsum("eqij,eqij->eq", F, F)
        lnJ = np.log(J)
        W = 0.5 * mu * (I1 - 2.0) - mu * lnJ + 0.5 * lam * lnJ**2
        total += float(np.sum(g.qw * W))
    return total


def internal_force(fem: FEModel, material: Material, u: np.ndarray) -> np.ndarray:
    """Assembled gradient of the strain energy (same quadrature, exactly)."""
    mu, lam = material.mu, material.lam
    f = np.zeros(fem.n_dof)
    for g in fem.groups:
        F, J, invT = _def_grad(g, u)
        P = mu * (F - invT) + lam * np.log(J)[..., None, None] * invT
        # fe[a, i] = sum_{q, J} qw G[q, a, J] P[q, i, J], contracted as one
        # batched matmul over the flattened (q, J) axis
        E_n, Q, k, _ = g.grad.shape
        G2 = g.grad.transpose(0, 2, 1, 3).reshape(E_n, k, 2 * Q)
        Pw = (P * g.qw[:, :, None, None]).transpose(0, 1, 3, 2).reshape(E_n, 2 * Q, 2)
        fe = np.matmul(G2, Pw)
        np.add.at(f, g.dof, fe.reshape(E_n, -1))
    return f


def tangent_stiffness(fem: FEModel, material: Material, u: np.ndarray) -> sp.csr_matrix:
    """Consistent linearization of internal_force (symmetric).

    The three contributions per element are the constant grad-grad block
    (precomputed at model build), the geometric term w (mu - lam lnJ)
    D[a,j] D[b,i] and the volumetric term lam w D[a,i] D[b,j]; both
    u-dependent terms reduce to batched rank-Q matrix products of the
    flattened D, with an axis shuffle supplying the (a,j)(b,i) pairing.
    """
    mu, lam = material.mu, material.lam
    ndof = fem.n_dof
    vals, rows, cols = [], [], []
    for g in fem.groups:
        _, J, invT = _def_grad(g, u)
        lnJ = np.log(J)
        D = np.einsum("eqaJ,eqiJ->eqai", g.grad, invT)          # (E, Q, k, 2)
        E_n, k = g.conn.shape
        V = D.reshape(E_n, -1, 2 * k)
        w2 = (g.qw * (mu - lam * lnJ))[:, :, None]
        K = (
            np.matmul((V * w2).transpose(0, 2, 1), V)
            .reshape(E_n, k, 2, k, 2)
            .transpose(0, 1, 4, 3, 2)
            .copy()
        )
        w3 = (lam * g.qw)[:, :, None]
        K += np.matmul((V * w3).transpose(0, 2, 1), V).reshape(E_n, k, 2, k, 2)
        m1 = mu * g.gg
        K[:, :, 0, :, 0] += m1
        K[:, :, 1, :, 1] += m1
        vals.append(K.reshape(E_n, 2 * k, 2 * k).ravel())
        rows.append(g.rows)
        cols.append(g.cols)
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(ndof, ndof),
    )
    return mat.tocsr()


class _StepFailure(Exception):
    """Internal: one load sub-increment did not converge."""


def _inner_newton(fem, material, u, f_ext_step, contact, tol_r, max_iter, floor):
    """Newton iterations at fixed load and fixed contact multipliers."""
    free = fem.free
    fnorm = float(np.linalg.norm(f_ext_step[free]))
    scale = max(fnorm, floor)
    best = np.inf
    stall = 0
    for it in range(max_iter):
        try:
            f_int = internal_force(fem, material, u)
        except ElementError as exc:
            raise _StepFailure(str(exc)) from exc
        if contact is not None:
            try:
                f_c, K_c = contact.assemble(u)
            except (ElementError, AnalysisFailure) as exc:
                raise _StepFailure(str(exc)) from exc
            r = f_int + f_c - f_ext_step
        else:
            K_c = None
            r = f_int - f_ext_step
        rnorm = float(np.linalg.norm(r[free]))
        if it == 0:
            r0 = rnorm
            if fnorm == 0.0:
                # no external load (e.g. settling initial contact): measure
                # convergence against the starting residual instead
                scale = max(rnorm, floor)
        if not np.isfinite(rnorm) or rnorm > 1e4 * max(scale, r0):
            # exponential blowup never recovers; bail before the
            # iteration budget so failed candidates stay cheap
            raise _StepFailure("residual diverged")
        if rnorm <= tol_r * scale:
            return
        if rnorm < best * (1.0 - 1e-3):
            best = rnorm
            stall = 0
        else:
            # near a limit point the residual oscillates in a narrow band
            # instead of blowing up; a healthy Newton path improves its
            # running minimum almost every iteration, so a long flat tail
            # means this step will never converge
            stall += 1
            if stall >= 8:
                raise _StepFailure("residual stalled")
        try:
            K = tangent_stiffness(fem, material, u)
        except ElementError as exc:
            raise _StepFailure(str(exc)) from exc
        if K_c is not None:
            K = K + K_c
        K_ff = K[free][:, free]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            du = spsolve(K_ff.tocsc(), -r[free])
        if not np.all(np.isfinite(du)):
            raise _StepFailure("singular tangent system")
        u[free] += du
    raise _StepFailure("Newton iteration limit reached")


def newton_solve(
    fem: FEModel,
    material: Material,
    f_ext: np.ndarray,
    n_steps: int,
    contact=None,
    *,
    output_node: int | None = None,
    tol_r: float = 1e-8,
    max_iter: int = 25,
    max_halvings: int = 4,
    record_steps: bool = False,
) -> SolverState:
    """Apply f_ext in n_steps equal increments with adaptive sub-stepping.

    Per scheduled increment the Newton loop runs at frozen contact
    multipliers; after convergence the multipliers update and the loop
    repeats until the maximum penetration drops below the contact tolerance.
    Failures halve the current sub-increment (at most max_halvings times per
    scheduled step) and roll displacement and multipliers back.
    """
    if n_steps < 1:
        raise ParameterError(f"need at least one load step, got {n_steps}")
    f_ext = np.asarray(f_ext, dtype=float)
    if f_ext.shape != (fem.n_dof,):
        raise ParameterError("external force vector has wrong length")

    u = np.zeros(fem.n_dof)
    trace = None
    if output_node is not None:
        trace = [fem.coords[output_node].copy()]
    steps_rec = [] if record_steps else None

    # absolute residual floor: keeps the relative criterion attainable when
    # the applied load is many orders below the stiffness scale
    extent = float(np.max(np.ptp(fem.coords, axis=0)))
    floor = 1e-12 * material.E * max(extent, 1e-30)

    lam = 0.0
    for step in range(n_steps):
        target = (step + 1) / n_steps
        halvings = 0
        dlam = target - lam
        while lam < target - 1e-12:
            dlam = min(dlam, target - lam)
            u_save = u.copy()
            c_save = contact.snapshot() if contact is not None else None
            try:
                _advance(fem, material, u, (lam + dlam) * f_ext, contact, tol_r, max_iter, floor)
            except _StepFailure as exc:
                u = u_save
                if contact is not None:
                    contact.restore(c_save)
                halvings += 1
                if halvings > max_halvings:
                    raise AnalysisFailure(
                        f"load step {step + 1} failed after {max_halvings} halvings: {exc}"
                    ) from exc
                dlam *= 0.5
                continue
            lam += dlam
        if trace is not None:
            trace.append(fem.coords[output_node] + u[2 * output_node : 2 * output_node + 2])
        if steps_rec is not None:
            steps_rec.append(u.copy())

    return SolverState(
        u=u,
        load_step=n_steps,
        lagrange=contact.multipliers() if contact is not None else None,
        converged=True,
        output_trace=OutputPath(points=np.array(trace)) if trace is not None else None,
        fem=fem,
        contact=contact,
        u_steps=tuple(steps_rec) if steps_rec is not None else None,
    )


def _advance(fem, material, u, f_ext_step, contact, tol_r, max_iter, floor):
    """One sub-increment: inner Newton plus multiplier (outer) iterations.

    The contact loop stops only when penetration AND the gap under every
    retained multiplier are within tolerance, i.e. loaded points sit on the
    master surface and no unloaded point overlaps.  Both are checked before
    a multiplier update, so the state returned is an equilibrium of the
    multipliers it was solved with.
    """
    _inner_newton(fem, material, u, f_ext_step, contact, tol_r, max_iter, floor)
    if contact is None:
        return

    def _settled():
        return (
            contact.penetration(u) <= contact.g_tol
            and contact.complementarity(u) <= contact.g_tol
        )

    try:
        for _ in range(contact.max_outer):
            if _settled():
                return
            contact.update(u)
            _inner_newton(fem, material, u, f_ext_step, contact, tol_r, max_iter, floor)
        if _settled():
            return
    except (ElementError, AnalysisFailure) as exc:
        raise _StepFailure(str(exc)) from exc
    raise _StepFailure("contact multiplier loop did not reach gap tolerance")
