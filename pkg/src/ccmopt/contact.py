"""Frictionless, adhesionless contact for deformable boundaries.

Segment-to-segment self contact between boundary edges of the deformed
structure and mutual contact against immovable rigid circles.  Penetration
is resisted by a penalty pressure augmented with per-quadrature-point
Lagrange multipliers:

    p = max(0, lambda - eps_n * g_n),      traction on the slave = +p * n_p,

so with all multipliers zero the law reduces to a pure penalty.  The
multipliers update in an outer (Uzawa) loop around the Newton solve,
lambda <- max(0, lambda - eps_n * g_n), which drives the converged
penetration below g_tol independently of the penalty magnitude.

The assembled tangent carries the penalty normal stiffness plus the
curvature term of circular masters; higher-order terms from master-segment
rotation and slave-segment stretching are omitted (they affect the Newton
rate, never the converged state).  Deformable-deformable interfaces are
integrated twice, once from each side at half weight, to remove the
slave/master bias of one-pass segment-to-segment integration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .design import RigidSurface
from .errors import AnalysisFailure, ElementError, ParameterError
from .fem import FEModel, Material, SolverState, build_fe_model, newton_solve

# 2-point Gauss stations on [0, 1] and the matching weights of a unit interval
_SEG_XI = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))
_SEG_W = (0.5, 0.5)


@dataclass(frozen=True)
class ContactParams:
    """Penalty/augmented-Lagrangian knobs.

    eps_n: penalty stiffness (MPa/mm); g_tol: maximum admissible penetration
    (mm); max_uzawa: multiplier updates allowed per load step;
    broadphase_margin: bounding-box inflation (mm) for candidate search;
    activation_band: deepest segment-master penetration (mm) treated as
    contact.  A boundary point lying further behind a segment than the band
    is backed by material (the far side of a wall), not touching it, so
    those pairs must stay silent; genuine contacts always enter through
    small gaps under incremental loading.  None means the broadphase margin.
    """

    eps_n: float
    g_tol: float
    max_uzawa: int = 15
    broadphase_margin: float = 1.0
    activation_band: float | None = None

    def __post_init__(self):
        if self.eps_n <= 0:
            raise ParameterError(f"penalty stiffness must be positive, got {self.eps_n}")
        if self.g_tol <= 0:
            raise ParameterError(f"gap tolerance must be positive, got {self.g_tol}")
        if self.max_uzawa < 1:
            raise ParameterError(f"need at least one multiplier pass, got {self.max_uzawa}")
        if self.broadphase_margin <= 0:
            raise ParameterError("broadphase margin must be positive")
        if self.activation_band is not None and self.activation_band <= 0:
            raise ParameterError("activation band must be positive")

    @property
    def band(self) -> float:
        return self.activation_band if self.activation_band is not None else self.broadphase_margin


def default_contact_params(coords, elements, E: float) -> ContactParams:
    """Defaults tied to the mesh scale: stiff penalty, plot-invisible g_tol."""
    lengths = []
    for conn in elements:
        v = np.asarray(coords)[list(conn)]
        lengths.extend(np.sqrt(np.sum((np.roll(v, -1, axis=0) - v) ** 2, axis=1)))
    lengths = np.asarray(lengths)
    mean_h = float(lengths.mean())
    return ContactParams(
        eps_n=100.0 * E / mean_h,
        g_tol=1e-4 * float(lengths.min()),
        max_uzawa=15,
        broadphase_margin=2.0 * mean_h,
        activation_band=0.25 * mean_h,
    )


@dataclass(frozen=True)
class ContactPair:
    """One slave segment paired with a master segment or circle.

    slave: (n1, n2) compact node ids; master: ("segment", n1, n2) or
    ("circle", index).  Multipliers are stored per quadrature point under
    the (slave, master) key, so they survive re-detection.
    """

    slave: tuple[int, int]
    master: tuple
    halved: bool  # True for deformable-deformable (two-pass) integration


def contact_traction(g_n: float, lam: float, n_p, params: ContactParams) -> np.ndarray:
    """Traction vector exerted on the slave surface (MPa)."""
    p = max(0.0, lam - params.eps_n * g_n)
    return p * np.asarray(n_p, dtype=float)


def closest_point_projection(x, master):
    """Project a point onto a master segment or rigid circle.

    Returns (x_p, n_p, g_n): the closest master point, the outward unit
    normal of the master there, and the signed gap (x - x_p) . n_p, negative
    when x lies behind the master surface.  Segment masters are directed
    with material on their left, so the outward normal is the right-hand
    perpendicular.
    """
    x = np.asarray(x, dtype=float)
    if isinstance(master, RigidSurface):
        return _project_circle(x, np.asarray(master.center, dtype=float), master.radius)[:3]
    seg = np.asarray(master, dtype=float)
    if seg.shape != (2, 2):
        raise ParameterError(f"segment master must be (2, 2), got {seg.shape}")
    return _project_segment(x, seg[0], seg[1])[:3]


def _project_segment(x, a, b):
    d = b - a
    L2 = float(d @ d)
    if L2 <= 0.0:
        raise ElementError("degenerate (zero-length) master segment")
    t_raw = float((x - a) @ d) / L2
    t = min(1.0, max(0.0, t_raw))
    x_p = a + t * d
    n_p = np.array([d[1], -d[0]]) / math.sqrt(L2)
    g_n = float((x - x_p) @ n_p)
    return x_p, n_p, g_n, t_raw


def _project_circle(x, c, R):
    rv = x - c
    r = float(np.hypot(rv[0], rv[1]))
    if r < 1e-12 * max(R, 1.0):
        raise AnalysisFailure("contact point at rigid-circle center: normal undefined")
    n_p = rv / r
    return c + R * n_p, n_p, r - R, r


def _segment_table(loops):
    """Per-segment topology arrays (n1, n2, loop id, loop position, loop length)."""
    n1, n2, lid, pos, llen = [], [], [], [], []
    for li, loop in enumerate(loops):
        ids = np.asarray(list(loop), dtype=np.intp)
        m = ids.shape[0]
        n1.append(ids)
        n2.append(np.roll(ids, -1))
        lid.append(np.full(m, li, dtype=np.intp))
        pos.append(np.arange(m, dtype=np.intp))
        llen.append(np.full(m, m, dtype=np.intp))
    if not n1:
        z = np.zeros(0, dtype=np.intp)
        return z, z.copy(), z.copy(), z.copy(), z.copy()
    return tuple(np.concatenate(a) for a in (n1, n2, lid, pos, llen))


def _candidate_indices(sn1, sn2, sloop, spos, sllen, coords, rigid_surfaces, margin):
    """Vectorized broad phase.

    Returns (ia, ib) segment-index pairs with ia < ib whose margin-inflated
    boxes overlap (skipping neighbors within two edges on the same loop), and
    (ci, si) circle/segment index pairs in circle-major order.
    """
    p, q = coords[sn1], coords[sn2]
    lo = np.minimum(p, q) - margin
    hi = np.maximum(p, q) + margin
    ov = (
        (lo[:, None, 0] <= hi[None, :, 0])
        & (lo[None, :, 0] <= hi[:, None, 0])
        & (lo[:, None, 1] <= hi[None, :, 1])
        & (lo[None, :, 1] <= hi[:, None, 1])
    )
    same = sloop[:, None] == sloop[None, :]
    dd = np.abs(spos[:, None] - spos[None, :])
    cyc = np.minimum(dd, sllen[:, None] - dd)
    ov &= ~(same & (cyc <= 2))
    ia, ib = np.nonzero(np.triu(ov, 1))

    if rigid_surfaces:
        cc = np.array([s.center for s in rigid_surfaces], dtype=float).reshape(-1, 2)
        cr = np.array([s.radius for s in rigid_surfaces], dtype=float)
        ovc = (
            ((cc[:, 0] - cr)[:, None] <= hi[None, :, 0])
            & (lo[None, :, 0] <= (cc[:, 0] + cr)[:, None])
            & ((cc[:, 1] - cr)[:, None] <= hi[None, :, 1])
            & (lo[None, :, 1] <= (cc[:, 1] + cr)[:, None])
        )
        ci, si = np.nonzero(ovc)
    else:
        ci = si = np.zeros(0, dtype=np.intp)
    return ia, ib, ci, si


def detect_candidate_pairs(loops, coords, rigid_surfaces, margin):
    """Broad-phase candidate search over current-configuration segments.

    loops: sequences of node ids (cyclic order, material on the left);
    coords: (n, 2) current positions indexed by those ids.  Any two segments
    whose margin-inflated bounding boxes overlap become a candidate, except
    neighbors within two edges on the same loop; segments also pair with
    every rigid circle in bbox range.  Deformable-deformable candidates are
    emitted in both slave/master orders at half weight.
    """
    if margin <= 0:
        raise ParameterError("margin must be positive")
    sn1, sn2, sloop, spos, sllen = _segment_table(loops)
    if sn1.size == 0:
        return []
    coords = np.asarray(coords, dtype=float)
    ia, ib, ci, si = _candidate_indices(
        sn1, sn2, sloop, spos, sllen, coords, rigid_surfaces, margin
    )
    pairs = []
    for a, b in zip(ia, ib):
        s_a = (int(sn1[a]), int(sn2[a]))
        s_b = (int(sn1[b]), int(sn2[b]))
        pairs.append(ContactPair(slave=s_a, master=("segment", *s_b), halved=True))
        pairs.append(ContactPair(slave=s_b, master=("segment", *s_a), halved=True))
    for c, s in zip(ci, si):
        pairs.append(
            ContactPair(
                slave=(int(sn1[s]), int(sn2[s])), master=("circle", int(c)), halved=False
            )
        )
    return pairs


def _boxes_overlap(a, b):
    return a[0] <= b[2] and b[0] <= a[2] and a[1] <= b[3] and b[1] <= a[3]


class ContactContext:
    """Holds contact state across one incremental solve.

    Exposes the hooks the Newton driver expects: assemble(u) for forces and
    tangent at frozen multipliers, update(u) for one multiplier pass
    returning the worst penetration, snapshot/restore for sub-step rollback,
    plus g_tol and max_outer.
    """

    def __init__(self, fem: FEModel, loops, rigid_surfaces, params: ContactParams):
        self.fem = fem
        self.params = params
        self.loops = [np.asarray(list(loop), dtype=np.intp) for loop in loops]
        self.surfaces = list(rigid_surfaces)
        self.lam: dict[tuple, float] = {}
        # boundary nodes are manifold: each belongs to exactly one loop
        self._body_of = {
            int(n): li for li, loop in enumerate(self.loops) for n in loop
        }
        self._sn1, self._sn2, self._sloop, self._spos, self._sllen = _segment_table(
            self.loops
        )
        if self.surfaces:
            self._circ_c = np.array(
                [s.center for s in self.surfaces], dtype=float
            ).reshape(-1, 2)
            self._circ_r = np.array([s.radius for s in self.surfaces], dtype=float)
        else:
            self._circ_c = np.zeros((0, 2))
            self._circ_r = np.zeros(0)
        self._cache_key: bytes | None = None
        self._cache_val: list | None = None
        # Uzawa contracts the worst gap by k/(k + eps_n) per pass, where k is
        # the local stiffness resisting separation; wedged boundaries can make
        # that ratio arbitrarily close to one.  When a pass fails to halve the
        # worst penetration the penalty is escalated so the multiplier loop
        # finishes within its pass budget instead of creeping below tolerance.
        self._eps_scale = 1.0
        self._last_worst: float | None = None
        # broad-phase reuse: candidate boxes are inflated by margin, so the
        # candidate set stays conservative while no node strays more than
        # (margin - band)/2 from the configuration it was built at (a pair
        # missed under that drift bound still has a gap above band, hence
        # carries no pressure and no retained multiplier)
        self._bp_ref: np.ndarray | None = None
        self._bp_val: tuple | None = None

    @property
    def g_tol(self) -> float:
        return self.params.g_tol

    @property
    def max_outer(self) -> int:
        return self.params.max_uzawa

    @property
    def eps_eff(self) -> float:
        return self.params.eps_n * self._eps_scale

    def snapshot(self):
        # taken at the start of each sub-increment: also restart the stall
        # detector so a fresh load increment never reads as a stalled pass
        self._last_worst = None
        return dict(self.lam)

    def restore(self, state):
        self.lam = dict(state)
        self._last_worst = None

    def multipliers(self) -> np.ndarray:
        return np.array([self.lam[k] for k in sorted(self.lam)])

    def _pairs(self, xcur):
        return detect_candidate_pairs(
            self.loops, xcur, self.surfaces, self.params.broadphase_margin
        )

    def _admissible(self, pair: ContactPair, proj) -> bool:
        """Narrow-phase gate for segment masters.

        Only projections landing strictly inside the segment count (an
        endpoint-clamped projection is not a normal projection, and at a
        convex corner it reports a bogus depth through the adjacent edge),
        and only to a depth within the activation band: a point much deeper
        behind a segment sits on the far side of intervening material.
        Circle gaps are radial and globally meaningful, so circles always
        pass.
        """
        if pair.master[0] == "circle":
            return True
        t = proj[3]
        if t <= 0.0 or t >= 1.0:
            return False
        return proj[2] > -self.params.band

    def _active_points(self, xcur):
        """Admissible quadrature-point/master assignments for one state.

        Returns a list of (pair, q, weight, shape, x, projection).  Masters
        belonging to the same body compete per quadrature point and only the
        closest face (minimum |g_n|) survives: a point that has just crossed
        a convex corner lies behind both adjacent faces, and loading both
        would push it sideways along a face it never touched.  Masters on
        distinct bodies (other loops, each rigid circle) act independently,
        so a point pinched in a wedge between bodies still sees every side.
        The two-pass weight for deformable-deformable pairs is folded in.

        The result is cached on the configuration, so the repeated queries of
        one multiplier pass (assemble, penetration, complementarity, update)
        share a single narrow-phase evaluation.
        """
        key = xcur.tobytes()
        if self._cache_key != key:
            if "_pairs" in self.__dict__:
                # candidate source stubbed on the instance: evaluate through it
                val = list(self._scalar_active(xcur))
            else:
                val = self._vector_active(xcur)
            self._cache_key = key
            self._cache_val = val
        return self._cache_val

    def _scalar_active(self, xcur):
        """Reference narrow phase driven by the _pairs candidate list."""
        by_slave: dict[tuple, list[ContactPair]] = {}
        for pair in self._pairs(xcur):
            by_slave.setdefault(pair.slave, []).append(pair)
        for slave, pairs in by_slave.items():
            s1, s2 = slave
            a, b = xcur[s1], xcur[s2]
            L = float(np.hypot(*(b - a)))
            if L <= 0.0:
                raise ElementError("degenerate slave segment")
            for q, (xi, wq) in enumerate(zip(_SEG_XI, _SEG_W)):
                x = a + xi * (b - a)
                best: dict[tuple, tuple] = {}
                for pair in pairs:
                    if pair.master[0] == "circle":
                        surf = self.surfaces[pair.master[1]]
                        proj = _project_circle(
                            x, np.asarray(surf.center, dtype=float), surf.radius
                        )
                        body = ("c", pair.master[1])
                    else:
                        proj = _project_segment(
                            x, xcur[pair.master[1]], xcur[pair.master[2]]
                        )
                        body = ("l", self._body_of[pair.master[1]])
                    if not self._admissible(pair, proj):
                        continue
                    if body not in best or abs(proj[2]) < abs(best[body][1][2]):
                        best[body] = (pair, proj)
                for pair, proj in best.values():
                    w = wq * L * (0.5 if pair.halved else 1.0)
                    yield pair, q, w, (1.0 - xi, xi), x, proj

    def _vector_active(self, xcur):
        """Array evaluation of the narrow phase; same selection rules as
        _scalar_active, one numpy pass over all candidates per station."""
        sn1, sn2 = self._sn1, self._sn2
        if sn1.size == 0:
            return []
        drift_cap = 0.45 * (self.params.broadphase_margin - self.params.band)
        if (
            self._bp_ref is None
            or drift_cap <= 0.0
            or float(np.max(np.abs(xcur - self._bp_ref))) > drift_cap
        ):
            self._bp_val = _candidate_indices(
                sn1, sn2, self._sloop, self._spos, self._sllen,
                xcur, self.surfaces, self.params.broadphase_margin,
            )
            self._bp_ref = xcur.copy()
        ia, ib, ci, si = self._bp_val
        slv_ss = np.concatenate([ia, ib])
        mst_ss = np.concatenate([ib, ia])
        slv_all = np.concatenate([slv_ss, si])
        m_all = slv_all.shape[0]
        if m_all == 0:
            return []

        a = xcur[sn1[slv_all]]
        b = xcur[sn2[slv_all]]
        ab = b - a
        L = np.hypot(ab[:, 0], ab[:, 1])
        if np.any(L <= 0.0):
            raise ElementError("degenerate slave segment")

        n_ss = slv_ss.shape[0]
        A = xcur[sn1[mst_ss]]
        B = xcur[sn2[mst_ss]]
        d = B - A
        L2 = d[:, 0] ** 2 + d[:, 1] ** 2
        if np.any(L2 <= 0.0):
            raise ElementError("degenerate (zero-length) master segment")
        invlen = 1.0 / np.sqrt(L2)
        mnx = d[:, 1] * invlen
        mny = -d[:, 0] * invlen
        body_ss = self._sloop[mst_ss]
        Cc = self._circ_c[ci]
        Rc = self._circ_r[ci]
        body_c = len(self.loops) + ci
        band = self.params.band

        # candidate rows across the two stations: geometric fields plus the
        # indices needed to rebuild ContactPair objects for the winners
        cols = {k: [] for k in (
            "row", "q", "body", "g", "aux", "npx", "npy", "xpx", "xpy", "xx", "xy"
        )}
        for qi, xi in enumerate(_SEG_XI):
            x = a + xi * ab
            xs = x[:n_ss]
            t_raw = ((xs[:, 0] - A[:, 0]) * d[:, 0] + (xs[:, 1] - A[:, 1]) * d[:, 1]) / L2
            t = np.clip(t_raw, 0.0, 1.0)
            xpx = A[:, 0] + t * d[:, 0]
            xpy = A[:, 1] + t * d[:, 1]
            g = (xs[:, 0] - xpx) * mnx + (xs[:, 1] - xpy) * mny
            adm = (t_raw > 0.0) & (t_raw < 1.0) & (g > -band)
            idx = np.nonzero(adm)[0]
            cols["row"].append(idx)
            cols["q"].append(np.full(idx.size, qi, dtype=np.intp))
            cols["body"].append(body_ss[idx])
            cols["g"].append(g[idx])
            cols["aux"].append(t_raw[idx])
            cols["npx"].append(mnx[idx])
            cols["npy"].append(mny[idx])
            cols["xpx"].append(xpx[idx])
            cols["xpy"].append(xpy[idx])
            cols["xx"].append(xs[idx, 0])
            cols["xy"].append(xs[idx, 1])

            if ci.size:
                xc = x[n_ss:]
                rv = xc - Cc
                r = np.hypot(rv[:, 0], rv[:, 1])
                if np.any(r < 1e-12 * np.maximum(Rc, 1.0)):
                    raise AnalysisFailure(
                        "contact point at rigid-circle center: normal undefined"
                    )
                cnx = rv[:, 0] / r
                cny = rv[:, 1] / r
                rows_c = n_ss + np.arange(ci.size)
                cols["row"].append(rows_c)
                cols["q"].append(np.full(ci.size, qi, dtype=np.intp))
                cols["body"].append(body_c)
                cols["g"].append(r - Rc)
                cols["aux"].append(r)
                cols["npx"].append(cnx)
                cols["npy"].append(cny)
                cols["xpx"].append(Cc[:, 0] + Rc * cnx)
                cols["xpy"].append(Cc[:, 1] + Rc * cny)
                cols["xx"].append(xc[:, 0])
                cols["xy"].append(xc[:, 1])

        c = {k: np.concatenate(v) if v else np.zeros(0) for k, v in cols.items()}
        if c["row"].size == 0:
            return []

        # one winner per (slave segment, station, master body): minimum |g|,
        # first encountered on exact ties
        n_bodies = len(self.loops) + len(self.surfaces)
        group = (slv_all[c["row"]] * 2 + c["q"]) * max(n_bodies, 1) + c["body"]
        order = np.lexsort((np.arange(group.size), np.abs(c["g"]), group))
        gs = group[order]
        lead = np.ones(gs.size, dtype=bool)
        lead[1:] = gs[1:] != gs[:-1]
        win = order[lead]

        out = []
        for i in win:
            row = int(c["row"][i])
            s_idx = int(slv_all[row])
            slave = (int(sn1[s_idx]), int(sn2[s_idx]))
            if row < n_ss:
                m_idx = int(mst_ss[row])
                pair = ContactPair(
                    slave=slave,
                    master=("segment", int(sn1[m_idx]), int(sn2[m_idx])),
                    halved=True,
                )
                w_half = 0.5
            else:
                pair = ContactPair(
                    slave=slave,
                    master=("circle", int(ci[row - n_ss])),
                    halved=False,
                )
                w_half = 1.0
            qv = int(c["q"][i])
            xi = _SEG_XI[qv]
            w = _SEG_W[qv] * float(L[row]) * w_half
            x = np.array([c["xx"][i], c["xy"][i]])
            proj = (
                np.array([c["xpx"][i], c["xpy"][i]]),
                np.array([c["npx"][i], c["npy"][i]]),
                float(c["g"][i]),
                float(c["aux"][i]),
            )
            out.append((pair, qv, w, (1.0 - xi, xi), x, proj))
        return out

    def assemble(self, u: np.ndarray):
        """Contact residual contribution and tangent at frozen multipliers.

        The returned force enters the residual on the internal side,
        f_int + f_c - f_ext, so it is minus the physical traction resultant.
        """
        eps = self.eps_eff
        xcur = self.fem.coords + u.reshape(-1, 2)
        f = np.zeros(self.fem.n_dof)
        rows, cols, vals = [], [], []
        for pair, q, w, (N1, N2), x, proj in self._active_points(xcur):
            lam = self.lam.get((pair.slave, pair.master, q), 0.0)
            g_n = proj[2]
            p = max(0.0, lam - eps * g_n)
            if p <= 0.0:
                continue
            s1, s2 = pair.slave
            n_p = proj[1]
            fq = p * n_p * w
            f[2 * s1 : 2 * s1 + 2] -= N1 * fq
            f[2 * s2 : 2 * s2 + 2] -= N2 * fq

            if pair.master[0] == "circle":
                dofs = [2 * s1, 2 * s1 + 1, 2 * s2, 2 * s2 + 1]
                phi_n = np.concatenate([N1 * n_p, N2 * n_p])
                k_loc = (w * eps) * np.outer(phi_n, phi_n)
                # curvature of the circular master rotates the normal
                tau = np.array([-n_p[1], n_p[0]])
                phi_t = np.concatenate([N1 * tau, N2 * tau])
                k_loc -= (w * p / proj[3]) * np.outer(phi_t, phi_t)
            else:
                m1, m2 = pair.master[1], pair.master[2]
                t = proj[3]
                f[2 * m1 : 2 * m1 + 2] += (1.0 - t) * fq
                f[2 * m2 : 2 * m2 + 2] += t * fq
                dofs = [2 * s1, 2 * s1 + 1, 2 * s2, 2 * s2 + 1,
                        2 * m1, 2 * m1 + 1, 2 * m2, 2 * m2 + 1]
                phi_n = np.concatenate(
                    [N1 * n_p, N2 * n_p, -(1.0 - t) * n_p, -t * n_p]
                )
                k_loc = (w * eps) * np.outer(phi_n, phi_n)
            dofs = np.asarray(dofs)
            rows.append(np.repeat(dofs, len(dofs)))
            cols.append(np.tile(dofs, len(dofs)))
            vals.append(k_loc.ravel())
        if rows:
            K = sp.coo_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(self.fem.n_dof, self.fem.n_dof),
            ).tocsr()
        else:
            K = None
        return f, K

    def penetration(self, u: np.ndarray) -> float:
        """Worst current penetration (mm, zero when nothing overlaps)."""
        xcur = self.fem.coords + u.reshape(-1, 2)
        worst = 0.0
        for _, _, _, _, _, proj in self._active_points(xcur):
            worst = max(worst, -proj[2])
        return worst

    def complementarity(self, u: np.ndarray) -> float:
        """Worst |gap| among points still carrying a multiplier (mm).

        A converged augmented state must hold its loaded points on the
        master surface: a multiplier across an open gap means the previous
        pass overshot and the pressure is pushing the surfaces apart.
        """
        xcur = self.fem.coords + u.reshape(-1, 2)
        worst = 0.0
        for pair, q, _, _, _, proj in self._active_points(xcur):
            if self.lam.get((pair.slave, pair.master, q), 0.0) > 0.0:
                worst = max(worst, abs(proj[2]))
        return worst

    def update(self, u: np.ndarray) -> float:
        """One multiplier pass; returns the worst current penetration (mm)."""
        eps = self.eps_eff
        xcur = self.fem.coords + u.reshape(-1, 2)
        new_lam: dict[tuple, float] = {}
        worst = 0.0
        for pair, q, _, _, _, proj in self._active_points(xcur):
            g_n = proj[2]
            worst = max(worst, -g_n)
            key = (pair.slave, pair.master, q)
            lam = max(0.0, self.lam.get(key, 0.0) - eps * g_n)
            if lam > 0.0:
                new_lam[key] = lam
        self.lam = new_lam
        if (
            self._last_worst is not None
            and worst > self.params.g_tol
            and worst > 0.5 * self._last_worst
        ):
            self._eps_scale = min(self._eps_scale * 10.0, 1.0e4)
        self._last_worst = worst
        return worst

    def diagnostics(self, u: np.ndarray):
        """Rows (x, x_p, g_n, lambda, master kind/index) for active points."""
        xcur = self.fem.coords + u.reshape(-1, 2)
        rows = []
        for pair, q, _, _, x, proj in self._active_points(xcur):
            key = (pair.slave, pair.master, q)
            lam = self.lam.get(key, 0.0)
            p = max(0.0, lam - self.eps_eff * proj[2])
            if p > 0.0 or lam > 0.0:
                rows.append(
                    {
                        "x": x.copy(),
                        "x_p": proj[0].copy(),
                        "g_n": proj[2],
                        "lam": lam,
                        "master": pair.master,
                    }
                )
        return rows

    def active_circles(self, u: np.ndarray) -> set:
        """Indices of rigid circles currently transmitting force."""
        return {
            row["master"][1]
            for row in self.diagnostics(u)
            if row["master"][0] == "circle" and row["lam"] > 0.0
        }


def uzawa_loop(
    model,
    material: Material,
    F: float,
    params: ContactParams,
    *,
    n_steps: int = 20,
    tol_r: float = 1e-8,
    max_iter: int = 25,
    max_halvings: int = 4,
    record_steps: bool = False,
) -> SolverState:
    """Incremental contact solve of a mechanism model under its input force.

    Builds the reduced FE problem for the active region, applies F along the
    model's input direction, and runs the Newton driver with an augmented
    contact loop per load increment.
    """
    fixed = [(n, c) for n in model.fixed_nodes for c in (0, 1)]
    fem = build_fe_model(model.coords, model.mesh.elements, model.active, fixed)
    in_c = int(fem.compact_of_full[model.input_node])
    out_c = int(fem.compact_of_full[model.output_node])
    if in_c < 0 or out_c < 0:
        raise ParameterError("input/output node not part of the active region")
    f_ext = np.zeros(fem.n_dof)
    f_ext[2 * in_c : 2 * in_c + 2] = F * np.asarray(model.input_dir, dtype=float)

    loops = [fem.compact_of_full[np.asarray(lp.node_indices, dtype=np.intp)] for lp in model.loops]
    ctx = ContactContext(fem, loops, model.rigid_surfaces, params)
    return newton_solve(
        fem,
        material,
        f_ext,
        n_steps,
        contact=ctx,
        output_node=out_c,
        tol_r=tol_r,
        max_iter=max_iter,
        max_halvings=max_halvings,
        record_steps=record_steps,
    )
