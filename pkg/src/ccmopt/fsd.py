"""Fourier shape descriptors for comparing closed planar curves.

A traced output path is closed with a straight return segment, oriented
clockwise, and resampled uniformly by arc length.  The descriptor expands the
normalized cumulative tangent angle

    phi*(t) = theta(t) - theta(0) - w t,    t in [0, 2pi),

in sines and cosines, where w = +-1 is the signed winding of the traversal.
Subtracting w t removes the full turn a simple closed curve accumulates, so a
circle has phi* identically zero regardless of orientation.  The pair
(theta(0), L) carries the orientation and size that phi* deliberately forgets.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DescriptorError, ParameterError


@dataclass(frozen=True)
class PathCurve:
    """Closed polygon (implicit edge from the last vertex back to the first)."""

    points: np.ndarray
    closed: bool = True


@dataclass(frozen=True)
class FSDescriptor:
    """Harmonics of phi* plus the orientation/size normalization factors."""

    A: np.ndarray
    B: np.ndarray
    theta: float
    length: float
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError(f"harmonic count must be >= 1, got {self.n}")
        if len(self.A) != self.n or len(self.B) != self.n:
            raise ParameterError("coefficient arrays must have length n")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.B))):
            raise DescriptorError("non-finite descriptor coefficients")
        if not self.length > 0:
            raise DescriptorError(f"curve length must be positive, got {self.length}")

    @property
    def invariants(self) -> np.ndarray:
        """R_k = sqrt(A_k^2 + B_k^2), unchanged by rotation and scaling."""
        return np.hypot(np.asarray(self.A), np.asarray(self.B))


@dataclass(frozen=True)
class FSDWeights:
    w_a: float = 500.0
    w_b: float = 500.0
    w_L: float = 1.0
    w_theta: float = 0.1

    def __post_init__(self):
        vals = (self.w_a, self.w_b, self.w_L, self.w_theta)
        if any(w < 0 for w in vals):
            raise ParameterError(f"weights must be non-negative, got {vals}")
        if all(w == 0 for w in vals):
            raise ParameterError("at least one weight must be positive")


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a, b, p) -> bool:
    """p collinear with a-b assumed; is p within the closed segment box?"""
    return (
        min(a[0], b[0]) <= p[0] <= max(a[0], b[0])
        and min(a[1], b[1]) <= p[1] <= max(a[1], b[1])
    )


def _segments_intersect(p1, p2, p3, p4) -> bool:
    """Closed-segment intersection test (touching counts)."""
    d1 = _orient(p3, p4, p1)
    d2 = _orient(p3, p4, p2)
    d3 = _orient(p1, p2, p3)
    d4 = _orient(p1, p2, p4)
    if ((d1 > 0 and d2 < 0) or (d1 < 0 and d2 > 0)) and (
        (d3 > 0 and d4 < 0) or (d3 < 0 and d4 > 0)
    ):
        return True
    if d1 == 0 and _on_segment(p3, p4, p1):
        return True
    if d2 == 0 and _on_segment(p3, p4, p2):
        return True
    if d3 == 0 and _on_segment(p1, p2, p3):
        return True
    if d4 == 0 and _on_segment(p1, p2, p4):
        return True
    return False


def _polygon_is_simple(pts: np.ndarray) -> bool:
    """Brute-force pairwise edge scan; adjacent edges may only share the joint."""
    m = pts.shape[0]
    for i in range(m):
        a1, a2 = pts[i], pts[(i + 1) % m]
        for j in range(i + 1, m):
            adjacent = j == i + 1 or (i == 0 and j == m - 1)
            b1, b2 = pts[j], pts[(j + 1) % m]
            if adjacent:
                # shared joint allowed; collinear backtracking is not
                shared = pts[(i + 1) % m] if j == i + 1 else pts[i]
                other_a = a1 if j == i + 1 else a2
                other_b = b2 if j == i + 1 else b1
                if _orient(shared, other_a, other_b) == 0:
                    va = other_a - shared
                    vb = other_b - shared
                    if float(va @ vb) > 0:
                        return False
                continue
            if _segments_intersect(a1, a2, b1, b2):
                return False
    return True


def _signed_area(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def close_path(points) -> PathCurve:
    """Close an open polyline and orient it clockwise, keeping its start point.

    The return segment from the last point to the first becomes the closing
    polygon edge.  Closures that self-intersect, backtrack, or enclose zero
    area are rejected with DescriptorError; the search treats such designs as
    failed evaluations.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ParameterError(f"path must be (m, 2) with m >= 2, got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ParameterError("path contains non-finite coordinates")

    keep = [0]
    for i in range(1, pts.shape[0]):
        if not np.array_equal(pts[i], pts[keep[-1]]):
            keep.append(i)
    if len(keep) > 1 and np.array_equal(pts[keep[-1]], pts[keep[0]]):
        keep.pop()
    pts = pts[keep]
    if pts.shape[0] < 3:
        raise DescriptorError("path degenerates to fewer than 3 distinct points")

    area = _signed_area(pts)
    if area == 0.0:
        raise DescriptorError("closed path encloses zero area")
    if area > 0.0:
        # reverse traversal direction but keep the start point first
        pts = np.vstack([pts[:1], pts[:0:-1]])
    if not _polygon_is_simple(pts):
        raise DescriptorError("closed path self-intersects")
    return PathCurve(points=pts, closed=True)


def _resample_closed(pts: np.ndarray, samples: int) -> tuple[np.ndarray, float]:
    """Uniform arc-length resampling of a closed polygon."""
    edges = np.roll(pts, -1, axis=0) - pts
    seg_len = np.hypot(edges[:, 0], edges[:, 1])
    length = float(np.sum(seg_len))
    if length <= 0.0:
        raise DescriptorError("curve has zero length")
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    want = np.arange(samples) * (length / samples)
    idx = np.clip(np.searchsorted(cum, want, side="right") - 1, 0, len(seg_len) - 1)
    seg = seg_len[idx]
    frac = np.where(seg > 0.0, (want - cum[idx]) / np.maximum(seg, 1e-300), 0.0)
    return pts[idx] + frac[:, None] * edges[idx], length


def fourier_descriptors(curve: PathCurve, n: int = 10, samples: int = 1024) -> FSDescriptor:
    """Expand the normalized cumulative tangent angle of a closed curve.

    The curve is resampled to `samples` equal arc-length stations; tangent
    angles come from forward differences between consecutive stations and are
    unwrapped around the full loop to extract the signed winding.
    """
    if n < 1:
        raise ParameterError(f"harmonic count must be >= 1, got {n}")
    if samples < 8 * n:
        raise ParameterError(f"need samples >= 8*n, got {samples} for n={n}")
    if not curve.closed:
        raise ParameterError("descriptors require a closed curve")

    p, length = _resample_closed(np.asarray(curve.points, dtype=float), samples)
    chords = np.roll(p, -1, axis=0) - p
    raw = np.arctan2(chords[:, 1], chords[:, 0])
    theta = np.unwrap(np.concatenate([raw, raw[:1]]))
    winding = round((theta[-1] - theta[0]) / (2.0 * math.pi))
    if winding == 0:
        raise DescriptorError("tangent angle does not wind around the loop")

    # chord j spans [t_j, t_{j+1}], so its angle belongs to the midpoint
    # station; the left-rule alternative has O(1/samples) error at corners
    t = 2.0 * math.pi * (np.arange(samples) + 0.5) / samples
    phi = theta[:-1] - theta[0] - winding * t
    k = np.arange(1, n + 1)
    A = (2.0 / samples) * (np.cos(np.outer(k, t)) @ phi)
    B = (2.0 / samples) * (np.sin(np.outer(k, t)) @ phi)
    A.setflags(write=False)
    B.setflags(write=False)
    return FSDescriptor(A=A, B=B, theta=float(theta[0]), length=length, n=n)


def fsd_errors(d: FSDescriptor, a: FSDescriptor) -> tuple[float, float, float, float]:
    """Squared deviation terms between a desired and an actual descriptor."""
    if d.n != a.n:
        raise ParameterError(f"harmonic counts differ: {d.n} vs {a.n}")
    A_err = float(np.sum((np.asarray(d.A) - np.asarray(a.A)) ** 2))
    B_err = float(np.sum((np.asarray(d.B) - np.asarray(a.B)) ** 2))
    L_err = float((d.length - a.length) ** 2)
    theta_err = float((d.theta - a.theta) ** 2)
    return A_err, B_err, L_err, theta_err


def fsd_objective(d: FSDescriptor, a: FSDescriptor, weights: FSDWeights) -> float:
    """Weighted sum of the four descriptor error terms."""
    A_err, B_err, L_err, theta_err = fsd_errors(d, a)
    return (
        weights.w_a * A_err
        + weights.w_b * B_err
        + weights.w_L * L_err
        + weights.w_theta * theta_err
    )


def shape_metrics(d: FSDescriptor, a: FSDescriptor) -> tuple[float, float]:
    """Percent deviation of shape invariants and of curve length.

    zeta_s averages |R_k^d - R_k^a| / R_k^d over harmonics where R_k^d is
    meaningfully nonzero; vanishing reference invariants are dropped with a
    warning, using a noise floor relative to the dominant invariant so that
    analytically-zero harmonics computed as ~1e-16 do not poison the ratio.
    zeta_l is |L^d - L^a| / L^d.  Both are returned in percent.
    """
    if d.n != a.n:
        raise ParameterError(f"harmonic counts differ: {d.n} vs {a.n}")
    Rd = d.invariants
    Ra = a.invariants
    usable = Rd > 1e-9 * float(np.max(Rd, initial=0.0))
    if not np.all(usable):
        warnings.warn(
            f"dropping {int(np.sum(~usable))} harmonic(s) with zero reference "
            "invariant from zeta_s",
            stacklevel=2,
        )
    if np.any(usable):
        zeta_s = float(np.mean(np.abs(Rd[usable] - Ra[usable]) / Rd[usable])) * 100.0
    else:
        zeta_s = 0.0
    zeta_l = abs(d.length - a.length) / d.length * 100.0
    return zeta_s, zeta_l
