"""Static SVG rendering for meshes, designs, deformed shapes, and paths.

Every renderer is a pure function of its inputs and formats numbers with a
fixed precision, so identical inputs produce byte-identical files and
visual regressions show up in plain diffs.  Geometry stays in mm; the y
axis is flipped at write time because SVG grows downward.
"""

from __future__ import annotations

import numpy as np

_SCALE = 6.0  # px per mm
_PAD = 3.0    # mm of whitespace around the drawing


def _fmt(v: float) -> str:
    return f"{v:.4f}"


class _Canvas:
    """Collects shapes in mm coordinates and emits one SVG document."""

    def __init__(self, xmin, ymin, xmax, ymax):
        self.xmin = xmin - _PAD
        self.ymax = ymax + _PAD
        self.width = (xmax - xmin) + 2 * _PAD
        self.height = (ymax - ymin) + 2 * _PAD
        self.body: list[str] = []

    def _pt(self, x, y):
        return (x - self.xmin, self.ymax - y)

    def polygon(self, pts, fill="#d9d9d9", stroke="#555555", width=0.08):
        coords = " ".join(
            f"{_fmt(px)},{_fmt(py)}" for px, py in (self._pt(x, y) for x, y in pts)
        )
        self.body.append(
            f'<polygon points="{coords}" fill="{fill}" stroke="{stroke}" '
            f'stroke-width="{_fmt(width)}"/>'
        )

    def polyline(self, pts, stroke="#000000", width=0.3, dashed=False):
        coords = " ".join(
            f"{_fmt(px)},{_fmt(py)}" for px, py in (self._pt(x, y) for x, y in pts)
        )
        dash = ' stroke-dasharray="1.2,0.8"' if dashed else ""
        self.body.append(
            f'<polyline points="{coords}" fill="none" stroke="{stroke}" '
            f'stroke-width="{_fmt(width)}" stroke-linejoin="round"{dash}/>'
        )

    def circle(self, center, radius, fill="none", stroke="#b03030", width=0.2):
        cx, cy = self._pt(center[0], center[1])
        self.body.append(
            f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="{_fmt(radius)}" '
            f'fill="{fill}" stroke="{stroke}" stroke-width="{_fmt(width)}"/>'
        )

    def dot(self, center, radius=0.6, fill="#1050c0"):
        cx, cy = self._pt(center[0], center[1])
        self.body.append(
            f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="{_fmt(radius)}" fill="{fill}"/>'
        )

    def text(self, anchor, message, size=2.5):
        ax, ay = self._pt(anchor[0], anchor[1])
        self.body.append(
            f'<text x="{_fmt(ax)}" y="{_fmt(ay)}" font-size="{_fmt(size)}" '
            f'font-family="monospace" fill="#333333">{message}</text>'
        )

    def render(self) -> str:
        w = _fmt(self.width * _SCALE)
        h = _fmt(self.height * _SCALE)
        vb = f"0 0 {_fmt(self.width)} {_fmt(self.height)}"
        head = (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
            f'viewBox="{vb}">\n'
        )
        return head + "\n".join(self.body) + "\n</svg>\n"


def _bounds_of(arrays) -> tuple[float, float, float, float]:
    pts = np.concatenate([np.asarray(a, dtype=float).reshape(-1, 2) for a in arrays])
    return (
        float(pts[:, 0].min()),
        float(pts[:, 1].min()),
        float(pts[:, 0].max()),
        float(pts[:, 1].max()),
    )


def mesh_svg(mesh, active=None) -> str:
    """Honeycomb outline; a subset of element ids may be highlighted."""
    lx, ly = mesh.domain_size
    canvas = _Canvas(0.0, 0.0, lx, ly)
    marked = set() if active is None else set(active)
    for e, conn in enumerate(mesh.elements):
        fill = "#c7d7ef" if e in marked else "#f2f2f2"
        canvas.polygon(mesh.nodes[list(conn)], fill=fill)
    return canvas.render()


def shape_svg(model, coords, engaged=frozenset()) -> str:
    """One structural snapshot: active elements at the given full-mesh
    coordinates, rigid circles (engaged ones emphasized), supports, load
    and probe markers."""
    coords = np.asarray(coords, dtype=float)
    lx, ly = model.mesh.domain_size
    arrays = [[(0.0, 0.0), (lx, ly)], coords[list({n for e in model.active for n in model.mesh.elements[e]})]]
    xmin, ymin, xmax, ymax = _bounds_of(arrays)
    canvas = _Canvas(xmin, ymin, xmax, ymax)
    for e in model.active:
        canvas.polygon(coords[list(model.mesh.elements[e])])
    for loop in model.loops:
        ids = list(loop.node_indices) + [loop.node_indices[0]]
        canvas.polyline(coords[ids], stroke="#333333", width=0.25)
    for i, surf in enumerate(model.rigid_surfaces):
        on = i in engaged
        canvas.circle(
            surf.center,
            surf.radius,
            fill="#f2c9c9" if on else "none",
            stroke="#b03030" if on else "#888888",
            width=0.3 if on else 0.15,
        )
    for node in model.fixed_nodes:
        canvas.dot(coords[node], radius=0.45, fill="#444444")
    canvas.dot(coords[model.input_node], radius=0.7, fill="#c05010")
    tip = coords[model.input_node] + 4.0 * np.asarray(model.input_dir)
    canvas.polyline([coords[model.input_node], tip], stroke="#c05010", width=0.4)
    canvas.dot(coords[model.output_node], radius=0.7, fill="#1050c0")
    return canvas.render()


def overlay_svg(desired, actual) -> str:
    """Desired path in black, traced path in blue, start points dotted."""
    desired = np.asarray(desired, dtype=float)
    actual = np.asarray(actual, dtype=float)
    xmin, ymin, xmax, ymax = _bounds_of([desired, actual])
    span = max(xmax - xmin, ymax - ymin, 1e-9)
    canvas = _Canvas(xmin, ymin, xmax, ymax)
    w = 0.01 * span
    canvas.polyline(desired, stroke="#000000", width=w)
    canvas.polyline(actual, stroke="#1050c0", width=w)
    canvas.dot(desired[0], radius=1.5 * w, fill="#000000")
    canvas.dot(actual[0], radius=1.5 * w, fill="#1050c0")
    return canvas.render()
