"""Persistence of designs, paths, logs, checkpoints, and reports.

Every write lands atomically (temp file in the destination directory, then
rename), so an interrupted run never leaves a truncated artifact behind.
Floats are serialized at full precision: a design or checkpoint read back
from disk is bit-identical to the one written.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .design import DesignBounds, DesignVector, Mask
from .errors import ConfigError
from .optimizer import IterationRecord

LOG_HEADER = "iter,objective,best,accepted,volume,failure_reason"


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_path_csv(path) -> np.ndarray:
    """(n, 2) waypoint array from a CSV of x,y rows (mm).

    Blank lines and '#' comments are skipped; an optional one-line textual
    header is tolerated.  Malformed rows report their line number.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"path file not found: {path}")
    points = []
    header_seen = False
    with path.open(encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = [p.strip() for p in text.split(",")]
            if len(parts) != 2:
                raise ConfigError(f"{path}:{lineno}: expected two comma-separated values")
            try:
                x, y = float(parts[0]), float(parts[1])
            except ValueError:
                if not points and not header_seen:
                    header_seen = True  # first non-comment row may be a header
                    continue
                raise ConfigError(f"{path}:{lineno}: not a number: {text!r}") from None
            if not (np.isfinite(x) and np.isfinite(y)):
                raise ConfigError(f"{path}:{lineno}: non-finite coordinate")
            points.append((x, y))
    if len(points) < 2:
        raise ConfigError(f"{path}: need at least two waypoints, got {len(points)}")
    return np.asarray(points, dtype=float)


def write_path_csv(path, points) -> None:
    points = np.asarray(points, dtype=float)
    lines = ["x,y"]
    lines += [f"{repr(float(x))},{repr(float(y))}" for x, y in points]
    atomic_write_text(path, "\n".join(lines) + "\n")


def _design_dict(design: DesignVector) -> dict:
    return {
        "force": design.force,
        "bounds": {
            "x": list(design.bounds.x),
            "y": list(design.bounds.y),
            "r": list(design.bounds.r),
            "force": list(design.bounds.force),
        },
        "masks": [
            {"x": mk.x, "y": mk.y, "r": mk.r, "s": mk.s, "f": mk.f} for mk in design.masks
        ],
    }


def _design_from_dict(data: dict) -> DesignVector:
    bounds = DesignBounds(
        x=tuple(data["bounds"]["x"]),
        y=tuple(data["bounds"]["y"]),
        r=tuple(data["bounds"]["r"]),
        force=tuple(data["bounds"]["force"]),
    )
    masks = tuple(
        Mask(x=m["x"], y=m["y"], r=m["r"], s=int(m["s"]), f=m["f"]) for m in data["masks"]
    )
    return DesignVector(masks=masks, force=data["force"], bounds=bounds)


def save_design(design: DesignVector, path) -> None:
    atomic_write_text(path, json.dumps(_design_dict(design), indent=2) + "\n")


def load_design(path) -> DesignVector:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"design file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        return _design_from_dict(data)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: not a valid design file: {exc}") from exc


def write_iteration_log(path, records) -> None:
    """Full-history CSV; header LOG_HEADER, one row per iteration."""
    buf = io.StringIO()
    buf.write(LOG_HEADER + "\n")
    for r in records:
        buf.write(
            f"{r.iteration},{repr(r.objective)},{repr(r.best)},"
            f"{int(r.accepted)},{repr(r.volume)},{r.failure_reason}\n"
        )
    atomic_write_text(path, buf.getvalue())


def read_iteration_log(path) -> list[IterationRecord]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"iteration log not found: {path}")
    records = []
    with path.open(encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != LOG_HEADER.split(","):
            raise ConfigError(f"{path}:1: unexpected log header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 6:
                raise ConfigError(f"{path}:{lineno}: expected 6 fields, got {len(row)}")
            try:
                records.append(
                    IterationRecord(
                        iteration=int(row[0]),
                        objective=float(row[1]),
                        best=float(row[2]),
                        accepted=bool(int(row[3])),
                        volume=float(row[4]),
                        failure_reason=row[5],
                    )
                )
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    return records


def save_checkpoint(path, iteration: int, design: DesignVector, objective: float, rng_state) -> None:
    """Resume point: the incumbent design plus the generator state that
    produces the next candidate."""
    payload = {
        "iteration": iteration,
        "objective": objective,
        "design": _design_dict(design),
        "rng_state": rng_state,
    }
    atomic_write_text(path, json.dumps(payload, indent=2) + "\n")


def load_checkpoint(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"checkpoint not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        return {
            "iteration": int(data["iteration"]),
            "objective": float(data["objective"]),
            "design": _design_from_dict(data["design"]),
            "rng_state": data["rng_state"],
        }
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: not a valid checkpoint: {exc}") from exc


def surface_report(design: DesignVector, surfaces, engaged: set) -> str:
    """Human-readable account of the rigid circles a design carries.

    surfaces is the built RigidSurface list (same order the analysis uses);
    engaged holds the indices of those that transmitted force.
    """
    lines = []
    if not surfaces:
        lines.append("self-contact only: no rigid contact surfaces in this design")
    else:
        lines.append(f"rigid contact surfaces: {len(surfaces)} ({len(engaged)} engaged)")
        lines.append("index,center_x,center_y,radius,status")
        for i, surf in enumerate(surfaces):
            status = "engaged" if i in engaged else "inactive"
            cx, cy = surf.center
            lines.append(f"{i},{repr(float(cx))},{repr(float(cy))},{repr(float(surf.radius))},{status}")
    n_flagged = sum(1 for mk in design.masks if mk.s == 1)
    lines.append(f"masks requesting a surface: {n_flagged} of {len(design.masks)}")
    return "\n".join(lines) + "\n"


def write_summary(path, payload: dict) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_summary(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"summary not found: {path}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not a valid summary: {exc}") from exc
