"""Command-line entry points: run, simulate, compare, mesh.

Exit codes: 0 success, 2 configuration problem, 3 analysis failure,
4 optimization finished without a single valid design.  All quantities are
mm / N / MPa.  The output directory comes from the config (or the
CCMOPT_OUTPUT_DIR environment variable) and receives only atomic writes.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

import numpy as np

from . import artifacts, svg
from .config import RunConfig, build_runtime, load_config, save_config
from .contact import uzawa_loop
from .design import DesignVector, build_model, main_component
from .errors import AnalysisFailure, CCMError, ConfigError, DescriptorError, ElementError
from .fsd import FSDWeights, close_path, fourier_descriptors, fsd_errors, fsd_objective, shape_metrics
from .optimizer import analyze, hill_climb

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ANALYSIS = 3
EXIT_NO_DESIGN = 4


def _resolve_model(runtime, design: DesignVector):
    """The analyzable structure for one design under a runtime's settings."""
    p = runtime.problem
    return build_model(
        p.mesh,
        design,
        input_point=p.input_point,
        input_dir=p.input_dir,
        output_point=p.output_point,
        smoothing_steps=p.smoothing_steps,
        chord_tol=p.chord_tol,
    )


def _solve_with_snapshots(runtime, design: DesignVector):
    """Converged state with per-step displacements for profile rendering."""
    p = runtime.problem
    model = main_component(_resolve_model(runtime, design))
    state = uzawa_loop(
        model,
        p.material,
        design.force,
        p.contact,
        n_steps=p.n_steps,
        tol_r=p.tol_r,
        max_iter=p.newton_max_iter,
        max_halvings=p.max_halvings,
        record_steps=True,
    )
    return model, state


def _deformed_full_coords(model, fem, u: np.ndarray) -> np.ndarray:
    coords = np.array(model.coords, dtype=float)
    coords[fem.full_of_compact] += u.reshape(-1, 2)
    return coords


def _write_profile_svgs(out: Path, prefix: str, model, state, engaged) -> list[str]:
    files = []
    for k, u_k in enumerate(state.u_steps, start=1):
        coords = _deformed_full_coords(model, state.fem, u_k)
        name = f"{prefix}_step_{k:02d}.svg"
        artifacts.atomic_write_text(out / name, svg.shape_svg(model, coords, engaged))
        files.append(name)
    return files


def _descriptor_block(runtime, points) -> dict:
    """Descriptor-space comparison of a traced path against the target."""
    p = runtime.problem
    actual = fourier_descriptors(close_path(points), n=p.n_harmonics, samples=p.samples)
    a_err, b_err, l_err, th_err = fsd_errors(p.desired, actual)
    zeta_s, zeta_l = shape_metrics(p.desired, actual)
    return {
        "a_err": a_err,
        "b_err": b_err,
        "l_err": l_err,
        "theta_err": th_err,
        "zeta_s": zeta_s,
        "zeta_l": zeta_l,
    }


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    runtime = build_runtime(cfg)
    out = Path(cfg.paths.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config_resolved.toml")

    initial_eval = analyze(runtime.initial, runtime.problem)[0]
    artifacts.save_design(runtime.initial, out / "design_initial.json")

    every = cfg.climber.checkpoint_every
    total = runtime.climber.max_iter

    def progress(record, best, best_eval, rng_state):
        if record.iteration % every == 0 or record.iteration == total:
            artifacts.save_checkpoint(
                out / "checkpoint.json",
                record.iteration,
                best,
                best_eval.objective,
                rng_state,
            )
            print(
                f"iter {record.iteration}/{total}  best {best_eval.objective:.4f}  "
                f"volume {best_eval.volume:.3f}",
                flush=True,
            )

    try:
        best, best_eval, history = hill_climb(
            runtime.initial, runtime.climber, runtime.problem, callback=progress
        )
    except CCMError as exc:
        _failure_bundle(out, cfg, runtime.initial, exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS

    artifacts.write_iteration_log(out / "iterations.csv", history)
    artifacts.save_design(best, out / "design_best.json")

    summary = {
        "iterations_run": len(history),
        "accepted": sum(1 for h in history if h.accepted),
        "objective": best_eval.objective,
        "volume": best_eval.volume,
        "force": best.force,
        "valid": best_eval.valid,
        "failure_reason": best_eval.failure_reason,
        "initial_objective": initial_eval.objective,
        "initial_volume": initial_eval.volume,
    }

    if not best_eval.valid:
        artifacts.write_summary(out / "summary.json", summary)
        print("optimization produced no valid design", file=sys.stderr)
        return EXIT_NO_DESIGN

    try:
        model, state = _solve_with_snapshots(runtime, best)
    except CCMError as exc:
        _failure_bundle(out, cfg, best, exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS

    engaged = state.contact.active_circles(state.u)
    traced = state.output_trace.points
    artifacts.write_path_csv(out / "path_traced.csv", traced)
    artifacts.atomic_write_text(
        out / "path_overlay.svg", svg.overlay_svg(runtime.desired_points, traced)
    )
    artifacts.atomic_write_text(
        out / "surfaces.txt",
        artifacts.surface_report(best, model.rigid_surfaces, engaged),
    )
    artifacts.atomic_write_text(
        out / "design_best.svg", svg.shape_svg(model, model.coords, engaged)
    )
    _write_profile_svgs(out, "deformed", model, state, engaged)

    summary.update(_descriptor_block(runtime, traced))
    if initial_eval.valid:
        summary.update(
            {
                "initial_" + key: value
                for key, value in _descriptor_block(runtime, initial_eval.path.points).items()
            }
        )
    artifacts.write_summary(out / "summary.json", summary)
    print(
        f"done: objective {best_eval.objective:.4f}, volume {best_eval.volume:.3f}, "
        f"zeta_s {summary['zeta_s']:.2f}%, zeta_l {summary['zeta_l']:.2f}%"
    )
    print(f"artifacts in {out}")
    return EXIT_OK


def _failure_bundle(out: Path, cfg: RunConfig, design: DesignVector, exc: Exception) -> None:
    """Config + design + error dump for post-mortem inspection."""
    bundle = {
        "error": str(exc),
        "error_type": type(exc).__name__,
        "traceback": traceback.format_exc(),
        "design": json.loads(json.dumps(artifacts._design_dict(design))),
        "config": str(out / "config_resolved.toml"),
    }
    artifacts.write_summary(out / "failure_bundle.json", bundle)


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    runtime = build_runtime(cfg)
    design = artifacts.load_design(args.design)
    if design.bounds != runtime.bounds:
        raise ConfigError(
            "design bounds disagree with the config: "
            f"{design.bounds} vs {runtime.bounds}"
        )
    out = Path(cfg.paths.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    result = analyze(design, runtime.problem)[0]
    if result.failure_reason in ("disconnected", "fe_failure"):
        artifacts.write_summary(
            out / "sim_summary.json",
            {"valid": False, "failure_reason": result.failure_reason},
        )
        print(f"design cannot be simulated: {result.failure_reason}", file=sys.stderr)
        return EXIT_ANALYSIS

    model, state = _solve_with_snapshots(runtime, design)
    engaged = state.contact.active_circles(state.u)
    traced = state.output_trace.points
    artifacts.write_path_csv(out / "sim_path.csv", traced)
    report = artifacts.surface_report(design, model.rigid_surfaces, engaged)
    artifacts.atomic_write_text(out / "sim_surfaces.txt", report)
    _write_profile_svgs(out, "sim", model, state, engaged)

    summary = {
        "valid": result.valid,
        "failure_reason": result.failure_reason,
        "objective": result.objective,
        "volume": result.volume,
        "force": design.force,
    }
    if result.valid:
        summary.update(_descriptor_block(runtime, traced))
    artifacts.write_summary(out / "sim_summary.json", summary)
    sys.stdout.write(report)
    print(f"artifacts in {out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    a = artifacts.read_path_csv(args.path_a)
    b = artifacts.read_path_csv(args.path_b)
    weights = FSDWeights()
    if args.config:
        cfg = load_config(args.config)
        o = cfg.objective
        weights = FSDWeights(o.w_a, o.w_b, o.w_l, o.w_theta)

    da = fourier_descriptors(close_path(a), n=args.n, samples=args.samples)
    db = fourier_descriptors(close_path(b), n=args.n, samples=args.samples)
    a_err, b_err, l_err, th_err = fsd_errors(da, db)
    zeta_s, zeta_l = shape_metrics(da, db)
    objective = fsd_objective(da, db, weights)
    for name, value in (
        ("A_err", a_err),
        ("B_err", b_err),
        ("L_err", l_err),
        ("theta_err", th_err),
        ("objective", objective),
        ("zeta_s", zeta_s),
        ("zeta_l", zeta_l),
    ):
        print(f"{name} = {value:.10g}")
    return EXIT_OK


def cmd_mesh(args) -> int:
    cfg = load_config(args.config)
    runtime = build_runtime(cfg)
    mesh = runtime.mesh
    out = Path(cfg.paths.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts.atomic_write_text(out / "mesh.svg", svg.mesh_svg(mesh))
    lx, ly = mesh.domain_size
    text = (
        f"domain: {lx} x {ly} mm\n"
        f"grid: {mesh.grid_dims[0]} x {mesh.grid_dims[1]} hexagonal cells\n"
        f"elements: {mesh.n_elems}\n"
        f"nodes: {mesh.n_nodes}\n"
        f"element area: min {mesh.elem_area.min():.6g}, max {mesh.elem_area.max():.6g} mm^2\n"
    )
    artifacts.atomic_write_text(out / "mesh.txt", text)
    sys.stdout.write(text)
    print(f"artifacts in {out}")
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ccmopt",
        description="Synthesize contact-aided compliant mechanisms that trace "
        "multi-kink output paths (units: mm / N / MPa).",
    )
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="full optimization run from a config file")
    run.add_argument("config")
    run.set_defaults(func=cmd_run)

    sim = sub.add_parser("simulate", help="replay the analysis of a stored design")
    sim.add_argument("design")
    sim.add_argument("config")
    sim.set_defaults(func=cmd_simulate)

    cmp_ = sub.add_parser("compare", help="descriptor metrics between two path CSVs")
    cmp_.add_argument("path_a")
    cmp_.add_argument("path_b")
    cmp_.add_argument("--n", type=int, default=10, help="harmonic count")
    cmp_.add_argument("--samples", type=int, default=1024, help="resampling density")
    cmp_.add_argument("--config", default="", help="take objective weights from this config")
    cmp_.set_defaults(func=cmd_compare)

    mesh = sub.add_parser("mesh", help="emit the discretization as SVG and text")
    mesh.add_argument("config")
    mesh.set_defaults(func=cmd_mesh)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AnalysisFailure, ElementError, DescriptorError) as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS


if __name__ == "__main__":
    sys.exit(main())
