"""Command-line front end: run configurations, mesh checks, subdivision.

Heavy imports happen inside the subcommands so that the thread-count
environment variable can take effect before numpy/scipy load.
"""

import argparse
import os
import sys

THREADS_ENV = "WILLMORE_THREADS"

_TOP_KEYS = {
    "preset",
    "input",
    "out_dir",
    "frame_interval",
    "flow_mode",
    "parallel_runs",
}
_CONSTRAINT_KEYS = {"dirichlet", "barycenter", "total_area", "enclosed_volume"}


class ConfigError(ValueError):
    """Raised for malformed run configuration files."""


def _load_toml(path):
    try:
        import tomllib  # Python >= 3.11
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        with open(path, "rb") as handle:
            return tomllib.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _reject_unknown(table, allowed, where):
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")


def load_run_config(path):
    """Parse and validate a TOML run configuration.

    Returns (specs, settings) where specs is a list of RunSpec and settings
    holds out_dir / frame_interval / parallel_runs.
    """
    from .descent import DescentConfig

    data = _load_toml(path)
    _reject_unknown(
        data, _TOP_KEYS | {"constraints", "descent"}, "run configuration"
    )
    descent_table = dict(data.get("descent", {}))
    allowed_descent = set(DescentConfig.__dataclass_fields__)
    _reject_unknown(descent_table, allowed_descent, "[descent]")
    if "flow_mode" in data:
        if "flow_mode" in descent_table:
            raise ConfigError("flow_mode given both top-level and in [descent]")
        descent_table["flow_mode"] = data["flow_mode"]

    settings = {
        "out_dir": data.get("out_dir", "willmore-out"),
        "frame_interval": int(data.get("frame_interval", 0)),
        "parallel_runs": bool(data.get("parallel_runs", False)),
    }
    if settings["frame_interval"] < 0:
        raise ConfigError("frame_interval must be >= 0")

    preset = data.get("preset")
    if preset is not None:
        if "input" in data or "constraints" in data:
            raise ConfigError("preset and input/constraints are mutually exclusive")
        from . import presets

        try:
            specs = presets.build(preset, descent_table or None)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return specs, settings

    if "input" not in data:
        raise ConfigError("config needs either 'input' or 'preset'")
    from .constraints import ConstraintError, ConstraintSet
    from .mesh import MeshError, load_mesh
    from .presets import RunSpec

    ctable = dict(data.get("constraints", {}))
    _reject_unknown(ctable, _CONSTRAINT_KEYS, "[constraints]")
    dirichlet = bool(ctable.pop("dirichlet", False))
    names_to_targets = {}
    for name in ("barycenter", "total_area", "enclosed_volume"):
        if name not in ctable:
            continue
        value = ctable[name]
        if value is True:
            names_to_targets[name] = None
        elif value is False:
            continue
        else:
            names_to_targets[name] = value
    try:
        mesh = load_mesh(data["input"])
        cset = ConstraintSet.build(names_to_targets, dirichlet=dirichlet)
        config = DescentConfig(**descent_table)
    except (ConstraintError, MeshError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    name = os.path.splitext(os.path.basename(data["input"]))[0]
    return [RunSpec(name, mesh, cset, config)], settings


def _execute_run(spec, out_dir, frame_interval):
    """Run one spec, writing history, frames, figures and the summary."""
    from .descent import run
    from .mesh import frame_path, save_mesh
    from . import report

    os.makedirs(out_dir, exist_ok=True)
    save_mesh(spec.mesh, os.path.join(out_dir, "initial.obj"))

    frame_counter = [0]
    if frame_interval:
        save_mesh(spec.mesh, frame_path(out_dir, 0))
        frame_counter[0] = 1

    def on_iteration(state, record):
        if frame_interval and record.iteration % frame_interval == 0:
            save_mesh(state.mesh, frame_path(out_dir, frame_counter[0]))
            frame_counter[0] += 1

    state = run(spec.mesh, spec.config, spec.constraints, on_iteration=on_iteration)

    save_mesh(state.mesh, os.path.join(out_dir, "final.obj"))
    report.write_history_csv(os.path.join(out_dir, "history.csv"), state.history)
    report.write_timings_csv(os.path.join(out_dir, "timings.csv"), state.history)
    report.render_history_figures(out_dir, state.history, title=spec.name)
    summary = report.summarize_run(spec.name, state, spec.mesh.num_faces)
    with open(os.path.join(out_dir, "summary.txt"), "w", encoding="utf-8") as handle:
        handle.write(summary + "\n")
    return state, summary


def cmd_run(args):
    from .descent import DescentError

    if args.preset:
        from . import presets
        from .descent import DescentConfig

        overrides = {}
        if args.max_iters is not None:
            overrides["max_iters"] = args.max_iters
        try:
            specs = presets.build(args.preset, overrides or None)
        except KeyError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        settings = {
            "out_dir": args.out or "willmore-out",
            "frame_interval": args.frames,
            "parallel_runs": False,
        }
    else:
        if not args.config:
            print("error: give a config file or --preset", file=sys.stderr)
            return 2
        try:
            specs, settings = load_run_config(args.config)
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        if args.out:
            settings["out_dir"] = args.out

    out_root = settings["out_dir"]
    multi = len(specs) > 1
    jobs = [
        (spec, os.path.join(out_root, spec.name) if multi else out_root)
        for spec in specs
    ]
    summaries = []
    try:
        if settings["parallel_runs"] and multi:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=len(jobs)) as pool:
                futures = [
                    pool.submit(_execute_run, spec, run_dir, settings["frame_interval"])
                    for spec, run_dir in jobs
                ]
                results = [f.result() for f in futures]
        else:
            results = [
                _execute_run(spec, run_dir, settings["frame_interval"])
                for spec, run_dir in jobs
            ]
    except DescentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for (_, summary) in results:
        summaries.append(summary)
        print(summary)
        print()
    return 0


def cmd_check(args):
    import numpy as np

    from .fem import Operators
    from .mesh import DofMap, MeshError, load_mesh

    try:
        mesh = load_mesh(args.mesh)
    except MeshError as exc:
        print(f"invalid mesh: {exc}", file=sys.stderr)
        return 2 if isinstance(exc.__cause__, OSError) else 1
    # Boundary vertices carry no curvature energy (the lumped inverse mass
    # vanishes there), mirroring the Dirichlet convention for open meshes.
    ops = Operators(mesh, DofMap.for_mesh(mesh, dirichlet=not mesh.is_closed))
    p = mesh.positions[mesh.faces]
    area = float(mesh.triangle_areas().sum())
    print(f"vertices: {mesh.num_vertices}")
    print(f"faces: {mesh.num_faces}")
    print(f"boundary: {'closed' if mesh.is_closed else f'{int(mesh.boundary_vertex.sum())} boundary vertices'}")
    print(f"total area: {area:.10g}")
    if mesh.is_closed:
        volume = float(np.einsum("fi,fi->", p[:, 0], np.cross(p[:, 1], p[:, 2])) / 6.0)
        print(f"enclosed volume: {volume:.10g}")
    else:
        print("enclosed volume: n/a (open mesh)")
    print(f"willmore energy: {ops.energy:.10g}")
    print(f"mean curvature L2 norm (lumped): {ops.curvature_norm_lumped():.10g}")
    return 0


def cmd_subdivide(args):
    from .mesh import MeshError, load_mesh, loop_subdivide, save_mesh

    if args.levels < 1:
        print("error: --levels must be >= 1", file=sys.stderr)
        return 2
    try:
        mesh = load_mesh(args.mesh)
        for _ in range(args.levels):
            mesh = loop_subdivide(mesh)
        save_mesh(mesh, args.out)
    except MeshError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out}: {mesh.num_vertices} vertices, {mesh.num_faces} faces")
    return 0


def _apply_thread_env():
    threads = os.environ.get(THREADS_ENV)
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="willmore",
        description="Constrained Willmore energy minimization on triangle meshes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a descent configuration or preset")
    p_run.add_argument("config", nargs="?", help="TOML run configuration")
    p_run.add_argument("--preset", help="bundled experiment preset name")
    p_run.add_argument("--out", help="output directory (overrides config)")
    p_run.add_argument("--frames", type=int, default=0, help="frame dump interval")
    p_run.add_argument("--max-iters", type=int, default=None, dest="max_iters")
    p_run.set_defaults(func=cmd_run)

    p_check = sub.add_parser("check", help="validate a mesh and report its invariants")
    p_check.add_argument("mesh")
    p_check.set_defaults(func=cmd_check)

    p_sub = sub.add_parser("subdivide", help="apply Loop subdivision")
    p_sub.add_argument("mesh")
    p_sub.add_argument("--levels", type=int, default=1)
    p_sub.add_argument("--out", required=True)
    p_sub.set_defaults(func=cmd_subdivide)
    return parser


def main(argv=None):
    _apply_thread_env()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
