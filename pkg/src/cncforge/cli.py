"""Command-line entry point: fit, eval, replay, export-gcode, fixtures.

Every run writes a manifest (resolved configuration, input hashes, seed,
output paths) into the output directory before any work starts; re-running
the same command on the same inputs reproduces program.json, trajectory.csv,
and occupancy dumps byte-identically.

Exit codes: 0 success, 1 usage error, 2 input parse error, 3 numerical
failure (non-finite loss).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .fixtures import FIXTURES
from .meshio import (
    MeshError,
    load_mesh,
    marching_cubes,
    occupancy,
    occupancy_array,
    sample_surface,
    save_obj,
)
from .metrics import (
    OccupancyPair,
    chamfer,
    metrics_csv_header,
    metrics_csv_row,
    normal_consistency,
    occupancy_metrics,
)
from .optimize import FitAbort, FitConfig, fit, write_trajectory_csv
from .program import (
    ProgramError,
    export_gcode,
    load_program,
    replay,
    save_program,
    to_workpiece,
)
from .voxels import dump_grid

EVAL_RESOLUTION = 256
EVAL_SAMPLES = 8000


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        raise _UsageError(message)


CONFIG_KEYS = {
    "mill_steps": int, "drill_steps": int, "iterations": int,
    "learning_rate": float, "w": float, "resolution": int,
    "control_points": int, "path_samples": int,
    "mill_radii": "floats", "drill_radii": "floats",
    "rotation": "bool", "losses": "strings", "seed": int,
    "relabel_every": int, "exact_relabel": "bool",
    "early_stop_window": int, "early_stop_min_gain": float,
    "greedy": "bool", "threads": int,
}


def _parse_value(key: str, raw: str):
    kind = CONFIG_KEYS[key]
    raw = raw.strip()
    if kind == "bool":
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if kind == "floats":
        return tuple(float(t) for t in raw.split(",") if t.strip())
    if kind == "strings":
        return tuple(t.strip() for t in raw.split(",") if t.strip())
    return kind(raw)


def read_config_file(path) -> dict:
    """Flat key=value file; '#' starts a comment, blank lines ignored."""
    out = {}
    for ln, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{ln}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in CONFIG_KEYS:
            raise ValueError(f"{path}:{ln}: unknown config key {key!r}")
        out[key] = _parse_value(key, value)
    return out


def build_config(args) -> FitConfig:
    settings = {}
    if getattr(args, "config", None):
        settings.update(read_config_file(args.config))
    overrides = {
        "mill_steps": args.mill_steps, "drill_steps": args.drill_steps,
        "iterations": args.iters, "seed": args.seed,
        "resolution": args.resolution, "learning_rate": args.learning_rate,
        "w": args.w, "relabel_every": args.relabel_every,
        "threads": args.threads,
    }
    settings.update({k: v for k, v in overrides.items() if v is not None})
    if args.no_rotation:
        settings["rotation"] = False
    if args.no_loss:
        losses = set(settings.get("losses",
                                  ("milling", "drilling", "shape", "center")))
        settings["losses"] = tuple(sorted(losses - set(args.no_loss)))
    cfg = FitConfig(**settings)
    cfg.validate()
    return cfg


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path, command: str, cfg: FitConfig | None,
                   inputs: dict, outputs: dict, seed=None) -> Path:
    manifest = {
        "tool": "cncforge",
        "tool_version": __version__,
        "command": command,
        "config": asdict(cfg) if cfg is not None else None,
        "inputs": {k: {"path": str(p), "sha256": _sha256(p)}
                   for k, p in inputs.items()},
        "seed": seed,
        "outputs": {k: str(p) for k, p in outputs.items()},
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "manifest.json"
    with open(path, "w") as f:
        json.dump(manifest, f, indent=1, default=list)
        f.write("\n")
    return path


def _program_field(prog):
    wp = to_workpiece(prog)
    return lambda x, y, z: wp.values(x, y, z)


# -- subcommands --------------------------------------------------------------------


def cmd_fit(args) -> int:
    cfg = build_config(args)
    out_dir = Path(args.out_dir)
    outputs = {name: out_dir / name for name in
               ("program.json", "trajectory.csv", "result.json", "recon.obj")}
    write_manifest(out_dir, "fit", cfg, {"target": args.target}, outputs,
                   seed=cfg.seed)
    target = occupancy(load_mesh(args.target), cfg.resolution)
    res = fit(target, cfg)
    save_program(res.program, outputs["program.json"])
    write_trajectory_csv(res.trajectory, outputs["trajectory.csv"])
    with open(outputs["result.json"], "w") as f:
        json.dump({
            "iou": res.iou, "f1": res.f1,
            "losses": asdict(res.losses),
            "iterations_run": res.iterations_run,
            "wall_time_seconds": res.wall_time,
            "program_steps": len(res.program.steps),
        }, f, indent=1)
        f.write("\n")
    mesh = marching_cubes(_program_field(res.program), cfg.resolution,
                          box=res.program.blank)
    save_obj(mesh, outputs["recon.obj"])
    print(f"fit: {len(res.program.steps)} steps, IoU {res.iou:.4f}, "
          f"F1 {res.f1:.4f}, {res.iterations_run} iterations, "
          f"{res.wall_time:.1f}s")
    return 0


def cmd_eval(args) -> int:
    t0 = time.perf_counter()
    prog = load_program(args.program)
    target_mesh = load_mesh(args.target)
    pred_mesh = marching_cubes(_program_field(prog), EVAL_RESOLUTION,
                               box=prog.blank)
    pred_occ = occupancy_array(pred_mesh, EVAL_RESOLUTION)
    true_occ = occupancy_array(target_mesh, EVAL_RESOLUTION)
    iou, f1 = occupancy_metrics(OccupancyPair(pred_occ, true_occ))
    pred_s = sample_surface(pred_mesh, args.samples, seed=0)
    true_s = sample_surface(target_mesh, args.samples, seed=1)
    cd = chamfer(pred_s, true_s)
    nc = normal_consistency(pred_s, true_s)
    runtime = time.perf_counter() - t0
    shape_id = Path(args.target).stem
    row = metrics_csv_row(shape_id, iou, f1, cd, nc, runtime)
    out = Path(args.out)
    with open(out, "w") as f:
        f.write(metrics_csv_header() + "\n")
        f.write(row + "\n")
    print(row)
    return 0


def cmd_replay(args) -> int:
    prog = load_program(args.program)
    n = args.resolution
    out_dir = Path(args.out_dir)
    outputs = {"occupancy.cncv": out_dir / "occupancy.cncv",
               "recon.obj": out_dir / "recon.obj"}
    write_manifest(out_dir, "replay", None, {"program": args.program}, outputs)
    grid = replay(prog, n)
    dump_grid(grid, outputs["occupancy.cncv"])
    mesh = marching_cubes(_program_field(prog), n, box=prog.blank)
    save_obj(mesh, outputs["recon.obj"])
    print(f"replay: {grid.positive_count()} / {n ** 3} voxels occupied")
    return 0


def cmd_export_gcode(args) -> int:
    prog = load_program(args.program)
    export_gcode(prog, args.out, scale=args.scale)
    print(f"wrote {args.out}")
    return 0


def cmd_fixtures(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, (mesh_fn, _) in sorted(FIXTURES.items()):
        path = out_dir / f"{name}.obj"
        save_obj(mesh_fn(), path)
        print(f"wrote {path}")
    return 0


# -- argument wiring ----------------------------------------------------------------


def make_parser() -> _Parser:
    p = _Parser(prog="cncforge",
                description="Differentiable CNC machining simulator "
                            "and program synthesizer")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", parents=[], help="synthesize a program for a target mesh")
    f.add_argument("--target", required=True, help="target mesh (OBJ or STL)")
    f.add_argument("--config", help="key=value config file")
    f.add_argument("--out-dir", required=True)
    f.add_argument("--mill-steps", type=int, default=None,
                   help="mill step budget (default 20)")
    f.add_argument("--drill-steps", type=int, default=None,
                   help="drill step budget (default 20)")
    f.add_argument("--iters", type=int, default=None,
                   help="optimization iterations (default 12000)")
    f.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")
    f.add_argument("--resolution", type=int, default=None,
                   help="voxel resolution (default 64)")
    f.add_argument("--learning-rate", type=float, default=None,
                   help="Adam learning rate (default 0.0001)")
    f.add_argument("--w", type=float, default=None,
                   help="smooth sign scale (default 1000)")
    f.add_argument("--relabel-every", type=int, default=None,
                   help="voxel relabel cadence (default 50)")
    f.add_argument("--no-rotation", action="store_true",
                   help="disable the rotation operation")
    f.add_argument("--no-loss", action="append", default=[],
                   choices=["milling", "drilling", "shape", "center"],
                   help="disable a loss component (repeatable)")
    f.add_argument("--threads", type=int,
                   default=int(os.environ.get("CNC_FORGE_THREADS", "1")),
                   help="worker thread cap (default 1; env CNC_FORGE_THREADS)")
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("eval", help="score a program against a target mesh")
    e.add_argument("--target", required=True)
    e.add_argument("--program", required=True)
    e.add_argument("--out", default="metrics.csv")
    e.add_argument("--samples", type=int, default=EVAL_SAMPLES,
                   help="surface samples per mesh (default 8000)")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("replay", help="re-run a program onto a voxel grid")
    r.add_argument("--program", required=True)
    r.add_argument("--resolution", type=int, default=64)
    r.add_argument("--out-dir", required=True)
    r.set_defaults(func=cmd_replay)

    g = sub.add_parser("export-gcode", help="emit the G-code dialect")
    g.add_argument("--program", required=True)
    g.add_argument("--scale", type=float, default=100.0,
                   help="millimeters per normalized unit (default 100)")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_export_gcode)

    x = sub.add_parser("fixtures", help="write the procedural test shapes")
    x.add_argument("--out-dir", required=True)
    x.set_defaults(func=cmd_fixtures)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except (ProgramError, MeshError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FitAbort as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
