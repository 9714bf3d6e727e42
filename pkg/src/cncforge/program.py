"""Durable machining programs: JSON serialization, replay, and G-code export.

A program stores each mill as its literal sampled tool placements (never the
control polygon), so replay is independent of how the synthesizer interpolates
paths.  Radii must be members of the discrete tool sets; angles are radians.

The G-code dialect is deliberately minimal and fully determined by the step
list: header comment, per step a tool comment, an A/B rotation line, a rapid,
a plunge, and (for mills) one linear move per remaining placement, then M2.
It is a human-auditable export, not a controller-certified post-processor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .fields import BoxField, Rotation
from .ops import DrillOp, FrozenPath, MachiningStep, MillOp, WorkpieceField
from .voxels import VoxelGrid, grid_points

PROGRAM_FORMAT = "cncforge-program"
PROGRAM_VERSION = 1

MILL_RADII = (0.025, 0.05, 0.075, 0.1)
DRILL_RADII = (0.01, 0.02, 0.03, 0.04)

_RADIUS_TOL = 1e-9


class ProgramError(ValueError):
    """Raised for malformed or inconsistent program files."""


@dataclass(frozen=True)
class ProgramStep:
    index: int
    kind: str                     # "mill" | "drill"
    theta_x: float
    theta_y: float
    radius: float
    points: np.ndarray | None = None   # (T, 2) mill placements
    depth: float | None = None         # mill plunge depth
    center: np.ndarray | None = None   # (3,) drill center

    def __post_init__(self):
        if self.kind not in ("mill", "drill"):
            raise ProgramError(f"step {self.index}: unknown kind {self.kind!r}")
        if self.kind == "mill" and (self.points is None or self.depth is None):
            raise ProgramError(f"step {self.index}: mill needs points and depth")
        if self.kind == "drill" and self.center is None:
            raise ProgramError(f"step {self.index}: drill needs a center")


@dataclass(frozen=True)
class MachiningProgram:
    blank: tuple[float, float, float]
    steps: tuple[ProgramStep, ...] = ()
    version: int = PROGRAM_VERSION

    def __post_init__(self):
        validate_program(self)


def _check_radius(step: ProgramStep) -> None:
    allowed = MILL_RADII if step.kind == "mill" else DRILL_RADII
    if not any(abs(step.radius - r) <= _RADIUS_TOL for r in allowed):
        raise ProgramError(
            f"step {step.index}: radius {step.radius} is not in the "
            f"{step.kind} radius set {allowed}")


def validate_program(prog: MachiningProgram) -> None:
    if any(b <= 0 for b in prog.blank):
        raise ProgramError("blank extents must be positive")
    seen_drill = False
    for want, step in enumerate(prog.steps, start=1):
        if step.index != want:
            raise ProgramError(
                f"step indices must be contiguous from 1, got {step.index} "
                f"at position {want}")
        _check_radius(step)
        if step.kind == "drill":
            seen_drill = True
        elif seen_drill:
            raise ProgramError(
                f"step {step.index}: mill steps must precede drill steps")


def to_workpiece(prog: MachiningProgram) -> WorkpieceField:
    blank = BoxField(*prog.blank)
    steps = []
    for s in prog.steps:
        rot = Rotation(s.theta_x, s.theta_y)
        if s.kind == "mill":
            path = FrozenPath(s.points[:, 0].copy(), s.points[:, 1].copy(),
                              s.depth)
            steps.append(MachiningStep(s.index, rot, MillOp(path, s.radius)))
        else:
            steps.append(MachiningStep(s.index, rot,
                                       DrillOp(*s.center, s.radius)))
    return WorkpieceField(blank, tuple(steps))


# -- JSON I/O ------------------------------------------------------------------


def _step_dict(s: ProgramStep) -> dict:
    d = {"index": s.index, "kind": s.kind,
         "rotation": [s.theta_x, s.theta_y], "radius": s.radius}
    if s.kind == "mill":
        d["depth"] = s.depth
        d["points"] = [[float(x), float(y)] for x, y in s.points]
    else:
        d["center"] = [float(v) for v in s.center]
    return d


def save_program(prog: MachiningProgram, path) -> None:
    doc = {
        "format": PROGRAM_FORMAT,
        "version": prog.version,
        "blank": {"l": prog.blank[0], "w": prog.blank[1], "h": prog.blank[2]},
        "steps": [_step_dict(s) for s in prog.steps],
    }
    # floats render via repr: the shortest form that round-trips float64
    # exactly (17 significant digits at most)
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


def _parse_step(raw: dict) -> ProgramStep:
    try:
        kind = raw["kind"]
        common = dict(index=int(raw["index"]), kind=kind,
                      theta_x=float(raw["rotation"][0]),
                      theta_y=float(raw["rotation"][1]),
                      radius=float(raw["radius"]))
        if kind == "mill":
            pts = np.asarray(raw["points"], dtype=np.float64)
            if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 1:
                raise ProgramError(
                    f"step {raw.get('index')}: malformed points array")
            return ProgramStep(points=pts, depth=float(raw["depth"]), **common)
        return ProgramStep(center=np.asarray(raw["center"], dtype=np.float64),
                           **common)
    except KeyError as e:
        raise ProgramError(
            f"step {raw.get('index', '?')}: missing field {e.args[0]!r}") from e


def load_program(path) -> MachiningProgram:
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ProgramError(f"not valid JSON: {e}") from e
    if doc.get("format") != PROGRAM_FORMAT:
        raise ProgramError("not a cncforge program file")
    if doc.get("version") != PROGRAM_VERSION:
        raise ProgramError(
            f"unsupported program version {doc.get('version')} "
            f"(expected {PROGRAM_VERSION})")
    blank = doc.get("blank", {})
    try:
        extents = (float(blank["l"]), float(blank["w"]), float(blank["h"]))
    except KeyError as e:
        raise ProgramError(f"blank is missing extent {e.args[0]!r}") from e
    steps = tuple(_parse_step(s) for s in doc.get("steps", []))
    return MachiningProgram(extents, steps)


# -- replay ----------------------------------------------------------------------


def replay_values(prog: MachiningProgram, n: int) -> np.ndarray:
    """Carved field value at every voxel center, shaped (n, n, n)."""
    wp = to_workpiece(prog)
    gp = grid_points(prog.blank, n)
    from .ops import workpiece_values_on_grid
    return np.asarray(workpiece_values_on_grid(wp, gp)).reshape(n, n, n)


def replay(prog: MachiningProgram, n: int) -> VoxelGrid:
    """Occupancy after running the program: +1 material present, -1 removed."""
    vals = replay_values(prog, n)
    labels = np.where(vals < 0, 1, -1).astype(np.int8)
    return VoxelGrid(n, prog.blank, labels)


def replay_occupancy(prog: MachiningProgram, n: int) -> np.ndarray:
    return replay_values(prog, n) < 0


# -- G-code export -----------------------------------------------------------------


def gcode_lines(prog: MachiningProgram, scale: float = 100.0) -> list[str]:
    """Render the constrained G-code dialect; see the module docstring."""
    l, w, h = prog.blank
    safe_z = 1.2 * h * scale
    out = [f"(cncforge program: blank l={l * scale:.4f} w={w * scale:.4f} "
           f"h={h * scale:.4f} mm; scale {scale:g} mm per unit)"]
    for s in prog.steps:
        out.append(f"(step {s.index}: {s.kind} radius {s.radius * scale:.4f} mm)")
        out.append(f"A{np.degrees(s.theta_x):.4f} B{np.degrees(s.theta_y):.4f}")
        if s.kind == "mill":
            x0, y0 = s.points[0]
            out.append(f"G0 X{x0 * scale:.4f} Y{y0 * scale:.4f} Z{safe_z:.4f}")
            out.append(f"G1 Z{s.depth * scale:.4f}")
            for x, y in s.points[1:]:
                out.append(f"G1 X{x * scale:.4f} Y{y * scale:.4f}")
        else:
            cx, cy, cz = s.center
            out.append(f"G0 X{cx * scale:.4f} Y{cy * scale:.4f} Z{safe_z:.4f}")
            out.append(f"G1 Z{cz * scale:.4f}")
    out.append("M2")
    return out


def expected_gcode_lines(prog: MachiningProgram) -> int:
    """Line-count formula: 2 + per-step counts (mill: T+3, drill: 4)."""
    total = 2
    for s in prog.steps:
        total += (len(s.points) + 3) if s.kind == "mill" else 4
    return total


def export_gcode(prog: MachiningProgram, path, scale: float = 100.0) -> None:
    with open(path, "w") as f:
        f.write("\n".join(gcode_lines(prog, scale)))
        f.write("\n")
