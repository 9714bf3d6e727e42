"""Machining operations: parametric mill paths, drills, and workpiece carving.

A mill sweeps a cylindrical tool along a piecewise-linear path sampled at T
parameter values; its field is the pointwise min over all sampled placements.
A drill is a single placement.  Carving composes steps by CSG subtraction in
each step's rotated frame.

All evaluation code is polymorphic over plain arrays and autodiff ``Var``s.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import value_of
from .fields import BoxField, Rotation, cylinder_values

_CHUNK = 1 << 16  # rows per detached argmin block


@dataclass(frozen=True)
class MillPath:
    """Polyline tool path: control xs/ys, constant plunge depth, T samples.

    Placements are spaced uniformly in arc length so the swept cylinders do
    not cluster at short segments; sample j sits at arc position (j/T) * L
    for j = 0..T-1 (the parameter never reaches 1).
    """

    cx: object  # (k,) array or Var
    cy: object
    depth: object  # scalar c_z
    samples: int = 100

    def __post_init__(self):
        k = value_of(self.cx).shape[0]
        if k < 1:
            raise ValueError("mill path needs at least one control point")
        if value_of(self.cy).shape[0] != k:
            raise ValueError("control x/y length mismatch")
        if self.samples < 1:
            raise ValueError("sample count must be >= 1")

    @classmethod
    def from_points(cls, points, depth, samples: int = 100) -> "MillPath":
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        return cls(pts[:, 0].copy(), pts[:, 1].copy(), depth, samples)

    def placements(self):
        """All T sampled (x, y) tool positions along the path."""
        t = np.arange(self.samples) / self.samples
        return self.sample_at(t)

    def sample_at(self, t):
        """Arc-length-uniform positions at parameter values t in [0, 1)."""
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        k = value_of(self.cx).shape[0]
        if k == 1:
            ones = np.ones_like(t)
            return self.cx[np.zeros(t.shape, dtype=np.intp)] * ones, \
                self.cy[np.zeros(t.shape, dtype=np.intp)] * ones
        dx = self.cx[np.arange(1, k)] - self.cx[np.arange(k - 1)]
        dy = self.cy[np.arange(1, k)] - self.cy[np.arange(k - 1)]
        seg = ad.sqrt(dx * dx + dy * dy)
        cum = ad.concatenate([np.zeros(1), ad.cumsum(seg)])
        total = cum[k - 1]
        if float(value_of(total)) == 0.0:  # all control points coincide
            ones = np.ones_like(t)
            return self.cx[np.zeros(t.shape, dtype=np.intp)] * ones, \
                self.cy[np.zeros(t.shape, dtype=np.intp)] * ones
        s = total * t
        idx = np.searchsorted(value_of(cum), value_of(s), side="right") - 1
        idx = np.clip(idx, 0, k - 2)
        # zero-length segments are never selected away from exact boundaries;
        # the clamp only guards 0/0 there
        seg_sel = ad.maximum(seg[idx], 1e-300)
        u = (s - cum[idx]) / seg_sel
        px = self.cx[idx] + u * dx[idx]
        py = self.cy[idx] + u * dy[idx]
        return px, py


@dataclass(frozen=True)
class FrozenPath:
    """Mill path stored as literal placements (used by program replay)."""

    xs: np.ndarray  # (T,)
    ys: np.ndarray
    depth: float

    def __post_init__(self):
        if np.asarray(self.xs).shape[0] < 1:
            raise ValueError("frozen path needs at least one placement")

    @property
    def samples(self) -> int:
        return np.asarray(self.xs).shape[0]

    def placements(self):
        return self.xs, self.ys


@dataclass(frozen=True)
class MillOp:
    """Swept-cylinder removal along a path."""

    path: object  # MillPath | FrozenPath
    radius: object

    def values(self, x, y, z):
        px, py = self.path.placements()
        lat = sweep_lateral_min(x, y, px, py)
        return ad.maximum(lat - self.radius * self.radius,
                          self.path.depth - z)


@dataclass(frozen=True)
class DrillOp:
    """Single-placement cylinder removal at center (cx, cy, cz)."""

    cx: object
    cy: object
    cz: object
    radius: object

    def values(self, x, y, z):
        return cylinder_values(x, y, z, self.cx, self.cy, self.cz, self.radius)


@dataclass(frozen=True)
class MachiningStep:
    index: int
    rotation: Rotation
    op: object  # MillOp | DrillOp


@dataclass(frozen=True)
class WorkpieceField:
    """Blank plus an ordered sequence of applied machining steps."""

    blank: BoxField
    steps: tuple = ()

    def values(self, x, y, z):
        acc = self.blank.values(x, y, z)
        for step in self.steps:
            acc = _carve(acc, step, x, y, z)
        return acc


def _carve(acc, step: MachiningStep, x, y, z):
    # Rotating the workpiece, subtracting the tool, and rotating back is the
    # same as rotating only the query point, because (Rot^-1 F)(p) = F(Rot p);
    # hence S_s(p) = max(S_prev(p), -O_s(Rot_s p)) and the fold never
    # materialises intermediate frames.
    if step.rotation.is_identity():
        xr, yr, zr = x, y, z
    else:
        xr, yr, zr = step.rotation.rotate(x, y, z)
    return ad.maximum(acc, -step.op.values(xr, yr, zr))


def apply_step(prev: WorkpieceField, step: MachiningStep) -> WorkpieceField:
    """Carve one more step; shares the existing step prefix."""
    return WorkpieceField(prev.blank, prev.steps + (step,))


def eval_program(blank: BoxField, steps, p):
    """Left fold of apply_step over `steps`, evaluated at p."""
    return WorkpieceField(blank, tuple(steps)).values(p[0], p[1], p[2])


def eval_mill(op: MillOp, p):
    return op.values(p[0], p[1], p[2])


def eval_drill(op: DrillOp, p):
    return op.values(p[0], p[1], p[2])


def sample_path(path: MillPath, t: float):
    """Position of the tool center at parameter t; returns (x, y, depth)."""
    px, py = path.sample_at(np.asarray([t]))
    return px[0], py[0], path.depth


def validate_step_order(steps) -> None:
    """Indices strictly increasing; every mill precedes every drill."""
    last = 0
    seen_drill = False
    for step in steps:
        if step.index <= last:
            raise ValueError("step indices must be strictly increasing")
        last = step.index
        if isinstance(step.op, DrillOp):
            seen_drill = True
        elif seen_drill:
            raise ValueError("mill steps must precede drill steps")


# -- sweep evaluation ---------------------------------------------------------


def sweep_lateral_min(x, y, px, py):
    """min over placements of squared xy distance from (x, y) to the path.

    The winning placement index is found on detached values (first argmin),
    then the squared distance is recomputed through that gather, so the value
    is bit-identical to a dense min and the gradient follows the first
    attaining placement, while the tape only ever holds point-sized arrays.
    """
    xv = value_of(x)
    if xv.ndim == 0:
        dx = x - px
        dy = y - py
        return ad.amin(dx * dx + dy * dy)
    n = xv.shape[0]
    idx = np.empty(n, dtype=np.intp)
    xd, yd = xv, value_of(y)
    pxd, pyd = value_of(px), value_of(py)
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        d2 = np.square(xd[lo:hi, None] - pxd[None, :])
        d2 += np.square(yd[lo:hi, None] - pyd[None, :])
        idx[lo:hi] = np.argmin(d2, axis=1)
    sx = px[idx] if ad.is_var(px) else pxd[idx]
    sy = py[idx] if ad.is_var(py) else pyd[idx]
    dx = x - sx
    dy = y - sy
    return dx * dx + dy * dy


# -- structured grids ---------------------------------------------------------


@dataclass(frozen=True)
class GridPoints:
    """Voxel-center lattice in column-contiguous order (z fastest).

    Flat index = (ix * ny + iy) * nz + iz, so one xy column occupies a
    contiguous run of nz entries; unrotated sweeps then evaluate their
    lateral term once per column instead of once per voxel.
    """

    x_axis: np.ndarray
    y_axis: np.ndarray
    z_axis: np.ndarray
    col_x: np.ndarray = field(init=False, repr=False)
    col_y: np.ndarray = field(init=False, repr=False)
    flat_x: np.ndarray = field(init=False, repr=False)
    flat_y: np.ndarray = field(init=False, repr=False)
    flat_z: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        nx, ny, nz = len(self.x_axis), len(self.y_axis), len(self.z_axis)
        cx, cy = np.meshgrid(self.x_axis, self.y_axis, indexing="ij")
        object.__setattr__(self, "col_x", cx.ravel())
        object.__setattr__(self, "col_y", cy.ravel())
        object.__setattr__(self, "flat_x", np.repeat(cx.ravel(), nz))
        object.__setattr__(self, "flat_y", np.repeat(cy.ravel(), nz))
        object.__setattr__(self, "flat_z", np.tile(self.z_axis, nx * ny))

    @property
    def shape(self) -> tuple[int, int, int]:
        return (len(self.x_axis), len(self.y_axis), len(self.z_axis))

    @property
    def size(self) -> int:
        nx, ny, nz = self.shape
        return nx * ny * nz


def op_values_on_grid(op, rotation: Rotation, grid: GridPoints):
    """Tool field at every voxel center of the step's rotated frame, flat."""
    nz = len(grid.z_axis)
    if rotation.is_identity() and isinstance(op, MillOp):
        px, py = op.path.placements()
        lat_col = sweep_lateral_min(grid.col_x, grid.col_y, px, py)
        lat = ad.repeat_interleave(lat_col, nz) if ad.is_var(lat_col) \
            else np.repeat(lat_col, nz)
        return ad.maximum(lat - op.radius * op.radius,
                          op.path.depth - grid.flat_z)
    if rotation.is_identity():
        return op.values(grid.flat_x, grid.flat_y, grid.flat_z)
    xr, yr, zr = rotation.rotate(grid.flat_x, grid.flat_y, grid.flat_z)
    return op.values(xr, yr, zr)


def workpiece_values_on_grid(wp: WorkpieceField, grid: GridPoints):
    """Carved field at every voxel center, flat (z fastest)."""
    acc = wp.blank.values(grid.flat_x, grid.flat_y, grid.flat_z)
    for step in wp.steps:
        acc = ad.maximum(acc, -op_values_on_grid(step.op, step.rotation, grid))
    return acc
