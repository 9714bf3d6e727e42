"""Voxel grids over the blank and their +1/-1 material labels.

Label semantics: +1 marks material that is still present but must be removed,
-1 marks everything else (target interior, or already-removed stock).  A field
value strictly below zero counts as present; exact zeros count as removed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .autodiff import value_of
from .ops import GridPoints, WorkpieceField, workpiece_values_on_grid

MAGIC = b"CNCV"


@dataclass(frozen=True)
class TargetOccupancy:
    """Boolean inside-target mask sampled at the voxel centers of a blank."""

    inside: np.ndarray  # (n, n, n) bool, axes (x, y, z)
    box: tuple[float, float, float]  # blank half-extents the grid spans

    def __post_init__(self):
        if not self.inside.any():
            raise ValueError("target occupancy is empty")

    @property
    def n(self) -> int:
        return self.inside.shape[0]


@dataclass(frozen=True)
class VoxelGrid:
    """Cubic-count lattice with one +1/-1 label per voxel."""

    n: int
    box: tuple[float, float, float]
    labels: np.ndarray  # (n, n, n) int8 in {+1, -1}, axes (x, y, z)

    def points(self) -> GridPoints:
        return grid_points(self.box, self.n)

    def flat_labels(self) -> np.ndarray:
        """Labels in the evaluation order of :class:`GridPoints` (z fastest)."""
        return self.labels.ravel()

    def positive_count(self) -> int:
        return int(np.count_nonzero(self.labels > 0))


def center_axis(extent: float, n: int) -> np.ndarray:
    """n voxel-center coordinates strictly inside [-extent, extent]."""
    step = 2.0 * extent / n
    return -extent + (np.arange(n) + 0.5) * step


@lru_cache(maxsize=32)
def _grid_points_cached(box: tuple[float, float, float], n: int) -> GridPoints:
    l, w, h = box
    return GridPoints(center_axis(l, n), center_axis(w, n), center_axis(h, n))


def grid_points(box, n: int) -> GridPoints:
    return _grid_points_cached((float(box[0]), float(box[1]), float(box[2])), n)


def init_labels(target: TargetOccupancy, blank, n: int) -> VoxelGrid:
    """Initial labeling: -1 inside the target, +1 elsewhere in the blank."""
    if n < 8:
        raise ValueError("resolution must be at least 8")
    if target.inside.shape != (n, n, n):
        raise ValueError("target occupancy resolution mismatch")
    box = (float(blank.l), float(blank.w), float(blank.h))
    labels = np.where(target.inside, -1, 1).astype(np.int8)
    return VoxelGrid(n, box, labels)


def relabel(grid: VoxelGrid, current: WorkpieceField,
            target: TargetOccupancy) -> VoxelGrid:
    """Refresh labels: +1 only where stock is still present outside the target."""
    if target.inside.shape != grid.labels.shape:
        raise ValueError("target occupancy resolution mismatch")
    vals = value_of(workpiece_values_on_grid(current, grid.points()))
    present = (vals < 0).reshape(grid.labels.shape)
    labels = np.where(present & ~target.inside, 1, -1).astype(np.int8)
    return VoxelGrid(grid.n, grid.box, labels)


def _centers_z_major(grid: VoxelGrid, want_positive: bool) -> np.ndarray:
    """Centers of +1 (or -1) voxels, ordered by z, then y, then x."""
    xs = center_axis(grid.box[0], grid.n)
    ys = center_axis(grid.box[1], grid.n)
    zs = center_axis(grid.box[2], grid.n)
    mask = (grid.labels > 0) if want_positive else (grid.labels < 0)
    iz, iy, ix = np.nonzero(mask.transpose(2, 1, 0))  # (z, y, x) lexicographic
    return np.column_stack([xs[ix], ys[iy], zs[iz]])


def positive_centers(grid: VoxelGrid) -> np.ndarray:
    """(P, 3) centers of voxels still awaiting removal."""
    return _centers_z_major(grid, True)


def negative_centers(grid: VoxelGrid) -> np.ndarray:
    """(Q, 3) centers of target-or-removed voxels."""
    return _centers_z_major(grid, False)


# -- binary dump (debugging / oracle comparison) -----------------------------


def dump_grid(grid: VoxelGrid, path) -> None:
    """16-byte header (magic, u32 n, 2x u32 reserved) + n^3 signed bytes, z-major."""
    payload = grid.labels.transpose(2, 1, 0).astype(np.int8).tobytes()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<III", grid.n, 0, 0))
        f.write(payload)


def load_grid(path, box=(0.5, 0.5, 0.5)) -> VoxelGrid:
    with open(path, "rb") as f:
        head = f.read(16)
        if len(head) != 16 or head[:4] != MAGIC:
            raise ValueError("not a voxel grid dump (bad magic)")
        n, _, _ = struct.unpack("<III", head[4:])
        raw = np.frombuffer(f.read(n ** 3), dtype=np.int8)
    if raw.size != n ** 3:
        raise ValueError("truncated voxel grid dump")
    labels = raw.reshape(n, n, n).transpose(2, 1, 0).copy()
    if not np.all(np.abs(labels) == 1):
        raise ValueError("voxel labels must be +1 or -1")
    return VoxelGrid(n, tuple(float(b) for b in box), labels)
