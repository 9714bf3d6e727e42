"""Reconstruction quality metrics: IoU, F1, Chamfer distance, normal consistency.

Volume metrics compare boolean occupancy grids (inside = positive class);
surface metrics compare point samples with unit normals.  Chamfer uses squared
Euclidean distances in both directions and is reported multiplied by 1000.

Nearest-neighbour queries run through a uniform spatial hash whose answers are
exactly those of a brute-force scan (the acceleration never changes results).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class OccupancyPair:
    predicted: np.ndarray  # bool
    truth: np.ndarray      # bool

    def __post_init__(self):
        if self.predicted.shape != self.truth.shape:
            raise ValueError("occupancy grids must have identical dimensions")


@dataclass(frozen=True)
class SurfaceSamples:
    """Point samples with unit normals, one row per sample."""

    points: np.ndarray   # (n, 3)
    normals: np.ndarray  # (n, 3)

    def __post_init__(self):
        if len(self.points) != len(self.normals):
            raise ValueError("points/normals length mismatch")

    def require_unit_normals(self):
        norms = np.linalg.norm(self.normals, axis=1)
        if len(norms) and np.max(np.abs(norms - 1.0)) > 1e-9:
            raise ValueError("normals must be unit length")


def occupancy_metrics(pair: OccupancyPair) -> tuple[float, float]:
    """(IoU, F1) with inside as the positive class and A the prediction."""
    a = pair.predicted.astype(bool)
    b = pair.truth.astype(bool)
    inter = np.count_nonzero(a & b)
    union = np.count_nonzero(a | b)
    iou = 1.0 if union == 0 else inter / union
    pred = np.count_nonzero(a)
    truth = np.count_nonzero(b)
    precision = inter / pred if pred else 0.0
    recall = inter / truth if truth else 0.0
    f1 = 0.0 if precision + recall == 0 else \
        2 * precision * recall / (precision + recall)
    return iou, f1


def iou_of(pred: np.ndarray, truth: np.ndarray) -> float:
    return occupancy_metrics(OccupancyPair(pred, truth))[0]


# -- nearest neighbours --------------------------------------------------------


class SpatialHash:
    """Uniform-grid index over 3D points with exact nearest queries.

    A query expands Chebyshev rings of cells around its own cell and stops
    once every unvisited cell is provably farther than the best hit, so the
    returned neighbour is identical to a brute-force scan (first index wins
    ties the same way the scan does).
    """

    def __init__(self, points: np.ndarray, cell: float | None = None):
        self.points = np.asarray(points, dtype=np.float64)
        if len(self.points) == 0:
            raise ValueError("cannot index an empty point set")
        if cell is None:
            span = float(np.max(np.ptp(self.points, axis=0)))
            if span <= 0.0:
                cell = 1.0  # all points coincide
            else:
                # aim for a few points per cell on uniformly spread samples
                cell = span / max(round(len(self.points) ** (1 / 3)), 1)
        self.cell = float(cell)
        self.cells: dict[tuple[int, int, int], list[int]] = {}
        keys = np.floor(self.points / self.cell).astype(np.int64)
        for i, key in enumerate(map(tuple, keys)):
            self.cells.setdefault(key, []).append(i)
        self.key_min = keys.min(axis=0)
        self.key_max = keys.max(axis=0)

    def _ring(self, base, r):
        bx, by, bz = base
        if r == 0:
            yield (bx, by, bz)
            return
        for dx in range(-r, r + 1):
            for dy in range(-r, r + 1):
                for dz in range(-r, r + 1):
                    if max(abs(dx), abs(dy), abs(dz)) == r:
                        yield (bx + dx, by + dy, bz + dz)

    def nearest(self, q: np.ndarray) -> tuple[int, float]:
        """(index, squared distance) of the nearest indexed point to q."""
        base = np.floor(q / self.cell).astype(np.int64)
        base_t = tuple(int(v) for v in base)
        best_i, best_d2 = -1, np.inf
        # rings below r_first cannot touch the occupied bounding box; rings
        # above r_cover have visited every occupied cell
        r_first = int(max(0, np.max(np.maximum(self.key_min - base,
                                               base - self.key_max))))
        r_cover = int(np.max(np.maximum(self.key_max - base,
                                        base - self.key_min)))
        r = r_first
        while True:
            for key in self._ring(base_t, r):
                idx = self.cells.get(key)
                if not idx:
                    continue
                pts = self.points[idx]
                d2 = np.sum((pts - q) ** 2, axis=1)
                j = int(np.argmin(d2))
                # mimic the brute-force scan: ties keep the smallest index
                if d2[j] < best_d2 or (d2[j] == best_d2 and idx[j] < best_i):
                    best_i, best_d2 = idx[j], float(d2[j])
            # cells on ring r+1 or beyond are at least r*cell away from q
            if best_i >= 0 and ((r * self.cell) ** 2 >= best_d2 or r >= r_cover):
                break
            r += 1
        return best_i, best_d2

    def nearest_many(self, queries: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        idx = np.empty(len(queries), dtype=np.intp)
        d2 = np.empty(len(queries))
        for i, q in enumerate(np.asarray(queries, dtype=np.float64)):
            idx[i], d2[i] = self.nearest(q)
        return idx, d2


def nearest_brute(points: np.ndarray, queries: np.ndarray):
    """Reference nearest-neighbour scan (chunked full distance matrix)."""
    idx = np.empty(len(queries), dtype=np.intp)
    d2 = np.empty(len(queries))
    for lo in range(0, len(queries), 1024):
        hi = min(lo + 1024, len(queries))
        dist = np.sum((queries[lo:hi, None, :] - points[None, :, :]) ** 2, axis=2)
        idx[lo:hi] = np.argmin(dist, axis=1)
        d2[lo:hi] = dist[np.arange(hi - lo), idx[lo:hi]]
    return idx, d2


# -- surface metrics --------------------------------------------------------------


def chamfer(a: SurfaceSamples, b: SurfaceSamples) -> float:
    """1000 x symmetric mean squared nearest-neighbour distance."""
    if len(a.points) == 0 or len(b.points) == 0:
        raise ValueError("chamfer distance needs nonempty sample sets")
    _, d_ab = SpatialHash(b.points).nearest_many(a.points)
    _, d_ba = SpatialHash(a.points).nearest_many(b.points)
    return 1000.0 * (float(np.mean(d_ab)) + float(np.mean(d_ba)))


def normal_consistency(a: SurfaceSamples, b: SurfaceSamples) -> float:
    """Symmetric mean |cos angle| between normals of nearest neighbours."""
    if len(a.points) == 0 or len(b.points) == 0:
        raise ValueError("normal consistency needs nonempty sample sets")
    a.require_unit_normals()
    b.require_unit_normals()
    i_ab, _ = SpatialHash(b.points).nearest_many(a.points)
    i_ba, _ = SpatialHash(a.points).nearest_many(b.points)
    fwd = np.abs(np.sum(a.normals * b.normals[i_ab], axis=1))
    bwd = np.abs(np.sum(b.normals * a.normals[i_ba], axis=1))
    return 0.5 * (float(np.mean(fwd)) + float(np.mean(bwd)))


def metrics_csv_header() -> str:
    return "shape,iou,f1,cd,nc,runtime_seconds"


def metrics_csv_row(shape_id: str, iou: float, f1: float, cd: float,
                    nc: float, runtime: float) -> str:
    return f"{shape_id},{iou!r},{f1!r},{cd!r},{nc!r},{runtime:.3f}"
