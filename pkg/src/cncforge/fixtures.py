"""Procedural acceptance shapes: watertight meshes plus analytic membership.

Every fixture fills the normalized blank [-0.5, 0.5]^3 and carries both a
triangle mesh (for the CLI / mesh pipeline) and a vectorized inside(x, y, z)
predicate (the oracle the reconstruction tests score against).  Hole walls
are regular 32-gon prisms and the membership functions test the same polygon,
so mesh and oracle agree exactly.

Shapes:
* slot      -- through-slot 0.2 wide along y, floor at z = -0.1 (mill work)
* hole      -- vertical through-hole r = 0.03 at (0.2, 0.1) (drill work)
* chamfer   -- 45 degree undercut wedge on the bottom +x edge (needs rotation)
* lbracket  -- L-section, top-right quadrant removed (general milling)
* slot_hole -- the slot plus a through-hole at (0.3, 0) (mill + drill)
"""

from __future__ import annotations

import numpy as np

from .meshio import TriMesh
from .voxels import TargetOccupancy, center_axis

HOLE_CENTER = (0.2, 0.1)
HOLE_RADIUS = 0.03
SLOT_HOLE_CENTER = (0.3, 0.0)
HOLE_SIDES = 32
SLOT_HALF_WIDTH = 0.1
SLOT_FLOOR = -0.1


# -- mesh assembly helpers ----------------------------------------------------


def _signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _ensure_ccw(poly: np.ndarray) -> np.ndarray:
    return poly if _signed_area(poly) > 0 else poly[::-1].copy()


def _ear_clip(poly: np.ndarray) -> list[tuple[int, int, int]]:
    """Triangulate a simple CCW polygon by ear clipping."""
    idx = list(range(len(poly)))
    tris = []
    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10000:
            raise ValueError("ear clipping failed (not a simple polygon?)")
        clipped = False
        for pos in range(len(idx)):
            a, b, c = (idx[pos - 1], idx[pos], idx[(pos + 1) % len(idx)])
            pa, pb, pc = poly[a], poly[b], poly[c]
            cross = (pb[0] - pa[0]) * (pc[1] - pa[1]) \
                - (pb[1] - pa[1]) * (pc[0] - pa[0])
            if cross <= 1e-15:  # reflex or collinear corner
                continue
            ear = True
            for other in idx:
                if other in (a, b, c):
                    continue
                q = poly[other]
                d0 = (pb[0] - pa[0]) * (q[1] - pa[1]) - (pb[1] - pa[1]) * (q[0] - pa[0])
                d1 = (pc[0] - pb[0]) * (q[1] - pb[1]) - (pc[1] - pb[1]) * (q[0] - pb[0])
                d2 = (pa[0] - pc[0]) * (q[1] - pc[1]) - (pa[1] - pc[1]) * (q[0] - pc[0])
                if d0 > -1e-15 and d1 > -1e-15 and d2 > -1e-15:
                    ear = False
                    break
            if ear:
                tris.append((a, b, c))
                del idx[pos]
                clipped = True
                break
        if not clipped:
            raise ValueError("ear clipping stuck (not a simple polygon?)")
    tris.append((idx[0], idx[1], idx[2]))
    return tris


class _MeshBuilder:
    def __init__(self):
        self.verts: list[tuple] = []
        self.faces: list[tuple] = []
        self._index: dict[tuple, int] = {}

    def vertex(self, x, y, z) -> int:
        key = (float(x), float(y), float(z))
        i = self._index.get(key)
        if i is None:
            i = len(self.verts)
            self._index[key] = i
            self.verts.append(key)
        return i

    def tri(self, a, b, c):
        self.faces.append((a, b, c))

    def build(self) -> TriMesh:
        return TriMesh(np.asarray(self.verts, dtype=np.float64),
                       np.asarray(self.faces, dtype=np.intp))


def _extrude_y(poly_xz: np.ndarray, y0: float, y1: float,
               builder: _MeshBuilder | None = None,
               skip_wall=None) -> _MeshBuilder:
    """Prism from a simple (x, z) polygon swept along y, outward-oriented.

    `skip_wall(i)` suppresses the wall quad of polygon edge i -> i+1 so a
    caller can substitute a pierced wall.
    """
    b = builder or _MeshBuilder()
    poly = _ensure_ccw(np.asarray(poly_xz, dtype=np.float64))
    m = len(poly)
    # a CCW-in-(x,z) triangle maps to a 3D normal along -y, so the bottom cap
    # keeps the clip order and the top cap reverses it
    for (i, j, k) in _ear_clip(poly):
        b.tri(b.vertex(poly[i][0], y0, poly[i][1]),
              b.vertex(poly[j][0], y0, poly[j][1]),
              b.vertex(poly[k][0], y0, poly[k][1]))
        b.tri(b.vertex(poly[k][0], y1, poly[k][1]),
              b.vertex(poly[j][0], y1, poly[j][1]),
              b.vertex(poly[i][0], y1, poly[i][1]))
    for i in range(m):
        if skip_wall is not None and skip_wall(i):
            continue
        xi, zi = poly[i]
        xj, zj = poly[(i + 1) % m]
        a0 = b.vertex(xi, y0, zi)
        a1 = b.vertex(xi, y1, zi)
        c0 = b.vertex(xj, y0, zj)
        c1 = b.vertex(xj, y1, zj)
        b.tri(a0, a1, c1)
        b.tri(a0, c1, c0)
    return b


def _walls_z(poly_xy: np.ndarray, z0: float, z1: float,
             builder: _MeshBuilder) -> None:
    """Vertical walls along a CCW (x, y) polygon, normals to its outside."""
    poly = np.asarray(poly_xy, dtype=np.float64)
    m = len(poly)
    for i in range(m):
        xi, yi = poly[i]
        xj, yj = poly[(i + 1) % m]
        a0 = builder.vertex(xi, yi, z0)
        a1 = builder.vertex(xi, yi, z1)
        c0 = builder.vertex(xj, yj, z0)
        c1 = builder.vertex(xj, yj, z1)
        builder.tri(a0, c0, c1)
        builder.tri(a0, c1, a1)


def _ring_cap(outer_xy: np.ndarray, inner_xy: np.ndarray, z: float,
              up: bool, builder: _MeshBuilder) -> None:
    """Triangulated annulus between two CCW polygons (hole inside outer)."""
    outer = _ensure_ccw(np.asarray(outer_xy, dtype=np.float64))
    inner = _ensure_ccw(np.asarray(inner_xy, dtype=np.float64))
    center = inner.mean(axis=0)
    ang_o = np.arctan2(outer[:, 1] - center[1], outer[:, 0] - center[0])
    ang_i = np.arctan2(inner[:, 1] - center[1], inner[:, 0] - center[0])
    o_order = list(np.argsort(ang_o))
    i_order = list(np.argsort(ang_i))

    def emit(p, q, r):
        a = builder.vertex(p[0], p[1], z)
        bq = builder.vertex(q[0], q[1], z)
        c = builder.vertex(r[0], r[1], z)
        if up:
            builder.tri(a, bq, c)
        else:
            builder.tri(a, c, bq)

    no, ni = len(o_order), len(i_order)
    sorted_o = ang_o[o_order]
    sorted_i = ang_i[i_order]
    io = ii = 0
    # merge the two angular sequences into a closed strip of no + ni triangles
    while io < no or ii < ni:
        o_cur = outer[o_order[io % no]]
        i_cur = inner[i_order[ii % ni]]
        next_o = sorted_o[(io + 1) % no] + (2 * np.pi if io + 1 >= no else 0.0)
        next_i = sorted_i[(ii + 1) % ni] + (2 * np.pi if ii + 1 >= ni else 0.0)
        if io < no and (ii >= ni or next_o <= next_i):
            emit(o_cur, outer[o_order[(io + 1) % no]], i_cur)
            io += 1
        else:
            emit(o_cur, inner[i_order[(ii + 1) % ni]], i_cur)
            ii += 1


def _regular_polygon(cx: float, cy: float, r: float, m: int) -> np.ndarray:
    ang = 2 * np.pi * np.arange(m) / m
    return np.column_stack([cx + r * np.cos(ang), cy + r * np.sin(ang)])


def signed_volume(mesh: TriMesh) -> float:
    a = mesh.vertices[mesh.faces[:, 0]]
    b = mesh.vertices[mesh.faces[:, 1]]
    c = mesh.vertices[mesh.faces[:, 2]]
    return float(np.sum(np.einsum("ij,ij->i", a, np.cross(b, c))) / 6.0)


# -- fixture definitions --------------------------------------------------------


_SLOT_POLY = [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (SLOT_HALF_WIDTH, 0.5),
              (SLOT_HALF_WIDTH, SLOT_FLOOR), (-SLOT_HALF_WIDTH, SLOT_FLOOR),
              (-SLOT_HALF_WIDTH, 0.5), (-0.5, 0.5)]


def slot_block() -> TriMesh:
    return _extrude_y(np.asarray(_SLOT_POLY), -0.5, 0.5).build()


def slot_inside(x, y, z):
    x, y, z = np.asarray(x), np.asarray(y), np.asarray(z)
    in_slot = (np.abs(x) <= SLOT_HALF_WIDTH) & (z >= SLOT_FLOOR)
    return _in_box(x, y, z) & ~in_slot


# bevel plane z = x - CHAMFER_OFFSET; 0.48 keeps the plane off voxel centers
# for every resolution that is not a multiple of 25
CHAMFER_OFFSET = 0.48
_CHAMFER_POLY = [(-0.5, -0.5), (CHAMFER_OFFSET - 0.5, -0.5),
                 (0.5, 0.5 - CHAMFER_OFFSET), (0.5, 0.5), (-0.5, 0.5)]


def chamfer_block() -> TriMesh:
    return _extrude_y(np.asarray(_CHAMFER_POLY), -0.5, 0.5).build()


def chamfer_inside(x, y, z):
    x, y, z = np.asarray(x), np.asarray(y), np.asarray(z)
    return _in_box(x, y, z) & (z >= x - CHAMFER_OFFSET)


_LBRACKET_POLY = [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.0), (0.0, 0.0),
                  (0.0, 0.5), (-0.5, 0.5)]


def lbracket_block() -> TriMesh:
    return _extrude_y(np.asarray(_LBRACKET_POLY), -0.5, 0.5).build()


def lbracket_inside(x, y, z):
    x, y, z = np.asarray(x), np.asarray(y), np.asarray(z)
    return _in_box(x, y, z) & ~((x > 0) & (z > 0))


def hole_block() -> TriMesh:
    b = _MeshBuilder()
    square = np.array([(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)])
    hole = _regular_polygon(*HOLE_CENTER, HOLE_RADIUS, HOLE_SIDES)
    _walls_z(square, -0.5, 0.5, b)          # outer walls, outward
    _walls_z(hole[::-1], -0.5, 0.5, b)      # hole walls point into the hole
    _ring_cap(square, hole, 0.5, True, b)   # top
    _ring_cap(square, hole, -0.5, False, b)
    return b.build()


def _in_polygon(x, y, poly) -> np.ndarray:
    inside = np.ones(np.broadcast(x, y).shape, dtype=bool)
    m = len(poly)
    for i in range(m):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % m]
        inside &= (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0) >= 0
    return inside


def hole_inside(x, y, z):
    x, y, z = np.asarray(x), np.asarray(y), np.asarray(z)
    hole = _regular_polygon(*HOLE_CENTER, HOLE_RADIUS, HOLE_SIDES)
    return _in_box(x, y, z) & ~_in_polygon(x, y, hole)


def slot_hole_block() -> TriMesh:
    b = _MeshBuilder()
    poly = _ensure_ccw(np.asarray(_SLOT_POLY, dtype=np.float64))

    def edge_matches(i, p, q):
        a, c = poly[i], poly[(i + 1) % len(poly)]
        return (np.allclose(a, p) and np.allclose(c, q)) or \
            (np.allclose(a, q) and np.allclose(c, p))

    skip = [i for i in range(len(poly))
            if edge_matches(i, (0.5, 0.5), (SLOT_HALF_WIDTH, 0.5))
            or edge_matches(i, (-0.5, -0.5), (0.5, -0.5))]
    _extrude_y(poly, -0.5, 0.5, builder=b, skip_wall=lambda i: i in skip)
    hole = _regular_polygon(*SLOT_HOLE_CENTER, HOLE_RADIUS, HOLE_SIDES)
    shelf = np.array([(SLOT_HALF_WIDTH, -0.5), (0.5, -0.5),
                      (0.5, 0.5), (SLOT_HALF_WIDTH, 0.5)])
    bottom = np.array([(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)])
    _walls_z(hole[::-1], -0.5, 0.5, b)
    _ring_cap(shelf, hole, 0.5, True, b)
    _ring_cap(bottom, hole, -0.5, False, b)
    return b.build()


def slot_hole_inside(x, y, z):
    x, y, z = np.asarray(x), np.asarray(y), np.asarray(z)
    hole = _regular_polygon(*SLOT_HOLE_CENTER, HOLE_RADIUS, HOLE_SIDES)
    return slot_inside(x, y, z) & ~_in_polygon(x, y, hole)


def _in_box(x, y, z):
    return (np.abs(x) < 0.5) & (np.abs(y) < 0.5) & (np.abs(z) < 0.5)


FIXTURES = {
    "slot": (slot_block, slot_inside),
    "hole": (hole_block, hole_inside),
    "chamfer": (chamfer_block, chamfer_inside),
    "lbracket": (lbracket_block, lbracket_inside),
    "slot_hole": (slot_hole_block, slot_hole_inside),
}


def fixture_occupancy(name: str, n: int) -> TargetOccupancy:
    """Analytic voxelization of a fixture (the oracle path, no mesh involved)."""
    _, inside = FIXTURES[name]
    ax = center_axis(0.5, n)
    X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
    return TargetOccupancy(inside(X, Y, Z), (0.5, 0.5, 0.5))
