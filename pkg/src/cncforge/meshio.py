"""Triangle mesh ingestion, voxelization, surface sampling, marching cubes.

Meshes are normalized on load: centered at the origin with the largest
half-extent scaled to 0.5, matching the coordinate convention of every other
module.  Inside/outside tests use ray-crossing parity with a majority vote
over the three axis directions, which tolerates modest mesh defects.

Marching cubes uses the standard 256-case table; the table is derived at
import time by pairing crossed edges around each face (ambiguous faces always
separate the inside corners, applied from both sides of a face, so adjacent
cells agree and surfaces stay watertight on unambiguous and ambiguous
configurations alike).  Triangle orientation points toward positive field.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .metrics import SurfaceSamples
from .voxels import TargetOccupancy, center_axis

_DEGENERATE_AREA = 1e-14


class MeshError(ValueError):
    """Raised for unparsable or empty mesh files."""


@dataclass(frozen=True)
class TriMesh:
    vertices: np.ndarray  # (V, 3) float64
    faces: np.ndarray     # (F, 3) int

    def __post_init__(self):
        if len(self.faces) < 1:
            raise MeshError("mesh has no triangles")
        if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
            raise MeshError("face index out of range")

    @property
    def extents(self) -> tuple[float, float, float]:
        half = (self.vertices.max(axis=0) - self.vertices.min(axis=0)) / 2
        return tuple(float(h) for h in half)

    def triangle_areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.faces[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def drop_degenerate(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    a, b, c = (vertices[faces[:, i]] for i in range(3))
    areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    return faces[areas > _DEGENERATE_AREA]


def normalize(mesh: TriMesh) -> TriMesh:
    """Center the bounding box at the origin, max half-extent exactly 0.5."""
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    center = (lo + hi) / 2
    half = np.max(hi - lo) / 2
    if half <= 0:
        raise MeshError("mesh is degenerate (zero extent)")
    verts = (mesh.vertices - center) * (0.5 / half)
    return TriMesh(verts, mesh.faces)


# -- file formats -----------------------------------------------------------------


def _parse_obj(text: str, path) -> tuple[np.ndarray, np.ndarray]:
    verts: list[list[float]] = []
    faces: list[list[int]] = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tok = line.split()
        try:
            if tok[0] == "v":
                verts.append([float(t) for t in tok[1:4]])
            elif tok[0] == "f":
                idx = [int(t.split("/")[0]) for t in tok[1:]]
                idx = [i - 1 if i > 0 else len(verts) + i for i in idx]
                for j in range(1, len(idx) - 1):  # polygon -> triangle fan
                    faces.append([idx[0], idx[j], idx[j + 1]])
        except (ValueError, IndexError) as e:
            raise MeshError(f"{path}:{ln}: cannot parse {raw!r}") from e
    return np.asarray(verts, dtype=np.float64), np.asarray(faces, dtype=np.intp)


def _weld(tri_verts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Merge exactly-equal vertices; returns (vertices, index per input row)."""
    seen: dict[tuple, int] = {}
    index = np.empty(len(tri_verts), dtype=np.intp)
    verts: list[tuple] = []
    for i, v in enumerate(map(tuple, tri_verts)):
        j = seen.get(v)
        if j is None:
            j = len(verts)
            seen[v] = j
            verts.append(v)
        index[i] = j
    return np.asarray(verts, dtype=np.float64), index


def _parse_stl(blob: bytes, path) -> tuple[np.ndarray, np.ndarray]:
    def from_tris(tris: np.ndarray):
        verts, idx = _weld(tris.reshape(-1, 3))
        return verts, idx.reshape(-1, 3)

    if len(blob) >= 84:
        (count,) = struct.unpack("<I", blob[80:84])
        if len(blob) == 84 + 50 * count and count > 0:
            rec = np.frombuffer(blob[84:], dtype=np.uint8).reshape(count, 50)
            tris = rec[:, 12:48].copy().view("<f4").reshape(count, 3, 3)
            return from_tris(tris.astype(np.float64))
    try:
        text = blob.decode("ascii")
    except UnicodeDecodeError as e:
        raise MeshError(f"{path}: neither binary nor ASCII STL") from e
    tris: list[list[float]] = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        tok = raw.split()
        if tok[:1] == ["vertex"]:
            try:
                tris.append([float(t) for t in tok[1:4]])
            except (ValueError, IndexError) as e:
                raise MeshError(f"{path}:{ln}: cannot parse {raw!r}") from e
    if len(tris) == 0 or len(tris) % 3:
        raise MeshError(f"{path}: ASCII STL with {len(tris)} vertex records")
    return from_tris(np.asarray(tris).reshape(-1, 3, 3))


def load_mesh(path) -> TriMesh:
    """Parse OBJ or STL, drop degenerate triangles, normalize."""
    path = str(path)
    if path.lower().endswith(".stl"):
        with open(path, "rb") as f:
            verts, faces = _parse_stl(f.read(), path)
    else:
        with open(path) as f:
            verts, faces = _parse_obj(f.read(), path)
    if len(verts) == 0 or len(faces) == 0:
        raise MeshError(f"{path}: no usable geometry")
    faces = drop_degenerate(verts, np.asarray(faces))
    if len(faces) == 0:
        raise MeshError(f"{path}: all triangles degenerate")
    return normalize(TriMesh(verts, faces))


def save_obj(mesh: TriMesh, path) -> None:
    with open(path, "w") as f:
        for v in mesh.vertices:
            f.write(f"v {v[0]:.17g} {v[1]:.17g} {v[2]:.17g}\n")
        for a, b, c in mesh.faces + 1:
            f.write(f"f {a} {b} {c}\n")


# -- occupancy (ray parity, 3-axis majority vote) ------------------------------------


def _axis_votes(verts: np.ndarray, faces: np.ndarray, axes: tuple, w_axis: int,
                n: int) -> np.ndarray:
    """Inside votes shaped (n, n, n) from rays along `w_axis`."""
    u_axis, v_axis = [a for a in range(3) if a != w_axis]
    cu = axes[u_axis]
    cv = axes[v_axis]
    cw = axes[w_axis]
    counts = np.zeros((n, n, n + 1), dtype=np.int64)  # (u, v, w-bucket)
    tri = verts[faces]  # (F, 3, 3)
    for p in tri:
        u = p[:, u_axis]
        v = p[:, v_axis]
        w = p[:, w_axis]
        area2 = (u[1] - u[0]) * (v[2] - v[0]) - (u[2] - u[0]) * (v[1] - v[0])
        if area2 == 0.0:  # projects to a line: rays pierce other triangles
            continue
        if area2 < 0:  # make CCW in (u, v)
            u, v, w = u[[0, 2, 1]], v[[0, 2, 1]], w[[0, 2, 1]]
            area2 = -area2
        i0 = np.searchsorted(cu, min(u))
        i1 = np.searchsorted(cu, max(u), side="right")
        j0 = np.searchsorted(cv, min(v))
        j1 = np.searchsorted(cv, max(v), side="right")
        if i0 >= i1 or j0 >= j1:
            continue
        qu = cu[i0:i1][:, None]
        qv = cv[j0:j1][None, :]
        inside = np.ones((i1 - i0, j1 - j0), dtype=bool)
        lam = []
        for k in range(3):
            a, b = k, (k + 1) % 3
            e = (u[b] - u[a]) * (qv - v[a]) - (v[b] - v[a]) * (qu - u[a])
            # top-left style fill rule so shared edges count exactly once
            du, dv = u[b] - u[a], v[b] - v[a]
            include_boundary = dv < 0 or (dv == 0 and du < 0)
            inside &= (e > 0) | ((e == 0) & include_boundary)
            lam.append(e)
        if not inside.any():
            continue
        # barycentric weights: edge k is opposite vertex (k + 2) % 3
        wq = (lam[0] * w[2] + lam[1] * w[0] + lam[2] * w[1]) / area2
        ii, jj = np.nonzero(inside)
        bucket = np.searchsorted(cw, wq[ii, jj])
        np.add.at(counts, (ii + i0, jj + j0, bucket), 1)
    parity = np.cumsum(counts[:, :, :n], axis=2) % 2
    votes = np.zeros((n, n, n), dtype=np.int8)
    src = parity.astype(np.int8)
    if w_axis == 2:
        votes[:, :, :] = src
    elif w_axis == 1:
        votes = np.moveaxis(src, (0, 1, 2), (0, 2, 1)).copy()
    else:
        votes = np.moveaxis(src, (0, 1, 2), (1, 2, 0)).copy()
    return votes


def occupancy(mesh: TriMesh, n: int, box=None) -> TargetOccupancy:
    """Inside mask at voxel centers by 3-axis ray parity majority vote."""
    if box is None:
        box = mesh.extents
    axes = tuple(center_axis(box[a], n) for a in range(3))
    votes = sum(_axis_votes(mesh.vertices, mesh.faces, axes, w, n)
                for w in range(3))
    return TargetOccupancy((votes >= 2), tuple(float(b) for b in box))


def occupancy_array(mesh: TriMesh, n: int, box=(0.5, 0.5, 0.5)) -> np.ndarray:
    """Plain boolean mask (possibly empty) for metric-style voxelization."""
    axes = tuple(center_axis(box[a], n) for a in range(3))
    votes = sum(_axis_votes(mesh.vertices, mesh.faces, axes, w, n)
                for w in range(3))
    return votes >= 2


# -- surface sampling ------------------------------------------------------------------


def sample_surface(mesh: TriMesh, count: int, seed: int = 0) -> SurfaceSamples:
    """Area-weighted uniform samples; normals are the triangle normals."""
    if count < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    a = mesh.vertices[mesh.faces[:, 0]]
    b = mesh.vertices[mesh.faces[:, 1]]
    c = mesh.vertices[mesh.faces[:, 2]]
    cross = np.cross(b - a, c - a)
    areas = 0.5 * np.linalg.norm(cross, axis=1)
    total = areas.sum()
    if total <= 0:
        raise MeshError("mesh has zero surface area")
    pick = rng.choice(len(areas), size=count, p=areas / total)
    r1 = np.sqrt(rng.random(count))
    r2 = rng.random(count)
    pts = (a[pick] * (1 - r1)[:, None]
           + b[pick] * (r1 * (1 - r2))[:, None]
           + c[pick] * (r1 * r2)[:, None])
    normals = cross[pick] / np.linalg.norm(cross[pick], axis=1, keepdims=True)
    return SurfaceSamples(pts, normals)


# -- marching cubes --------------------------------------------------------------------

_CORNERS = np.array([(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
                     (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)])
_EDGES = [(0, 1), (1, 2), (2, 3), (0, 3), (4, 5), (5, 6), (6, 7), (4, 7),
          (0, 4), (1, 5), (2, 6), (3, 7)]
_FACES = [(0, 1, 2, 3), (4, 5, 6, 7), (0, 1, 5, 4),
          (1, 2, 6, 5), (2, 3, 7, 6), (3, 0, 4, 7)]
# (axis, lattice offset of the edge's lower corner) per local edge
_EDGE_AXIS_OFFSET = [(0, (0, 0, 0)), (1, (1, 0, 0)), (0, (0, 1, 0)),
                     (1, (0, 0, 0)), (0, (0, 0, 1)), (1, (1, 0, 1)),
                     (0, (0, 1, 1)), (1, (0, 0, 1)), (2, (0, 0, 0)),
                     (2, (1, 0, 0)), (2, (1, 1, 0)), (2, (0, 1, 0))]


def _build_case_table() -> list[list[tuple[int, int, int]]]:
    """Triangles (as local-edge triples) for each of the 256 sign patterns."""
    edge_faces = [[] for _ in range(12)]
    face_edge_list = []
    for fi, face in enumerate(_FACES):
        edges = []
        for i in range(4):
            pair = tuple(sorted((face[i], face[(i + 1) % 4])))
            e = _EDGES.index(pair)
            edges.append(e)
            edge_faces[e].append(fi)
        face_edge_list.append(edges)

    table: list[list[tuple[int, int, int]]] = []
    for config in range(256):
        inside = [(config >> c) & 1 == 1 for c in range(8)]
        crossed = [e for e, (a, b) in enumerate(_EDGES)
                   if inside[a] != inside[b]]
        if not crossed:
            table.append([])
            continue
        # pair crossed edges around each face
        partner: dict[tuple[int, int], int] = {}  # (edge, face) -> edge
        for fi, face in enumerate(_FACES):
            fe = [e for e in face_edge_list[fi] if e in crossed]
            if not fe:
                continue
            if len(fe) == 2:
                pairs = [(fe[0], fe[1])]
            else:  # ambiguous face: join the two edges touching each inside corner
                pairs = []
                for corner in face:
                    if not inside[corner]:
                        continue
                    touching = [e for e in fe if corner in _EDGES[e]]
                    if len(touching) == 2:
                        pairs.append((touching[0], touching[1]))
            for a, b in pairs:
                partner[(a, fi)] = b
                partner[(b, fi)] = a
        # walk cycles: leave each edge by the face not used to enter it
        triangles: list[tuple[int, int, int]] = []
        visited: set[int] = set()
        for start in crossed:
            if start in visited:
                continue
            cycle = [start]
            visited.add(start)
            enter_face = None
            cur = start
            while True:
                faces = [f for f in edge_faces[cur] if (cur, f) in partner]
                nxt_face = faces[0] if faces[0] != enter_face else faces[1]
                nxt = partner[(cur, nxt_face)]
                if nxt == start:
                    break
                cycle.append(nxt)
                visited.add(nxt)
                enter_face = nxt_face
                cur = nxt
            # orient: polygon normal must point toward the outside corners
            mids = np.array([(_CORNERS[_EDGES[e][0]] + _CORNERS[_EDGES[e][1]]) / 2
                             for e in cycle], dtype=np.float64)
            normal = np.zeros(3)
            for i in range(len(mids)):
                normal += np.cross(mids[i], mids[(i + 1) % len(mids)])
            a, b = _EDGES[cycle[0]]
            if inside[b]:
                a, b = b, a
            ref = _CORNERS[b] - _CORNERS[a]
            if np.dot(normal, ref) < 0:
                cycle.reverse()
            for i in range(1, len(cycle) - 1):
                triangles.append((cycle[0], cycle[i], cycle[i + 1]))
        table.append(triangles)
    return table


_CASE_TABLE = _build_case_table()


def marching_cubes(field_fn, n: int, box=(0.5, 0.5, 0.5)) -> TriMesh:
    """Zero level set of `field_fn` over an (n+1)^3 lattice spanning `box`.

    `field_fn(x, y, z)` takes flat coordinate arrays.  Triangles wind so
    their normals point toward positive field values.
    """
    l, w, h = box
    gx = np.linspace(-l, l, n + 1)
    gy = np.linspace(-w, w, n + 1)
    gz = np.linspace(-h, h, n + 1)
    X, Y, Z = np.meshgrid(gx, gy, gz, indexing="ij")
    vals = np.asarray(field_fn(X.ravel(), Y.ravel(), Z.ravel()),
                      dtype=np.float64).reshape(n + 1, n + 1, n + 1)
    if not np.isfinite(vals).all():
        raise MeshError("field is not finite on the lattice")
    inside = vals < 0
    config = np.zeros((n, n, n), dtype=np.uint16)
    for bit, (dx, dy, dz) in enumerate(_CORNERS):
        config |= inside[dx:dx + n, dy:dy + n, dz:dz + n].astype(np.uint16) << bit
    active = np.nonzero((config != 0) & (config != 255))
    if len(active[0]) == 0:
        raise MeshError("field has no zero crossing on the lattice")
    cfg_active = config[active]
    ax_, ay_, az_ = (a.astype(np.int64) for a in active)

    side = n + 1
    def edge_ids(local_edge, ix, iy, iz):
        axis, (dx, dy, dz) = _EDGE_AXIS_OFFSET[local_edge]
        return (((axis * side + (iz + dz)) * side + (iy + dy)) * side
                + (ix + dx))

    tri_edge_ids = []
    for cfg in np.unique(cfg_active):
        tris = _CASE_TABLE[cfg]
        if not tris:
            continue
        sel = cfg_active == cfg
        ix, iy, iz = ax_[sel], ay_[sel], az_[sel]
        for (e0, e1, e2) in tris:
            tri_edge_ids.append(np.stack([edge_ids(e0, ix, iy, iz),
                                          edge_ids(e1, ix, iy, iz),
                                          edge_ids(e2, ix, iy, iz)], axis=1))
    all_ids = np.concatenate(tri_edge_ids, axis=0)
    uniq, faces_flat = np.unique(all_ids.ravel(), return_inverse=True)
    faces = faces_flat.reshape(-1, 3)

    # interpolate one vertex per unique lattice edge
    axis = uniq // (side ** 3)
    rem = uniq % (side ** 3)
    ez = rem // (side * side)
    ey = (rem // side) % side
    ex = rem % side
    # NOTE: packing order above is ((axis*side + z)*side + y)*side + x
    v0 = vals[ex, ey, ez]
    step = np.eye(3, dtype=np.int64)[axis]
    v1 = vals[ex + step[:, 0], ey + step[:, 1], ez + step[:, 2]]
    t = v0 / (v0 - v1)
    px = gx[ex] + t * step[:, 0] * (gx[1] - gx[0])
    py = gy[ey] + t * step[:, 1] * (gy[1] - gy[0])
    pz = gz[ez] + t * step[:, 2] * (gz[1] - gz[0])
    verts = np.column_stack([px, py, pz])
    mesh = TriMesh(verts, faces)
    kept = drop_degenerate(verts, faces)
    if len(kept) == 0:
        raise MeshError("marching cubes produced only degenerate triangles")
    return TriMesh(verts, kept)


def euler_characteristic(mesh: TriMesh) -> int:
    edges = set()
    for a, b, c in mesh.faces:
        for u, v in ((a, b), (b, c), (c, a)):
            edges.add((min(u, v), max(u, v)))
    return len(mesh.vertices) - len(edges) + len(mesh.faces)


def is_watertight(mesh: TriMesh) -> bool:
    """Every undirected edge used by exactly two triangles."""
    counts: dict[tuple[int, int], int] = {}
    for a, b, c in mesh.faces:
        for u, v in ((a, b), (b, c), (c, a)):
            key = (min(u, v), max(u, v))
            counts[key] = counts.get(key, 0) + 1
    return all(v == 2 for v in counts.values())
