"""Triangle meshes, BVH nearest-surface queries and signed distance grids.

Hot loops (closest point on triangle, BVH traversal, generalized winding
number) are numba kernels; everything else is plain numpy.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from numba import njit

from .errors import FormatError, ResourceError, StructuralError, ValidationError

MIN_TRIANGLE_AREA = 1e-12
DEFAULT_CELL_SIZE = 0.05
DEFAULT_MAX_VOXELS = 64_000_000
SDF_MAGIC = b"PAAKSDF1"
_SDF_HEADER = struct.Struct("<3dd3I")


@dataclass(eq=False)
class TriangleMesh:
    """Indexed triangle mesh in meters, with an optional integer id per face."""

    vertices: np.ndarray
    triangles: np.ndarray
    face_ids: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.face_ids is not None:
            self.face_ids = np.ascontiguousarray(self.face_ids, dtype=np.int64).reshape(-1)
            if len(self.face_ids) != len(self.triangles):
                raise FormatError(
                    f"face id count {len(self.face_ids)} != triangle count {len(self.triangles)}"
                )
        if len(self.triangles):
            if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
                raise ValidationError("triangle index out of range")
            area = self.areas
            bad = np.flatnonzero(area < MIN_TRIANGLE_AREA)
            if len(bad):
                raise ValidationError(f"degenerate triangle {int(bad[0])} (area {area[bad[0]]:.3g} m^2)")
        self.vertices.setflags(write=False)
        self.triangles.setflags(write=False)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def corners(self) -> np.ndarray:
        """Triangle corner coordinates, shape (T, 3, 3)."""
        c = np.ascontiguousarray(self.vertices[self.triangles])
        c.setflags(write=False)
        return c

    @property
    def areas(self) -> np.ndarray:
        c = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def subset(self, face_mask: np.ndarray) -> "TriangleMesh":
        ids = None if self.face_ids is None else self.face_ids[face_mask]
        return TriangleMesh(self.vertices, self.triangles[face_mask], ids)


def box_mesh(lo, hi, face_id: int | None = None) -> TriangleMesh:
    """Closed axis-aligned box with outward-facing triangles."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    if np.any(hi <= lo):
        raise ValidationError(f"inverted or flat box: lo={lo.tolist()} hi={hi.tolist()}")
    x0, y0, z0 = lo
    x1, y1, z1 = hi
    v = np.array(
        [
            [x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
            [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1],
        ]
    )
    t = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # bottom (-z)
            [4, 5, 6], [4, 6, 7],  # top (+z)
            [0, 1, 5], [0, 5, 4],  # -y
            [2, 3, 7], [2, 7, 6],  # +y
            [1, 2, 6], [1, 6, 5],  # +x
            [3, 0, 4], [3, 4, 7],  # -x
        ]
    )
    ids = None if face_id is None else np.full(12, face_id)
    return TriangleMesh(v, t, ids)


def icosphere(subdivisions: int = 2, radius: float = 1.0) -> TriangleMesh:
    """Geodesic sphere built by midpoint subdivision of an icosahedron."""
    p = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [
        (-1, p, 0), (1, p, 0), (-1, -p, 0), (1, -p, 0),
        (0, -1, p), (0, 1, p), (0, -1, -p), (0, 1, -p),
        (p, 0, -1), (p, 0, 1), (-p, 0, -1), (-p, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return TriangleMesh(np.array(verts) * radius, np.array(faces))


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _closest_on_triangle(px, py, pz, tri):
    # Ericson, Real-Time Collision Detection, 5.1.5
    ax, ay, az = tri[0, 0], tri[0, 1], tri[0, 2]
    bx, by, bz = tri[1, 0], tri[1, 1], tri[1, 2]
    cx, cy, cz = tri[2, 0], tri[2, 1], tri[2, 2]
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return ax, ay, az
    bpx, bpy, bpz = px - bx, py - by, pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bx, by, bz
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return ax + v * abx, ay + v * aby, az + v * abz
    cpx, cpy, cpz = px - cx, py - cy, pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cx, cy, cz
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return ax + w * acx, ay + w * acy, az + w * acz
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return bx + w * (cx - bx), by + w * (cy - by), bz + w * (cz - bz)
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return ax + abx * v + acx * w, ay + aby * v + acy * w, az + abz * v + acz * w


@njit(cache=True)
def _box_dist2(px, py, pz, lo, hi):
    dx = max(lo[0] - px, 0.0, px - hi[0])
    dy = max(lo[1] - py, 0.0, py - hi[1])
    dz = max(lo[2] - pz, 0.0, pz - hi[2])
    return dx * dx + dy * dy + dz * dz


@njit(cache=True)
def _bvh_nearest(points, corners, lo, hi, left, right, start, count, order, out_d, out_p, out_f):
    stack = np.empty(128, dtype=np.int64)
    for k in range(points.shape[0]):
        px, py, pz = points[k, 0], points[k, 1], points[k, 2]
        best = np.inf
        bf = -1
        bx = by = bz = 0.0
        top = 0
        stack[0] = 0
        top = 1
        while top > 0:
            top -= 1
            node = stack[top]
            if _box_dist2(px, py, pz, lo[node], hi[node]) > best:
                continue
            if left[node] < 0:
                for s in range(start[node], start[node] + count[node]):
                    t = order[s]
                    qx, qy, qz = _closest_on_triangle(px, py, pz, corners[t])
                    d = (qx - px) ** 2 + (qy - py) ** 2 + (qz - pz) ** 2
                    if d < best or (d == best and t < bf):
                        best = d
                        bf = t
                        bx, by, bz = qx, qy, qz
            else:
                l, r = left[node], right[node]
                dl = _box_dist2(px, py, pz, lo[l], hi[l])
                dr = _box_dist2(px, py, pz, lo[r], hi[r])
                # push the farther child first so the nearer one is popped next
                if dl <= dr:
                    stack[top] = r
                    stack[top + 1] = l
                else:
                    stack[top] = l
                    stack[top + 1] = r
                top += 2
        out_d[k] = math.sqrt(best)
        out_p[k, 0] = bx
        out_p[k, 1] = by
        out_p[k, 2] = bz
        out_f[k] = bf


@njit(cache=True)
def _winding_numbers(points, corners, out):
    inv4pi = 1.0 / (4.0 * math.pi)
    for k in range(points.shape[0]):
        px, py, pz = points[k, 0], points[k, 1], points[k, 2]
        total = 0.0
        for t in range(corners.shape[0]):
            ax, ay, az = corners[t, 0, 0] - px, corners[t, 0, 1] - py, corners[t, 0, 2] - pz
            bx, by, bz = corners[t, 1, 0] - px, corners[t, 1, 1] - py, corners[t, 1, 2] - pz
            cx, cy, cz = corners[t, 2, 0] - px, corners[t, 2, 1] - py, corners[t, 2, 2] - pz
            la = math.sqrt(ax * ax + ay * ay + az * az)
            lb = math.sqrt(bx * bx + by * by + bz * bz)
            lc = math.sqrt(cx * cx + cy * cy + cz * cz)
            det = ax * (by * cz - bz * cy) - ay * (bx * cz - bz * cx) + az * (bx * cy - by * cx)
            den = (
                la * lb * lc
                + (ax * bx + ay * by + az * bz) * lc
                + (bx * cx + by * cy + bz * cz) * la
                + (cx * ax + cy * ay + cz * az) * lb
            )
            total += 2.0 * math.atan2(det, den)
        out[k] = total * inv4pi


# ---------------------------------------------------------------------------
# BVH
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class Bvh:
    """Flattened AABB tree. Node 0 is the root; leaves have ``left == -1``."""

    lo: np.ndarray
    hi: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    order: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.left)

    def leaves(self) -> list[np.ndarray]:
        """Triangle indices of every leaf, in node order."""
        return [
            self.order[self.start[n] : self.start[n] + self.count[n]]
            for n in range(self.n_nodes)
            if self.left[n] < 0
        ]


def build_bvh(mesh: TriangleMesh, leaf_size: int = 4) -> Bvh:
    """Median-split BVH over the mesh triangles."""
    if mesh.n_triangles == 0:
        raise StructuralError("cannot build a BVH over an empty mesh")
    corners = mesh.corners
    tri_lo = corners.min(axis=1)
    tri_hi = corners.max(axis=1)
    cent = corners.mean(axis=1)

    order = np.arange(mesh.n_triangles)
    lo, hi, left, right, start, count = [], [], [], [], [], []

    def new_node(s: int, e: int) -> int:
        idx = order[s:e]
        lo.append(tri_lo[idx].min(axis=0))
        hi.append(tri_hi[idx].max(axis=0))
        left.append(-1)
        right.append(-1)
        start.append(s)
        count.append(e - s)
        return len(left) - 1

    stack = [(new_node(0, len(order)), 0, len(order))]
    while stack:
        node, s, e = stack.pop()
        if e - s <= leaf_size:
            continue
        idx = order[s:e]
        c = cent[idx]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        # stable sort keeps the build deterministic for coincident centroids
        order[s:e] = idx[np.argsort(c[:, axis], kind="stable")]
        m = (s + e) // 2
        l_node = new_node(s, m)
        r_node = new_node(m, e)
        left[node], right[node] = l_node, r_node
        count[node] = 0
        stack.append((r_node, m, e))
        stack.append((l_node, s, m))

    return Bvh(
        lo=np.array(lo),
        hi=np.array(hi),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        start=np.array(start, dtype=np.int64),
        count=np.array(count, dtype=np.int64),
        order=order.astype(np.int64),
    )


def nearest_surface_batch(
    bvh: Bvh, mesh: TriangleMesh, points: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized :func:`nearest_surface` over an (N, 3) array."""
    pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(pts)
    d = np.empty(n)
    p = np.empty((n, 3))
    f = np.empty(n, dtype=np.int64)
    _bvh_nearest(
        pts, mesh.corners, bvh.lo, bvh.hi, bvh.left, bvh.right, bvh.start, bvh.count, bvh.order, d, p, f
    )
    return d, p, f


def nearest_surface(bvh: Bvh, mesh: TriangleMesh, point) -> tuple[float, np.ndarray, int]:
    """Closest point on the mesh to ``point``.

    Returns ``(distance, surface_point, face_index)``. Ties between faces at
    the same distance resolve to the lowest face index.
    """
    d, p, f = nearest_surface_batch(bvh, mesh, np.asarray(point, dtype=np.float64)[None, :])
    return float(d[0]), p[0], int(f[0])


def winding_number(mesh: TriangleMesh, points: np.ndarray) -> np.ndarray:
    """Generalized winding number of ``mesh`` at each point (1 inside, 0 outside for closed meshes)."""
    pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    out = np.empty(len(pts))
    if mesh.n_triangles == 0:
        out[:] = 0.0
        return out
    _winding_numbers(pts, mesh.corners, out)
    return out


# ---------------------------------------------------------------------------
# SDF grid
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class SdfGrid:
    """Dense signed distance samples at ``origin + (i, j, k) * cell_size``.

    ``values`` and ``semantic_ids`` are indexed ``[i, j, k]`` (x, y, z).
    Negative values lie inside closed geometry.
    """

    origin: np.ndarray
    cell_size: float
    dims: tuple[int, int, int]
    values: np.ndarray
    semantic_ids: np.ndarray
    _flat: np.ndarray = field(init=False, repr=False)
    _flat_sem: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.cell_size = float(self.cell_size)
        self.dims = tuple(int(d) for d in self.dims)
        if not self.cell_size > 0:
            raise ValidationError("cell_size must be positive")
        n = int(np.prod(self.dims))
        values = np.asarray(self.values, dtype=np.float32)
        sem = np.asarray(self.semantic_ids, dtype=np.uint16)
        if values.size != n or sem.size != n:
            raise FormatError(f"grid dims {self.dims} need {n} samples, got {values.size}/{sem.size}")
        self.values = values.reshape(self.dims)
        self.semantic_ids = sem.reshape(self.dims)
        # x-fastest flat copies for gather-based sampling
        self._flat = self.values.ravel(order="F").astype(np.float64)
        self._flat_sem = self.semantic_ids.ravel(order="F")
        self.values.setflags(write=False)
        self.semantic_ids.setflags(write=False)

    @property
    def upper(self) -> np.ndarray:
        return self.origin + (np.array(self.dims) - 1) * self.cell_size

    def points(self) -> np.ndarray:
        """Sample positions in x-fastest order, shape (N, 3)."""
        nx, ny, nz = self.dims
        k, j, i = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
        idx = np.stack([i.ravel(), j.ravel(), k.ravel()], axis=1)
        return self.origin + idx * self.cell_size


def grid_dims(lo, hi, cell_size: float) -> tuple[int, int, int]:
    ext = np.asarray(hi, dtype=np.float64) - np.asarray(lo, dtype=np.float64)
    return tuple(int(math.ceil(e / cell_size - 1e-9)) + 1 for e in ext)


def bake_sdf(
    mesh: TriangleMesh,
    bounds,
    cell_size: float = DEFAULT_CELL_SIZE,
    *,
    sign_faces: np.ndarray | None = None,
    bvh: Bvh | None = None,
    max_voxels: int = DEFAULT_MAX_VOXELS,
    chunk: int = 65536,
) -> SdfGrid:
    """Sample the signed distance to ``mesh`` on a regular grid.

    Magnitude is the exact nearest-surface distance; the sign is negative
    where the generalized winding number of the faces selected by
    ``sign_faces`` (default: all) exceeds 0.5. Each voxel also records the
    ``face_ids`` entry of its nearest face (0 when the mesh has none).
    """
    lo, hi = (np.asarray(b, dtype=np.float64) for b in bounds)
    if not cell_size > 0:
        raise ValidationError("cell_size must be positive")
    if np.any(hi <= lo):
        raise ValidationError("bounds must be non-empty")
    dims = grid_dims(lo, hi, cell_size)
    n = int(np.prod(dims, dtype=np.int64))
    if n > max_voxels:
        raise ResourceError(f"grid {dims} has {n} voxels, limit is {max_voxels}")
    if bvh is None:
        bvh = build_bvh(mesh)
    sign_mesh = mesh if sign_faces is None else mesh.subset(np.asarray(sign_faces))

    grid = SdfGrid(lo, cell_size, dims, np.zeros(n, np.float32), np.zeros(n, np.uint16))
    pts = grid.points()
    values = np.empty(n)
    faces = np.empty(n, dtype=np.int64)
    for s in range(0, n, chunk):
        e = min(n, s + chunk)
        d, _, f = nearest_surface_batch(bvh, mesh, pts[s:e])
        w = winding_number(sign_mesh, pts[s:e])
        values[s:e] = np.where(w > 0.5, -d, d)
        faces[s:e] = f
    sem = np.zeros(n, np.uint16) if mesh.face_ids is None else mesh.face_ids[faces].astype(np.uint16)
    return SdfGrid(lo, cell_size, dims, _to_grid_order(values, dims), _to_grid_order(sem, dims))


def _to_grid_order(flat: np.ndarray, dims) -> np.ndarray:
    """Reshape an x-fastest flat array into an [i, j, k] array."""
    return np.asarray(flat).reshape(dims, order="F")


def sample_sdf(grid: SdfGrid, points):
    """Trilinear signed distance and nearest-voxel semantic id.

    Accepts a single point (returns ``(float, int)``) or an (N, 3) array
    (returns two arrays). Points outside the grid take the clamped boundary
    value plus their distance to the grid box, and are never reported as
    inside.
    """
    p = np.asarray(points, dtype=np.float64)
    single = p.ndim == 1
    p = p.reshape(-1, 3)
    dims = np.array(grid.dims)
    u = (p - grid.origin) / grid.cell_size
    uc = np.clip(u, 0.0, dims - 1)
    i0 = np.minimum(np.floor(uc).astype(np.int64), np.maximum(dims - 2, 0))
    t = uc - i0
    nx, ny = grid.dims[0], grid.dims[1]
    base = i0[:, 0] + nx * (i0[:, 1] + ny * i0[:, 2])
    sx = 1 if grid.dims[0] > 1 else 0
    sy = nx if grid.dims[1] > 1 else 0
    sz = nx * ny if grid.dims[2] > 1 else 0
    v = grid._flat
    tx, ty, tz = t[:, 0], t[:, 1], t[:, 2]
    c00 = v[base] * (1 - tx) + v[base + sx] * tx
    c10 = v[base + sy] * (1 - tx) + v[base + sy + sx] * tx
    c01 = v[base + sz] * (1 - tx) + v[base + sz + sx] * tx
    c11 = v[base + sz + sy] * (1 - tx) + v[base + sz + sy + sx] * tx
    val = (c00 * (1 - ty) + c10 * ty) * (1 - tz) + (c01 * (1 - ty) + c11 * ty) * tz

    outside = np.any((u < 0.0) | (u > dims - 1), axis=1)
    if outside.any():
        off = np.linalg.norm((u[outside] - uc[outside]) * grid.cell_size, axis=1)
        val[outside] = np.maximum(val[outside] + off, off)

    r = np.rint(uc).astype(np.int64)
    sem = grid._flat_sem[r[:, 0] + nx * (r[:, 1] + ny * r[:, 2])].astype(np.int64)
    if single:
        return float(val[0]), int(sem[0])
    return val, sem


def save_sdf(grid: SdfGrid, path) -> None:
    """Write the grid as a PAAKSDF1 cache file."""
    with open(path, "wb") as fh:
        fh.write(SDF_MAGIC)
        fh.write(_SDF_HEADER.pack(*grid.origin, grid.cell_size, *grid.dims))
        fh.write(grid.values.ravel(order="F").astype("<f4").tobytes())
        fh.write(grid.semantic_ids.ravel(order="F").astype("<u2").tobytes())


def load_sdf(path) -> SdfGrid:
    data = Path(path).read_bytes()
    if data[:8] != SDF_MAGIC:
        raise FormatError(f"{path}: not a PAAKSDF1 file")
    hdr = _SDF_HEADER.unpack_from(data, 8)
    origin, cell, dims = hdr[:3], hdr[3], hdr[4:]
    n = int(np.prod(dims, dtype=np.int64))
    off = 8 + _SDF_HEADER.size
    if len(data) != off + 6 * n:
        raise FormatError(f"{path}: expected {off + 6 * n} bytes, found {len(data)}")
    values = np.frombuffer(data, "<f4", n, off)
    sem = np.frombuffer(data, "<u2", n, off + 4 * n)
    return SdfGrid(origin, cell, dims, _to_grid_order(values, dims), _to_grid_order(sem, dims))
