"""Geometry kernel: quaternions, rigid poses, triangle meshes, point clouds.

Conventions used throughout the package:

* quaternions are ``(w, x, y, z)``, Hamilton product, unit norm;
* a :class:`Pose` maps body-frame points to world frame, ``x_w = R x_b + p``;
* meshes are plain vertex/face arrays in float64; derived quantities
  (normals, areas, BVH, mass properties) are computed lazily and cached.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np


class MeshFormatError(ValueError):
    """Raised when a mesh file cannot be parsed."""


class MeshContentError(ValueError):
    """Raised when a parsed mesh has no usable geometry."""


# ---------------------------------------------------------------------------
# Quaternions (w, x, y, z)
# ---------------------------------------------------------------------------

def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("zero quaternion")
    return q / n


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_mat(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vectors ``v`` (shape (..., 3)) by quaternion ``q``."""
    return np.asarray(v, dtype=np.float64) @ quat_to_mat(q).T


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n == 0.0:
        raise ValueError("zero axis")
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis / n])


def quat_random(rng: np.random.Generator) -> np.ndarray:
    """Uniform random unit quaternion (Shoemake's subgroup method)."""
    u1, u2, u3 = rng.random(3)
    a, b = np.sqrt(1.0 - u1), np.sqrt(u1)
    return np.array([
        a * np.sin(2 * np.pi * u2),
        a * np.cos(2 * np.pi * u2),
        b * np.sin(2 * np.pi * u3),
        b * np.cos(2 * np.pi * u3),
    ])


def quat_integrate(q: np.ndarray, omega: np.ndarray, dt: float) -> np.ndarray:
    """First-order quaternion update for angular velocity ``omega`` (world frame)."""
    dq = 0.5 * quat_mul(np.array([0.0, *omega]), q)
    return quat_normalize(q + dt * dq)


# ---------------------------------------------------------------------------
# Pose
# ---------------------------------------------------------------------------

@dataclass
class Pose:
    """Rigid transform: rotation ``q`` (wxyz) followed by translation ``p``."""

    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    q: np.ndarray = field(default_factory=quat_identity)

    def __post_init__(self) -> None:
        self.p = np.asarray(self.p, dtype=np.float64).reshape(3)
        self.q = quat_normalize(np.asarray(self.q, dtype=np.float64).reshape(4))

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    def apply(self, pts: np.ndarray) -> np.ndarray:
        return quat_rotate(self.q, pts) + self.p

    def rotate(self, v: np.ndarray) -> np.ndarray:
        return quat_rotate(self.q, v)

    def compose(self, other: "Pose") -> "Pose":
        """Transform composition: ``(a.compose(b)).apply(x) == a.apply(b.apply(x))``."""
        return Pose(self.apply(other.p), quat_mul(self.q, other.q))

    def inverse(self) -> "Pose":
        qi = quat_conj(self.q)
        return Pose(-quat_rotate(qi, self.p), qi)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = quat_to_mat(self.q)
        m[:3, 3] = self.p
        return m

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.p, self.q])

    @classmethod
    def from_array(cls, a: np.ndarray) -> "Pose":
        a = np.asarray(a, dtype=np.float64).reshape(7)
        return cls(a[:3], a[3:])

    def copy(self) -> "Pose":
        return Pose(self.p.copy(), self.q.copy())


# ---------------------------------------------------------------------------
# Triangle mesh
# ---------------------------------------------------------------------------

# canonical second moment of the unit tetrahedron, used for inertia integrals
_TET_CANON = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 120.0

_DEGENERATE_AREA = 1e-14  # m^2; faces thinner than this are dropped on load


@dataclass(eq=False)
class TriMesh:
    """Indexed triangle mesh. ``vertices`` (V, 3) float64, ``faces`` (F, 3) int64."""

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self) -> None:
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshContentError("vertices must be (V, 3)")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise MeshContentError("faces must be (F, 3)")
        if len(self.faces) == 0:
            raise MeshContentError("mesh has no faces")
        if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
            raise MeshContentError("face index out of range")

    @classmethod
    def from_arrays(cls, vertices: np.ndarray, faces: np.ndarray) -> "TriMesh":
        """Build a mesh, dropping degenerate faces and fixing winding when closed."""
        vertices = np.asarray(vertices, dtype=np.float64)
        faces = np.asarray(faces, dtype=np.int64)
        if faces.size:
            tp = vertices[faces]
            areas = 0.5 * np.linalg.norm(
                np.cross(tp[:, 1] - tp[:, 0], tp[:, 2] - tp[:, 0]), axis=1)
            faces = faces[areas > _DEGENERATE_AREA]
        mesh = cls(vertices, faces)
        if mesh.closed and mesh.signed_volume() < 0.0:
            mesh = cls(vertices, faces[:, [0, 2, 1]])
        return mesh

    # -- derived quantities -------------------------------------------------

    @cached_property
    def tri_pts(self) -> np.ndarray:
        """Per-face vertex positions, shape (F, 3, 3)."""
        return self.vertices[self.faces]

    @cached_property
    def face_normals(self) -> np.ndarray:
        n = np.cross(self.tri_pts[:, 1] - self.tri_pts[:, 0],
                     self.tri_pts[:, 2] - self.tri_pts[:, 0])
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    @cached_property
    def face_areas(self) -> np.ndarray:
        n = np.cross(self.tri_pts[:, 1] - self.tri_pts[:, 0],
                     self.tri_pts[:, 2] - self.tri_pts[:, 0])
        return 0.5 * np.linalg.norm(n, axis=1)

    @cached_property
    def area(self) -> float:
        return float(self.face_areas.sum())

    @cached_property
    def aabb(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @cached_property
    def closed(self) -> bool:
        """True when every undirected edge is shared by exactly two faces."""
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]],
                            self.faces[:, [2, 0]]])
        e = np.sort(e, axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return bool(np.all(counts == 2))

    @cached_property
    def bvh(self) -> "Bvh":
        return Bvh.build(self.tri_pts)

    def signed_volume(self) -> float:
        tp = self.tri_pts
        return float(np.einsum("ij,ij->i", np.cross(tp[:, 0], tp[:, 1]),
                               tp[:, 2]).sum() / 6.0)

    def max_side(self) -> float:
        lo, hi = self.aabb
        return float((hi - lo).max())

    # -- transforms ---------------------------------------------------------

    def transformed(self, pose: Pose) -> "TriMesh":
        return TriMesh(pose.apply(self.vertices), self.faces)

    def scaled(self, s: float) -> "TriMesh":
        return TriMesh(self.vertices * float(s), self.faces)

    def translated(self, t: np.ndarray) -> "TriMesh":
        return TriMesh(self.vertices + np.asarray(t, dtype=np.float64), self.faces)

    # -- mass properties ----------------------------------------------------

    def mass_properties(self, mass: float) -> tuple[np.ndarray, np.ndarray]:
        """Volume-uniform density COM and inertia tensor about the COM.

        Open meshes fall back to the convex hull of the vertices. Returns
        ``(com, inertia)`` with inertia a (3, 3) matrix in the mesh frame.
        """
        mesh = self if self.closed else _convex_hull_mesh(self.vertices)
        tp = mesh.tri_pts
        dets = np.einsum("ij,ij->i", np.cross(tp[:, 0], tp[:, 1]), tp[:, 2])
        vol = dets.sum() / 6.0
        if vol <= 0.0:
            raise MeshContentError("mesh encloses no volume")
        com = (dets[:, None] * tp.sum(axis=1)).sum(axis=0) / (24.0 * vol)
        # covariance of each origin-cornered tetra: det * A C A^T, A columns = verts
        a = tp.transpose(0, 2, 1)
        cov = np.einsum("t,tij,jk,tlk->il", dets, a, _TET_CANON, a)
        cov *= mass / vol
        inertia = np.trace(cov) * np.eye(3) - cov
        # shift from origin to COM
        shift = (com @ com) * np.eye(3) - np.outer(com, com)
        return com, inertia - mass * shift


def _convex_hull_mesh(points: np.ndarray) -> TriMesh:
    from scipy.spatial import ConvexHull

    hull = ConvexHull(points)
    faces = hull.simplices.copy()
    tp = points[faces]
    n_geom = np.cross(tp[:, 1] - tp[:, 0], tp[:, 2] - tp[:, 0])
    flip = np.einsum("ij,ij->i", n_geom, hull.equations[:, :3]) < 0.0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    return TriMesh.from_arrays(points, faces)


# ---------------------------------------------------------------------------
# Mesh file IO (OBJ ASCII, STL binary or ASCII)
# ---------------------------------------------------------------------------

def load_mesh(path: str | Path) -> TriMesh:
    """Load a triangle mesh from ``.obj`` or ``.stl``."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        return _load_obj(path)
    if suffix == ".stl":
        return _load_stl(path)
    raise MeshFormatError(f"unsupported mesh format: {path.name}")


def save_obj(mesh: TriMesh, path: str | Path) -> None:
    """Write an ASCII OBJ; ``repr`` coordinates round-trip float64 exactly."""
    lines = [f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}"
             for v in mesh.vertices]
    lines += [f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}" for f in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")


def _load_obj(path: Path) -> TriMesh:
    verts: list[list[float]] = []
    faces: list[list[int]] = []
    for ln, raw in enumerate(path.read_text().splitlines(), start=1):
        parts = raw.split()
        if not parts or parts[0].startswith("#"):
            continue
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise MeshFormatError(f"{path.name}:{ln}: bad vertex line")
            verts.append([float(x) for x in parts[1:4]])
        elif tag == "f":
            if len(parts) < 4:
                raise MeshFormatError(f"{path.name}:{ln}: face needs 3+ vertices")
            idx = []
            for tok in parts[1:]:
                i = int(tok.split("/")[0])
                idx.append(i - 1 if i > 0 else len(verts) + i)
            for k in range(1, len(idx) - 1):  # fan-triangulate polygons
                faces.append([idx[0], idx[k], idx[k + 1]])
    if not verts:
        raise MeshContentError(f"{path.name}: no vertices")
    if not faces:
        raise MeshContentError(f"{path.name}: no faces")
    return TriMesh.from_arrays(np.array(verts), np.array(faces))


def _load_stl(path: Path) -> TriMesh:
    data = path.read_bytes()
    if len(data) >= 84:
        count = struct.unpack_from("<I", data, 80)[0]
        if len(data) == 84 + 50 * count:  # exact binary layout wins over header
            return _stl_from_triangles(_parse_stl_binary(data, count), path)
    return _load_stl_ascii(path, data)


def _parse_stl_binary(data: bytes, count: int) -> np.ndarray:
    rec = np.frombuffer(data, dtype=np.uint8, count=50 * count, offset=84)
    rec = rec.reshape(count, 50)[:, :48].copy()
    tris = rec.view("<f4").reshape(count, 12)[:, 3:]  # drop normals
    return tris.astype(np.float64).reshape(count, 3, 3)


def _load_stl_ascii(path: Path, data: bytes) -> TriMesh:
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError as exc:
        raise MeshFormatError(f"{path.name}: not a valid STL file") from exc
    pts = []
    for raw in text.splitlines():
        parts = raw.split()
        if len(parts) == 4 and parts[0] == "vertex":
            pts.append([float(x) for x in parts[1:]])
    if not pts or len(pts) % 3 != 0:
        raise MeshFormatError(f"{path.name}: malformed ASCII STL")
    return _stl_from_triangles(np.array(pts).reshape(-1, 3, 3), path)


def _stl_from_triangles(tris: np.ndarray, path: Path) -> TriMesh:
    if len(tris) == 0:
        raise MeshContentError(f"{path.name}: no facets")
    flat = np.round(tris.reshape(-1, 3), 9)
    verts, inverse = np.unique(flat, axis=0, return_inverse=True)
    return TriMesh.from_arrays(verts, inverse.reshape(-1, 3))


# ---------------------------------------------------------------------------
# Closest point and raycast queries
# ---------------------------------------------------------------------------

def closest_points_on_triangles(
        queries: np.ndarray, tri_pts: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Closest point on any of ``tri_pts`` (T, 3, 3) for each query (Q, 3).

    Vectorized Ericson region test; returns (points (Q, 3), distances (Q,),
    triangle indices (Q,)).
    """
    q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    a, b, c = tri_pts[:, 0], tri_pts[:, 1], tri_pts[:, 2]
    ab, ac = b - a, c - a
    p = q[:, None, :]  # (Q, 1, 3)

    ap = p - a
    d1 = np.einsum("tj,qtj->qt", ab, ap)
    d2 = np.einsum("tj,qtj->qt", ac, ap)

    bp = p - b
    d3 = np.einsum("tj,qtj->qt", ab, bp)
    d4 = np.einsum("tj,qtj->qt", ac, bp)

    cp = p - c
    d5 = np.einsum("tj,qtj->qt", ab, cp)
    d6 = np.einsum("tj,qtj->qt", ac, cp)

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    denom = va + vb + vc
    denom = np.where(denom == 0.0, 1.0, denom)
    v = vb / denom
    w = vc / denom

    # interior barycentric point, then override per Voronoi region
    res = a + v[..., None] * ab + w[..., None] * ac

    t_ab = d1 / np.where(d1 - d3 == 0.0, 1.0, d1 - d3)
    on_ab = a + np.clip(t_ab, 0.0, 1.0)[..., None] * ab
    t_ac = d2 / np.where(d2 - d6 == 0.0, 1.0, d2 - d6)
    on_ac = a + np.clip(t_ac, 0.0, 1.0)[..., None] * ac
    t_bc = (d4 - d3) / np.where((d4 - d3) + (d5 - d6) == 0.0, 1.0,
                                (d4 - d3) + (d5 - d6))
    on_bc = b + np.clip(t_bc, 0.0, 1.0)[..., None] * (c - b)

    edge_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    edge_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    edge_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    vert_a = (d1 <= 0) & (d2 <= 0)
    vert_b = (d3 >= 0) & (d4 <= d3)
    vert_c = (d6 >= 0) & (d5 <= d6)

    res = np.where(edge_bc[..., None], on_bc, res)
    res = np.where(edge_ac[..., None], on_ac, res)
    res = np.where(edge_ab[..., None], on_ab, res)
    res = np.where(vert_c[..., None], np.broadcast_to(c, res.shape), res)
    res = np.where(vert_b[..., None], np.broadcast_to(b, res.shape), res)
    res = np.where(vert_a[..., None], np.broadcast_to(a, res.shape), res)

    d2all = np.einsum("qtj,qtj->qt", p - res, p - res)
    idx = np.argmin(d2all, axis=1)
    rows = np.arange(len(q))
    return res[rows, idx], np.sqrt(d2all[rows, idx]), idx


# ---------------------------------------------------------------------------
# BVH (axis-aligned, median split) and raycast
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Bvh:
    """Flat-array AABB tree over triangles; leaves hold up to ``LEAF_SIZE`` tris."""

    bounds_lo: np.ndarray  # (N, 3)
    bounds_hi: np.ndarray  # (N, 3)
    left: np.ndarray       # (N,) child index or -1 at leaves
    right: np.ndarray
    start: np.ndarray      # (N,) leaf range into ``order``
    count: np.ndarray
    order: np.ndarray      # (T,) permutation of triangle indices

    LEAF_SIZE = 4

    @classmethod
    def build(cls, tri_pts: np.ndarray) -> "Bvh":
        lo = tri_pts.min(axis=1)
        hi = tri_pts.max(axis=1)
        centroids = tri_pts.mean(axis=1)
        order = np.arange(len(tri_pts))
        nodes: list[tuple[np.ndarray, np.ndarray, int, int, int, int]] = []

        def rec(idx: np.ndarray) -> int:
            me = len(nodes)
            nodes.append((lo[idx].min(axis=0), hi[idx].max(axis=0), -1, -1, 0, 0))
            if len(idx) <= cls.LEAF_SIZE:
                start = rec.cursor
                order[start:start + len(idx)] = idx
                rec.cursor += len(idx)
                nodes[me] = nodes[me][:2] + (-1, -1, start, len(idx))
                return me
            cen = centroids[idx]
            axis = int(np.argmax(cen.max(axis=0) - cen.min(axis=0)))
            half = len(idx) // 2
            part = idx[np.argsort(cen[:, axis], kind="stable")]
            l = rec(part[:half])
            r = rec(part[half:])
            nodes[me] = nodes[me][:2] + (l, r, 0, 0)
            return me

        rec.cursor = 0
        rec(np.arange(len(tri_pts)))
        blo = np.array([n[0] for n in nodes])
        bhi = np.array([n[1] for n in nodes])
        return cls(blo, bhi,
                   np.array([n[2] for n in nodes]),
                   np.array([n[3] for n in nodes]),
                   np.array([n[4] for n in nodes]),
                   np.array([n[5] for n in nodes]),
                   order)


def _ray_aabb(origin, inv_dir, lo, hi, t_best):
    t0 = (lo - origin) * inv_dir
    t1 = (hi - origin) * inv_dir
    tmin = np.minimum(t0, t1).max()
    tmax = np.maximum(t0, t1).min()
    return tmax >= max(tmin, 0.0) and tmin < t_best


def raycast(mesh: TriMesh, origin: np.ndarray, direction: np.ndarray,
            max_dist: float = np.inf) -> tuple[float, int] | None:
    """First hit of a ray against the mesh, via BVH + Moller-Trumbore.

    Returns ``(distance, face_index)`` or ``None``. ``direction`` need not be
    normalized; the distance is in units of its length.
    """
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    with np.errstate(divide="ignore"):
        inv_dir = 1.0 / direction
    bvh = mesh.bvh
    tp = mesh.tri_pts
    t_best = float(max_dist)
    hit_face = -1
    stack = [0]
    while stack:
        node = stack.pop()
        if not _ray_aabb(origin, inv_dir, bvh.bounds_lo[node], bvh.bounds_hi[node],
                         t_best):
            continue
        if bvh.left[node] < 0:
            s, n = bvh.start[node], bvh.count[node]
            for tri in bvh.order[s:s + n]:
                t = _ray_triangle(origin, direction, tp[tri])
                if t is not None and t < t_best:
                    t_best = t
                    hit_face = int(tri)
        else:
            stack.append(int(bvh.right[node]))
            stack.append(int(bvh.left[node]))
    if hit_face < 0:
        return None
    return t_best, hit_face


def _ray_triangle(origin, direction, tri, eps=1e-12):
    """Moller-Trumbore; returns ray parameter t >= 0 or None."""
    e1 = tri[1] - tri[0]
    e2 = tri[2] - tri[0]
    pvec = np.cross(direction, e2)
    det = e1 @ pvec
    if abs(det) < eps:
        return None
    inv = 1.0 / det
    tvec = origin - tri[0]
    u = (tvec @ pvec) * inv
    if u < -eps or u > 1.0 + eps:
        return None
    qvec = np.cross(tvec, e1)
    v = (direction @ qvec) * inv
    if v < -eps or u + v > 1.0 + eps:
        return None
    t = (e2 @ qvec) * inv
    return t if t >= 0.0 else None


# ---------------------------------------------------------------------------
# Point clouds
# ---------------------------------------------------------------------------

@dataclass
class PointCloud:
    """Unordered surface sample, points (N, 3) float64."""

    points: np.ndarray

    def __post_init__(self) -> None:
        self.points = np.ascontiguousarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise ValueError("points must be (N, 3)")

    @classmethod
    def sample(cls, mesh: TriMesh, n: int, rng: np.random.Generator) -> "PointCloud":
        """Area-weighted uniform surface sampling with sqrt-barycentric jitter."""
        probs = mesh.face_areas / mesh.area
        tri = rng.choice(len(mesh.faces), size=n, p=probs)
        r1 = np.sqrt(rng.random(n))
        r2 = rng.random(n)
        tp = mesh.tri_pts[tri]
        pts = ((1 - r1)[:, None] * tp[:, 0]
               + (r1 * (1 - r2))[:, None] * tp[:, 1]
               + (r1 * r2)[:, None] * tp[:, 2])
        return cls(pts)

    def transformed(self, pose: Pose) -> "PointCloud":
        return PointCloud(pose.apply(self.points))

    def save_xyz(self, path: str | Path) -> None:
        np.savetxt(path, self.points, fmt="%.9f")

    @classmethod
    def load_xyz(cls, path: str | Path) -> "PointCloud":
        pts = np.loadtxt(path, dtype=np.float64)
        return cls(pts.reshape(-1, 3))


# ---------------------------------------------------------------------------
# Object normalization
# ---------------------------------------------------------------------------

def normalize_object(mesh: TriMesh, max_side: float, rng: np.random.Generator,
                     mass: float = 0.05) -> tuple[TriMesh, Pose]:
    """Canonicalize an object for grasping.

    Applies a random orientation (baked into the vertices), rescales so the
    axis-aligned bounding box's longest side equals ``max_side``, recentres the
    COM at the body-frame origin, then settles the object onto the ground
    plane. Returns the canonical mesh and the settled resting pose.
    """
    from . import simcore  # local import; simcore depends on geom

    rot = quat_to_mat(quat_random(rng))
    verts = mesh.vertices @ rot.T
    m = TriMesh.from_arrays(verts, mesh.faces)
    m = m.scaled(max_side / m.max_side())
    com, _ = m.mass_properties(mass)
    m = m.translated(-com)
    return m, simcore.settle(m, mass=mass).pose
