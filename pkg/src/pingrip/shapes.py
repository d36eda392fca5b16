"""Procedural primitive meshes: closed, outward-wound triangle surfaces.

These are the object source for the built-in toy dataset and for physics
and quality tests, where analytic volumes and inertias are known.
"""

from __future__ import annotations

import numpy as np

from .geom import TriMesh

_BOX_FACES = np.array([
    [0, 2, 1], [0, 3, 2],  # -z
    [4, 5, 6], [4, 6, 7],  # +z
    [0, 1, 5], [0, 5, 4],  # -y
    [2, 3, 7], [2, 7, 6],  # +y
    [1, 2, 6], [1, 6, 5],  # +x
    [3, 0, 4], [3, 4, 7],  # -x
])


def box(sx: float, sy: float, sz: float) -> TriMesh:
    """Axis-aligned box with side lengths ``(sx, sy, sz)``, centered at origin."""
    hx, hy, hz = sx / 2.0, sy / 2.0, sz / 2.0
    verts = np.array([
        [-hx, -hy, -hz], [hx, -hy, -hz], [hx, hy, -hz], [-hx, hy, -hz],
        [-hx, -hy, hz], [hx, -hy, hz], [hx, hy, hz], [-hx, hy, hz],
    ])
    return TriMesh.from_arrays(verts, _BOX_FACES)


def cylinder(radius: float, height: float, segments: int = 48) -> TriMesh:
    """Closed cylinder along z, centered at origin."""
    ang = 2.0 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    lo = np.column_stack([ring, np.full(segments, -height / 2.0)])
    hi = np.column_stack([ring, np.full(segments, height / 2.0)])
    verts = np.concatenate([lo, hi,
                            [[0.0, 0.0, -height / 2.0], [0.0, 0.0, height / 2.0]]])
    c_lo, c_hi = 2 * segments, 2 * segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces += [[i, j, segments + j], [i, segments + j, segments + i]]  # side
        faces += [[c_lo, j, i], [c_hi, segments + i, segments + j]]       # caps
    return TriMesh.from_arrays(verts, np.array(faces))


def icosphere(radius: float, subdivisions: int = 2) -> TriMesh:
    """Geodesic sphere from a subdivided icosahedron."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=np.float64)
    faces = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ])
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    for _ in range(subdivisions):
        vlist = list(verts)
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                m = vlist[a] + vlist[b]
                vlist.append(m / np.linalg.norm(m))
                cache[key] = len(vlist) - 1
            return cache[key]

        out = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            out += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        verts = np.array(vlist)
        faces = np.array(out)
    return TriMesh.from_arrays(verts * radius, faces)


def _cross2(a: np.ndarray, b: np.ndarray) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _ear_clip(poly: np.ndarray) -> list[tuple[int, int, int]]:
    """Triangulate a simple CCW polygon (N, 2) by ear clipping."""

    def convex(a, b, c):
        return _cross2(poly[b] - poly[a], poly[c] - poly[b]) > 1e-15

    def inside(a, b, c, p):
        for u, v in ((a, b), (b, c), (c, a)):
            if _cross2(poly[v] - poly[u], poly[p] - poly[u]) <= 0.0:
                return False
        return True

    idx = list(range(len(poly)))
    ears: list[tuple[int, int, int]] = []
    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * len(poly) ** 2:
            raise ValueError("polygon is not simple or not CCW")
        for k in range(len(idx)):
            a, b, c = idx[k - 1], idx[k], idx[(k + 1) % len(idx)]
            if not convex(a, b, c):
                continue
            if any(inside(a, b, c, p) for p in idx if p not in (a, b, c)):
                continue
            ears.append((a, b, c))
            del idx[k]
            break
    ears.append(tuple(idx))
    return ears


def extrude(poly: np.ndarray, depth: float) -> TriMesh:
    """Extrude a simple CCW polygon in the xz-plane along y.

    ``poly`` is (N, 2) giving (x, z) coordinates; the prism spans
    ``y in [-depth/2, depth/2]``.
    """
    poly = np.asarray(poly, dtype=np.float64)
    n = len(poly)
    if _poly_area(poly) <= 0.0:
        raise ValueError("polygon must be CCW with positive area")
    h = depth / 2.0
    bot = np.column_stack([poly[:, 0], np.full(n, -h), poly[:, 1]])
    top = np.column_stack([poly[:, 0], np.full(n, h), poly[:, 1]])
    verts = np.concatenate([bot, top])
    ears = _ear_clip(poly)
    faces = []
    for a, b, c in ears:
        faces.append([a, b, c])                  # bottom cap, outward -y
        faces.append([n + a, n + c, n + b])      # top cap, outward +y
    for i in range(n):
        j = (i + 1) % n
        faces += [[j, i, n + i], [j, n + i, n + j]]
    return TriMesh.from_arrays(verts, np.array(faces))


def _poly_area(poly: np.ndarray) -> float:
    x, z = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(z, -1) - np.roll(x, -1) * z))


def wedge(base_x: float, base_y: float, height: float) -> TriMesh:
    """Triangular prism: flat base on z=0, vertical back at -x, sloped front."""
    hx = base_x / 2.0
    poly = np.array([[-hx, 0.0], [hx, 0.0], [-hx, height]])
    return extrude(poly, base_y)


def tee(cap_x: float, cap_z: float, stem_x: float, stem_z: float,
        depth: float) -> TriMesh:
    """Upright T prism: stem on the ground, cap across the top, extruded in y."""
    sx, cx = stem_x / 2.0, cap_x / 2.0
    z1, z2 = stem_z, stem_z + cap_z
    poly = np.array([
        [-sx, 0.0], [sx, 0.0], [sx, z1], [cx, z1],
        [cx, z2], [-cx, z2], [-cx, z1], [-sx, z1],
    ])
    return extrude(poly, depth)
