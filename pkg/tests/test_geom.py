"""Geometry kernel tests: quaternions, poses, meshes, queries, sampling."""

import struct

import numpy as np
import pytest

from pingrip import geom, oracle, shapes
from pingrip.geom import (MeshContentError, MeshFormatError, PointCloud, Pose,
                          TriMesh, closest_points_on_triangles, load_mesh,
                          quat_from_axis_angle, quat_identity, quat_integrate,
                          quat_mul, quat_random, quat_rotate, quat_to_mat,
                          raycast)


# ---------------------------------------------------------------------------
# Quaternions
# ---------------------------------------------------------------------------

def test_quat_rotate_matches_matrix():
    rng = np.random.default_rng(7)
    for _ in range(50):
        q = quat_random(rng)
        v = rng.standard_normal(3)
        np.testing.assert_allclose(quat_rotate(q, v), quat_to_mat(q) @ v,
                                   atol=1e-12)


def test_quat_axis_angle_quarter_turn():
    q = quat_from_axis_angle([0, 0, 1], np.pi / 2)
    np.testing.assert_allclose(quat_rotate(q, [1.0, 0.0, 0.0]), [0.0, 1.0, 0.0],
                               atol=1e-12)


def test_quat_mul_associative_and_unit():
    rng = np.random.default_rng(11)
    for _ in range(30):
        a, b, c = (quat_random(rng) for _ in range(3))
        np.testing.assert_allclose(quat_mul(quat_mul(a, b), c),
                                   quat_mul(a, quat_mul(b, c)), atol=1e-12)
        assert abs(np.linalg.norm(quat_random(rng)) - 1.0) < 1e-12


def test_quat_integrate_constant_rate():
    q = quat_identity()
    omega = np.array([0.0, 0.0, np.pi / 2])
    for _ in range(240):
        q = quat_integrate(q, omega, 1.0 / 240.0)
    v = quat_rotate(q, [1.0, 0.0, 0.0])
    assert abs(np.arctan2(v[1], v[0]) - np.pi / 2) < 5e-3


# ---------------------------------------------------------------------------
# Pose
# ---------------------------------------------------------------------------

def test_pose_compose_associative_and_inverse():
    rng = np.random.default_rng(3)
    for _ in range(30):
        poses = [Pose(rng.standard_normal(3), quat_random(rng)) for _ in range(3)]
        a, b, c = poses
        lhs = a.compose(b).compose(c)
        rhs = a.compose(b.compose(c))
        np.testing.assert_allclose(lhs.p, rhs.p, atol=1e-9)
        np.testing.assert_allclose(np.abs(lhs.q @ rhs.q), 1.0, atol=1e-9)
        ident = a.compose(a.inverse())
        np.testing.assert_allclose(ident.p, 0.0, atol=1e-9)
        assert abs(abs(ident.q[0]) - 1.0) < 1e-9


def test_pose_apply_roundtrip():
    rng = np.random.default_rng(5)
    pose = Pose(rng.standard_normal(3), quat_random(rng))
    pts = rng.standard_normal((20, 3))
    np.testing.assert_allclose(pose.inverse().apply(pose.apply(pts)), pts,
                               atol=1e-12)


def test_pose_quaternion_stays_normalized():
    pose = Pose([0, 0, 0], [2.0, 0.0, 0.0, 0.0])
    assert abs(np.linalg.norm(pose.q) - 1.0) < 1e-15


# ---------------------------------------------------------------------------
# TriMesh structure and mass properties
# ---------------------------------------------------------------------------

def test_box_mesh_basics():
    m = shapes.box(1.0, 1.0, 1.0)
    assert len(m.faces) == 12
    assert m.closed
    assert abs(m.area - 6.0) < 1e-12
    assert abs(m.signed_volume() - 1.0) < 1e-12


def test_winding_autofix():
    m = shapes.box(0.1, 0.1, 0.1)
    flipped = TriMesh.from_arrays(m.vertices, m.faces[:, [0, 2, 1]])
    assert flipped.signed_volume() > 0.0


def test_box_inertia_analytic():
    sx, sy, sz, mass = 0.04, 0.05, 0.06, 0.05
    com, inertia = shapes.box(sx, sy, sz).mass_properties(mass)
    np.testing.assert_allclose(com, 0.0, atol=1e-15)
    expect = mass / 12.0 * np.diag([sy**2 + sz**2, sx**2 + sz**2,
                                    sx**2 + sy**2])
    np.testing.assert_allclose(inertia, expect, atol=1e-12)


def test_cylinder_inertia_close_to_analytic():
    r, h, mass = 0.02, 0.05, 0.05
    com, inertia = shapes.cylinder(r, h, segments=96).mass_properties(mass)
    np.testing.assert_allclose(com, 0.0, atol=1e-12)
    assert abs(inertia[2, 2] - mass * r * r / 2.0) / (mass * r * r / 2.0) < 0.01


def test_icosphere_close_to_sphere():
    r = 0.03
    m = shapes.icosphere(r, subdivisions=2)
    v_true = 4.0 / 3.0 * np.pi * r**3
    assert 0.95 * v_true < m.signed_volume() <= v_true
    com, inertia = m.mass_properties(0.05)
    np.testing.assert_allclose(com, 0.0, atol=1e-10)
    expect = 0.4 * 0.05 * r * r
    assert abs(inertia[0, 0] - expect) / expect < 0.03


def test_tee_matches_composite_boxes():
    cap_x, cap_z, stem_x, stem_z, depth, mass = 0.05, 0.015, 0.02, 0.03, 0.03, 0.05
    m = shapes.tee(cap_x, cap_z, stem_x, stem_z, depth)
    assert m.closed
    v_expect = (cap_x * cap_z + stem_x * stem_z) * depth
    assert abs(m.signed_volume() - v_expect) < 1e-15
    com, inertia = m.mass_properties(mass)

    def box_part(sx, sy, sz, cz, part_mass):
        i = part_mass / 12.0 * np.diag([sy**2 + sz**2, sx**2 + sz**2,
                                        sx**2 + sy**2])
        return cz, i

    rho = mass / v_expect
    m_stem = rho * stem_x * stem_z * depth
    m_cap = rho * cap_x * cap_z * depth
    z_stem, i_stem = box_part(stem_x, depth, stem_z, stem_z / 2.0, m_stem)
    z_cap, i_cap = box_part(cap_x, depth, cap_z, stem_z + cap_z / 2.0, m_cap)
    z_com = (m_stem * z_stem + m_cap * z_cap) / mass
    np.testing.assert_allclose(com, [0.0, 0.0, z_com], atol=1e-12)
    total = np.zeros((3, 3))
    for part_mass, z_c, i_part in ((m_stem, z_stem, i_stem), (m_cap, z_cap, i_cap)):
        d = np.array([0.0, 0.0, z_c - z_com])
        total += i_part + part_mass * ((d @ d) * np.eye(3) - np.outer(d, d))
    np.testing.assert_allclose(inertia, total, atol=1e-12)


def test_wedge_volume_and_com():
    bx, by, h = 0.05, 0.04, 0.05
    m = shapes.wedge(bx, by, h)
    assert m.closed
    assert abs(m.signed_volume() - 0.5 * bx * h * by) < 1e-15
    com, _ = m.mass_properties(0.05)
    # right triangle cross-section: centroid at 1/3 from the right angle
    np.testing.assert_allclose(com, [-bx / 2.0 + bx / 3.0, 0.0, h / 3.0],
                               atol=1e-12)


def test_open_mesh_falls_back_to_hull():
    cube = shapes.box(0.05, 0.05, 0.05)
    open_mesh = TriMesh(cube.vertices, cube.faces[:-1])
    assert not open_mesh.closed
    com_open, i_open = open_mesh.mass_properties(0.05)
    com_ref, i_ref = cube.mass_properties(0.05)
    np.testing.assert_allclose(com_open, com_ref, atol=1e-12)
    np.testing.assert_allclose(i_open, i_ref, atol=1e-12)


def test_extrude_rejects_clockwise():
    with pytest.raises(ValueError):
        shapes.extrude(np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]), 0.1)


# ---------------------------------------------------------------------------
# Mesh IO
# ---------------------------------------------------------------------------

_CUBE_OBJ = """\
# unit cube
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 3 4 8
f 3 8 7
f 2 3 7
f 2 7 6
f 4 1 5
f 4 5 8
"""


def test_load_obj_cube(tmp_path):
    p = tmp_path / "cube.obj"
    p.write_text(_CUBE_OBJ)
    m = load_mesh(p)
    assert len(m.vertices) == 8
    assert len(m.faces) == 12
    assert m.closed
    assert abs(m.signed_volume() - 1.0) < 1e-12


def test_load_obj_quad_and_slash_formats(tmp_path):
    text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\n"
    p = tmp_path / "quad.obj"
    p.write_text(text)
    m = load_mesh(p)
    assert len(m.faces) == 2  # fan triangulation
    text2 = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3//1 -2//1 -1//1\n"
    p2 = tmp_path / "neg.obj"
    p2.write_text(text2)
    assert len(load_mesh(p2).faces) == 1


def test_load_obj_errors(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("v 1 2\n")
    with pytest.raises(MeshFormatError):
        load_mesh(p)
    p2 = tmp_path / "empty.obj"
    p2.write_text("# nothing\n")
    with pytest.raises(MeshContentError):
        load_mesh(p2)
    with pytest.raises(MeshFormatError):
        load_mesh(tmp_path / "cube.ply")


def _write_stl_binary(path, tri_pts):
    with open(path, "wb") as fh:
        fh.write(b"\0" * 80)
        fh.write(struct.pack("<I", len(tri_pts)))
        for tri in tri_pts:
            fh.write(struct.pack("<3f", 0.0, 0.0, 0.0))
            for v in tri:
                fh.write(struct.pack("<3f", *v))
            fh.write(struct.pack("<H", 0))


def test_load_stl_binary_with_degenerate(tmp_path):
    cube = shapes.box(1.0, 1.0, 1.0)
    tris = list(cube.tri_pts)
    tris[5] = np.zeros((3, 3))  # zero-area facet among 12
    p = tmp_path / "cube.stl"
    _write_stl_binary(p, tris)
    m = load_mesh(p)
    assert len(m.faces) == 11


def test_load_stl_binary_roundtrip(tmp_path):
    tee = shapes.tee(0.05, 0.015, 0.02, 0.03, 0.03)
    p = tmp_path / "tee.stl"
    _write_stl_binary(p, tee.tri_pts)
    m = load_mesh(p)
    assert abs(m.signed_volume() - tee.signed_volume()) < 1e-9
    assert m.closed


def test_load_stl_ascii(tmp_path):
    tri = ("solid t\nfacet normal 0 0 1\nouter loop\n"
           "vertex 0 0 0\nvertex 1 0 0\nvertex 0 1 0\n"
           "endloop\nendfacet\nendsolid t\n")
    p = tmp_path / "tri.stl"
    p.write_text(tri)
    m = load_mesh(p)
    assert len(m.faces) == 1


def test_load_stl_truncated(tmp_path):
    p = tmp_path / "trunc.stl"
    p.write_bytes(b"\x80\xff not a mesh")
    with pytest.raises(MeshFormatError):
        load_mesh(p)


# ---------------------------------------------------------------------------
# Raycast
# ---------------------------------------------------------------------------

def test_raycast_analytic_cube():
    cube = shapes.box(0.05, 0.05, 0.05)
    hit = raycast(cube, [0.1, 0.0, 0.0], [-1.0, 0.0, 0.0])
    assert hit is not None
    t, _ = hit
    assert abs(t - 0.075) < 1e-12
    assert raycast(cube, [0.1, 0.0, 0.0], [1.0, 0.0, 0.0]) is None


def test_raycast_rotated_cube_matches_brute():
    cube = shapes.box(0.05, 0.05, 0.05)
    pose = Pose([0, 0, 0], quat_from_axis_angle([0, 0, 1], np.pi / 4))
    world = cube.transformed(pose)
    got = raycast(world, [0.1, 0.0, 0.01], [-1.0, 0.0, 0.0])
    want = oracle.brute_raycast(world, [0.1, 0.0, 0.01], [-1.0, 0.0, 0.0])
    assert got is not None and want is not None
    assert abs(got[0] - want[0]) < 1e-9


@pytest.mark.parametrize("maker", [
    lambda: shapes.box(0.05, 0.04, 0.03),
    lambda: shapes.icosphere(0.025, 1),
    lambda: shapes.tee(0.05, 0.015, 0.02, 0.03, 0.03),
])
def test_raycast_property_vs_brute(maker):
    mesh = maker()
    rng = np.random.default_rng(17)
    center = 0.5 * (mesh.aabb[0] + mesh.aabb[1])
    hits = 0
    for _ in range(120):
        origin = center + 0.2 * _unit(rng.standard_normal(3))
        if rng.random() < 0.7:
            target = center + 0.02 * rng.standard_normal(3)
            direction = _unit(target - origin)
        else:
            direction = _unit(rng.standard_normal(3))
        got = raycast(mesh, origin, direction)
        want = oracle.brute_raycast(mesh, origin, direction)
        if want is None:
            assert got is None
        else:
            assert got is not None
            assert abs(got[0] - want[0]) < 1e-9
            hits += 1
    assert hits > 30


def _unit(v):
    return v / np.linalg.norm(v)


# ---------------------------------------------------------------------------
# Closest point
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("maker", [
    lambda: shapes.box(0.05, 0.04, 0.03),
    lambda: shapes.wedge(0.05, 0.04, 0.05),
    lambda: shapes.icosphere(0.025, 1),
])
def test_closest_point_matches_brute(maker):
    mesh = maker()
    rng = np.random.default_rng(23)
    queries = 0.06 * rng.standard_normal((60, 3))
    pts, dists, _ = closest_points_on_triangles(queries, mesh.tri_pts)
    for q, p, d in zip(queries, pts, dists):
        p_ref, d_ref = oracle.brute_closest_point(mesh, q)
        assert abs(d - d_ref) < 1e-9
        assert abs(np.linalg.norm(q - p) - d_ref) < 1e-9


def test_closest_point_on_sphere_analytic():
    mesh = shapes.icosphere(0.02, 3)
    q = np.array([[0.05, 0.0, 0.0]])
    _, d, _ = closest_points_on_triangles(q, mesh.tri_pts)
    assert abs(d[0] - 0.03) < 2e-4  # facet chord error at subdiv 3


# ---------------------------------------------------------------------------
# Surface sampling and point clouds
# ---------------------------------------------------------------------------

def test_sample_surface_area_weighted():
    verts = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
    faces = np.array([[0, 1, 2], [0, 2, 3]])
    mesh = TriMesh(verts, faces)
    rng = np.random.default_rng(29)
    n = 10000
    cloud = PointCloud.sample(mesh, n, rng)
    assert len(cloud.points) == n
    # count points in triangle 0 (x > y half of the square)
    in_t0 = int(np.sum(cloud.points[:, 0] > cloud.points[:, 1]))
    assert oracle.binomial_within_3sigma(in_t0, n, 0.5)
    assert np.all(cloud.points >= -1e-9) and np.all(cloud.points <= 1 + 1e-9)
    assert np.all(np.abs(cloud.points[:, 2]) < 1e-12)


def test_sample_surface_stays_on_mesh():
    mesh = shapes.tee(0.05, 0.015, 0.02, 0.03, 0.03)
    rng = np.random.default_rng(31)
    cloud = PointCloud.sample(mesh, 512, rng)
    assert len(cloud.points) == 512
    _, dists, _ = closest_points_on_triangles(cloud.points, mesh.tri_pts)
    assert np.max(dists) < 1e-9
    lo, hi = mesh.aabb
    assert np.all(cloud.points >= lo - 1e-6) and np.all(cloud.points <= hi + 1e-6)


def test_pointcloud_xyz_roundtrip(tmp_path):
    rng = np.random.default_rng(37)
    cloud = PointCloud(rng.standard_normal((64, 3)) * 0.01)
    p = tmp_path / "c.xyz"
    cloud.save_xyz(p)
    back = PointCloud.load_xyz(p)
    np.testing.assert_allclose(back.points, cloud.points, atol=1e-9)


def test_sampling_deterministic_per_seed():
    mesh = shapes.box(0.05, 0.05, 0.05)
    a = PointCloud.sample(mesh, 256, np.random.default_rng(101)).points
    b = PointCloud.sample(mesh, 256, np.random.default_rng(101)).points
    np.testing.assert_array_equal(a, b)
