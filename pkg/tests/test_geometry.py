import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seatbear.geometry import (EmptyMesh, Obb, PlanarPose, RigidTransform, compute_obb, inverse_apply,
                               load_mesh, obb_alignment_transform, rot_z, save_mesh, transform_apply)

from oracles import box, yaw_sweep_area


def test_unit_cube_obb():
    obb = compute_obb(box((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5)))
    np.testing.assert_allclose(obb.center, 0.0, atol=1e-12)
    np.testing.assert_allclose(obb.half_extents, 0.5, atol=1e-12)
    assert math.isclose(math.fmod(obb.yaw, math.pi / 2), 0.0, abs_tol=1e-12)


def test_rotated_box_recovers_yaw():
    g = RigidTransform.from_yaw(math.radians(30))
    obb = compute_obb(box((-1, -0.5, -0.5), (1, 0.5, 0.5), g))
    assert math.degrees(obb.yaw) == pytest.approx(30.0, abs=1e-9)
    np.testing.assert_allclose(obb.half_extents, [1.0, 0.5, 0.5], atol=1e-12)


def test_l_shape_matches_sweep():
    # an L-shaped footprint extruded to 0.2 m
    xy = np.array([[0, 0], [1, 0], [1, 0.3], [0.3, 0.3], [0.3, 0.8], [0, 0.8]])
    pts = np.vstack([np.c_[xy, np.zeros(6)], np.c_[xy, np.full(6, 0.2)]])
    obb = compute_obb(pts)
    assert obb.footprint_area() == pytest.approx(yaw_sweep_area(xy), abs=1e-6)


def test_empty_mesh_raises():
    with pytest.raises(EmptyMesh):
        compute_obb(np.zeros((0, 3)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_obb_contains_vertices_and_is_minimal(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(40, 3)) * rng.uniform(0.1, 2.0, size=3)
    obb = compute_obb(pts)
    assert obb.contains(pts, tol=1e-9).all()
    assert obb.footprint_area() <= yaw_sweep_area(pts[:, :2]) + 1e-6
    assert 0.0 <= obb.yaw < math.pi
    assert obb.half_extents[0] >= obb.half_extents[1] - 1e-12


def test_alignment_examples():
    assert np.allclose(obb_alignment_transform(Obb((0, 0, 0), 0.0, (1, 1, 1))).translation, 0)
    g = obb_alignment_transform(Obb((1, 2, 0.3), 0.0, (1, 1, 1)))
    np.testing.assert_allclose(g.rotation, np.eye(3), atol=1e-15)
    np.testing.assert_allclose(g.translation, [-1, -2, 0], atol=1e-15)


def test_alignment_recompute():
    g0 = RigidTransform.from_yaw(math.radians(30), (1.0, 0.0, 0.0))
    mesh = box((-0.4, -0.2, 0.0), (0.4, 0.2, 0.6), g0)
    g = obb_alignment_transform(compute_obb(mesh))
    assert g.translation[2] == 0.0
    again = compute_obb(mesh.transformed(g))
    np.testing.assert_allclose(again.center[:2], 0.0, atol=1e-9)
    assert math.fmod(again.yaw + 1e-12, math.pi / 2) == pytest.approx(0.0, abs=1e-9)


def test_transform_examples():
    np.testing.assert_allclose(transform_apply(RigidTransform(), (1, 2, 3)), (1, 2, 3))
    np.testing.assert_allclose(transform_apply(RigidTransform(translation=(1, 0, 0)), (0, 0, 0)), (1, 0, 0))
    g = RigidTransform(rot_z(math.pi / 2), (1, 0, 0))
    np.testing.assert_allclose(transform_apply(g, (1, 0, 0)), (1, 1, 0), atol=1e-15)
    np.testing.assert_allclose(inverse_apply(g, (1, 1, 0)), (1, 0, 0), atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10), st.floats(-math.pi, math.pi))
def test_inverse_round_trip(x, y, z, yaw):
    g = RigidTransform.from_yaw(yaw, (x, -y, 0.5 * z))
    p = np.array([y, z, x])
    np.testing.assert_allclose(inverse_apply(g, transform_apply(g, p)), p, atol=1e-12)
    np.testing.assert_allclose((g @ g.inverse()).rotation, np.eye(3), atol=1e-12)


def test_long_composition_stays_orthonormal():
    rng = np.random.default_rng(0)
    g = RigidTransform()
    for _ in range(10_000):
        a = rng.normal(size=3)
        a /= np.linalg.norm(a)
        th = rng.uniform(-math.pi, math.pi)
        K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
        R = np.eye(3) + math.sin(th) * K + (1 - math.cos(th)) * K @ K
        g = g @ RigidTransform(R, rng.normal(size=3))
    R = g.rotation
    assert np.abs(R.T @ R - np.eye(3)).max() < 1e-9
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-9)


def test_composition_is_associative():
    rng = np.random.default_rng(1)
    gs = [RigidTransform.from_yaw(rng.uniform(-3, 3), rng.normal(size=3)) for _ in range(3)]
    a = (gs[0] @ gs[1]) @ gs[2]
    b = gs[0] @ (gs[1] @ gs[2])
    np.testing.assert_allclose(a.rotation, b.rotation, atol=1e-12)
    np.testing.assert_allclose(a.translation, b.translation, atol=1e-12)


def test_mesh_round_trip_through_alignment(standard_chair):
    mesh = standard_chair.mesh.transformed(RigidTransform.from_yaw(0.7, (0.3, -0.2, 0.0)))
    g = obb_alignment_transform(compute_obb(mesh))
    back = mesh.transformed(g).transformed(g.inverse())
    np.testing.assert_allclose(back.vertices, mesh.vertices, atol=1e-9)


def test_mesh_physical_attributes():
    m = box((0, 0, 0), (1, 0.5, 0.2))
    assert m.is_watertight()
    assert m.mass == pytest.approx(500.0 * 0.1)
    np.testing.assert_allclose(m.com, [0.5, 0.25, 0.1], atol=1e-12)


def test_obj_and_stl_round_trip(tmp_path, standard_chair):
    for suffix in (".obj", ".stl"):
        path = tmp_path / f"chair{suffix}"
        save_mesh(standard_chair.mesh, path, tmp_path / "attrs.json")
        loaded = load_mesh(path, tmp_path / "attrs.json")
        assert loaded.mass == pytest.approx(standard_chair.mesh.mass)
        np.testing.assert_allclose(loaded.bounds, standard_chair.mesh.bounds, atol=1e-6)
        bare = load_mesh(path)
        assert bare.mass == pytest.approx(standard_chair.mesh.mass, rel=1e-6)
        np.testing.assert_allclose(bare.com, standard_chair.mesh.com, atol=1e-6)


def test_degenerate_triangles_are_dropped(tmp_path, caplog):
    path = tmp_path / "tri.obj"
    v, f = box((0, 0, 0), (1, 1, 1)).vertices, box((0, 0, 0), (1, 1, 1)).faces
    lines = [f"v {a} {b} {c}" for a, b, c in v] + [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in f]
    lines.append("f 1 1 2")
    path.write_text("\n".join(lines) + "\n")
    assert len(load_mesh(path).faces) == 12


def test_planar_pose_transform():
    p = PlanarPose(1.0, 0.0, 0.0).transformed(RigidTransform.from_yaw(math.pi / 2))
    assert (p.x, p.y) == pytest.approx((0.0, 1.0), abs=1e-12)
    assert p.heading == pytest.approx(math.pi / 2)
