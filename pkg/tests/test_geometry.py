import numpy as np
import pytest

from swale.geometry import (
    FACE_GAUSS_S,
    FACE_GAUSS_W,
    MeshError,
    TriMesh,
    build_uniform_tri_mesh,
    face_normal_at_time,
    read_mesh_ascii,
    swept_area,
    write_mesh_ascii,
)


def shoelace(points: np.ndarray) -> float:
    """Signed polygon area oracle, independent of the closed-form sweep."""
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def quad_sweep_area(a, b, v1, v2, dt):
    """Swept-quadrilateral area by the shoelace formula: A, A', B', B."""
    a, b, v1, v2 = (np.asarray(p, float) for p in (a, b, v1, v2))
    return shoelace(np.array([a, a + v1 * dt, b + v2 * dt, b]))


# ----------------------------------------------------------------------
# generator
# ----------------------------------------------------------------------


def test_unit_square_counts():
    mesh = build_uniform_tri_mesh((0, 1, 0, 1), 0.5)
    assert mesh.n_cells == 8
    # every quad contributes its diagonal, plus the 4 shared grid edges
    interior = np.sum(mesh.face_right >= 0)
    assert interior == 8
    assert np.sum(mesh.face_right < 0) == 8


def test_cell_count_matches_structured_generator():
    mesh = build_uniform_tri_mesh((0, 2, 0, 2), 0.05)
    assert mesh.n_cells == 2 * round(2 / 0.05) ** 2 == 3200


def test_closure_identity():
    mesh = build_uniform_tri_mesh((0, 10, 0, 10), 0.15)
    nl = mesh.face_normal * mesh.face_len[:, None]
    closure = np.einsum(
        "ce,cex->cx", mesh.cell_face_sign, nl[mesh.cell_faces]
    )
    perim = np.sum(mesh.face_len[mesh.cell_faces], axis=1)
    assert np.max(np.abs(closure) / perim[:, None]) <= 1e-13


def test_degenerate_domain_rejected():
    with pytest.raises(MeshError):
        build_uniform_tri_mesh((0, 0, 0, 1), 0.1)
    with pytest.raises(MeshError):
        build_uniform_tri_mesh((0, 1, 0, 1), -0.1)


def test_characteristic_size_near_target():
    mesh = build_uniform_tri_mesh((0, 2, 0, 2), 0.15)
    # quad spacing within 10% of the requested size
    xs = np.unique(mesh.nodes[:, 0])
    assert abs((xs[1] - xs[0]) - 0.15) <= 0.1 * 0.15


def test_hole_removes_cells_and_tags_obstacle():
    mesh = build_uniform_tri_mesh((0, 4, 0, 4), 1.0, holes=[(1, 3, 1, 3)])
    assert mesh.n_cells == 2 * 16 - 2 * 4
    assert "obstacle" in mesh.tag_names
    cent = mesh.centroid
    assert not np.any(
        (cent[:, 0] > 1) & (cent[:, 0] < 3) & (cent[:, 1] > 1) & (cent[:, 1] < 3)
    )


# ----------------------------------------------------------------------
# face kinematics
# ----------------------------------------------------------------------


def test_swept_area_pure_normal_translation():
    ds = swept_area((0, 0), (0, 1), (0.2, 0), (0.2, 0), 0.1)
    assert ds == pytest.approx(0.02, abs=1e-15)


def test_swept_area_tangential_motion_is_zero():
    ds = swept_area((0, 0), (0, 1), (0, 1), (0, 1), 0.1)
    assert ds == pytest.approx(0.0, abs=1e-15)


def test_swept_area_with_rotation_matches_shoelace():
    a, b = (0, 0), (0, 1)
    v1, v2 = (0.3, 0.0), (0.3, 0.6)
    ds = swept_area(a, b, v1, v2, 0.1)
    assert ds == pytest.approx(0.0309, abs=1e-15)
    assert ds == pytest.approx(quad_sweep_area(a, b, v1, v2, 0.1), abs=1e-15)


def test_swept_area_randomized_against_shoelace():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        a = rng.uniform(-5, 5, 2)
        b = a + rng.uniform(-2, 2, 2)
        if np.linalg.norm(b - a) < 1e-3:
            continue
        v1 = rng.uniform(-3, 3, 2)
        v2 = rng.uniform(-3, 3, 2)
        dt = rng.uniform(1e-4, 0.5)
        ds = swept_area(a, b, v1, v2, dt)
        oracle = quad_sweep_area(a, b, v1, v2, dt)
        scale = max(abs(oracle), 1e-12)
        assert abs(ds - oracle) <= 1e-13 * max(scale, 1.0)


def test_face_normal_at_time_translation_invariant():
    n0 = face_normal_at_time((0, 0), (0, 1), (0.5, -0.2), (0.5, -0.2), 0.0)
    nt = face_normal_at_time((0, 0), (0, 1), (0.5, -0.2), (0.5, -0.2), 0.3)
    np.testing.assert_allclose(nt, n0, atol=1e-15)


def test_face_normal_at_time_perpendicular_to_moved_face():
    a, b = np.array([0.0, 0.0]), np.array([0.0, 1.0])
    v1, v2 = np.array([0.0, 0.0]), np.array([1.0, 0.0])
    t = 0.1
    n = face_normal_at_time(a, b, v1, v2, t)
    moved = (b + v2 * t) - (a + v1 * t)
    assert abs(np.dot(n, moved)) <= 1e-15
    np.testing.assert_allclose(n, np.array([1.0, -0.1]) / np.hypot(1, 0.1), atol=1e-15)
    assert np.linalg.norm(n) == pytest.approx(1.0, abs=1e-15)


def test_face_normal_at_time_zero_is_stored_normal():
    mesh = build_uniform_tri_mesh((0, 1, 0, 1), 0.5)
    f = 3
    a = mesh.nodes[mesh.face_nodes[f, 0]]
    b = mesh.nodes[mesh.face_nodes[f, 1]]
    n = face_normal_at_time(a, b, (0, 0), (0, 0), 0.0)
    np.testing.assert_allclose(n, mesh.face_normal[f], atol=1e-15)


# ----------------------------------------------------------------------
# node motion
# ----------------------------------------------------------------------


def test_zero_motion_keeps_geometry():
    mesh = build_uniform_tri_mesh((0, 1, 0, 1), 0.25)
    area0 = mesh.area.copy()
    nodes0 = mesh.nodes.copy()
    mesh.move_nodes(np.zeros_like(mesh.nodes))
    assert np.array_equal(mesh.nodes, nodes0)
    assert np.array_equal(mesh.area, area0)


def test_rigid_translation_is_isometry():
    mesh = build_uniform_tri_mesh((0, 1, 0, 1), 0.2)
    area0 = mesh.area.copy()
    len0 = mesh.face_len.copy()
    mesh.move_nodes(np.tile([0.37, -1.25], (mesh.n_nodes, 1)))
    assert np.max(np.abs(mesh.area / area0 - 1.0)) <= 1e-14
    assert np.max(np.abs(mesh.face_len / len0 - 1.0)) <= 1e-14


def test_area_change_equals_sum_of_swept_faces():
    rng = np.random.default_rng(7)
    mesh = build_uniform_tri_mesh((0, 1, 0, 1), 0.125)
    vel = 0.04 * rng.standard_normal((mesh.n_nodes, 2))
    dt = 0.3
    a = mesh.nodes[mesh.face_nodes[:, 0]]
    b = mesh.nodes[mesh.face_nodes[:, 1]]
    ds = swept_area(a, b, vel[mesh.face_nodes[:, 0]], vel[mesh.face_nodes[:, 1]], dt)
    per_cell = np.einsum("ce,ce->c", mesh.cell_face_sign, ds[mesh.cell_faces])
    area0 = mesh.area.copy()
    mesh.move_nodes(vel * dt)
    change = mesh.area - area0
    assert np.max(np.abs(change - per_cell) / np.maximum(mesh.area, 1e-30)) <= 1e-13


def test_inverting_motion_rejected():
    mesh = build_uniform_tri_mesh((0, 1, 0, 1), 0.5)
    disp = np.zeros_like(mesh.nodes)
    # drag one interior node far across the mesh
    interior = np.nonzero(~mesh.boundary_nodes)[0]
    disp[interior[0]] = (2.0, 2.0)
    with pytest.raises(MeshError):
        mesh.move_nodes(disp)


# ----------------------------------------------------------------------
# faces, orientation, quadrature
# ----------------------------------------------------------------------


def test_normal_points_left_to_right():
    mesh = build_uniform_tri_mesh((0, 1, 0, 1), 0.25)
    interior = np.nonzero(mesh.face_right >= 0)[0]
    mid = 0.5 * (
        mesh.nodes[mesh.face_nodes[interior, 0]]
        + mesh.nodes[mesh.face_nodes[interior, 1]]
    )
    to_right = mesh.centroid[mesh.face_right[interior]] - mid
    dots = np.einsum("fx,fx->f", to_right, mesh.face_normal[interior])
    assert np.all(dots > 0)


def test_flipping_face_nodes_flips_normal():
    a, b = np.array([0.2, 0.1]), np.array([0.9, 0.7])
    n_ab = face_normal_at_time(a, b, (0, 0), (0, 0), 0.0)
    n_ba = face_normal_at_time(b, a, (0, 0), (0, 0), 0.0)
    np.testing.assert_allclose(n_ab, -n_ba, atol=1e-15)


def test_face_gauss_rule_exact_for_cubics():
    # integrate s^3 over a segment of length L: exact value L/4 in arc length
    mesh = build_uniform_tri_mesh((0, 1, 0, 1), 0.5)
    s = FACE_GAUSS_S
    for p in range(4):
        approx = np.sum(FACE_GAUSS_W * s**p)
        assert approx == pytest.approx(1.0 / (p + 1), abs=1e-15)


def test_gauss_points_on_segment():
    mesh = build_uniform_tri_mesh((0, 1, 0, 1), 0.25)
    a = mesh.nodes[mesh.face_nodes[:, 0]]
    b = mesh.nodes[mesh.face_nodes[:, 1]]
    for k, sk in enumerate(FACE_GAUSS_S):
        expect = a + sk * (b - a)
        np.testing.assert_allclose(mesh.face_gauss[:, k], expect, atol=1e-15)


def test_stencil_interior_has_ten_cells_and_is_deterministic():
    mesh = build_uniform_tri_mesh((0, 2, 0, 2), 0.1)
    interior_full = mesh.stencil_size == 10
    assert np.any(interior_full)
    mesh2 = build_uniform_tri_mesh((0, 2, 0, 2), 0.1)
    assert np.array_equal(mesh.stencil, mesh2.stencil)


def test_boundary_stencil_shrinks():
    mesh = build_uniform_tri_mesh((0, 2, 0, 2), 0.1)
    has_wall = np.any(mesh.edge_neighbors < 0, axis=1)
    assert np.all(mesh.stencil_size[has_wall] < 10)


def test_rectangle_tags():
    mesh = build_uniform_tri_mesh((0, 1, 0, 2), 0.25)
    names = set(mesh.tag_names)
    assert {"left", "right", "bottom", "top"} <= names
    boundary = mesh.face_right < 0
    assert np.all(mesh.face_tag[boundary] > 0)
    assert np.all(mesh.face_tag[~boundary] == 0)


def test_mesh_ascii_round_trip(tmp_path):
    mesh = build_uniform_tri_mesh((0, 1, 0, 1), 0.25)
    path = tmp_path / "mesh.txt"
    write_mesh_ascii(mesh, path)
    back = read_mesh_ascii(path)
    assert np.array_equal(back.tris, mesh.tris)
    np.testing.assert_array_equal(back.nodes, mesh.nodes)
