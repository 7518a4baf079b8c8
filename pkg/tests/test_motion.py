import numpy as np
import pytest

from swale.geometry import build_uniform_tri_mesh
from swale import motion as mo


def spec_61():
    return mo.MotionSpec(mode="prescribed", amplitude=0.075, kx=2, ky=4)


# ----------------------------------------------------------------------
# prescribed motion
# ----------------------------------------------------------------------


def test_displacement_vanishes_at_integer_times():
    mesh = build_uniform_tri_mesh((0, 2, 0, 2), 0.25)
    for t in (0.0, 1.0, 2.0):
        d = mo.prescribed_displacement(spec_61(), mesh.node_x0, t)
        assert np.max(np.abs(d)) <= 1e-14


def test_displacement_vanishes_on_boundary():
    mesh = build_uniform_tri_mesh((0, 2, 0, 2), 0.25)
    d = mo.prescribed_displacement(spec_61(), mesh.node_x0, 0.37)
    assert np.max(np.abs(d[mesh.boundary_nodes])) <= 1e-13


def test_velocity_is_exact_endpoint_difference():
    mesh = build_uniform_tri_mesh((0, 2, 0, 2), 0.25)
    t, dt = 0.21, 0.013
    v = mo.prescribed_velocity(spec_61(), mesh.node_x0, t, dt)
    d0 = mo.prescribed_displacement(spec_61(), mesh.node_x0, t)
    d1 = mo.prescribed_displacement(spec_61(), mesh.node_x0, t + dt)
    np.testing.assert_allclose(v * dt, d1 - d0, atol=1e-16)


def test_velocity_matches_analytic_derivative_in_small_dt_limit():
    spec = spec_61()
    x0 = np.array([[0.25, 0.125]])
    t = 0.0  # cos(pi t) = 1
    v = mo.prescribed_velocity(spec, x0, t, 1e-9)
    want = (
        0.075 * np.pi * np.sin(2 * np.pi * 0.25) * np.sin(4 * np.pi * 0.125)
    )
    np.testing.assert_allclose(v[0], [want, want], rtol=1e-6)


def test_nodes_follow_exact_trajectory_across_steps():
    mesh = build_uniform_tri_mesh((0, 2, 0, 2), 0.25)
    spec = spec_61()
    t = 0.0
    rng = np.random.default_rng(0)
    for _ in range(25):
        dt = rng.uniform(0.005, 0.03)
        vel = mo.prescribed_velocity(spec, mesh.node_x0, t, dt)
        mesh.move_nodes(vel * dt)
        t += dt
        want = mesh.node_x0 + mo.prescribed_displacement(spec, mesh.node_x0, t)
        assert np.max(np.abs(mesh.nodes - want)) <= 1e-12


def test_speed_bound_holds():
    spec = spec_61()
    rng = np.random.default_rng(3)
    x0 = rng.uniform(0, 2, (300, 2))
    bound = mo.prescribed_speed_bound(spec)
    for t in rng.uniform(0, 2, 10):
        v = mo.prescribed_velocity(spec, x0, t, 1e-6)
        assert np.max(np.linalg.norm(v, axis=1)) <= bound + 1e-9


# ----------------------------------------------------------------------
# adaptive displacements
# ----------------------------------------------------------------------


def test_uniform_variation_gives_zero_displacement():
    mesh = build_uniform_tri_mesh((0, 1, 0, 1), 0.125)
    spec = mo.MotionSpec(mode="adaptive")
    var = np.full(mesh.n_cells, 0.7)
    disp = mo.adaptive_displacements(mesh, var, spec)
    assert np.max(np.abs(disp)) == 0.0


def test_flat_field_below_machine_floor_is_idempotent():
    mesh = build_uniform_tri_mesh((0, 1, 0, 1), 0.125)
    spec = mo.MotionSpec(mode="adaptive")
    var = np.zeros(mesh.n_cells)
    disp = mo.adaptive_displacements(mesh, var, spec)
    # all candidate weights collapse to eps; the limiter zeroes the residue
    assert np.max(np.abs(disp)) == 0.0


def test_single_hot_cell_pulls_node_towards_it():
    mesh = build_uniform_tri_mesh((0, 1, 0, 1), 0.25)
    spec = mo.MotionSpec(mode="adaptive", limiter_fraction=0.0)
    interior = np.nonzero(~mesh.boundary_nodes)[0]
    node = interior[0]
    cells = mesh.node_cell_flat[
        mesh.node_cell_offsets[node] : mesh.node_cell_offsets[node + 1]
    ]
    hot = cells[0]
    var = np.zeros(mesh.n_cells)
    var[hot] = 1.0
    disp = mo.adaptive_displacements(mesh, var, spec)
    to_hot = mesh.centroid[hot] - mesh.nodes[node]
    cosine = np.dot(disp[node], to_hot) / (
        np.linalg.norm(disp[node]) * np.linalg.norm(to_hot)
    )
    assert cosine > 0.95
    # magnitude per the displacement formula on this patch
    counts = mesh.node_cell_offsets[node + 1] - mesh.node_cell_offsets[node]
    var_bar = 1.0 / counts
    dvar = np.maximum(mo.ADAPT_EPS, var[cells] - var_bar)
    want = mo.ADAPT_C * np.einsum(
        "c,cx->x", dvar, mesh.centroid[cells] - mesh.nodes[node]
    ) / dvar.sum()
    np.testing.assert_allclose(disp[node], want, rtol=1e-12)


def test_literal_limiter_freezes_uniform_mesh():
    mesh = build_uniform_tri_mesh((0, 1, 0, 1), 0.125)
    spec = mo.MotionSpec(mode="adaptive", limiter="literal")
    rng = np.random.default_rng(1)
    var = rng.uniform(0, 1, mesh.n_cells)
    disp = mo.adaptive_displacements(mesh, var, spec)
    # displacements bounded by C * patch size never reach the inradius
    assert np.max(np.abs(disp)) == 0.0


def test_boundary_nodes_never_move():
    mesh = build_uniform_tri_mesh((0, 1, 0, 1), 0.125)
    spec = mo.MotionSpec(mode="adaptive", limiter_fraction=0.0)
    rng = np.random.default_rng(2)
    var = rng.uniform(0, 1, mesh.n_cells)
    disp = mo.adaptive_displacements(mesh, var, spec)
    assert np.max(np.abs(disp[mesh.boundary_nodes])) == 0.0
    smooth = mo.smoothing_displacements(mesh)
    assert np.max(np.abs(smooth[mesh.boundary_nodes])) == 0.0


# ----------------------------------------------------------------------
# smoothing
# ----------------------------------------------------------------------


def test_smoothing_zero_at_symmetric_node():
    mesh = build_uniform_tri_mesh((0, 1, 0, 1), 0.25)
    smooth = mo.smoothing_displacements(mesh)
    # structured interior nodes sit at the mean of their neighbors
    interior = ~mesh.boundary_nodes
    assert np.max(np.abs(smooth[interior])) <= 1e-14


def test_smoothing_restores_perturbed_node():
    mesh = build_uniform_tri_mesh((0, 1, 0, 1), 0.25)
    interior = np.nonzero(~mesh.boundary_nodes)[0]
    node = interior[0]
    delta = np.array([0.02, -0.01])
    disp = np.zeros_like(mesh.nodes)
    disp[node] = delta
    mesh.move_nodes(disp)
    smooth = mo.smoothing_displacements(mesh)
    np.testing.assert_allclose(smooth[node], -delta, atol=1e-14)


def test_repeated_smoothing_never_inverts():
    mesh = build_uniform_tri_mesh((0, 10, 0, 10), 0.5)
    rng = np.random.default_rng(4)
    disp = 0.1 * rng.standard_normal(mesh.nodes.shape)
    disp[mesh.boundary_nodes] = 0.0
    mesh.move_nodes(mo.clip_displacements(mesh, disp))
    for _ in range(100):
        s = mo.clip_displacements(mesh, mo.smoothing_displacements(mesh))
        mesh.move_nodes(s)  # raises on inversion
    assert np.all(mesh.area > 0)


def test_clip_limits_large_displacements():
    mesh = build_uniform_tri_mesh((0, 1, 0, 1), 0.25)
    rng = np.random.default_rng(5)
    disp = 10.0 * rng.standard_normal(mesh.nodes.shape)
    clipped = mo.clip_displacements(mesh, disp)
    assert np.all(np.linalg.norm(clipped, axis=1) < 0.25)
