import numpy as np
import pytest

from swale.cases import (
    CaseError,
    error_norms,
    get_case,
    build_case_mesh,
    init_fields,
    stoker_dam_break,
)


# ----------------------------------------------------------------------
# initialization
# ----------------------------------------------------------------------


def test_unknown_case_rejected():
    with pytest.raises(CaseError):
        get_case("nope")


def test_free_stream_initial_cells():
    case = get_case("free_stream")
    mesh = build_case_mesh(case, dx=0.25)
    f = init_fields(case, mesh)
    np.testing.assert_allclose(f.w[:, 0], 1.0, atol=1e-15)
    np.testing.assert_allclose(f.w[:, 1], 1.0, atol=1e-15)
    np.testing.assert_allclose(f.w[:, 2], -1.0, atol=1e-15)


def test_lake_linear_surface_exact():
    case = get_case("lake_at_rest_linear")
    mesh = build_case_mesh(case, dx=0.2)
    f = init_fields(case, mesh)
    np.testing.assert_allclose(f.w[:, 0] + f.b, 1.0, atol=1e-14)
    # gradient averages are exact for the linear bottom
    np.testing.assert_allclose(f.grad_b[:, 0], 0.075, atol=1e-14)
    np.testing.assert_allclose(f.grad_w[:, 0, 0], -0.075, atol=1e-14)


def test_circular_dam_initial_volume():
    case = get_case("dam_break_circular")
    mesh = build_case_mesh(case, dx=0.15)
    f = init_fields(case, mesh)
    vol = np.sum(f.w[:, 0] * mesh.area)
    want = np.pi * 4.0 * 1.0 + (100.0 - 4.0 * np.pi) * 0.5
    # subdivision quadrature resolves the circular jump to a few 1e-3
    assert vol == pytest.approx(want, abs=2e-2)


def test_breach_case_geometry():
    case = get_case("dam_break_breach")
    mesh = build_case_mesh(case)
    assert "obstacle" in mesh.tag_names
    cent = mesh.centroid
    inside_dam = (
        (cent[:, 0] > 95) & (cent[:, 0] < 105)
        & ((cent[:, 1] < 95) | (cent[:, 1] > 170))
    )
    assert not np.any(inside_dam)
    assert case.gravity == 9.812


def test_perturbation_bump_band():
    case = get_case("perturbation")
    mesh = build_case_mesh(case, dx=0.02)
    f = init_fields(case, mesh)
    surf = f.w[:, 0] + f.b
    band = (mesh.centroid[:, 0] > 0.06) & (mesh.centroid[:, 0] < 0.14)
    far = mesh.centroid[:, 0] > 0.3
    assert np.all(surf[band] > 1.009)
    np.testing.assert_allclose(surf[far], 1.0, atol=1e-12)


# ----------------------------------------------------------------------
# Stoker oracle
# ----------------------------------------------------------------------


def test_stoker_far_field_states():
    h, u = stoker_dam_break(1.0, 0.1, 1.0, np.array([-5.0, 5.0]), 0.3, x0=0.0)
    assert h[0] == 1.0 and u[0] == 0.0
    assert h[1] == 0.1 and u[1] == 0.0


def test_stoker_rankine_hugoniot_residual():
    g, hl, hr = 1.0, 1.0, 0.1
    x = np.linspace(0, 1, 2001)
    t = 0.3
    h, u = stoker_dam_break(hl, hr, g, x, t, x0=0.5)
    # middle state: between the fan tail and the shock
    mid = (np.abs(u - u.max()) < 1e-12) & (h < hl) & (h > hr)
    h_m = h[mid][0]
    u_m = u[mid][0]
    s = h_m * u_m / (h_m - hr)
    mass = s * (h_m - hr) - h_m * u_m
    mom = s * h_m * u_m - (h_m * u_m**2 + 0.5 * g * h_m**2 - 0.5 * g * hr**2)
    assert abs(mass) <= 1e-12
    assert abs(mom) <= 1e-10


def test_stoker_profile_monotone_and_continuous_at_fan():
    h, u = stoker_dam_break(1.0, 0.1, 1.0, np.linspace(0, 1, 4001), 0.3, x0=0.5)
    # depth decreases monotonically from left state to the shock
    dh = np.diff(h)
    assert np.all(dh <= 1e-12)


def test_stoker_requires_wet_states_and_positive_time():
    with pytest.raises(CaseError):
        stoker_dam_break(0.1, 1.0, 1.0, np.array([0.0]), 0.1)
    with pytest.raises(CaseError):
        stoker_dam_break(1.0, 0.1, 1.0, np.array([0.0]), 0.0)


# ----------------------------------------------------------------------
# error norms
# ----------------------------------------------------------------------


def test_error_norms_zero_for_exact():
    areas = np.array([0.5, 0.25, 0.25])
    err = np.zeros((3, 3))
    l1, linf = error_norms(err, areas)
    assert np.all(l1 == 0) and np.all(linf == 0)


def test_error_norms_constant_offset():
    areas = np.array([0.5, 0.25, 0.25])
    err = np.full((3, 2), 0.3)
    l1, linf = error_norms(err, areas)
    np.testing.assert_allclose(l1, 0.3, rtol=1e-15)
    np.testing.assert_allclose(linf, 0.3, rtol=1e-15)


def test_error_norms_area_weighting():
    areas = np.array([3.0, 1.0])
    err = np.array([[1.0], [5.0]])
    l1, linf = error_norms(err, areas)
    assert l1[0] == pytest.approx((3 * 1 + 1 * 5) / 4)
    assert linf[0] == 5.0
