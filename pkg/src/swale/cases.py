"""Test-case definitions: initial fields, bathymetries, boundary conditions,
exact-solution oracles, and error norms.

Six experiments are provided: a uniform free stream on a deforming mesh, two
lake-at-rest states (linear and Gaussian bottoms), a small perturbation of a
steady state over a Gaussian ridge, a 1-D dam break, a circular dam break, and
a dam break through a breach in an irregular domain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from swale.geometry import TRI_QUAD_BARY, TRI_QUAD_W, TriMesh, build_uniform_tri_mesh
from swale.motion import MotionSpec

__all__ = [
    "CaseError",
    "CaseDefinition",
    "SteadyField",
    "CellFields",
    "get_case",
    "CASES",
    "init_fields",
    "stoker_dam_break",
    "error_norms",
]


class CaseError(ValueError):
    """Unknown case id or invalid case configuration."""


@dataclass
class SteadyField:
    """Analytic fields used for Dirichlet ghosts and error references."""

    w: Callable[[np.ndarray, np.ndarray], np.ndarray]        # (..., 3)
    grad_w: Callable[[np.ndarray, np.ndarray], np.ndarray]   # (..., 2, 3)
    b: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad_b: Callable[[np.ndarray, np.ndarray], np.ndarray]   # (..., 2)


@dataclass
class CaseDefinition:
    name: str
    domain: tuple[float, float, float, float]
    dx: float
    gravity: float
    t_end: float
    motion: MotionSpec
    bc: dict[str, str]                      # boundary tag -> free | wall | exact
    h0: Callable
    u0: Callable
    v0: Callable
    bottom: Callable
    grad_bottom: Callable
    holes: tuple = ()
    steady: SteadyField | None = None       # for exact BCs / steady references
    reference: str | None = None            # uniform | steady | None
    centerline_y: float | None = None
    region: Callable | None = None          # labels separated by initial jumps


@dataclass
class CellFields:
    w: np.ndarray        # (nc, 3)
    grad_w: np.ndarray   # (nc, 2, 3)
    b: np.ndarray        # (nc,)
    grad_b: np.ndarray   # (nc, 2)


def _zero(x, y):
    return np.zeros_like(x)


def _zero2(x, y):
    return np.zeros(np.shape(x) + (2,))


# ----------------------------------------------------------------------
# case catalogue
# ----------------------------------------------------------------------


def _steady_lake(b_fn, grad_b_fn, surface=1.0):
    def w(x, y):
        out = np.zeros(np.shape(x) + (3,))
        out[..., 0] = surface - b_fn(x, y)
        return out

    def grad_w(x, y):
        out = np.zeros(np.shape(x) + (2, 3))
        out[..., :, 0] = -grad_b_fn(x, y)
        return out

    return SteadyField(w=w, grad_w=grad_w, b=b_fn, grad_b=grad_b_fn)


def _case_free_stream() -> CaseDefinition:
    def w(x, y):
        out = np.empty(np.shape(x) + (3,))
        out[..., 0] = 1.0
        out[..., 1] = 1.0
        out[..., 2] = -1.0
        return out

    steady = SteadyField(w=w, grad_w=lambda x, y: np.zeros(np.shape(x) + (2, 3)),
                         b=_zero, grad_b=_zero2)
    return CaseDefinition(
        name="free_stream",
        domain=(0.0, 2.0, 0.0, 2.0),
        dx=0.05,
        gravity=1.0,
        t_end=5.5,
        motion=MotionSpec(mode="prescribed", amplitude=0.075, kx=2, ky=4),
        bc={s: "exact" for s in ("left", "right", "bottom", "top")},
        h0=lambda x, y: np.ones_like(x),
        u0=lambda x, y: np.ones_like(x),
        v0=lambda x, y: -np.ones_like(x),
        bottom=_zero,
        grad_bottom=_zero2,
        steady=steady,
        reference="uniform",
    )


def _case_lake_linear() -> CaseDefinition:
    b = lambda x, y: 0.05 + 0.075 * (x + y)

    def gb(x, y):
        out = np.empty(np.shape(x) + (2,))
        out[..., 0] = 0.075
        out[..., 1] = 0.075
        return out

    steady = _steady_lake(b, gb)
    return CaseDefinition(
        name="lake_at_rest_linear",
        domain=(0.0, 2.0, 0.0, 2.0),
        dx=0.05,
        gravity=1.0,
        t_end=5.5,
        motion=MotionSpec(mode="prescribed", amplitude=0.075, kx=2, ky=4),
        bc={s: "exact" for s in ("left", "right", "bottom", "top")},
        h0=lambda x, y: 1.0 - b(x, y),
        u0=_zero,
        v0=_zero,
        bottom=b,
        grad_bottom=gb,
        steady=steady,
        reference="steady",
    )


def _case_lake_gauss() -> CaseDefinition:
    b = lambda x, y: 0.25 * np.exp(-50.0 * ((x - 1.0) ** 2 + (y - 1.0) ** 2))

    def gb(x, y):
        bb = b(x, y)
        out = np.empty(np.shape(x) + (2,))
        out[..., 0] = -100.0 * (x - 1.0) * bb
        out[..., 1] = -100.0 * (y - 1.0) * bb
        return out

    steady = _steady_lake(b, gb)
    return CaseDefinition(
        name="lake_at_rest_gauss",
        domain=(0.0, 2.0, 0.0, 2.0),
        dx=0.05,
        gravity=1.0,
        t_end=5.5,
        motion=MotionSpec(mode="prescribed", amplitude=0.075, kx=2, ky=4),
        bc={s: "exact" for s in ("left", "right", "bottom", "top")},
        h0=lambda x, y: 1.0 - b(x, y),
        u0=_zero,
        v0=_zero,
        bottom=b,
        grad_bottom=gb,
        steady=steady,
        reference="steady",
    )


def _case_perturbation() -> CaseDefinition:
    b = lambda x, y: 0.8 * np.exp(-5.0 * (x - 0.9) ** 2 - 50.0 * (y - 0.5) ** 2)

    def gb(x, y):
        bb = b(x, y)
        out = np.empty(np.shape(x) + (2,))
        out[..., 0] = -10.0 * (x - 0.9) * bb
        out[..., 1] = -100.0 * (y - 0.5) * bb
        return out

    def h0(x, y):
        base = 1.0 - b(x, y)
        bump = np.where((x >= 0.05) & (x <= 0.15), 0.01, 0.0)
        return base + bump

    return CaseDefinition(
        name="perturbation",
        domain=(0.0, 2.0, 0.0, 1.0),
        dx=0.01,
        gravity=1.0,
        t_end=1.2,
        motion=MotionSpec(mode="prescribed", amplitude=0.04, kx=2, ky=4),
        bc={"left": "free", "right": "free", "bottom": "wall", "top": "wall"},
        h0=h0,
        u0=_zero,
        v0=_zero,
        bottom=b,
        grad_bottom=gb,
        steady=_steady_lake(b, gb),
        centerline_y=0.5,
        region=lambda x, y: ((x >= 0.05) & (x <= 0.15)).astype(float),
    )


def _case_dam_break_1d() -> CaseDefinition:
    return CaseDefinition(
        name="dam_break_1d",
        domain=(0.0, 1.0, 0.0, 0.5),
        dx=0.02,
        gravity=1.0,
        t_end=0.3,
        motion=MotionSpec(mode="prescribed", amplitude=0.05, kx=3, ky=6),
        bc={"left": "free", "right": "free", "bottom": "wall", "top": "wall"},
        h0=lambda x, y: np.where(x < 0.5, 1.0, 0.1),
        u0=_zero,
        v0=_zero,
        bottom=_zero,
        grad_bottom=_zero2,
        centerline_y=0.25,
        region=lambda x, y: (x < 0.5).astype(float),
    )


def _case_dam_break_circular() -> CaseDefinition:
    def h0(x, y):
        return np.where((x - 5.0) ** 2 + (y - 5.0) ** 2 < 4.0, 1.0, 0.5)

    return CaseDefinition(
        name="dam_break_circular",
        domain=(0.0, 10.0, 0.0, 10.0),
        dx=0.15,
        gravity=1.0,
        t_end=10.0,
        motion=MotionSpec(mode="adaptive"),
        bc={s: "wall" for s in ("left", "right", "bottom", "top")},
        h0=h0,
        u0=_zero,
        v0=_zero,
        bottom=_zero,
        grad_bottom=_zero2,
        centerline_y=5.0,
        region=lambda x, y: ((x - 5.0) ** 2 + (y - 5.0) ** 2 < 4.0).astype(float),
    )


def _case_dam_break_breach() -> CaseDefinition:
    # dam occupies x in [95, 105] except the breach y in [95, 170]; the outer
    # box extent is an assumption recorded in the case documentation
    holes = ((95.0, 105.0, 0.0, 95.0), (95.0, 105.0, 170.0, 200.0))
    return CaseDefinition(
        name="dam_break_breach",
        domain=(0.0, 200.0, 0.0, 200.0),
        dx=4.0,
        gravity=9.812,
        t_end=7.2,
        motion=MotionSpec(mode="adaptive"),
        bc={
            "left": "wall",
            "right": "free",
            "bottom": "wall",
            "top": "wall",
            "obstacle": "wall",
        },
        h0=lambda x, y: np.where(x < 95.0, 10.0, 5.0),
        u0=_zero,
        v0=_zero,
        bottom=_zero,
        grad_bottom=_zero2,
        holes=holes,
        centerline_y=132.5,
        region=lambda x, y: (x < 95.0).astype(float),
    )


CASES: dict[str, Callable[[], CaseDefinition]] = {
    "free_stream": _case_free_stream,
    "lake_at_rest_linear": _case_lake_linear,
    "lake_at_rest_gauss": _case_lake_gauss,
    "perturbation": _case_perturbation,
    "dam_break_1d": _case_dam_break_1d,
    "dam_break_circular": _case_dam_break_circular,
    "dam_break_breach": _case_dam_break_breach,
}


def get_case(name: str) -> CaseDefinition:
    try:
        return CASES[name]()
    except KeyError:
        raise CaseError(f"unknown case {name!r}; known: {sorted(CASES)}") from None


def build_case_mesh(case: CaseDefinition, dx: float | None = None) -> TriMesh:
    return build_uniform_tri_mesh(case.domain, dx if dx is not None else case.dx,
                                  holes=case.holes)


# ----------------------------------------------------------------------
# initialization
# ----------------------------------------------------------------------


def _subdivide(pts):
    p0, p1, p2 = pts[:, 0], pts[:, 1], pts[:, 2]
    m01, m12, m20 = 0.5 * (p0 + p1), 0.5 * (p1 + p2), 0.5 * (p2 + p0)
    return np.concatenate(
        [
            np.stack([p0, m01, m20], axis=1),
            np.stack([m01, p1, m12], axis=1),
            np.stack([m12, p2, m20], axis=1),
            np.stack([m01, m12, m20], axis=1),
        ]
    )


def _cell_averages(mesh: TriMesh, fn, cells=None, levels: int = 0) -> np.ndarray:
    """Cell averages by the degree-4 rule, optionally on subdivided triangles."""
    if cells is None:
        cells = np.arange(mesh.n_cells)
    pts = mesh.nodes[mesh.tris[cells]]
    n_sub = 1
    for _ in range(levels):
        pts = _subdivide(pts)
        n_sub *= 4
    # subdivision stacks blocks of the original cell set
    qp = np.einsum("qk,tkx->tqx", TRI_QUAD_BARY, pts)
    vals = fn(qp[..., 0], qp[..., 1])
    per_tri = np.einsum("q,tq...->t...", TRI_QUAD_W, vals)
    out = per_tri.reshape((n_sub, len(cells)) + per_tri.shape[1:]).mean(axis=0)
    return out


def init_fields(case: CaseDefinition, mesh: TriMesh) -> CellFields:
    """Cell averages and average gradients of the initial data.

    Smooth data uses the fourth-order rule directly; cells cut by an initial
    discontinuity are averaged on a recursively subdivided triangulation and
    get zero gradient there.
    """
    w = np.empty((mesh.n_cells, 3))

    def wfn(comp):
        return {
            0: case.h0,
            1: lambda x, y: case.h0(x, y) * case.u0(x, y),
            2: lambda x, y: case.h0(x, y) * case.v0(x, y),
        }[comp]

    for comp in range(3):
        w[:, comp] = _cell_averages(mesh, wfn(comp))

    b = _cell_averages(mesh, case.bottom)
    grad_b = _cell_averages(mesh, case.grad_bottom)
    if case.steady is not None:
        grad_w = _cell_averages(mesh, case.steady.grad_w)
    else:
        grad_w = np.zeros((mesh.n_cells, 2, 3))

    if case.region is not None:
        # refine averages where an initial jump crosses the cell
        corners = mesh.nodes[mesh.tris]
        label = case.region(corners[..., 0], corners[..., 1])
        cut = np.nonzero(np.ptp(label, axis=1) > 0)[0]
        if cut.size:
            for comp in range(3):
                w[cut, comp] = _cell_averages(mesh, wfn(comp), cells=cut, levels=4)
            grad_w[cut] = 0.0

    if np.any(w[:, 0] <= 0.0):
        raise CaseError(f"case {case.name}: non-positive initial depth")
    return CellFields(w=w, grad_w=grad_w, b=b, grad_b=grad_b)


def reference_error(case: CaseDefinition, mesh: TriMesh, fields: CellFields):
    """Per-cell deviation from the case's steady or uniform reference.

    For lake-at-rest cases the height error is measured through the surface
    elevation h + B - surface, which is the discrete steady state on any mesh.
    """
    if case.reference == "uniform":
        ref = case.steady.w(mesh.centroid[:, 0], mesh.centroid[:, 1])
        return fields.w - ref
    if case.reference == "steady":
        err = fields.w.copy()
        err[:, 0] = fields.w[:, 0] + fields.b - 1.0
        return err
    return None


# ----------------------------------------------------------------------
# exact dam-break solution (Stoker)
# ----------------------------------------------------------------------


def stoker_dam_break(h_l: float, h_r: float, g: float, x, t: float, x0: float = 0.5):
    """Exact wet dam-break profile: rarefaction, middle state, shock.

    Returns (h, u) at positions x for time t > 0.  The middle depth solves the
    compatibility between the left rarefaction invariant and the shock jump
    conditions; bisection to 1e-12.
    """
    if not (h_l > h_r > 0.0):
        raise CaseError("stoker solution requires h_l > h_r > 0")
    if not t > 0.0:
        raise CaseError("stoker solution requires t > 0")
    c_l = np.sqrt(g * h_l)

    def residual(h_m):
        u_m = 2.0 * (c_l - np.sqrt(g * h_m))
        shock = (h_m - h_r) * np.sqrt(0.5 * g * (h_m + h_r) / (h_m * h_r))
        return u_m - shock

    lo, hi = h_r, h_l
    if residual(lo) <= 0.0 or residual(hi) >= 0.0:
        raise CaseError("stoker middle-state bracket failure")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if residual(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12 * h_l:
            break
    h_m = 0.5 * (lo + hi)
    c_m = np.sqrt(g * h_m)
    u_m = 2.0 * (c_l - c_m)
    s = h_m * u_m / (h_m - h_r)  # shock speed from mass conservation

    xi = (np.asarray(x, dtype=np.float64) - x0) / t
    h = np.empty_like(xi)
    u = np.empty_like(xi)

    left = xi <= -c_l
    fan = (xi > -c_l) & (xi < u_m - c_m)
    mid_region = (xi >= u_m - c_m) & (xi < s)
    right = xi >= s

    h[left] = h_l
    u[left] = 0.0
    c_fan = (2.0 * c_l - xi[fan]) / 3.0
    h[fan] = c_fan**2 / g
    u[fan] = xi[fan] + c_fan
    h[mid_region] = h_m
    u[mid_region] = u_m
    h[right] = h_r
    u[right] = 0.0
    return h, u


# ----------------------------------------------------------------------
# error norms
# ----------------------------------------------------------------------


def error_norms(err: np.ndarray, areas: np.ndarray):
    """Area-weighted L1 and max norms per component of a per-cell error."""
    err = np.atleast_2d(np.abs(err).T).T
    total = areas.sum()
    l1 = np.einsum("c,cn->n", areas, err) / total
    linf = err.max(axis=0)
    return l1, linf
