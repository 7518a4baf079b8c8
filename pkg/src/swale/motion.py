"""Node velocity generation: prescribed analytic motions and the adaptive
variation-driven node relocation with periodic Laplacian smoothing.

Prescribed motions displace nodes from their initial coordinates by
    d(x0, t) = A sin(pi t) sin(kx pi x0) sin(ky pi y0) (1, 1),
which vanishes on the rectangular boundaries used by the test cases.  Step
velocities are the exact endpoint displacement difference over dt, so nodes
land on the analytic trajectory at every step boundary and move in straight
lines within a step.

Adaptive motion pulls each node towards the centroids of neighboring cells
whose variation exceeds the node's average, normalized by the total variation
excess; it needs no connectivity beyond the node's cell ring and no solves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from swale.geometry import TriMesh

__all__ = [
    "MotionSpec",
    "prescribed_displacement",
    "prescribed_velocity",
    "prescribed_speed_bound",
    "adaptive_displacements",
    "smoothing_displacements",
    "clip_displacements",
]

ADAPT_C = 0.25
ADAPT_EPS = 1e-15


@dataclass
class MotionSpec:
    mode: str = "static"          # static | prescribed | adaptive
    amplitude: float = 0.0
    kx: float = 2.0               # wavenumbers in units of pi
    ky: float = 4.0
    n_motion: int = 4             # adaptive: move every n-th step
    n_smooth: int = 6             # adaptive: smooth every n-th motion event
    limiter: str = "fractional"   # fractional | literal
    limiter_fraction: float = 0.05


def prescribed_displacement(spec: MotionSpec, x0: np.ndarray, t: float) -> np.ndarray:
    s = (
        spec.amplitude
        * np.sin(np.pi * t)
        * np.sin(spec.kx * np.pi * x0[:, 0])
        * np.sin(spec.ky * np.pi * x0[:, 1])
    )
    return np.stack([s, s], axis=1)


def prescribed_velocity(
    spec: MotionSpec, x0: np.ndarray, t: float, dt: float
) -> np.ndarray:
    """Endpoint-difference velocity: nodes reach the exact trajectory at t + dt."""
    d0 = prescribed_displacement(spec, x0, t)
    d1 = prescribed_displacement(spec, x0, t + dt)
    return (d1 - d0) / dt


def prescribed_speed_bound(spec: MotionSpec) -> float:
    """Upper bound on nodal speed, used for the time-step estimate."""
    return abs(spec.amplitude) * np.pi * np.sqrt(2.0)


def adaptive_displacements(
    mesh: TriMesh, var: np.ndarray, spec: MotionSpec
) -> np.ndarray:
    """Variation-driven node displacements (boundary nodes pinned).

    Per node i with incident cells j: the candidate move towards centroid j is
    C (P_j - X_i) dVar_ij with dVar_ij = max(eps, Var_j - mean_j Var), and the
    final displacement is the dVar-weighted mean of the candidates.  Small
    displacements are zeroed by the local-cell-size limiter.
    """
    counts = np.diff(mesh.node_cell_offsets)
    owner = np.repeat(np.arange(mesh.n_nodes), counts)
    cells = mesh.node_cell_flat

    var_sum = np.zeros(mesh.n_nodes)
    np.add.at(var_sum, owner, var[cells])
    var_bar = var_sum / np.maximum(counts, 1)

    dvar = np.maximum(ADAPT_EPS, var[cells] - var_bar[owner])
    pull = mesh.centroid[cells] - mesh.nodes[owner]
    num = np.zeros((mesh.n_nodes, 2))
    np.add.at(num, owner, ADAPT_C * pull * dvar[:, None])
    den = np.zeros(mesh.n_nodes)
    np.add.at(den, owner, dvar)
    disp = num / np.maximum(den, ADAPT_EPS)[:, None]

    rmin = np.full(mesh.n_nodes, np.inf)
    np.minimum.at(rmin, owner, mesh.inradius[cells])
    mag = np.linalg.norm(disp, axis=1)
    if spec.limiter == "literal":
        threshold = rmin
    else:
        threshold = spec.limiter_fraction * rmin
    disp[mag < threshold] = 0.0
    disp[mesh.boundary_nodes] = 0.0
    return disp


def smoothing_displacements(mesh: TriMesh) -> np.ndarray:
    """Laplacian pull towards the mean of adjacent node positions."""
    counts = np.diff(mesh.node_node_offsets)
    owner = np.repeat(np.arange(mesh.n_nodes), counts)
    acc = np.zeros((mesh.n_nodes, 2))
    np.add.at(acc, owner, mesh.nodes[mesh.node_node_flat])
    disp = acc / np.maximum(counts, 1)[:, None] - mesh.nodes
    disp[mesh.boundary_nodes] = 0.0
    return disp


def clip_displacements(
    mesh: TriMesh, disp: np.ndarray, factor: float = 0.4
) -> np.ndarray:
    """Scale displacements so no node moves past a fraction of its clearance.

    Clearance is the smallest height from the node to the opposite edge over
    its incident triangles; simultaneous motion of several nodes can still
    tangle in principle, so callers re-check orientation after applying.
    """
    p = mesh.nodes[mesh.tris]  # (nc, 3, 2)
    heights = np.empty((mesh.n_cells, 3))
    for v in range(3):
        a = p[:, (v + 1) % 3]
        b = p[:, (v + 2) % 3]
        edge = np.linalg.norm(b - a, axis=1)
        heights[:, v] = 2.0 * mesh.area / edge

    clearance = np.full(mesh.n_nodes, np.inf)
    np.minimum.at(clearance, mesh.tris.ravel(), heights.ravel())

    mag = np.linalg.norm(disp, axis=1)
    limit = factor * clearance
    scale = np.where(mag > limit, limit / np.maximum(mag, 1e-300), 1.0)
    return disp * scale[:, None]
