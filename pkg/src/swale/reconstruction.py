"""Fourth-order compact spatial reconstruction with WENO limiting.

Each cell carries averages and average gradients of the reconstructed fields.
A cubic polynomial is recovered per cell by constrained least squares over the
compact stencil (self, edge neighbors, their edge neighbors): the cell-0
average is an exact constraint, all other average/gradient conditions are
fitted.  Three linear sub-polynomials (one per edge neighbor) feed a nonlinear
convex combination that falls back to the cubic in smooth regions.

The basis is monomials in centroid-centered coordinates scaled by the cell
size sqrt(|cell|); gradient rows are premultiplied by the cell size so all
rows share one magnitude scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from swale.geometry import TRI_QUAD_W, TriMesh

__all__ = [
    "ReconstructionOperators",
    "build_operators",
    "reconstruct",
    "evaluate_poly",
    "evaluate_poly_gradient",
    "smoothness_indicators",
    "weno_weights",
    "WENO_C",
    "WENO_CK",
    "WENO_EPS",
]

# exponents of the complete cubic monomial basis
PX = np.array([0, 1, 0, 2, 1, 0, 3, 2, 1, 0])
PY = np.array([0, 0, 1, 0, 1, 2, 0, 1, 2, 3])
NB = 10

WENO_C = 5.0
WENO_CK = 1.0 / 3.0
WENO_EPS = 1e-12
WENO_EPS_SCALE = 0.05  # scale-aware floor: variations below this fraction of a
                      # cell-size slope count as smooth (guards critical points)


def _derivative_matrix(px: np.ndarray, py: np.ndarray, axis: int) -> np.ndarray:
    """Matrix D with (D @ coef) the coefficients of the derivative polynomial."""
    d = np.zeros((NB, NB))
    for k in range(NB):
        p, q = int(px[k]), int(py[k])
        if axis == 0 and p > 0:
            tgt = _mono_index(p - 1, q)
            d[tgt, k] = p
        if axis == 1 and q > 0:
            tgt = _mono_index(p, q - 1)
            d[tgt, k] = q
    return d


def _mono_index(p: int, q: int) -> int:
    hits = np.nonzero((PX == p) & (PY == q))[0]
    return int(hits[0])


DX_MAT = _derivative_matrix(PX, PY, 0)
DY_MAT = _derivative_matrix(PX, PY, 1)


def monomials(xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Complete cubic monomial values, shape xi.shape + (10,)."""
    out = np.empty(xi.shape + (NB,), dtype=np.float64)
    out[..., 0] = 1.0
    out[..., 1] = xi
    out[..., 2] = eta
    out[..., 3] = xi * xi
    out[..., 4] = xi * eta
    out[..., 5] = eta * eta
    out[..., 6] = out[..., 3] * xi
    out[..., 7] = out[..., 3] * eta
    out[..., 8] = xi * out[..., 5]
    out[..., 9] = out[..., 5] * eta
    return out


@dataclass
class ReconstructionOperators:
    """Geometry-dependent factors, rebuilt whenever the mesh moves."""

    solve: np.ndarray        # (nc, 10, 18) maps stacked rhs -> cubic coefficients
    avg_rows: np.ndarray     # (nc, 10, 10) stencil-cell averages of the basis
    row_mask: np.ndarray     # (nc, 18) valid rhs entries
    sub_ok: np.ndarray       # (nc, 3) sub-stencil availability
    sub_solve: np.ndarray    # (nc, 3, 2, 3) maps sub rhs -> two slopes
    degree_cols: np.ndarray  # (nc, 10) active basis columns
    self_quad: np.ndarray    # (nc, 6, 10) basis at the cell's own quad points
    face_eval: np.ndarray    # (nc, 3, 2, 10) basis at the cell's own face Gauss points
    face_grad: np.ndarray    # (nc, 3, 2, 2, 10) scaled basis gradients there


def _stencil_average_rows(mesh: TriMesh) -> tuple[np.ndarray, np.ndarray]:
    """Cell averages of each cell-0 basis over its stencil cells, (nc, 10, 10)."""
    nc = mesh.n_cells
    qp = mesh.cell_quad_points()  # (nc, 6, 2)
    stencil = mesh.stencil
    mask = stencil >= 0
    safe = np.where(mask, stencil, 0)
    pts = qp[safe]  # (nc, 10, 6, 2)
    xi = (pts[..., 0] - mesh.centroid[:, None, None, 0]) / mesh.dx_cell[:, None, None]
    eta = (pts[..., 1] - mesh.centroid[:, None, None, 1]) / mesh.dx_cell[:, None, None]
    vals = monomials(xi, eta)  # (nc, 10, 6, 10)
    rows = np.einsum("q,csqb->csb", TRI_QUAD_W, vals)
    rows[~mask] = 0.0
    return rows, mask


def build_operators(mesh: TriMesh) -> ReconstructionOperators:
    nc = mesh.n_cells
    avg_rows, mask = _stencil_average_rows(mesh)

    # gradient rows for stencil slots 0..3: averages of the scaled-basis
    # derivatives follow from the average rows through the derivative
    # matrices; the dX prefactor of the physical gradient rows cancels the
    # 1/dX of the scaled derivative.
    grad_rows = np.zeros((nc, 4, 2, NB))
    grad_rows[:, :, 0] = avg_rows[:, :4] @ DX_MAT
    grad_rows[:, :, 1] = avg_rows[:, :4] @ DY_MAT
    grad_rows[~mask[:, :4]] = 0.0
    qp = mesh.cell_quad_points()

    # assemble the 18-row condition matrix: 10 averages then (cell, x/y) pairs
    A = np.concatenate([avg_rows, grad_rows.reshape(nc, 8, NB)], axis=1)
    row_mask = np.concatenate(
        [mask, np.repeat(mask[:, :4], 2, axis=1)], axis=1
    )

    # polynomial degree per cell from the available condition count
    n_ls_rows = row_mask[:, 1:].sum(axis=1)
    degree_cols = np.ones((nc, NB), dtype=bool)
    reduced = n_ls_rows < 12
    degree_cols[reduced, 6:] = False
    tiny = n_ls_rows < 7
    degree_cols[tiny, 3:] = False
    A = np.where(degree_cols[:, None, :], A, 0.0)

    # constrained least squares with the cell-0 average as the constraint:
    #   [ A0      0  ] [a]   [ q0        ]
    #   [ 2 N     A0'] [b] = [ 2 A1' q1  ],   N = A1' A1 over rows 1..17
    a0 = A[:, 0, :]
    a1 = A[:, 1:, :]
    n_mat = 2.0 * np.matmul(np.transpose(a1, (0, 2, 1)), a1)
    k_mat = np.zeros((nc, NB + 1, NB + 1))
    k_mat[:, 0, :NB] = a0
    k_mat[:, 1:, :NB] = n_mat
    k_mat[:, 1:, NB] = a0
    # inactive basis columns: decouple with unit diagonal so the batched solve
    # stays nonsingular and returns zero for those coefficients
    inactive = ~degree_cols
    idx = np.nonzero(inactive)
    for c, k in zip(*idx):
        k_mat[c, 1 + k, :] = 0.0
        k_mat[c, 1 + k, k] = 1.0
        k_mat[c, 0, k] = 0.0

    t_mat = np.zeros((nc, NB + 1, 18))
    t_mat[:, 0, 0] = 1.0
    t_mat[:, 1:, 1:] = 2.0 * np.transpose(a1, (0, 2, 1))
    t_mat[:, 1:, 1:] = np.where(degree_cols[:, :, None], t_mat[:, 1:, 1:], 0.0)

    try:
        k_inv = np.linalg.inv(k_mat)
        solve = np.matmul(k_inv, t_mat)[:, :NB, :]
        bad = ~np.all(np.isfinite(solve), axis=(1, 2))
    except np.linalg.LinAlgError:
        solve = np.zeros((nc, NB, 18))
        bad = np.ones(nc, dtype=bool)
        for c in range(nc):
            try:
                k_inv_c = np.linalg.inv(k_mat[c])
                solve[c] = (k_inv_c @ t_mat[c])[:NB, :]
                bad[c] = not np.all(np.isfinite(solve[c]))
            except np.linalg.LinAlgError:
                bad[c] = True
    if np.any(bad):
        # degenerate stencil geometry: fall back to a pure least-squares
        # pseudo-inverse of the saddle system for the affected cells
        for c in np.nonzero(bad)[0]:
            solve[c] = (np.linalg.pinv(k_mat[c]) @ t_mat[c])[:NB, :]

    # sub-stencil 2x2 normal systems for the slopes of the linear candidates:
    # rows [xi_m, eta_m], [1, 0], [0, 1] against (Q_m - Q_0, dX Q_{m,x}, dX Q_{m,y})
    sub_ok = mesh.stencil[:, 1:4] >= 0
    r0 = avg_rows[:, 1:4, 1:3]  # (nc, 3, 2): neighbor averages of xi, eta
    sub_solve = np.zeros((nc, 3, 2, 3))
    g00 = r0[..., 0] ** 2 + 1.0
    g01 = r0[..., 0] * r0[..., 1]
    g11 = r0[..., 1] ** 2 + 1.0
    det = g00 * g11 - g01 * g01
    det = np.where(det > 0, det, 1.0)
    inv00, inv01, inv11 = g11 / det, -g01 / det, g00 / det
    # rhs rows enter the normal equations through R^T
    sub_solve[..., 0, 0] = inv00 * r0[..., 0] + inv01 * r0[..., 1]
    sub_solve[..., 0, 1] = inv00
    sub_solve[..., 0, 2] = inv01
    sub_solve[..., 1, 0] = inv01 * r0[..., 0] + inv11 * r0[..., 1]
    sub_solve[..., 1, 1] = inv01
    sub_solve[..., 1, 2] = inv11
    sub_solve[~sub_ok] = 0.0

    # evaluation caches at the cell's own quadrature and face Gauss points
    xi_q = (qp[..., 0] - mesh.centroid[:, None, 0]) / mesh.dx_cell[:, None]
    eta_q = (qp[..., 1] - mesh.centroid[:, None, 1]) / mesh.dx_cell[:, None]
    self_quad = monomials(xi_q, eta_q)

    gp = mesh.face_gauss[mesh.cell_faces]  # (nc, 3, 2, 2)
    xi_f = (gp[..., 0] - mesh.centroid[:, None, None, 0]) / mesh.dx_cell[:, None, None]
    eta_f = (gp[..., 1] - mesh.centroid[:, None, None, 1]) / mesh.dx_cell[:, None, None]
    face_eval = monomials(xi_f, eta_f)
    face_grad = np.stack([face_eval @ DX_MAT, face_eval @ DY_MAT], axis=3)

    return ReconstructionOperators(
        solve=solve,
        avg_rows=avg_rows,
        row_mask=row_mask,
        sub_ok=sub_ok,
        sub_solve=sub_solve,
        degree_cols=degree_cols,
        self_quad=self_quad,
        face_eval=face_eval,
        face_grad=face_grad,
    )


def _assemble_rhs(mesh: TriMesh, q: np.ndarray, dq: np.ndarray) -> np.ndarray:
    """Stack averages and scaled gradient data per stencil, (nc, 18, ncomp)."""
    nc, ncomp = q.shape
    stencil = mesh.stencil
    mask = stencil >= 0
    safe = np.where(mask, stencil, 0)
    rhs = np.empty((nc, 18, ncomp))
    rhs[:, :10] = np.where(mask[:, :, None], q[safe], 0.0)
    grad = dq[safe[:, :4]]  # (nc, 4, 2, ncomp)
    grad = grad * mesh.dx_cell[:, None, None, None]
    grad = np.where(mask[:, :4, None, None], grad, 0.0)
    rhs[:, 10:] = grad.reshape(nc, 8, ncomp)
    return rhs


def reconstruct_cubic(
    ops: ReconstructionOperators, mesh: TriMesh, q: np.ndarray, dq: np.ndarray
) -> np.ndarray:
    """Constrained least-squares cubic coefficients, (nc, 10, ncomp)."""
    rhs = _assemble_rhs(mesh, q, dq)
    return np.matmul(ops.solve, rhs)


def reconstruct_substencils(
    ops: ReconstructionOperators, mesh: TriMesh, q: np.ndarray, dq: np.ndarray
) -> np.ndarray:
    """Slopes of the three linear candidates, (nc, 3, 2, ncomp)."""
    neigh = mesh.stencil[:, 1:4]
    safe = np.where(neigh >= 0, neigh, 0)
    d = np.empty((mesh.n_cells, 3, 3, q.shape[1]))
    d[:, :, 0] = q[safe] - q[:, None, :]
    d[:, :, 1] = dq[safe][:, :, 0] * mesh.dx_cell[:, None, None]
    d[:, :, 2] = dq[safe][:, :, 1] * mesh.dx_cell[:, None, None]
    slopes = np.einsum("cmsr,cmrn->cmsn", ops.sub_solve, d)
    slopes[~ops.sub_ok] = 0.0
    return slopes


def smoothness_indicators(ops: ReconstructionOperators, coef: np.ndarray) -> np.ndarray:
    """Scale-invariant smoothness of cubic polynomials, (nc, ncomp).

    Sum over derivative orders r of |cell|^(r-1) times the integral of the
    squared r-th partials; in the scaled basis with dX = sqrt(|cell|) the
    area factors cancel and each term is a plain cell average.
    """
    # all nine derivative coefficient sets, stacked so the evaluation at the
    # quadrature points is a single batched contraction
    nc, _, ncomp = coef.shape
    derivs = np.empty((nc, 10, 9 * ncomp))
    cdx = np.einsum("ab,cbn->can", DX_MAT, coef)
    cdy = np.einsum("ab,cbn->can", DY_MAT, coef)
    cdxx = np.einsum("ab,cbn->can", DX_MAT, cdx)
    cdxy = np.einsum("ab,cbn->can", DY_MAT, cdx)
    cdyy = np.einsum("ab,cbn->can", DY_MAT, cdy)
    for i, cc in enumerate(
        (
            cdx, cdy, cdxx, cdxy, cdyy,
            np.einsum("ab,cbn->can", DX_MAT, cdxx),
            np.einsum("ab,cbn->can", DY_MAT, cdxx),
            np.einsum("ab,cbn->can", DY_MAT, cdxy),
            np.einsum("ab,cbn->can", DY_MAT, cdyy),
        )
    ):
        derivs[:, :, i * ncomp : (i + 1) * ncomp] = cc

    vals = np.matmul(ops.self_quad, derivs)
    sums = np.einsum("q,cqn->cn", TRI_QUAD_W, vals**2)
    return sums.reshape(nc, 9, ncomp).sum(axis=1)


def weno_weights(
    is0: np.ndarray,
    is_sub: np.ndarray,
    sub_ok: np.ndarray,
    c: float = WENO_C,
    ck: float = WENO_CK,
    eps: float = WENO_EPS,
) -> tuple[np.ndarray, np.ndarray]:
    """Nonlinear weights (w0, wk) with the smooth limit reproducing the cubic.

    Z-type weighting: each candidate's linear weight is inflated by
    (tau / (IS + eps))^2 with tau the spread between the cubic's indicator and
    the mean sub-stencil indicator, then normalized.  The squared ratio keeps
    the weight deviation O(dX^2) in smooth flow, preserving the fourth-order
    smooth limit, while suppressing crossed-jump candidates harder.  Shapes:
    is0 (nc, ncomp), is_sub (nc, 3, ncomp), sub_ok (nc, 3).
    """
    navail = sub_ok.sum(axis=1).astype(float)
    denom = c + ck * navail
    d0 = (c / denom)[:, None]
    dk = (ck / denom)[:, None, None]

    sub_masked = np.where(sub_ok[..., None], is_sub, 0.0)
    mean_sub = sub_masked.sum(axis=1) / np.maximum(navail, 1.0)[:, None]
    tau = np.abs(is0 - mean_sub)

    eps = np.asarray(eps)
    if eps.ndim == 0:
        eps = np.broadcast_to(eps, is0.shape)
    w0 = d0 * (1.0 + (tau / (is0 + eps)) ** 2)
    wk = dk * (1.0 + (tau[:, None, :] / (is_sub + eps[:, None, :])) ** 2)
    wk = np.where(sub_ok[..., None], wk, 0.0)
    total = w0 + wk.sum(axis=1)
    return w0 / total, wk / total[:, None, :]


def weno_combine(
    coef3: np.ndarray,
    q0: np.ndarray,
    sub_slopes: np.ndarray,
    sub_ok: np.ndarray,
    is0: np.ndarray,
    is_sub: np.ndarray,
    c: float = WENO_C,
    ck: float = WENO_CK,
    eps=WENO_EPS,
) -> np.ndarray:
    """Nonlinear reconstruction as cubic coefficients, (nc, 10, ncomp).

    R = sum_k w_k P1_k + w0 (beta P3 - (ck/c) sum_k P1_k) with beta chosen so
    that linear weights reproduce P3 exactly for any number of available
    sub-stencils (beta = (c + sum_k ck) / c on a full stencil, i.e. (1+C)/C).
    """
    nc, _, ncomp = coef3.shape
    w0, wk = weno_weights(is0, is_sub, sub_ok, c=c, ck=ck, eps=eps)

    navail = sub_ok.sum(axis=1).astype(float)
    beta = (c + ck * navail) / c

    out = np.zeros_like(coef3)
    out += (w0 * beta[:, None])[:, None, :] * coef3
    # linear candidates share the constrained value q0 at the centroid basis
    wk_eff = wk - (w0[:, None, :] * ck / c) * sub_ok[..., None]
    sum_wk = wk_eff.sum(axis=1)
    out[:, 0, :] += sum_wk * q0
    out[:, 1, :] += np.einsum("cmn,cmn->cn", wk_eff, sub_slopes[:, :, 0, :])
    out[:, 2, :] += np.einsum("cmn,cmn->cn", wk_eff, sub_slopes[:, :, 1, :])
    return out


def reconstruct(
    ops: ReconstructionOperators,
    mesh: TriMesh,
    q: np.ndarray,
    dq: np.ndarray,
    limit: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Full nonlinear reconstruction.

    Returns the final cubic coefficients (nc, 10, ncomp) and the smoothness
    indicator of the unlimited cubic per component (nc, ncomp); the latter
    doubles as the variation measure driving adaptive mesh motion.
    """
    coef3 = reconstruct_cubic(ops, mesh, q, dq)
    is0 = smoothness_indicators(ops, coef3)
    if not limit:
        return coef3, is0
    slopes = reconstruct_substencils(ops, mesh, q, dq)
    is_sub = slopes[:, :, 0, :] ** 2 + slopes[:, :, 1, :] ** 2
    # indicator floor: a slope of WENO_EPS_SCALE cell-sizes of the local field
    # scale marks the resolved-smooth threshold.  One floor per cell, shared
    # by all components: fields that are mirror images (h and B at rest) must
    # get identical weights so their reconstructions stay mirror images.
    scale = np.abs(q).max(axis=1, keepdims=True) + mesh.dx_cell[:, None]
    eps = WENO_EPS + (WENO_EPS_SCALE * mesh.dx_cell[:, None] * scale) ** 2
    eps = np.broadcast_to(eps, is0.shape)
    coef = weno_combine(coef3, q, slopes, ops.sub_ok, is0, is_sub, eps=eps)
    return coef, is0


def evaluate_poly(
    mesh: TriMesh, coef: np.ndarray, cells: np.ndarray, points: np.ndarray
) -> np.ndarray:
    """Evaluate per-cell polynomials at arbitrary points, (npts, ncomp)."""
    xi = (points[:, 0] - mesh.centroid[cells, 0]) / mesh.dx_cell[cells]
    eta = (points[:, 1] - mesh.centroid[cells, 1]) / mesh.dx_cell[cells]
    basis = monomials(xi, eta)
    return np.einsum("pb,pbn->pn", basis, coef[cells])


def evaluate_poly_gradient(
    mesh: TriMesh, coef: np.ndarray, cells: np.ndarray, points: np.ndarray
) -> np.ndarray:
    """Physical-space gradients at arbitrary points, (npts, 2, ncomp)."""
    xi = (points[:, 0] - mesh.centroid[cells, 0]) / mesh.dx_cell[cells]
    eta = (points[:, 1] - mesh.centroid[cells, 1]) / mesh.dx_cell[cells]
    basis = monomials(xi, eta)
    gx = np.einsum("pb,pbn->pn", basis @ DX_MAT, coef[cells])
    gy = np.einsum("pb,pbn->pn", basis @ DY_MAT, coef[cells])
    return np.stack([gx, gy], axis=1) / mesh.dx_cell[cells, None, None]
