"""Unstructured triangular meshes: connectivity, geometry, and moving-face
kinematics with exact swept-area measures.

Face normals follow the right-hand rule: walking a face from node A to node B,
the unit normal points from the left cell towards the right cell.  All swept
quantities assume nodes move in straight lines at constant velocity within a
step, so a face sweeps a (possibly twisted) quadrilateral whose signed area has
the closed form implemented in :func:`swept_area`.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "MeshError",
    "TriMesh",
    "build_uniform_tri_mesh",
    "face_normal_at_time",
    "swept_area",
    "read_mesh_ascii",
    "write_mesh_ascii",
    "FACE_GAUSS_S",
    "FACE_GAUSS_W",
    "TRI_QUAD_BARY",
    "TRI_QUAD_W",
]

_SQRT3 = float(np.sqrt(3.0))

# Two-point Gauss rule on a segment: barycentric positions of the points along
# A->B and their weights.  Exact for cubics in the arc-length parameter.
FACE_GAUSS_S = np.array([0.5 * (1.0 - 1.0 / _SQRT3), 0.5 * (1.0 + 1.0 / _SQRT3)])
FACE_GAUSS_W = np.array([0.5, 0.5])

# Symmetric six-point triangle rule (Dunavant degree 4): exact for quartics,
# comfortably covering the cubic basis integrals used by the reconstruction.
_A1, _B1, _W1 = 0.816847572980459, 0.091576213509771, 0.109951743655322
_A2, _B2, _W2 = 0.108103018168070, 0.445948490915965, 0.223381589678011
TRI_QUAD_BARY = np.array(
    [
        [_A1, _B1, _B1],
        [_B1, _A1, _B1],
        [_B1, _B1, _A1],
        [_A2, _B2, _B2],
        [_B2, _A2, _B2],
        [_B2, _B2, _A2],
    ]
)
TRI_QUAD_W = np.array([_W1, _W1, _W1, _W2, _W2, _W2])

INTERIOR = 0  # face tag reserved for interior faces


class MeshError(RuntimeError):
    """Degenerate or tangled mesh geometry."""


def _signed_areas(nodes: np.ndarray, tris: np.ndarray) -> np.ndarray:
    p0 = nodes[tris[:, 0]]
    e1 = nodes[tris[:, 1]] - p0
    e2 = nodes[tris[:, 2]] - p0
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _lists_to_csr(lists):
    counts = np.array([len(v) for v in lists], dtype=np.int64)
    offsets = np.zeros(len(lists) + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    flat = np.fromiter(
        (x for v in lists for x in v), dtype=np.int64, count=int(offsets[-1])
    )
    return offsets, flat


class TriMesh:
    """Conforming triangulation with face-based connectivity.

    Topology (faces, neighbors, stencils, node adjacency) is built once and is
    immutable; geometry (areas, centroids, normals, Gauss points) is refreshed
    whenever nodes move.  Node velocities are stored per node and are constant
    within a time step.
    """

    def __init__(self, nodes, tris, tagger=None):
        self.nodes = np.ascontiguousarray(nodes, dtype=np.float64)
        self.tris = np.ascontiguousarray(tris, dtype=np.int64)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise MeshError("nodes must be (n, 2)")
        if self.tris.ndim != 2 or self.tris.shape[1] != 3:
            raise MeshError("tris must be (n, 3)")
        if not np.all(np.isfinite(self.nodes)):
            raise MeshError("non-finite node coordinates")
        areas = _signed_areas(self.nodes, self.tris)
        if np.any(areas <= 0.0):
            bad = int(np.argmin(areas))
            raise MeshError(
                f"triangle {bad} is not counterclockwise (signed area {areas[bad]:.3e})"
            )
        self.n_nodes = self.nodes.shape[0]
        self.n_cells = self.tris.shape[0]
        self.node_x0 = self.nodes.copy()
        self.node_vel = np.zeros_like(self.nodes)
        self._build_topology(tagger)
        self.refresh_geometry()

    # ------------------------------------------------------------------
    # topology (static)
    # ------------------------------------------------------------------

    def _build_topology(self, tagger) -> None:
        nc = self.n_cells
        edge_map: dict[tuple[int, int], int] = {}
        face_nodes: list[tuple[int, int]] = []
        face_left: list[int] = []
        face_right: list[int] = []
        cell_faces = np.empty((nc, 3), dtype=np.int64)
        cell_sign = np.empty((nc, 3), dtype=np.float64)

        local = ((0, 1), (1, 2), (2, 0))
        for c in range(nc):
            tri = self.tris[c]
            for e, (i, j) in enumerate(local):
                a, b = int(tri[i]), int(tri[j])
                key = (a, b) if a < b else (b, a)
                fid = edge_map.get(key)
                if fid is None:
                    fid = len(face_nodes)
                    edge_map[key] = fid
                    face_nodes.append((a, b))
                    face_left.append(c)
                    face_right.append(-1)
                    cell_sign[c, e] = 1.0
                else:
                    if face_right[fid] != -1:
                        raise MeshError(f"face {fid} shared by more than two cells")
                    face_right[fid] = c
                    cell_sign[c, e] = -1.0
                cell_faces[c, e] = fid

        self.face_nodes = np.array(face_nodes, dtype=np.int64)
        self.face_left = np.array(face_left, dtype=np.int64)
        self.face_right = np.array(face_right, dtype=np.int64)
        self.cell_faces = cell_faces
        self.cell_face_sign = cell_sign
        self.n_faces = self.face_nodes.shape[0]

        # edge neighbors aligned with the local face slots
        neigh = np.empty((nc, 3), dtype=np.int64)
        for c in range(nc):
            for e in range(3):
                f = cell_faces[c, e]
                other = self.face_right[f] if self.face_left[f] == c else self.face_left[f]
                neigh[c, e] = other
        self.edge_neighbors = neigh

        self._build_stencils()

        # node -> incident cells and node -> adjacent nodes (CSR)
        cell_lists: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for c in range(nc):
            for n in self.tris[c]:
                cell_lists[int(n)].append(c)
        self.node_cell_offsets, self.node_cell_flat = _lists_to_csr(cell_lists)

        node_lists: list[set[int]] = [set() for _ in range(self.n_nodes)]
        for a, b in self.face_nodes:
            node_lists[int(a)].add(int(b))
            node_lists[int(b)].add(int(a))
        self.node_node_offsets, self.node_node_flat = _lists_to_csr(
            [sorted(s) for s in node_lists]
        )

        boundary = self.face_right < 0
        self.boundary_nodes = np.zeros(self.n_nodes, dtype=bool)
        self.boundary_nodes[self.face_nodes[boundary].ravel()] = True

        self._apply_tags(tagger)

    def _build_stencils(self) -> None:
        """Compact stencil per cell: self, edge neighbors, then the other edge
        neighbors of each edge neighbor.  Missing or duplicate entries are -1."""
        nc = self.n_cells
        stencil = np.full((nc, 10), -1, dtype=np.int64)
        for c in range(nc):
            seen = {c}
            stencil[c, 0] = c
            for e in range(3):
                n1 = self.edge_neighbors[c, e]
                if n1 >= 0 and n1 not in seen:
                    stencil[c, 1 + e] = n1
                    seen.add(int(n1))
            for e in range(3):
                n1 = stencil[c, 1 + e]
                if n1 < 0:
                    continue
                k = 0
                for e2 in range(3):
                    n2 = self.edge_neighbors[n1, e2]
                    if n2 < 0 or n2 in seen:
                        continue
                    if k < 2:
                        stencil[c, 4 + 2 * e + k] = n2
                        seen.add(int(n2))
                        k += 1
        self.stencil = stencil
        self.stencil_size = np.sum(stencil >= 0, axis=1)

    def _apply_tags(self, tagger) -> None:
        if tagger is None:
            tagger = rectangle_tagger(self.nodes)
        tags = np.zeros(self.n_faces, dtype=np.int64)
        boundary = np.nonzero(self.face_right < 0)[0]
        names = ["interior"]
        name_ids: dict[str, int] = {}
        mids = 0.5 * (
            self.nodes[self.face_nodes[boundary, 0]]
            + self.nodes[self.face_nodes[boundary, 1]]
        )
        for f, mid in zip(boundary, mids):
            name = tagger(mid)
            tid = name_ids.get(name)
            if tid is None:
                tid = len(names)
                names.append(name)
                name_ids[name] = tid
            tags[f] = tid
        self.face_tag = tags
        self.tag_names = names

    # ------------------------------------------------------------------
    # geometry (refreshed after motion)
    # ------------------------------------------------------------------

    def refresh_geometry(self) -> None:
        areas = _signed_areas(self.nodes, self.tris)
        if np.any(areas <= 0.0):
            bad = int(np.argmin(areas))
            raise MeshError(f"triangle {bad} inverted (area {areas[bad]:.3e})")
        self.area = areas
        self.centroid = self.nodes[self.tris].mean(axis=1)
        self.dx_cell = np.sqrt(areas)

        p = self.nodes[self.tris]
        e0 = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
        e1 = np.linalg.norm(p[:, 2] - p[:, 1], axis=1)
        e2 = np.linalg.norm(p[:, 0] - p[:, 2], axis=1)
        self.inradius = 2.0 * areas / (e0 + e1 + e2)

        a = self.nodes[self.face_nodes[:, 0]]
        b = self.nodes[self.face_nodes[:, 1]]
        e = b - a
        self.face_len = np.linalg.norm(e, axis=1)
        if np.any(self.face_len <= 0.0):
            raise MeshError("zero-length face")
        # rotate A->B by -90 degrees: points to the right of the direction
        self.face_normal = np.stack([e[:, 1], -e[:, 0]], axis=1) / self.face_len[:, None]
        self.face_gauss = a[:, None, :] + FACE_GAUSS_S[None, :, None] * e[:, None, :]

    def move_nodes(self, displacement: np.ndarray) -> None:
        """Displace nodes, rejecting any motion that inverts a triangle."""
        new_nodes = self.nodes + displacement
        areas = _signed_areas(new_nodes, self.tris)
        if np.any(areas <= 0.0):
            bad = int(np.argmin(areas))
            raise MeshError(
                f"node motion inverts triangle {bad} (area {areas[bad]:.3e})"
            )
        self.nodes = new_nodes
        self.refresh_geometry()

    # ------------------------------------------------------------------
    # helpers
    # ------------------------------------------------------------------

    def face_velocities(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodal velocities (V1, V2) of each face's A and B nodes."""
        return (
            self.node_vel[self.face_nodes[:, 0]],
            self.node_vel[self.face_nodes[:, 1]],
        )

    def gauss_velocities(self) -> np.ndarray:
        """Mesh velocity linearly interpolated to the face Gauss points, (nf, 2, 2)."""
        v1, v2 = self.face_velocities()
        s = FACE_GAUSS_S[None, :, None]
        return (1.0 - s) * v1[:, None, :] + s * v2[:, None, :]

    def cell_quad_points(self) -> np.ndarray:
        """Six quadrature points per cell, (nc, 6, 2)."""
        return np.einsum("qk,ckx->cqx", TRI_QUAD_BARY, self.nodes[self.tris])

    def bounding_box(self) -> tuple[float, float, float, float]:
        return (
            float(self.nodes[:, 0].min()),
            float(self.nodes[:, 0].max()),
            float(self.nodes[:, 1].min()),
            float(self.nodes[:, 1].max()),
        )


def rectangle_tagger(nodes: np.ndarray, tol_rel: float = 1e-9):
    """Tag boundary faces of an axis-aligned rectangular hull by side name.

    Faces on the hull get left/right/bottom/top; anything else (e.g. faces
    exposed by carving an obstruction out of the grid) is tagged "obstacle".
    """
    x0, x1 = float(nodes[:, 0].min()), float(nodes[:, 0].max())
    y0, y1 = float(nodes[:, 1].min()), float(nodes[:, 1].max())
    tol = tol_rel * max(x1 - x0, y1 - y0, 1.0)

    def tag(mid: np.ndarray) -> str:
        x, y = mid
        if abs(x - x0) < tol:
            return "left"
        if abs(x - x1) < tol:
            return "right"
        if abs(y - y0) < tol:
            return "bottom"
        if abs(y - y1) < tol:
            return "top"
        return "obstacle"

    return tag


def build_uniform_tri_mesh(bounds, dx: float, holes=()) -> TriMesh:
    """Uniform triangulation of a rectangle: structured quads, each split along
    the lower-left to upper-right diagonal.

    ``holes`` is a sequence of axis-aligned rectangles (x0, x1, y0, y1); cells
    whose centroid falls inside any of them are removed and the exposed faces
    are tagged "obstacle".
    """
    x0, x1, y0, y1 = (float(v) for v in bounds)
    if not (x1 > x0 and y1 > y0):
        raise MeshError(f"degenerate domain {bounds}")
    if not (dx > 0.0):
        raise MeshError(f"cell size must be positive, got {dx}")
    nx = max(1, round((x1 - x0) / dx))
    ny = max(1, round((y1 - y0) / dx))

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.column_stack([xx.ravel(), yy.ravel()])
    nid = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)

    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    n00 = nid[i, j].ravel()
    n10 = nid[i + 1, j].ravel()
    n01 = nid[i, j + 1].ravel()
    n11 = nid[i + 1, j + 1].ravel()
    lower = np.stack([n00, n10, n11], axis=1)
    upper = np.stack([n00, n11, n01], axis=1)
    tris = np.concatenate([lower, upper], axis=0)

    if holes:
        cent = nodes[tris].mean(axis=1)
        keep = np.ones(tris.shape[0], dtype=bool)
        for hx0, hx1, hy0, hy1 in holes:
            inside = (
                (cent[:, 0] > hx0)
                & (cent[:, 0] < hx1)
                & (cent[:, 1] > hy0)
                & (cent[:, 1] < hy1)
            )
            keep &= ~inside
        tris = tris[keep]
        used = np.zeros(nodes.shape[0], dtype=bool)
        used[tris.ravel()] = True
        remap = -np.ones(nodes.shape[0], dtype=np.int64)
        remap[used] = np.arange(int(used.sum()))
        nodes = nodes[used]
        tris = remap[tris]

    return TriMesh(nodes, tris)


def face_normal_at_time(a, b, v1, v2, t: float) -> np.ndarray:
    """Unit normal of a face at time t, nodes moving linearly from (a, b)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    e = (b + np.asarray(v2) * t) - (a + np.asarray(v1) * t)
    length = np.linalg.norm(e)
    if length <= 0.0:
        raise MeshError("face collapsed to zero length")
    return np.array([e[1], -e[0]]) / length


def swept_area(a, b, v1, v2, dt):
    """Signed area swept by a face over dt.

    Positive when the face sweeps outward along its normal.  Equals the signed
    area of the quadrilateral A, A', B', B exactly (straight-line node motion):
    0.5 (U1 + U2) |G| dt + (V1 x V2).k dt^2 / 2, U the normal velocity component.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    v1 = np.asarray(v1, dtype=np.float64)
    v2 = np.asarray(v2, dtype=np.float64)
    e = b - a
    length = np.linalg.norm(e, axis=-1)
    nx = e[..., 1] / length
    ny = -e[..., 0] / length
    u1 = v1[..., 0] * nx + v1[..., 1] * ny
    u2 = v2[..., 0] * nx + v2[..., 1] * ny
    cross = v1[..., 0] * v2[..., 1] - v1[..., 1] * v2[..., 0]
    return 0.5 * (u1 + u2) * length * dt + 0.5 * cross * dt * dt


def write_mesh_ascii(mesh: TriMesh, path) -> None:
    """Plain-text mesh: node list (id x y) then triangle list (id n1 n2 n3)."""
    with open(path, "w") as fh:
        fh.write(f"NODES {mesh.n_nodes}\n")
        for i, (x, y) in enumerate(mesh.nodes):
            fh.write(f"{i} {x:.17g} {y:.17g}\n")
        fh.write(f"TRIS {mesh.n_cells}\n")
        for i, (a, b, c) in enumerate(mesh.tris):
            fh.write(f"{i} {a} {b} {c}\n")


def read_mesh_ascii(path, tagger=None) -> TriMesh:
    with open(path) as fh:
        tokens = fh.read().split()
    pos = 0

    def expect(word: str) -> int:
        nonlocal pos
        if tokens[pos] != word:
            raise MeshError(f"malformed mesh file: expected {word!r} at token {pos}")
        count = int(tokens[pos + 1])
        pos += 2
        return count

    nn = expect("NODES")
    nodes = np.empty((nn, 2))
    for _ in range(nn):
        i = int(tokens[pos])
        nodes[i, 0] = float(tokens[pos + 1])
        nodes[i, 1] = float(tokens[pos + 2])
        pos += 3
    nc = expect("TRIS")
    tris = np.empty((nc, 3), dtype=np.int64)
    for _ in range(nc):
        i = int(tokens[pos])
        tris[i] = [int(tokens[pos + 1]), int(tokens[pos + 2]), int(tokens[pos + 3])]
        pos += 4
    return TriMesh(nodes, tris, tagger=tagger)
