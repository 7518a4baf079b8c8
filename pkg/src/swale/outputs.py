"""On-disk artifacts: snapshot CSV / legacy VTK, error histories, centerlines.

Formats (stable, consumed by the plotting package):
  snapshot CSV   header ``x,y,h,hu,hv,B,h_plus_B`` then one row per cell
  error history  ``time,err_h_L1,err_h_Linf,err_hu_L1,err_hu_Linf,err_hv_L1,err_hv_Linf``
  centerline     ``x,h,B,h_plus_B,hu``
Values are written with 17 significant digits so a round trip is bit-faithful.
"""

from __future__ import annotations

import os

import numpy as np

from swale.geometry import TriMesh, write_mesh_ascii

__all__ = [
    "write_snapshot_csv",
    "read_snapshot_csv",
    "write_snapshot_vtk",
    "ErrorHistory",
    "write_centerline_csv",
]

_FMT = "%.17g"


def write_snapshot_csv(path, mesh: TriMesh, w: np.ndarray, b: np.ndarray) -> None:
    data = np.column_stack(
        [mesh.centroid[:, 0], mesh.centroid[:, 1], w[:, 0], w[:, 1], w[:, 2], b, w[:, 0] + b]
    )
    with open(path, "w") as fh:
        fh.write("x,y,h,hu,hv,B,h_plus_B\n")
        np.savetxt(fh, data, delimiter=",", fmt=_FMT)


def read_snapshot_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return header, data


def write_snapshot_vtk(path, mesh: TriMesh, w: np.ndarray, b: np.ndarray) -> None:
    """Legacy ASCII VTK unstructured grid with per-cell scalars and velocity."""
    h = w[:, 0]
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("shallow water snapshot\n")
        fh.write("ASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_nodes} double\n")
        for x, y in mesh.nodes:
            fh.write(f"{x:.17g} {y:.17g} 0\n")
        fh.write(f"CELLS {mesh.n_cells} {4 * mesh.n_cells}\n")
        for a, b2, c in mesh.tris:
            fh.write(f"3 {a} {b2} {c}\n")
        fh.write(f"CELL_TYPES {mesh.n_cells}\n")
        fh.write("5\n" * mesh.n_cells)
        fh.write(f"CELL_DATA {mesh.n_cells}\n")
        for name, vals in (("h", h), ("B", b), ("h_plus_B", h + b)):
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            np.savetxt(fh, vals, fmt=_FMT)
        fh.write("VECTORS velocity double\n")
        uv = np.column_stack([w[:, 1] / h, w[:, 2] / h, np.zeros_like(h)])
        np.savetxt(fh, uv, fmt=_FMT)


class ErrorHistory:
    """Accumulates per-step error records and writes the history CSV."""

    COLUMNS = (
        "time,err_h_L1,err_h_Linf,err_hu_L1,err_hu_Linf,err_hv_L1,err_hv_Linf"
    )

    def __init__(self):
        self.rows: list[tuple] = []

    def append(self, t: float, l1: np.ndarray, linf: np.ndarray) -> None:
        self.rows.append(
            (t, l1[0], linf[0], l1[1], linf[1], l1[2], linf[2])
        )

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.COLUMNS + "\n")
            for row in self.rows:
                fh.write(",".join(_FMT % v for v in row) + "\n")


def write_centerline_csv(path, line: dict) -> None:
    with open(path, "w") as fh:
        fh.write("x,h,B,h_plus_B,hu\n")
        data = np.column_stack(
            [line["x"], line["h"], line["B"], line["h_plus_B"], line["hu"]]
        )
        np.savetxt(fh, data, delimiter=",", fmt=_FMT)


def snapshot_paths(output_dir, stem: str, fmt: str):
    return os.path.join(output_dir, f"{stem}.{'csv' if fmt == 'csv' else 'vtk'}")


def write_snapshot(output_dir, stem, mesh, w, b, formats) -> list[str]:
    """Snapshot in the requested formats plus the mesh file for this time."""
    os.makedirs(output_dir, exist_ok=True)
    written = []
    for fmt in formats:
        path = snapshot_paths(output_dir, stem, fmt)
        if fmt == "csv":
            write_snapshot_csv(path, mesh, w, b)
        else:
            write_snapshot_vtk(path, mesh, w, b)
        written.append(path)
    mesh_path = os.path.join(output_dir, f"{stem}_mesh.txt")
    write_mesh_ascii(mesh, mesh_path)
    written.append(mesh_path)
    return written
