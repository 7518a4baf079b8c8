"""Figure builders for the solver's CSV artifacts.

Input formats (matching the solver's writers):
  error history  time,err_h_L1,err_h_Linf,err_hu_L1,err_hu_Linf,err_hv_L1,err_hv_Linf
  centerline     x,h,B,h_plus_B,hu
  snapshot       x,y,h,hu,hv,B,h_plus_B   (one row per cell, x/y the centroid)
  mesh           NODES n / id x y ... TRIS m / id n1 n2 n3
"""

from __future__ import annotations

import numpy as np

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


class PlotError(ValueError):
    """Missing or malformed plot input."""


def _read_csv(path, expected_prefix):
    try:
        with open(path) as fh:
            header = fh.readline().strip()
            if not header:
                raise PlotError(f"{path}: empty file")
            columns = header.split(",")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
    except OSError as exc:
        raise PlotError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise PlotError(f"{path}: malformed numeric data ({exc})") from exc
    for name in expected_prefix:
        if name not in columns:
            raise PlotError(f"{path}: missing column {name!r} in {columns}")
    if data.size == 0:
        raise PlotError(f"{path}: no data rows")
    return columns, data


def read_mesh(path):
    try:
        tokens = open(path).read().split()
    except OSError as exc:
        raise PlotError(f"cannot read {path}: {exc}") from exc
    try:
        pos = 0
        assert tokens[pos] == "NODES"
        nn = int(tokens[pos + 1])
        pos += 2
        nodes = np.empty((nn, 2))
        for _ in range(nn):
            i = int(tokens[pos])
            nodes[i] = (float(tokens[pos + 1]), float(tokens[pos + 2]))
            pos += 3
        assert tokens[pos] == "TRIS"
        nc = int(tokens[pos + 1])
        pos += 2
        tris = np.empty((nc, 3), dtype=int)
        for _ in range(nc):
            i = int(tokens[pos])
            tris[i] = (int(tokens[pos + 1]), int(tokens[pos + 2]), int(tokens[pos + 3]))
            pos += 4
    except (AssertionError, IndexError, ValueError) as exc:
        raise PlotError(f"{path}: malformed mesh file") from exc
    return nodes, tris


def plot_error_history(csv_path, out_path, title=None):
    """Semilog-y error history, one labeled curve per column."""
    columns, data = _read_csv(csv_path, ["time"])
    t = data[:, 0]
    fig, ax = plt.subplots(figsize=(7, 5))
    for j, name in enumerate(columns[1:], start=1):
        ax.semilogy(t, np.maximum(np.abs(data[:, j]), 1e-300), label=name)
    ax.set_xlabel("time")
    ax.set_ylabel("error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_centerline(csv_path, out_path, overlay=None, zoom=None, title=None):
    """Surface and bottom profiles, with an optional reference overlay.

    ``overlay`` is another centerline CSV; a mismatched x-grid is interpolated
    onto this file's grid.  ``zoom`` is (x0, x1, y0, y1).
    """
    _, data = _read_csv(csv_path, ["x", "h", "B", "h_plus_B", "hu"])
    x, b, surf = data[:, 0], data[:, 2], data[:, 3]
    fig, ax = plt.subplots(figsize=(7, 5))
    ax.plot(x, surf, "-", color="tab:blue", label="h + B")
    ax.plot(x, b, "-", color="tab:brown", label="B")
    if overlay is not None:
        _, ref = _read_csv(overlay, ["x", "h_plus_B"])
        surf_ref = np.interp(x, ref[:, 0], ref[:, 3])
        ax.plot(x, surf_ref, "--", color="k", lw=1, label="reference h + B")
    ax.set_xlabel("x")
    ax.set_ylabel("elevation")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    if zoom is not None:
        ax.set_xlim(zoom[0], zoom[1])
        ax.set_ylim(zoom[2], zoom[3])
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_field(
    csv_path,
    out_path,
    kind="contour",
    field="h",
    mesh=None,
    mesh_before=None,
    title=None,
):
    """Water-height contours, a 3-D surface, or the mesh wireframe.

    The contour and surface kinds triangulate the cell centroids of the
    snapshot; the mesh kind draws the companion mesh file (``mesh``), with an
    optional earlier state (``mesh_before``) underneath in a second color.
    """
    if kind == "mesh":
        if mesh is None:
            raise PlotError("mesh plots need the mesh file (snapshot *_mesh.txt)")
        fig, ax = plt.subplots(figsize=(6.5, 6))
        if mesh_before is not None:
            nodes0, tris0 = read_mesh(mesh_before)
            ax.triplot(nodes0[:, 0], nodes0[:, 1], tris0, color="tab:blue",
                       lw=0.4, alpha=0.7, label="before")
        nodes, tris = read_mesh(mesh)
        ax.triplot(nodes[:, 0], nodes[:, 1], tris, color="tab:red", lw=0.4,
                   label="current" if mesh_before is not None else None)
        ax.set_aspect("equal")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        if mesh_before is not None:
            ax.legend(fontsize=8)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        fig.savefig(out_path, dpi=150)
        plt.close(fig)
        return out_path

    columns, data = _read_csv(csv_path, ["x", "y", "h", "B", "h_plus_B"])
    if field not in columns:
        raise PlotError(f"unknown field {field!r}; snapshot has {columns}")
    x, y = data[:, 0], data[:, 1]
    z = data[:, columns.index(field)]

    if kind == "contour":
        fig, ax = plt.subplots(figsize=(6.5, 6))
        if np.ptp(z) < 1e-13:
            # constant field: a single filled level
            ax.tripcolor(x, y, np.full_like(z, z.mean()))
        else:
            cs = ax.tricontourf(x, y, z, levels=24, cmap="viridis")
            fig.colorbar(cs, ax=ax, shrink=0.85)
        ax.set_aspect("equal")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    elif kind == "surface":
        fig = plt.figure(figsize=(7, 6))
        ax = fig.add_subplot(projection="3d")
        ax.plot_trisurf(x, y, z, cmap="viridis", linewidth=0.1)
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        ax.set_zlabel(field)
    else:
        raise PlotError(f"unknown plot kind {kind!r}")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
