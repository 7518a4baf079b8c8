"""Batch plotting for swale solver outputs.

Pure readers of the documented CSV formats: error histories, centerline
profiles, and per-cell snapshots (plus the plain-text mesh files written next
to snapshots).  No coupling to solver internals.
"""

from swale_postproc.plots import (
    PlotError,
    plot_centerline,
    plot_error_history,
    plot_field,
)

__version__ = "0.1.0"

__all__ = ["PlotError", "plot_centerline", "plot_error_history", "plot_field"]
