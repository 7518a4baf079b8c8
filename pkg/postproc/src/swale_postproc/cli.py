"""Command line: ``swale-plot <kind> <input> -o <image> [options]``."""

from __future__ import annotations

import argparse
import sys

from swale_postproc.plots import (
    PlotError,
    plot_centerline,
    plot_error_history,
    plot_field,
)

KINDS = ("history", "centerline", "contour", "surface", "mesh")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="swale-plot",
        description="Plot swale solver CSV outputs (pure reader).",
    )
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("input", help="CSV file (or mesh file for kind=mesh)")
    parser.add_argument("-o", "--output", required=True, help="image file to write")
    parser.add_argument("--overlay", help="reference centerline CSV")
    parser.add_argument("--zoom", nargs=4, type=float, metavar=("X0", "X1", "Y0", "Y1"))
    parser.add_argument("--field", default="h", help="snapshot column (default h)")
    parser.add_argument("--mesh", help="mesh file for kind=mesh")
    parser.add_argument("--mesh-before", help="earlier mesh file to underlay")
    parser.add_argument("--title")
    args = parser.parse_args(argv)

    try:
        if args.kind == "history":
            plot_error_history(args.input, args.output, title=args.title)
        elif args.kind == "centerline":
            plot_centerline(
                args.input, args.output, overlay=args.overlay, zoom=args.zoom,
                title=args.title,
            )
        elif args.kind == "mesh":
            plot_field(
                args.input, args.output, kind="mesh",
                mesh=args.mesh or args.input, mesh_before=args.mesh_before,
                title=args.title,
            )
        else:
            plot_field(
                args.input, args.output, kind=args.kind, field=args.field,
                title=args.title,
            )
    except PlotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(args.output)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
