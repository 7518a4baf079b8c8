"""Command-line driver: ``swale run <config> [--key value ...]``."""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from swale import outputs
from swale.ale import PositivityError, Simulation, SolverError
from swale.cases import CaseError, get_case
from swale.config import ConfigError, RunConfig, load_config, serialize_config
from swale.geometry import MeshError
from swale.motion import MotionSpec


def build_simulation(cfg: RunConfig) -> Simulation:
    case = get_case(cfg.case)
    motion = None
    if cfg.motion is not None or cfg.amplitude is not None:
        base = case.motion
        motion = MotionSpec(
            mode=cfg.motion if cfg.motion is not None else base.mode,
            amplitude=cfg.amplitude if cfg.amplitude is not None else base.amplitude,
            kx=base.kx,
            ky=base.ky,
        )
    else:
        motion = case.motion
    motion.n_motion = cfg.n_motion
    motion.n_smooth = cfg.n_smooth
    motion.limiter = cfg.adaptive_limiter
    motion.limiter_fraction = cfg.limiter_fraction
    return Simulation(
        case,
        dx=cfg.dx,
        cfl=cfg.cfl,
        gravity=cfg.gravity,
        t_end=cfg.t_end,
        motion=motion,
        positivity=cfg.positivity,
    )


def run_config(cfg: RunConfig, quiet: bool = False) -> int:
    sim = build_simulation(cfg)
    case = sim.case
    os.makedirs(cfg.output_dir, exist_ok=True)
    with open(os.path.join(cfg.output_dir, "config.txt"), "w") as fh:
        fh.write(serialize_config(cfg))

    history = outputs.ErrorHistory() if case.reference else None
    formats = cfg.format_list()
    next_snap = cfg.snapshot_dt if cfg.snapshot_dt > 0 else np.inf
    t_start = time.time()

    def on_step(s: Simulation, stats):
        nonlocal next_snap
        if history is not None and stats.n_step % cfg.history_every == 0:
            l1, linf = s.reference_errors()
            history.append(s.t, l1, linf)
        if s.t >= next_snap - 1e-12:
            outputs.write_snapshot(
                cfg.output_dir, f"snapshot_t{s.t:.6f}", s.mesh, s.w, s.b, formats
            )
            next_snap += cfg.snapshot_dt
        if not quiet and stats.n_step % 50 == 0:
            print(
                f"  step {stats.n_step} t={s.t:.4f} dt={stats.dt:.3e}", flush=True
            )

    try:
        sim.run(max_steps=cfg.max_steps or None, on_step=on_step)
    except (SolverError, PositivityError, MeshError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    outputs.write_snapshot(cfg.output_dir, "final", sim.mesh, sim.w, sim.b, formats)
    if history is not None:
        history.write(os.path.join(cfg.output_dir, "error_history.csv"))
    if case.centerline_y is not None:
        line = sim.sample_line(case.centerline_y, n=200)
        outputs.write_centerline_csv(
            os.path.join(cfg.output_dir, "centerline.csv"), line
        )
    if not quiet:
        print(
            f"done: {sim.n_steps} steps to t={sim.t:.6g} "
            f"in {time.time() - t_start:.1f}s -> {cfg.output_dir}"
        )
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="swale",
        description="Moving-mesh shallow water solver (ALE gas-kinetic scheme).",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="run a configuration file")
    runp.add_argument("config", help="path to a key=value config file")
    runp.add_argument("--quiet", action="store_true")
    args, extra = parser.parse_known_args(argv)

    overrides: dict[str, str] = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            parser.error(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, _, val = key.partition("=")
        else:
            i += 1
            if i >= len(extra):
                parser.error(f"missing value for --{key}")
            val = extra[i]
        overrides[key] = val
        i += 1

    try:
        cfg = load_config(args.config, overrides)
    except (ConfigError, CaseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return run_config(cfg, quiet=args.quiet)
    except CaseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
