"""Command-line entry points.

Exit codes: 0 success, 1 usage, 2 I/O, 3 workspace/kinematics,
4 scenario failure event (drop/buckle/failed primitive), 5 fit failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import mechanics
from .config import SimConfig, default_config, load_config
from .control import PathFollowController, PathSpec, run_controller
from .errors import (
    ConfigError,
    DegenerateDataError,
    OutOfWorkspaceError,
    ScenarioError,
    TapegripError,
)
from .geometry import Vec2
from .scenario import Scenario, run_scenario
from .sim import make_world
from .workspace import compute_workspace, export_heatmap

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_WORKSPACE = 3
EXIT_SCENARIO = 4
EXIT_FIT = 5


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _load_cfg(path: str | None) -> SimConfig:
    if path is None:
        return default_config()
    return load_config(path)


# ---------------------------------------------------------------------------
# workspace
# ---------------------------------------------------------------------------

def cmd_workspace(args) -> int:
    if args.resolution <= 0:
        raise UsageError("--resolution must be > 0")
    cfg = _load_cfg(args.config)
    wmap = compute_workspace(cfg, args.resolution)
    try:
        export_heatmap(wmap, args.out)
    except OSError as exc:
        print(f"error: cannot write {args.out}: {exc}", file=sys.stderr)
        return EXIT_IO
    fg = wmap.f_grip
    have = ~np.isnan(fg)
    print(f"grid {wmap.nx} x {wmap.ny} cells at {args.resolution} mm")
    print(f"grip region area: {wmap.grip_area():.6g} mm^2")
    if have.any():
        print(f"F_grip range: {np.nanmin(fg):.6g} .. {np.nanmax(fg):.6g} N")
    else:
        print("F_grip range: empty grip region")
    print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# trace
# ---------------------------------------------------------------------------

def _shape_waypoints(shape: str, center: Vec2, size: float) -> list[Vec2]:
    half = 0.5 * size
    if shape == "square":
        pts = [(-half, -half), (half, -half), (half, half), (-half, half)]
    elif shape == "triangle":
        pts = [(math.cos(a) * half, math.sin(a) * half)
               for a in (math.pi / 2, math.pi / 2 + 2 * math.pi / 3,
                         math.pi / 2 + 4 * math.pi / 3)]
    elif shape == "circle":
        pts = [(math.cos(2 * math.pi * k / 72) * half,
                math.sin(2 * math.pi * k / 72) * half) for k in range(72)]
    elif shape == "star":
        pts = []
        for k in range(10):
            rad = half if k % 2 == 0 else 0.45 * half
            a = math.pi / 2 + k * math.pi / 5
            pts.append((math.cos(a) * rad, math.sin(a) * rad))
    else:
        raise UsageError(f"unknown shape {shape!r}")
    pts.append(pts[0])  # close the loop
    return [Vec2(center.x + x, center.y + y) for x, y in pts]


def cmd_trace(args) -> int:
    cfg = _load_cfg(args.config)
    if args.size <= 0 or args.loops < 1 or args.speed <= 0:
        raise UsageError("--size and --speed must be > 0 and --loops >= 1")
    try:
        cx, cy = (float(v) for v in args.center.split(","))
    except ValueError:
        raise UsageError("--center must be 'x,y' in mm") from None
    waypoints = _shape_waypoints(args.shape, Vec2(cx, cy), args.size)
    path = PathSpec(waypoints=tuple(waypoints), speed=args.speed, loops=args.loops)

    from .kinematics import inverse_kinematics
    from .sim import world_to_local
    g = cfg.geometry
    a = g.width_to_a(0.5 * (g.width_min + g.width_max))
    try:
        start = inverse_kinematics(g, world_to_local(cfg, waypoints[0], args.side),
                                   a, side=args.side)
        for wp in waypoints:
            inverse_kinematics(g, world_to_local(cfg, wp, args.side), a, side=args.side)
    except OutOfWorkspaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_WORKSPACE
    world = make_world(cfg, left=start if args.side == "left" else None,
                       right=start if args.side == "right" else None,
                       width=g.a_to_width(a))
    controller = PathFollowController(cfg, args.side, path)
    try:
        run_controller(cfg, world, controller)
    except OutOfWorkspaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_WORKSPACE
    if controller.failure:
        print(f"error: {controller.failure}", file=sys.stderr)
        return EXIT_WORKSPACE
    try:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tick", "loop", "target_x_mm", "target_y_mm",
                             "actual_x_mm", "actual_y_mm", "error_mm"])
            for row in controller.trace:
                writer.writerow([
                    row["tick"], row["loop"],
                    format(row["target"][0], ".9g"), format(row["target"][1], ".9g"),
                    format(row["actual"][0], ".9g"), format(row["actual"][1], ".9g"),
                    format(row["error"], ".6g"),
                ])
    except OSError as exc:
        print(f"error: cannot write {args.out}: {exc}", file=sys.stderr)
        return EXIT_IO
    errs = [row["error"] for row in controller.trace]
    print(f"{args.shape}: {args.loops} loop(s), {len(errs)} samples, "
          f"max tracking error {max(errs):.6g} mm")
    print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def cmd_run(args) -> int:
    try:
        scn = Scenario.load(args.scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    record = args.record or scn.record
    try:
        result = run_scenario(scn, record_path=record)
    except OutOfWorkspaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_WORKSPACE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    drops = sum(1 for e in result.events if e.type == "object_dropped")
    buckles = sum(1 for e in result.events if e.type == "buckling")
    print(f"ran {scn.ticks} ticks, {len(result.events)} events "
          f"({drops} drops, {buckles} buckling)")
    if record:
        print(f"recorded {len(result.snapshots)} snapshots to {record}")
    for name in result.failed_primitives:
        print(f"primitive failed: {name}")
    return EXIT_SCENARIO if result.had_failure_event else EXIT_OK


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def _read_csv_pairs(path: str, col_a: str, col_b: str) -> list[tuple[float, float]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or col_a not in reader.fieldnames \
                or col_b not in reader.fieldnames:
            raise UsageError(f"{path}: expected columns {col_a},{col_b}, "
                             f"got {reader.fieldnames}")
        return [(float(r[col_a]), float(r[col_b])) for r in reader]


def cmd_fit(args) -> int:
    try:
        if args.model == "buckling":
            samples = _read_csv_pairs(args.infile, "L_mm", "F_N")
            fit = mechanics.fit_buckling(samples, form=args.form)
            fragment = {"mechanics": {
                "buckling_M_b": fit.coefficients[0],
                "buckling_L_offset": fit.coefficients[1] if fit.form == "moment_offset" else 0.0,
            }}
            report = {"form": fit.form, "coefficients": list(fit.coefficients),
                      "rms_residual_N": fit.rms_residual}
        elif args.model == "spring":
            samples = _read_csv_pairs(args.infile, "delta_mm", "F_N")
            fit = mechanics.fit_spring(samples, degree=args.degree)
            fragment = {"mechanics": {
                "spring_loading": list(fit.spring.loading),
                "spring_delta_max": fit.spring.delta_max,
            }}
            report = {"rms_residual_N": fit.rms_residual, "monotone": fit.monotone}
            if not fit.monotone:
                print("warning: fitted polynomial is not monotone on [0, delta_max]",
                      file=sys.stderr)
        else:
            samples = _read_csv_pairs(args.infile, "angle_rad", "tau_Nmm")
            spline = mechanics.fit_torque_spline(samples)
            fragment = {"mechanics": {
                "torque_angles": list(spline.angles),
                "torque_values": list(spline.torques),
            }}
            report = {"knots": len(spline.angles)}
    except DegenerateDataError as exc:
        print(f"fit failed: {exc}", file=sys.stderr)
        return EXIT_FIT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        Path(args.out).write_text(json.dumps(fragment, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        print(f"error: cannot write {args.out}: {exc}", file=sys.stderr)
        return EXIT_IO
    print(json.dumps(report, sort_keys=True))
    print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# serve
# ---------------------------------------------------------------------------

def cmd_serve(args) -> int:
    if args.tick_hz <= 0:
        raise UsageError("--tick-hz must be > 0")
    cfg = _load_cfg(args.config)
    from .teleop import PROTOCOL_VERSION, serve
    print(f"tapegrip teleop protocol {PROTOCOL_VERSION} on port {args.port} "
          f"at {args.tick_hz} Hz", flush=True)
    try:
        serve(cfg, port=args.port, tick_hz=args.tick_hz,
              record=args.record, ui_dir=args.ui_dir, host=args.host)
    except OSError as exc:
        print(f"error: cannot bind port {args.port}: {exc}", file=sys.stderr)
        return EXIT_IO
    except SystemExit:
        # uvicorn turns startup failures (port in use) into SystemExit
        print(f"error: cannot bind port {args.port}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tapegrip",
                     description="Planar tape-spring manipulator simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("workspace", help="export the reach/grip-force heatmap")
    p.add_argument("--config")
    p.add_argument("--resolution", type=float, default=5.0, help="cell size (mm)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_workspace)

    p = sub.add_parser("trace", help="trace a closed tip path and log tracking")
    p.add_argument("--config")
    p.add_argument("--shape", choices=["square", "triangle", "circle", "star"],
                   default="square")
    p.add_argument("--size", type=float, default=100.0, help="shape extent (mm)")
    p.add_argument("--loops", type=int, default=3)
    p.add_argument("--speed", type=float, default=50.0, help="tip speed (mm/s)")
    p.add_argument("--center", default="80,430", help="shape center 'x,y' (mm)")
    p.add_argument("--side", choices=["left", "right"], default="right")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("run", help="execute a scenario file")
    p.add_argument("scenario")
    p.add_argument("--record", help="snapshot log path (overrides scenario)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("fit", help="fit a mechanics model from CSV data")
    p.add_argument("model", choices=["buckling", "spring", "torque"])
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--form", choices=["moment_offset", "moment_plus_constant"],
                   default="moment_offset")
    p.add_argument("--degree", type=int, default=3)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("serve", help="run the teleoperation service")
    p.add_argument("--config")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8733)
    p.add_argument("--tick-hz", type=float, default=100.0)
    p.add_argument("--record", help="record the session as a scenario + snapshots")
    p.add_argument("--ui-dir", help="static directory with the browser client")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OutOfWorkspaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_WORKSPACE
    except TapegripError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO


if __name__ == "__main__":
    sys.exit(main())
