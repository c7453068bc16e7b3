"""Reachable-region maps and the maximum-grip-force heatmap.

Each appendage reaches an angle-restricted annulus; the grip region is the
intersection of the two mirrored annuli.  The admissible grip force at a
point is capped by the buckling strength of the supporting outer section,
F = M_b / (L1 - L_offset), evaluated at the minimum-total-length grasp
configuration reaching that point (the outer section length is set by the
tip position alone, so the cap is shared by every grasp width).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import SimConfig
from .errors import OutOfWorkspaceError
from .geometry import Vec2
from .kinematics import AppendageState, forward_kinematics, inverse_kinematics
from .mechanics import buckling_force
from .sim import SIDES, world_to_local

BOUNDARY_CODES = {
    "interior": 0,
    "angular_left": 1,
    "angular_right": 2,
    "radial_inner": 3,
    "radial_outer": 4,
    "unreachable": 5,
}
BOUNDARY_NAMES = {v: k for k, v in BOUNDARY_CODES.items()}

CSV_HEADER = ["x_mm", "y_mm", "reach_left", "reach_right", "reach_both", "F_grip_N"]


@dataclass(frozen=True)
class WorkspaceMap:
    origin: Vec2           # center of cell (0, 0)
    resolution: float      # mm per cell
    nx: int
    ny: int
    reach_left: np.ndarray     # bool (ny, nx)
    reach_right: np.ndarray
    f_grip: np.ndarray         # float (ny, nx), NaN outside the grip region
    boundary: np.ndarray       # uint8 codes (ny, nx)

    def cell_center(self, ix: int, iy: int) -> Vec2:
        return Vec2(self.origin.x + ix * self.resolution,
                    self.origin.y + iy * self.resolution)

    @property
    def reach_both(self) -> np.ndarray:
        return self.reach_left & self.reach_right

    def grip_area(self) -> float:
        return float(np.count_nonzero(self.reach_both)) * self.resolution ** 2


def _mirror_boundary(name: str) -> str:
    if name == "angular_left":
        return "angular_right"
    if name == "angular_right":
        return "angular_left"
    return name


def classify_point(cfg: SimConfig, point: Vec2, side: str,
                   a: float | None = None) -> tuple[AppendageState | None, str]:
    """IK reachability of one world point for one appendage.

    Returns (state, "interior") or (None, boundary name).  Boundary names
    follow the world orientation: the right appendage's angular labels are
    mirrored from its local frame.
    """
    g = cfg.geometry
    if a is None:
        a = 0.5 * (g.a_min + g.a_max)
    try:
        state = inverse_kinematics(g, world_to_local(cfg, point, side), a, side=side)
        return state, "interior"
    except OutOfWorkspaceError as exc:
        name = exc.boundary
        if side == "right":
            name = _mirror_boundary(name)
        return None, name


def min_length_grasp(cfg: SimConfig, point: Vec2, side: str) -> AppendageState:
    """Grasp configuration at a point minimizing total tape length over the
    rack travel (golden-section over a; deterministic fixed iteration)."""
    g = cfg.geometry
    local = world_to_local(cfg, point, side)

    def length_at(a: float) -> float:
        try:
            return inverse_kinematics(g, local, a, side=side).L
        except OutOfWorkspaceError:
            return math.inf

    lo, hi = g.a_min, g.a_max
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - phi * (hi - lo)
    x2 = lo + phi * (hi - lo)
    f1, f2 = length_at(x1), length_at(x2)
    for _ in range(80):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - phi * (hi - lo)
            f1 = length_at(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + phi * (hi - lo)
            f2 = length_at(x2)
    best_a = x1 if f1 <= f2 else x2
    return inverse_kinematics(g, local, best_a, side=side)


def grip_force_at(cfg: SimConfig, point: Vec2) -> float:
    """Admissible grip force at a both-reachable world point: the weaker
    side's buckling cap at its supporting outer-section length."""
    model = cfg.mechanics.buckling()
    force = math.inf
    for side in SIDES:
        state = min_length_grasp(cfg, point, side)
        force = min(force, buckling_force(model, state.L1))
    return force


def _grid_axes(cfg: SimConfig, resolution: float):
    """Symmetric grid covering both annuli (x mirrored about 0, y >= 0)."""
    g = cfg.geometry
    reach = 0.0
    for k in range(33):
        t4 = g.theta4_min + (g.theta4_max - g.theta4_min) * k / 32
        st = forward_kinematics(g, g.L_max, t4, 0.5 * (g.a_min + g.a_max),
                                max_iter=cfg.max_iter)
        reach = max(reach, st.tip.norm())
    half_span = 0.5 * g.outer_extruder_spacing + reach + resolution
    nhalf = int(math.ceil(half_span / resolution))
    nx = 2 * nhalf
    xs = (np.arange(nx) - (nhalf - 0.5)) * resolution
    ny = int(math.ceil((reach + resolution) / resolution))
    ys = (np.arange(ny) + 0.5) * resolution
    return xs, ys


def compute_workspace(cfg: SimConfig, resolution: float,
                      a: float | None = None) -> WorkspaceMap:
    """Classify a symmetric grid of cells and fill the grip-force heatmap.

    Reachability is tested at the rack mid-range by default; passing ``a``
    evaluates one member of the per-width workspace family instead.  Cells
    are independent; evaluation order is fixed (row-major) so output is
    deterministic regardless of any parallel scheduling a caller adds.
    """
    if not resolution > 0.0:
        raise ValueError("resolution must be positive")
    xs, ys = _grid_axes(cfg, resolution)
    nx, ny = len(xs), len(ys)
    reach_left = np.zeros((ny, nx), dtype=bool)
    reach_right = np.zeros((ny, nx), dtype=bool)
    f_grip = np.full((ny, nx), np.nan)
    boundary = np.full((ny, nx), BOUNDARY_CODES["unreachable"], dtype=np.uint8)
    model = cfg.mechanics.buckling()
    for iy, y in enumerate(ys):
        for ix, x in enumerate(xs):
            p = Vec2(float(x), float(y))
            st_l, why_l = classify_point(cfg, p, "left", a=a)
            st_r, why_r = classify_point(cfg, p, "right", a=a)
            reach_left[iy, ix] = st_l is not None
            reach_right[iy, ix] = st_r is not None
            if st_l is not None and st_r is not None:
                boundary[iy, ix] = BOUNDARY_CODES["interior"]
                f_grip[iy, ix] = min(buckling_force(model, st_l.L1),
                                     buckling_force(model, st_r.L1))
            else:
                # Mirror-stable combination of the failing sides' reasons:
                # radial bounds dominate; purely angular misses classify by
                # which side of the center line the cell lies on.
                reasons = [w for st, w in ((st_l, why_l), (st_r, why_r))
                           if st is None]
                if "radial_outer" in reasons:
                    name = "radial_outer"
                elif "radial_inner" in reasons:
                    name = "radial_inner"
                else:
                    name = "angular_left" if x < 0 else "angular_right"
                boundary[iy, ix] = BOUNDARY_CODES[name]
    return WorkspaceMap(origin=Vec2(float(xs[0]), float(ys[0])),
                        resolution=resolution, nx=nx, ny=ny,
                        reach_left=reach_left, reach_right=reach_right,
                        f_grip=f_grip, boundary=boundary)


def _fmt(value: float) -> str:
    return format(value, ".6g")


def export_heatmap(wmap: WorkspaceMap, path: str | Path) -> None:
    """Write the per-cell map as CSV (row-major, y then x ascending).

    F_grip_N is blank outside the grip region; numbers carry 6 significant
    digits, which round-trips bit-exactly through re-import and re-export.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for iy in range(wmap.ny):
            for ix in range(wmap.nx):
                c = wmap.cell_center(ix, iy)
                fg = wmap.f_grip[iy, ix]
                writer.writerow([
                    _fmt(c.x), _fmt(c.y),
                    int(wmap.reach_left[iy, ix]), int(wmap.reach_right[iy, ix]),
                    int(wmap.reach_left[iy, ix] and wmap.reach_right[iy, ix]),
                    "" if math.isnan(fg) else _fmt(fg),
                ])


def load_heatmap(path: str | Path) -> list[dict]:
    """Parse an exported heatmap back into row dicts (floats/ints/None)."""
    rows = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"unexpected heatmap header: {reader.fieldnames}")
        for rec in reader:
            rows.append({
                "x_mm": float(rec["x_mm"]),
                "y_mm": float(rec["y_mm"]),
                "reach_left": bool(int(rec["reach_left"])),
                "reach_right": bool(int(rec["reach_right"])),
                "reach_both": bool(int(rec["reach_both"])),
                "F_grip_N": None if rec["F_grip_N"] == "" else float(rec["F_grip_N"]),
            })
    return rows
