"""Closed-loop behaviors over the simulator.

Controllers are step functions: each tick they receive the world and return
the next WorldCommand, or None when finished.  All state lives in explicit
context records; all emitted commands respect the geometry rate limits.

Contact detection throughout uses the published force ESTIMATES (virtual
load cell run through the estimator), not ground-truth contact flags, so
the full sensing pipeline is exercised.  Object poses, where a primitive
needs them (rotation stop angle, translation servo), are read from the
world directly -- the simulator stands in for the motion-capture / operator
feedback a physical setup would use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .config import SimConfig
from .errors import OutOfWorkspaceError, TapegripError
from .geometry import Vec2, unit
from .kinematics import ActuatorCommand, AppendageState, inverse_kinematics
from .mechanics import displacement_for_force, spring_force
from .sim import (
    SIDES,
    SimObject,
    WorldCommand,
    WorldState,
    appendage_frame,
    world_to_local,
)


# ---------------------------------------------------------------------------
# Parameter records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PathSpec:
    """Ordered waypoints (world frame) with per-segment speeds.

    ``speed`` applies to every segment; ``segment_speeds`` (one entry per
    segment) overrides it where given.
    """

    waypoints: tuple[Vec2, ...]
    speed: float              # mm/s
    loops: int = 1
    segment_speeds: tuple[float, ...] | None = None

    def __post_init__(self):
        if len(self.waypoints) < 2:
            raise ValueError("path needs at least 2 waypoints")
        if not self.speed > 0.0:
            raise ValueError("path speed must be positive")
        if self.loops < 1:
            raise ValueError("loop count must be >= 1")
        if self.segment_speeds is not None:
            if len(self.segment_speeds) != len(self.waypoints) - 1:
                raise ValueError("need one speed per segment")
            if any(not v > 0.0 for v in self.segment_speeds):
                raise ValueError("segment speeds must be positive")

    def speed_of(self, segment: int) -> float:
        if self.segment_speeds is None:
            return self.speed
        return self.segment_speeds[segment]


@dataclass(frozen=True)
class ForceServoParams:
    F_desired: float          # N
    Kp: float                 # mm/N
    deadband: float           # N
    width_rate_limit: float   # mm/s

    def __post_init__(self):
        if not self.Kp > 0.0:
            raise ValueError("Kp must be positive")
        if not self.F_desired > 0.0:
            raise ValueError("F_desired must be positive")


def default_servo(cfg: SimConfig) -> ForceServoParams:
    c = cfg.control
    return ForceServoParams(F_desired=c.servo_force, Kp=c.servo_kp,
                            deadband=c.servo_deadband,
                            width_rate_limit=c.servo_width_rate)


AUTO_GRIP_PHASES = (
    "sweep_left", "sweep_right", "open_and_parallelize", "close_width",
    "retract_until_lost", "move_to_grasp", "grasped", "failed",
)


@dataclass
class AutoGripContext:
    phase: str = "sweep_left"
    grip_axis_point: Vec2 | None = None
    grip_axis_dir: Vec2 | None = None
    w_obj: float | None = None
    obj_distance: float | None = None
    force_threshold: float = 0.25
    center_estimate: Vec2 | None = None
    failure: str | None = None
    phase_history: list = field(default_factory=list)

    def enter(self, phase: str):
        self.phase_history.append(self.phase)
        self.phase = phase


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def _state_of(world: WorldState, side: str) -> AppendageState:
    return world.left if side == "left" else world.right


def _estimate_force(world: WorldState, side: str) -> float:
    est = world.estimates.get(side)
    return 0.0 if est is None else est.F2_prime


def _object(world: WorldState, object_id: str) -> SimObject:
    for o in world.objects:
        if o.id == object_id:
            return o
    raise TapegripError(f"unknown object {object_id!r}")


def command_toward(cfg: SimConfig, world: WorldState, side: str,
                   target_world: Vec2, *, feed_split: float | None = None,
                   a_override: float | None = None
                   ) -> tuple[ActuatorCommand, bool]:
    """Rate-limited command moving one tip toward a world-frame target.

    Splits the length change so the bend material stays stationary relative
    to the rolling joint (outer feed covers the outer section's geometric
    change plus the joint's own rotation), so a grasped object sees pure
    surface translation.  ``feed_split`` overrides the inner feed directly;
    ``a_override`` supplies the base width the IK should assume when the
    rack is moving this same tick.  Returns (command, arrived).
    """
    g = cfg.geometry
    dt = cfg.tick_dt
    state = _state_of(world, side)
    a = g.width_to_a(world.width) if a_override is None else a_override
    target_local = world_to_local(cfg, target_world, side)
    ik = inverse_kinematics(g, target_local, a, side=side)

    err = (ik.tip - state.tip).norm()
    arrived = (err < 1e-9 and abs(ik.theta4 - state.theta4) < 1e-12
               and abs(ik.L - state.L) < 1e-9)
    if arrived:
        return ActuatorCommand(), True

    dL = ik.L - state.L
    # Cap tip motion per tick so the move is a straight-ish crawl even when
    # far away: scale the actuator deltas together.
    scale = 1.0
    max_dL = 2.0 * g.dL_rate_max * dt
    max_d4 = g.dtheta4_rate_max * dt
    d4 = ik.theta4 - state.theta4
    if abs(dL) > max_dL:
        scale = min(scale, max_dL / abs(dL))
    if abs(d4) > max_d4:
        scale = min(scale, max_d4 / abs(d4))
    dL *= scale
    d4 *= scale
    if feed_split is None:
        feed1 = ((ik.L1 - state.L1) + g.r0 * (ik.theta1 - state.theta1)) * scale
        feed2 = dL - feed1
    else:
        feed2 = feed_split
        feed1 = dL - feed2
    feed2 = min(max(feed2, -g.dL_rate_max * dt), g.dL_rate_max * dt)
    feed1 = min(max(feed1, -g.dL_rate_max * dt), g.dL_rate_max * dt)
    return ActuatorCommand(dL1_rate=feed1 / dt, dL2_rate=feed2 / dt,
                           dtheta4_rate=d4 / dt), False


class Controller:
    """Base step-function contract used by the scenario runner and teleop."""

    name = "controller"

    def __init__(self):
        self.done = False
        self.failure: str | None = None

    def step(self, cfg: SimConfig, world: WorldState) -> WorldCommand | None:
        raise NotImplementedError

    def result(self) -> dict:
        return {}


def run_controller(cfg: SimConfig, world: WorldState, controller: Controller,
                   max_ticks: int = 200_000, observer=None):
    """Drive a controller to completion; returns the final world."""
    from .sim import step as sim_step
    for _ in range(max_ticks):
        cmd = controller.step(cfg, world)
        if cmd is None:
            return world
        world = sim_step(cfg, world, cmd)
        if observer is not None:
            observer(world)
    raise TapegripError(f"{controller.name} exceeded {max_ticks} ticks")


# ---------------------------------------------------------------------------
# Path following
# ---------------------------------------------------------------------------

class PathFollowController(Controller):
    """Constant-speed interpolation along a waypoint path with IK tracking.

    The appendage is expected to start at the first waypoint (the CLI
    positions it there); every loop then replays an identical trace.
    """

    name = "follow_path"

    def __init__(self, cfg: SimConfig, side: str, path: PathSpec):
        super().__init__()
        self.side = side
        self.path = path
        self._segments = []
        pts = list(path.waypoints)
        for i, (p, q) in enumerate(zip(pts, pts[1:])):
            length = (q - p).norm()
            self._segments.append((p, q, length, length / path.speed_of(i)))
        self._loop_time = sum(s[3] for s in self._segments)
        self.loop = 0
        self._tick_in_loop = 0
        self.trace: list[dict] = []
        self._last: tuple[Vec2, int] | None = None
        self._validated = False

    def _point_at_time(self, t: float) -> Vec2:
        if self._loop_time == 0.0:
            return self.path.waypoints[0]
        rem = t
        for p, q, length, duration in self._segments:
            if rem <= duration or duration == 0.0:
                if duration == 0.0:
                    return p
                frac = rem / duration
                return Vec2(p.x + (q.x - p.x) * frac, p.y + (q.y - p.y) * frac)
            rem -= duration
        return self._segments[-1][1]

    def step(self, cfg: SimConfig, world: WorldState) -> WorldCommand | None:
        if not self._validated:
            a = cfg.geometry.width_to_a(world.width)
            for wp in self.path.waypoints:
                inverse_kinematics(cfg.geometry, world_to_local(cfg, wp, self.side),
                                   a, side=self.side)
            self._validated = True
        state = _state_of(world, self.side)
        frame_tip = appendage_frame(cfg, state, self.side).X
        if self._last is not None:
            target_prev, loop_prev = self._last
            self.trace.append({
                "tick": world.tick,
                "loop": loop_prev,
                "target": target_prev.as_tuple(),
                "actual": frame_tip.as_tuple(),
                "error": (frame_tip - target_prev).norm(),
            })
        if self.loop >= self.path.loops:
            self.done = True
            return None
        # Per-loop tick indexing: every loop replays the identical target
        # sequence (bit for bit), closing exactly on the final waypoint.
        self._tick_in_loop += 1
        t = self._tick_in_loop * cfg.tick_dt
        loop_idx = self.loop
        if t >= self._loop_time:
            target = self._segments[-1][1]
            self.loop += 1
            self._tick_in_loop = 0
        else:
            target = self._point_at_time(t)
        self._last = (target, loop_idx)
        try:
            cmd, _ = command_toward(cfg, world, self.side, target)
        except OutOfWorkspaceError as exc:
            self.failure = f"out_of_workspace:{exc.boundary}"
            self.done = True
            return None
        if self.side == "left":
            return WorldCommand(left=cmd)
        return WorldCommand(right=cmd)

    def result(self) -> dict:
        return {"trace_len": len(self.trace), "loops": self.loop}


class GotoController(Controller):
    """Move one tip to a world target at a given speed (stop-at-goal jog)."""

    name = "goto"

    def __init__(self, side: str, target: Vec2, speed: float = 120.0):
        super().__init__()
        self.side = side
        self.target = target
        self.speed = speed

    def step(self, cfg: SimConfig, world: WorldState) -> WorldCommand | None:
        state = _state_of(world, self.side)
        tip = appendage_frame(cfg, state, self.side).X
        err = self.target - tip
        dist = err.norm()
        if dist < 1e-7:
            self.done = True
            return None
        step_len = min(self.speed * cfg.tick_dt, dist)
        waypoint = tip + (step_len / dist) * err
        try:
            cmd, arrived = command_toward(cfg, world, self.side, waypoint)
        except OutOfWorkspaceError as exc:
            self.failure = f"out_of_workspace:{exc.boundary}"
            self.done = True
            return None
        if arrived and dist < 1e-6:
            self.done = True
            return None
        return WorldCommand(left=cmd) if self.side == "left" else WorldCommand(right=cmd)


# ---------------------------------------------------------------------------
# Grasping primitives
# ---------------------------------------------------------------------------

def _grip_targets(cfg: SimConfig, obj: SimObject, pen: float, axis: Vec2
                  ) -> tuple[Vec2, Vec2]:
    """Tip centers placing the two rolling joints around an object so each
    arc penetrates the object surface by ``pen`` (negative = clearance).
    The joints sit level with the object center along the grip axis, giving
    antiparallel contact rays (the geometry the rolling relations assume)."""
    r = cfg.geometry.r0
    out = []
    for sgn in (-1.0, 1.0):
        h0, _ = _support_toward(obj, sgn * axis)
        out.append(obj.position + sgn * (h0 + r - pen) * axis)
    return out[0], out[1]


def _support_toward(obj: SimObject, direction: Vec2):
    from .sim import support
    return support(obj.shape, obj.orientation, direction)


class GraspController(Controller):
    """Approach an object from both sides along a grip axis and hold it."""

    name = "grasp"

    def __init__(self, cfg: SimConfig, object_id: str, force: float | None = None,
                 axis_angle: float = 0.0, approach_clearance: float = 6.0):
        super().__init__()
        self.object_id = object_id
        self.force = force if force is not None else cfg.control.servo_force
        self.axis = unit(axis_angle)
        self.clearance = approach_clearance
        self.stage = "standoff"
        self._grasp_issued = False

    def step(self, cfg: SimConfig, world: WorldState) -> WorldCommand | None:
        obj = _object(world, self.object_id)
        spring = cfg.mechanics.spring()
        pen = displacement_for_force(spring, self.force)
        if self.stage == "standoff":
            pen = -self.clearance
        tleft, tright = _grip_targets(cfg, obj, pen, self.axis)
        try:
            cl, al = command_toward(cfg, world, "left", tleft)
            cr, ar = command_toward(cfg, world, "right", tright)
        except OutOfWorkspaceError as exc:
            self.failure = f"out_of_workspace:{exc.boundary}"
            self.done = True
            return None
        if self.stage == "standoff":
            if al and ar:
                self.stage = "close"
            return WorldCommand(left=cl, right=cr)
        if obj.held:
            self.done = True
            return None
        if al and ar:
            if self._grasp_issued:
                self.failure = "grasp_failed"
                self.done = True
                return None
            self._grasp_issued = True
            return WorldCommand(left=cl, right=cr, grasp=self.object_id)
        return WorldCommand(left=cl, right=cr)


class ReleaseController(Controller):
    """Let go of a held object and back both tips away."""

    name = "release"

    def __init__(self, object_id: str, retreat: float = 10.0):
        super().__init__()
        self.object_id = object_id
        self.retreat = retreat
        self.stage = "release"
        self._targets = None

    def step(self, cfg: SimConfig, world: WorldState) -> WorldCommand | None:
        obj = _object(world, self.object_id)
        if self.stage == "release":
            self.stage = "retreat"
            return WorldCommand(release=self.object_id)
        if self._targets is None:
            fl = appendage_frame(cfg, world.left, "left")
            fr = appendage_frame(cfg, world.right, "right")
            axis = (fr.X - fl.X)
            axis = axis.normalized() if axis.norm() > 1e-9 else Vec2(1.0, 0.0)
            self._targets = (fl.X - self.retreat * axis, fr.X + self.retreat * axis)
        try:
            cl, al = command_toward(cfg, world, "left", self._targets[0])
            cr, ar = command_toward(cfg, world, "right", self._targets[1])
        except OutOfWorkspaceError:
            self.done = True
            return None
        if al and ar:
            self.done = True
            return None
        return WorldCommand(left=cl, right=cr)


class TranslateController(Controller):
    """Carry a held object to a target point holding the grasp geometry fixed.

    Both tips translate together by the object's remaining position error
    (rate limited), so the commanded gap, and with it the grip interference,
    never changes; servoing on the object rather than on precomputed tip
    offsets absorbs any crawl of the contact points along the surfaces.
    """

    name = "translate"

    def __init__(self, cfg: SimConfig, object_id: str, target: Vec2,
                 speed: float | None = None):
        super().__init__()
        self.object_id = object_id
        self.target = target
        self.speed = speed if speed is not None else cfg.control.translate_speed
        self._span: tuple[Vec2, float] | None = None

    def step(self, cfg: SimConfig, world: WorldState) -> WorldCommand | None:
        obj = _object(world, self.object_id)
        if not obj.held:
            self.failure = "object_dropped"
            self.done = True
            return None
        fl = appendage_frame(cfg, world.left, "left")
        fr = appendage_frame(cfg, world.right, "right")
        err = self.target - obj.position
        if self._span is None:
            # Freeze the grasp geometry: tips stay symmetric about the
            # object center along the original grip axis, so the commanded
            # gap (and with it the interference) never changes.
            span = fr.X - fl.X
            self._span = (span.normalized(), 0.5 * span.norm())
            a = cfg.geometry.width_to_a(world.width)
            for side, tip in (("left", fl.X), ("right", fr.X)):
                inverse_kinematics(cfg.geometry,
                                   world_to_local(cfg, tip + err, side),
                                   a, side=side)
        dist = err.norm()
        if dist < 1e-6:
            self.done = True
            return None
        step_len = min(self.speed * cfg.tick_dt, dist)
        step_vec = (step_len / dist) * err
        center_next = obj.position + step_vec
        axis, half = self._span
        # Displacing the tips by the object's error guarantees progress
        # (anchoring them to the object alone goes no-op below the one-tick
        # drift); the symmetry trim re-centers the tip pair on the object so
        # the grasp geometry cannot wander.  Capping the trim below the step
        # keeps the two terms from ever cancelling into a fixed point.
        targets = {}
        for side, frame, sgn in (("left", fl, -1.0), ("right", fr, 1.0)):
            base = frame.X + step_vec
            desired = center_next + sgn * half * axis
            trim_vec = 0.2 * (desired - base)
            cap = 0.8 * step_len
            if trim_vec.norm() > cap:
                trim_vec = (cap / trim_vec.norm()) * trim_vec
            targets[side] = base + trim_vec
        try:
            cl, _ = command_toward(cfg, world, "left", targets["left"])
            cr, _ = command_toward(cfg, world, "right", targets["right"])
        except OutOfWorkspaceError as exc:
            self.failure = f"out_of_workspace:{exc.boundary}"
            self.done = True
            return None
        return WorldCommand(left=cl, right=cr)


class ConveyController(Controller):
    """Equal same-sign conveyance on both appendages: surfaces stream toward
    the base (positive displacement) carrying held objects with them."""

    name = "convey"

    def __init__(self, cfg: SimConfig, displacement: float, speed: float | None = None):
        super().__init__()
        self.remaining = displacement
        self.speed = speed if speed is not None else cfg.control.convey_speed

    def step(self, cfg: SimConfig, world: WorldState) -> WorldCommand | None:
        if abs(self.remaining) < 1e-12:
            self.done = True
            return None
        step_len = min(self.speed * cfg.tick_dt, abs(self.remaining))
        sgn = 1.0 if self.remaining > 0 else -1.0
        self.remaining -= sgn * step_len
        v = sgn * step_len / cfg.tick_dt
        # positive displacement = baseward surface flow = inner extruder retracts
        cmd = ActuatorCommand(dL1_rate=v, dL2_rate=-v)
        return WorldCommand(left=cmd, right=cmd)


class RotateController(Controller):
    """Rotate a held object in place by counter-running the two surfaces.

    Open-loop mode commands exactly |angle| * lever of opposing surface
    displacement per side (the rolling relation), keeping each appendage's
    total length constant by counter-spooling at the base.  With a force
    servo the tip gap is additionally adjusted every tick by
    dw = -Kp * (F_desired - F_measured) (outside the deadband) so non-round
    objects keep a constant grip force; rotation then runs closed-loop on
    the object's orientation.
    """

    name = "rotate"

    def __init__(self, cfg: SimConfig, object_id: str, angle: float,
                 servo: ForceServoParams | None = None,
                 surface_speed: float | None = None):
        super().__init__()
        self.object_id = object_id
        self.angle = angle
        self.servo = servo
        if surface_speed is not None:
            self.speed = surface_speed
        else:
            self.speed = (cfg.control.rotate_speed_servo if servo
                          else cfg.control.rotate_speed)
        self._remaining_surface: float | None = None
        self._target_orientation: float | None = None
        self._gap: float | None = None
        self._anchor: Vec2 | None = None
        self.commanded_surface = {"left": 0.0, "right": 0.0}

    def _contact_pair(self, world: WorldState):
        pair = {}
        for c in world.contacts:
            if c.object_id == self.object_id:
                pair[c.side] = c
        return pair if len(pair) == 2 else None

    def step(self, cfg: SimConfig, world: WorldState) -> WorldCommand | None:
        if self.angle == 0.0:
            self.done = True
            return None
        obj = _object(world, self.object_id)
        if not obj.held:
            self.failure = "object_dropped"
            self.done = True
            return None
        pair = self._contact_pair(world)
        if pair is None:
            self.failure = "object_dropped"
            self.done = True
            return None

        if self._target_orientation is None:
            self._target_orientation = obj.orientation + self.angle
            lever = 0.5 * (pair["left"].lever + pair["right"].lever)
            self._remaining_surface = abs(self.angle) * lever

        if self.servo is None:
            remaining = self._remaining_surface
            if remaining <= 1e-12:
                self.done = True
                return None
            s_tick = min(self.speed * cfg.tick_dt, remaining)
            self._remaining_surface = remaining - s_tick
        else:
            err_rot = self._target_orientation - obj.orientation
            if abs(err_rot) < 1e-9:
                self.done = True
                return None
            lever = 0.5 * (pair["left"].lever + pair["right"].lever)
            s_tick = min(self.speed * cfg.tick_dt, abs(err_rot) * lever)

        # Positive (CCW) rotation: left surface streams baseward, right tipward.
        sgn = 1.0 if self.angle > 0 else -1.0
        v = s_tick / cfg.tick_dt
        flow = {"left": -sgn * v, "right": sgn * v}
        self.commanded_surface["left"] += flow["left"] * cfg.tick_dt
        self.commanded_surface["right"] += flow["right"] * cfg.tick_dt

        if self.servo is None:
            cmds = {side: ActuatorCommand(dL1_rate=-flow[side], dL2_rate=flow[side])
                    for side in SIDES}
            return WorldCommand(left=cmds["left"], right=cmds["right"])

        # Servo branch: retarget the tips around the current object center
        # with a force-corrected gap, superposing the conveyance flow.
        fl = appendage_frame(cfg, world.left, "left")
        fr = appendage_frame(cfg, world.right, "right")
        axis = fr.X - fl.X
        axis = axis.normalized()
        if self._gap is None:
            self._gap = (fr.X - fl.X).norm() - 2.0 * cfg.geometry.r0
        f_meas = 0.5 * (_estimate_force(world, "left") + _estimate_force(world, "right"))
        err_f = self.servo.F_desired - f_meas
        if abs(err_f) > self.servo.deadband:
            dw = -self.servo.Kp * err_f
            limit = self.servo.width_rate_limit * cfg.tick_dt
            dw = min(max(dw, -limit), limit)
            self._gap += dw
        r = cfg.geometry.r0
        half_span = 0.5 * self._gap + r
        if self._anchor is None:
            # Hold station at the grasp point: chasing the object's wobble
            # would close a positive feedback loop through the no-slip
            # contacts and run away.
            self._anchor = obj.position
        tleft = self._anchor - half_span * axis
        tright = self._anchor + half_span * axis
        cmds = {}
        try:
            for side, target in (("left", tleft), ("right", tright)):
                state = _state_of(world, side)
                ik = inverse_kinematics(cfg.geometry,
                                        world_to_local(cfg, target, side),
                                        cfg.geometry.width_to_a(world.width),
                                        side=side)
                dt = cfg.tick_dt
                # Outer feed covers the joint's geometric motion minus the
                # commanded surface stream through the bend.
                feed1 = ((ik.L1 - state.L1)
                         + cfg.geometry.r0 * (ik.theta1 - state.theta1)
                         - flow[side] * dt)
                feed2 = (ik.L - state.L) - feed1
                lim = cfg.geometry.dL_rate_max * dt
                feed1 = min(max(feed1, -lim), lim)
                feed2 = min(max(feed2, -lim), lim)
                cmds[side] = ActuatorCommand(
                    dL1_rate=feed1 / dt, dL2_rate=feed2 / dt,
                    dtheta4_rate=(ik.theta4 - state.theta4) / dt)
        except OutOfWorkspaceError as exc:
            self.failure = f"out_of_workspace:{exc.boundary}"
            self.done = True
            return None
        return WorldCommand(left=cmds["left"], right=cmds["right"])

    def result(self) -> dict:
        return {"commanded_surface": dict(self.commanded_surface)}


# ---------------------------------------------------------------------------
# Automatic gripping
# ---------------------------------------------------------------------------

class AutoGripController(Controller):
    """Locate, measure, and grasp a single unknown object using only the
    force-sensing pipeline.

    Phase sequence: sweep the left appendage inward until the force estimate
    crosses the contact threshold, then the right; reconfigure both inner
    sections parallel to the measured grip axis and open; close the width
    until both sides read contact (giving the object width); retract the
    left appendage along its own line until contact is lost (giving the
    object position along the axis); finally move both tips to the measured
    center and form the grasp.

    Because the virtual load cell is exact, threshold crossings are
    converted back to penetrations through the spring model and the
    measured width/center are bias-corrected; residual error comes from the
    per-tick sweep/close/retract quantization.
    """

    name = "auto_grip"

    def __init__(self, cfg: SimConfig, overrides: dict | None = None):
        super().__init__()
        ov = dict(overrides or {})
        c = cfg.control
        self.threshold = float(ov.pop("threshold", cfg.contact_threshold))
        self.sweep_step = float(ov.pop("sweep_step", c.sweep_step))
        self.retract_step = float(ov.pop("retract_step", c.retract_step))
        self.open_factor = float(ov.pop("open_factor", c.open_factor))
        self.lost_ticks = int(ov.pop("lost_contact_ticks", c.lost_contact_ticks))
        self.grasp_force = float(ov.pop("grasp_force", c.servo_force))
        self.close_speed = float(ov.pop("close_speed", 30.0))
        self.sweep_radius = ov.pop("sweep_radius", None)
        self.sweep_start_margin = float(ov.pop("sweep_start_margin", 0.04))
        self.section_margin = float(ov.pop("section_margin", 120.0))
        if ov:
            raise TapegripError(f"unknown auto_grip parameters: {sorted(ov)}")
        self.ctx = AutoGripContext(force_threshold=self.threshold)
        self.stage = "position"
        self._records: dict[str, dict] = {}
        self._crossings: dict[str, dict] = {}
        self._below_count = 0
        self._retract_L2: float | None = None
        self._prev_force = 0.0
        self._grasp_issued = False
        self._lat_dir: Vec2 | None = None
        self._axis_dir: Vec2 | None = None
        self._target_width: float | None = None
        self._L2_target: dict[str, float] = {}

    # -- helpers ----------------------------------------------------------

    def _sweep_geometry(self, cfg: SimConfig, world: WorldState):
        g = cfg.geometry
        from .kinematics import forward_kinematics, theta4_to_theta1
        if self.sweep_radius is None:
            ref = forward_kinematics(
                g, g.L_max, 0.5 * (g.theta4_min + g.theta4_max),
                g.width_to_a(g.width_max), max_iter=cfg.max_iter)
            self.sweep_radius = cfg.control.sweep_radius_frac * ref.tip.norm()
        theta1_hi = theta4_to_theta1(g, g.theta4_max) - self.sweep_start_margin
        return float(self.sweep_radius), theta1_hi

    def _fail(self, reason: str) -> None:
        self.ctx.failure = reason
        self.ctx.enter("failed")
        self.failure = reason
        self.done = True

    def _line_of(self, cfg, world, side):
        frame = appendage_frame(cfg, _state_of(world, side), side)
        return frame

    def _parallel_targets(self, cfg: SimConfig, width: float):
        """Per-side tip targets keeping both inner sections parallel to the
        measured axis at the given rack width."""
        g = cfg.geometry
        d_hat = self._axis_dir
        a = g.width_to_a(width)
        half = 0.5 * g.outer_extruder_spacing
        out = {}
        for side in SIDES:
            if side == "left":
                e2 = Vec2(-half + a, -g.b)
                outward = d_hat.perp_ccw()
            else:
                e2 = Vec2(half - a, -g.b)
                outward = d_hat.perp_cw()
            L2 = self._L2_target[side]
            out[side] = e2 + L2 * d_hat + g.r0 * outward
        return out

    # -- main step ---------------------------------------------------------

    def step(self, cfg: SimConfig, world: WorldState) -> WorldCommand | None:
        phase = self.ctx.phase
        if phase in ("grasped", "failed"):
            self.done = True
            return None
        handler = getattr(self, "_phase_" + phase)
        return handler(cfg, world)

    def result(self) -> dict:
        ctx = self.ctx
        return {
            "phase": ctx.phase,
            "failure": ctx.failure,
            "w_obj": ctx.w_obj,
            "obj_distance": ctx.obj_distance,
            "center_estimate": None if ctx.center_estimate is None
            else ctx.center_estimate.as_tuple(),
            "grip_axis_point": None if ctx.grip_axis_point is None
            else ctx.grip_axis_point.as_tuple(),
            "grip_axis_dir": None if ctx.grip_axis_dir is None
            else ctx.grip_axis_dir.as_tuple(),
        }

    # -- phases ------------------------------------------------------------

    def _sweep_phase(self, cfg: SimConfig, world: WorldState, side: str,
                     next_phase: str) -> WorldCommand | None:
        g = cfg.geometry
        dt = cfg.tick_dt
        radius, theta1_hi = self._sweep_geometry(cfg, world)
        if self.stage == "position":
            tip_dir = unit(theta1_hi)
            target_local = radius * tip_dir
            half = 0.5 * g.outer_extruder_spacing
            target_world = (Vec2(target_local.x - half, target_local.y) if side == "left"
                            else Vec2(half - target_local.x, target_local.y))
            width_err = g.width_max - world.width
            width_rate = min(max(width_err / dt, -g.dwidth_rate_max), g.dwidth_rate_max)
            try:
                cmd, arrived = command_toward(
                    cfg, world, side, target_world,
                    a_override=g.width_to_a(min(world.width + width_rate * dt,
                                                g.width_max)))
            except OutOfWorkspaceError as exc:
                self._fail(f"sweep_position_unreachable:{exc.boundary}")
                return None
            if arrived and abs(width_err) < 1e-9:
                self.stage = "sweep"
                return WorldCommand()
            kwargs = {"left": cmd} if side == "left" else {"right": cmd}
            return WorldCommand(width_rate=width_rate, **kwargs)
        # sweeping
        force = _estimate_force(world, side)
        state = _state_of(world, side)
        if force >= self.threshold:
            frame = self._line_of(cfg, world, side)
            est = world.estimates[side]
            spring = cfg.mechanics.spring()
            pen = displacement_for_force(spring, min(force, spring_force(
                spring, spring.delta_max)))
            contact_point = frame.E2 + est.L2_prime * frame.u2
            self._records[side] = {
                "E2": frame.E2, "u2": frame.u2, "m_in": frame.m_in,
                "point": contact_point, "pen": pen,
            }
            self.stage = "position" if next_phase == "sweep_right" else "analyze"
            if next_phase == "sweep_right":
                self.ctx.enter("sweep_right")
            else:
                self._enter_parallelize(cfg, world)
            return WorldCommand()
        if state.theta4 <= g.theta4_min + 1e-9:
            # Sweep exhausted without contact.
            if next_phase == "sweep_right":
                self.stage = "position"
                self.ctx.enter("sweep_right")
                return WorldCommand()
            self._fail("no_object_found")
            return None
        cmd = ActuatorCommand(dtheta4_rate=-self.sweep_step / dt)
        kwargs = {"left": cmd} if side == "left" else {"right": cmd}
        return WorldCommand(**kwargs)

    def _phase_sweep_left(self, cfg, world):
        return self._sweep_phase(cfg, world, "left", "sweep_right")

    def _phase_sweep_right(self, cfg, world):
        return self._sweep_phase(cfg, world, "right", "open_and_parallelize")

    def _enter_parallelize(self, cfg: SimConfig, world: WorldState) -> None:
        if "left" not in self._records or "right" not in self._records:
            self._fail("no_object_found")
            return
        rec_l, rec_r = self._records["left"], self._records["right"]
        d_hat = (rec_l["u2"] + rec_r["u2"])
        if d_hat.norm() < 1e-9:
            self._fail("degenerate_axis")
            return
        d_hat = d_hat.normalized()
        if d_hat.y < 0:
            d_hat = -1.0 * d_hat
        anchor = 0.5 * (rec_l["point"] + rec_r["point"])
        self._axis_dir = d_hat
        self._lat_dir = d_hat.perp_cw()   # left line -> right line
        self.ctx.grip_axis_dir = d_hat
        self.ctx.grip_axis_point = anchor
        g = cfg.geometry
        kappa = abs(d_hat.y)
        if kappa < 0.2:
            self._fail("degenerate_axis")
            return
        gap_target = self.open_factor * (rec_r["point"] - rec_l["point"]).norm()
        self._target_width = min(max(gap_target / kappa, g.width_min), g.width_max)
        base_mid = Vec2(0.0, -g.b)
        along = (anchor - base_mid).dot(d_hat)
        for side in SIDES:
            self._L2_target[side] = along + self.section_margin
        self.stage = "reconfigure"
        self.ctx.enter("open_and_parallelize")

    def _phase_open_and_parallelize(self, cfg, world):
        g = cfg.geometry
        dt = cfg.tick_dt
        width_err = self._target_width - world.width
        width_rate = min(max(width_err / dt, -g.dwidth_rate_max), g.dwidth_rate_max)
        width_next = min(max(world.width + width_rate * dt, g.width_min), g.width_max)
        targets = self._parallel_targets(cfg, width_next)
        cmds = {}
        arrived_all = abs(width_err) < 1e-9
        for side in SIDES:
            try:
                cmd, arrived = command_toward(cfg, world, side, targets[side],
                                              a_override=g.width_to_a(width_next))
            except OutOfWorkspaceError as exc:
                self._fail(f"parallelize_unreachable:{exc.boundary}")
                return None
            cmds[side] = cmd
            arrived_all = arrived_all and arrived
        if arrived_all:
            self.stage = "closing"
            self.ctx.enter("close_width")
            return WorldCommand()
        return WorldCommand(left=cmds["left"], right=cmds["right"],
                            width_rate=width_rate)

    def _phase_close_width(self, cfg, world):
        g = cfg.geometry
        dt = cfg.tick_dt
        spring = cfg.mechanics.spring()
        for side in SIDES:
            if side not in self._crossings:
                force = _estimate_force(world, side)
                if force >= self.threshold:
                    self._crossings[side] = {
                        "width": world.width,
                        "pen": displacement_for_force(spring, force),
                    }
        if len(self._crossings) == 2:
            kappa = abs(self._axis_dir.y)
            cl, cr = self._crossings["left"], self._crossings["right"]
            h = 0.5 * (cl["pen"] + cr["pen"] + 0.5 * kappa * (cl["width"] + cr["width"]))
            e = 0.5 * ((cr["pen"] + 0.5 * kappa * cr["width"])
                       - (cl["pen"] + 0.5 * kappa * cl["width"]))
            self.ctx.w_obj = 2.0 * h
            base_mid = Vec2(0.0, -g.b)
            anchor = self.ctx.grip_axis_point
            along = (anchor - base_mid).dot(self._axis_dir)
            refined = base_mid + along * self._axis_dir + e * self._lat_dir
            self.ctx.grip_axis_point = refined
            self._below_count = 0
            # Line penetration is constant while the frozen left line still
            # covers the object; capture it once for the handoff geometry.
            spring = cfg.mechanics.spring()
            self._delta_line = displacement_for_force(
                spring, min(_estimate_force(world, "left"),
                            spring_force(spring, spring.delta_max)))
            self.ctx.enter("retract_until_lost")
            return WorldCommand()
        if world.width <= g.width_min + 1e-9:
            self._fail("lost_object:close_width")
            return None
        width_rate = -min(self.close_speed, g.dwidth_rate_max)
        width_next = max(world.width + width_rate * dt, g.width_min)
        targets = self._parallel_targets(cfg, width_next)
        cmds = {}
        for side in SIDES:
            try:
                cmd, _ = command_toward(cfg, world, side, targets[side],
                                        a_override=g.width_to_a(width_next))
            except OutOfWorkspaceError as exc:
                self._fail(f"close_unreachable:{exc.boundary}")
                return None
            cmds[side] = cmd
        return WorldCommand(left=cmds["left"], right=cmds["right"],
                            width_rate=width_rate)

    def _phase_retract_until_lost(self, cfg, world):
        g = cfg.geometry
        spring = cfg.mechanics.spring()
        force = _estimate_force(world, "left")
        state = world.left
        if force < self.threshold:
            if self._below_count == 0:
                # First below-threshold tick: convert forces back through the
                # spring and the arc geometry to the exact handoff point.
                rho = 0.5 * self.ctx.w_obj
                R = rho + g.r0
                delta_line = self._delta_line
                pen_now = 0.0
                if force > 0.0:
                    pen_now = displacement_for_force(spring, force)
                u_sq = (R - pen_now) ** 2 - (R - delta_line) ** 2
                u = math.sqrt(max(u_sq, 0.0))
                frame = self._line_of(cfg, world, "left")
                s_c = frame.L2 + u
                center = (frame.E2 + s_c * self._axis_dir
                          + (rho - delta_line) * frame.m_in)
                self.ctx.center_estimate = center
                self.ctx.obj_distance = (center - self.ctx.grip_axis_point).dot(self._axis_dir)
            self._below_count += 1
            if self._below_count >= self.lost_ticks:
                self.stage = "standoff"
                self.ctx.enter("move_to_grasp")
                return WorldCommand()
        else:
            self._below_count = 0
        if state.L2 <= self.retract_step + 25.0:
            self._fail("lost_object:retract_until_lost")
            return None
        self._L2_target["left"] = state.L2 - self.retract_step
        targets = self._parallel_targets(cfg, world.width)
        try:
            cmd, _ = command_toward(cfg, world, "left", targets["left"])
        except OutOfWorkspaceError as exc:
            self._fail(f"retract_unreachable:{exc.boundary}")
            return None
        return WorldCommand(left=cmd)

    def _phase_move_to_grasp(self, cfg, world):
        g = cfg.geometry
        spring = cfg.mechanics.spring()
        c_est = self.ctx.center_estimate
        rho = 0.5 * self.ctx.w_obj
        delta_grasp = displacement_for_force(spring, self.grasp_force)
        lat = self._lat_dir
        if self.stage == "standoff":
            half = rho + g.r0 + 6.0
        else:
            half = rho + g.r0 - delta_grasp
        tleft = c_est - half * lat
        tright = c_est + half * lat
        try:
            cl, al = command_toward(cfg, world, "left", tleft)
            cr, ar = command_toward(cfg, world, "right", tright)
        except OutOfWorkspaceError as exc:
            self._fail(f"grasp_unreachable:{exc.boundary}")
            return None
        if self.stage == "standoff":
            if al and ar:
                self.stage = "close"
            return WorldCommand(left=cl, right=cr)
        target_obj = self._grasp_target(world)
        if target_obj is not None and target_obj.held:
            self.ctx.enter("grasped")
            self.done = True
            return None
        if al and ar:
            if self._grasp_issued:
                self._fail("lost_object:move_to_grasp")
                return None
            if target_obj is None:
                self._fail("lost_object:move_to_grasp")
                return None
            self._grasp_issued = True
            return WorldCommand(left=cl, right=cr, grasp=target_obj.id)
        return WorldCommand(left=cl, right=cr)

    def _grasp_target(self, world: WorldState) -> SimObject | None:
        best, best_d = None, math.inf
        for o in world.objects:
            d = (o.position - self.ctx.center_estimate).norm()
            if d < best_d:
                best, best_d = o, d
        return best


def auto_grip(cfg: SimConfig, world: WorldState, max_ticks: int = 200_000,
              **overrides) -> tuple[WorldState, AutoGripContext]:
    """Run the automatic gripping sequence to completion."""
    controller = AutoGripController(cfg, overrides or None)
    world = run_controller(cfg, world, controller, max_ticks=max_ticks)
    return world, controller.ctx


def follow_path(cfg: SimConfig, world: WorldState, side: str, path: PathSpec,
                max_ticks: int = 500_000) -> tuple[WorldState, list[dict]]:
    controller = PathFollowController(cfg, side, path)
    world = run_controller(cfg, world, controller, max_ticks=max_ticks)
    if controller.failure:
        raise OutOfWorkspaceError(controller.failure.split(":", 1)[-1],
                                  "path left the workspace (partial trace kept)")
    return world, controller.trace


def rotate_in_grasp(cfg: SimConfig, world: WorldState, object_id: str, angle: float,
                    servo: ForceServoParams | None = None,
                    max_ticks: int = 500_000,
                    surface_speed: float | None = None
                    ) -> tuple[WorldState, RotateController]:
    controller = RotateController(cfg, object_id, angle, servo=servo,
                                  surface_speed=surface_speed)
    world = run_controller(cfg, world, controller, max_ticks=max_ticks)
    return world, controller


def grasp_and_translate(cfg: SimConfig, world: WorldState, object_id: str,
                        target: Vec2, max_ticks: int = 500_000
                        ) -> tuple[WorldState, TranslateController]:
    controller = TranslateController(cfg, object_id, target)
    world = run_controller(cfg, world, controller, max_ticks=max_ticks)
    return world, controller
