"""Deterministic quasi-static planar world: two appendages plus rigid objects.

World frame: the base center is the origin, the outer extruders sit at
(+/- spacing/2, 0), and the workspace extends into +y.  The left appendage
is solved in the paper-style local frame (its outer extruder at the local
origin, +x toward the center line) and the right appendage is the exact
mirror across x = 0.

Physics contract
----------------
* No inertia and no gravity.  Objects are anchored in place (rest friction
  with the ground plane) unless ``held``; held objects move only through
  the no-slip kinematics of their two contact points plus quasi-static
  force balance along the grip normal.
* Contact surfaces are the inner straight section and the tip arc of each
  appendage (the undeformed kinematic shapes); penetration of an object
  into a surface compresses the bend-joint spring, producing the contact
  normal force.  When an object touches both the inner section and the tip
  arc, the deeper penetration governs (ties go to the inner section, the
  conveyance surface).
* Contacts are ideal no-slip above the contact threshold; a contact force
  above the buckling cap of the supporting outer section raises a
  BucklingEvent and the force saturates at the cap.

Everything is pure-float and single-threaded: identical inputs produce
byte-identical snapshot streams.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace, field

import numpy as np

from .config import SimConfig
from .errors import NearSingularError, NoContactError, SchemaVersionError
from .geometry import Vec2, unit, wrap_angle
from .kinematics import (
    ActuatorCommand,
    AppendageState,
    apply_command,
    forward_kinematics,
    guide_ring_position,
)
from .mechanics import (
    ForceEstimate,
    estimate_contact_force,
    simulate_load_cell,
    spring_force,
)

SNAPSHOT_SCHEMA_VERSION = 1

SIDES = ("left", "right")


# ---------------------------------------------------------------------------
# Objects
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Circle:
    radius: float

    def __post_init__(self):
        if not self.radius > 0.0:
            raise ValueError("circle radius must be positive")


@dataclass(frozen=True)
class Ellipse:
    semi_major: float
    semi_minor: float

    def __post_init__(self):
        if not self.semi_minor > 0.0:
            raise ValueError("ellipse semi-axes must be positive")
        if self.semi_major < self.semi_minor:
            raise ValueError("semi_major must be >= semi_minor")


Shape = Circle | Ellipse


@dataclass(frozen=True)
class SimObject:
    id: str
    shape: Shape
    position: Vec2
    orientation: float = 0.0
    held: bool = False


def support(shape: Shape, orientation: float, direction: Vec2) -> tuple[float, Vec2]:
    """Support function: extent and boundary point of the shape (centered at
    the origin, rotated by ``orientation``) farthest along ``direction``."""
    d = direction.normalized()
    if isinstance(shape, Circle):
        return shape.radius, shape.radius * d
    db = d.rotated(-orientation)
    h = math.hypot(shape.semi_major * db.x, shape.semi_minor * db.y)
    pb = Vec2(shape.semi_major ** 2 * db.x / h, shape.semi_minor ** 2 * db.y / h)
    return h, pb.rotated(orientation)


# ---------------------------------------------------------------------------
# World-frame view of an appendage
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Frame:
    """World-frame geometry of one solved appendage."""

    side: str
    E1: Vec2
    E2: Vec2
    P1: Vec2     # outer tangent point
    P2: Vec2     # inner tangent point
    X: Vec2      # rolling-joint center
    u1: Vec2     # outer section direction, base -> tip
    u2: Vec2     # inner section direction, inner extruder -> tip
    m_in: Vec2   # inner-section normal pointing into the grip interior
    ring: Vec2   # guiding ring
    L1: float
    L2: float
    r: float
    arc_sweep: float


def _mirror_point(p: Vec2, spacing: float) -> Vec2:
    return Vec2(spacing - p.x, p.y)


def appendage_frame(cfg: SimConfig, state: AppendageState, side: str) -> Frame:
    g = cfg.geometry
    half = 0.5 * g.outer_extruder_spacing
    u1l, u2l = unit(state.theta1), unit(state.theta2)
    e1 = Vec2(0.0, 0.0)
    e2 = Vec2(state.a, -g.b)
    p1 = state.L1 * u1l
    x = state.tip
    p2 = e2 + state.L2 * u2l
    ring = guide_ring_position(g, state.theta4)
    if side == "left":
        off = Vec2(-half, 0.0)
        E1, E2, P1, P2, X, R = (e1 + off, e2 + off, p1 + off, p2 + off, x + off, ring + off)
        u1, u2 = u1l, u2l
        m_in = u2.perp_cw()
    else:
        E1 = _mirror_point(e1, half)
        E2 = _mirror_point(e2, half)
        P1 = _mirror_point(p1, half)
        P2 = _mirror_point(p2, half)
        X = _mirror_point(x, half)
        R = _mirror_point(ring, half)
        u1 = Vec2(-u1l.x, u1l.y)
        u2 = Vec2(-u2l.x, u2l.y)
        m_in = u2.perp_ccw()
    return Frame(side=side, E1=E1, E2=E2, P1=P1, P2=P2, X=X,
                 u1=u1, u2=u2, m_in=m_in, ring=R,
                 L1=state.L1, L2=state.L2, r=state.r, arc_sweep=state.arc_sweep)


def world_to_local(cfg: SimConfig, point: Vec2, side: str) -> Vec2:
    half = 0.5 * cfg.geometry.outer_extruder_spacing
    if side == "left":
        return Vec2(point.x + half, point.y)
    return Vec2(half - point.x, point.y)


def local_to_world(cfg: SimConfig, point: Vec2, side: str) -> Vec2:
    half = 0.5 * cfg.geometry.outer_extruder_spacing
    if side == "left":
        return Vec2(point.x - half, point.y)
    return Vec2(half - point.x, point.y)


def _arc_contains(frame: Frame, e_hat: Vec2) -> bool:
    """Whether the radial direction e_hat falls on the rolling-joint arc."""
    if frame.r <= 0.0:
        return False
    e_p1 = (frame.P1 - frame.X) * (1.0 / frame.r)
    e_p2 = (frame.P2 - frame.X) * (1.0 / frame.r)
    a1, a2, a = e_p1.angle(), e_p2.angle(), e_hat.angle()
    sweep = frame.arc_sweep
    for sigma in (1.0, -1.0):
        if abs((sigma * (a1 - a2)) % (2.0 * math.pi) - sweep) < 1e-6:
            rel = (sigma * (a1 - a)) % (2.0 * math.pi)
            return rel <= sweep + 1e-9
    return False


def _arc_material_tangent(frame: Frame, e_hat: Vec2) -> Vec2:
    """Unit tangent at an arc point, oriented with positive inner-feed flow."""
    e_p2 = (frame.P2 - frame.X) * (1.0 / frame.r)
    sign = 1.0 if e_p2.perp_ccw().dot(frame.u2) >= 0.0 else -1.0
    return sign * e_hat.perp_ccw()


# ---------------------------------------------------------------------------
# Contacts
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContactReport:
    object_id: str
    side: str
    segment: str          # "inner_section" | "tip_arc"
    point: Vec2           # object-surface contact point (world)
    normal: Vec2          # direction the surface pushes the object
    penetration: float    # mm into the undeformed surface
    normal_force: float   # N, after buckling-cap clamp
    s_along: float        # contact distance from the inner extruder (lever L2')
    surface_displacement: float  # tangential material displacement this tick (mm)
    lever: float          # support distance from object center to the contact plane
    overtravel: bool = False
    buckled: bool = False


def _find_contact(cfg: SimConfig, frame: Frame, obj: SimObject) -> ContactReport | None:
    """Contact candidate of one object against one appendage, or None.

    Both surfaces are tested; the deeper penetration governs (ties go to the
    inner section, the conveyance surface).  A rigid object cannot be held
    off the deeper surface by the shallower one.
    """
    C = obj.position
    inner = None
    dist = (C - frame.E2).dot(frame.m_in)
    h, off = support(obj.shape, obj.orientation, -1.0 * frame.m_in)
    pen = h - dist
    if pen > 0.0:
        p = C + off
        s = (p - frame.E2).dot(frame.u2)
        if 0.0 <= s <= frame.L2:
            inner = ContactReport(
                object_id=obj.id, side=frame.side, segment="inner_section",
                point=p, normal=frame.m_in, penetration=pen, normal_force=0.0,
                s_along=s, surface_displacement=0.0, lever=h,
            )
    arc = None
    if frame.r > 0.0:
        dvec = C - frame.X
        d = dvec.norm()
        if d > 1e-9:
            n_hat = dvec * (1.0 / d)
            h, off = support(obj.shape, obj.orientation, -1.0 * n_hat)
            pen = (h + frame.r) - d
            if pen > 0.0 and _arc_contains(frame, n_hat):
                p = C + off
                arc = ContactReport(
                    object_id=obj.id, side=frame.side, segment="tip_arc",
                    point=p, normal=n_hat, penetration=pen, normal_force=0.0,
                    s_along=frame.L2, surface_displacement=0.0, lever=h,
                )
    if inner is not None and arc is not None:
        return inner if inner.penetration >= arc.penetration else arc
    return inner if inner is not None else arc


def _surface_velocity(frame_old: Frame, frame_new: Frame, contact: ContactReport,
                      feeds: tuple[float, float], dt: float) -> Vec2:
    """Material velocity of the appendage surface at a (previous-tick) contact.

    Inner section: rigid link motion plus uniform tape transport at the
    inner feed rate.  Tip arc: the inextensible tape pinned to the moving
    circle makes every arc material point orbit the joint center at the
    uniform rate d(theta1)/dt + (dL1_geometric - outer_feed)/r, on top of
    the center's translation.
    """
    feed1, feed2 = feeds
    p = contact.point
    # The material velocity is taken at the appendage SURFACE point (the
    # penetrating object's boundary point lies inside the surface, and the
    # rotation lever must match the transport radius for the two to compose
    # correctly).
    if contact.segment == "inner_section":
        v_base = (frame_new.E2 - frame_old.E2) * (1.0 / dt)
        omega = wrap_angle(frame_new.u2.angle() - frame_old.u2.angle()) / dt
        s = (p - frame_old.E2).dot(frame_old.u2)
        v_geom = v_base + (omega * s) * frame_old.u2.perp_ccw()
        flow = (feed2 / dt) * frame_old.u2
        return v_geom + flow
    v_base = (frame_new.X - frame_old.X) * (1.0 / dt)
    e_p1_old = (frame_old.P1 - frame_old.X) * (1.0 / frame_old.r)
    e_p1_new = (frame_new.P1 - frame_new.X) * (1.0 / frame_new.r)
    omega = wrap_angle(e_p1_new.angle() - e_p1_old.angle()) / dt
    e_hat = (p - frame_old.X).normalized()
    v_geom = v_base + (omega * frame_old.r) * e_hat.perp_ccw()
    transport = ((frame_new.L1 - frame_old.L1) - feed1) / dt
    return v_geom + transport * _arc_material_tangent(frame_old, e_hat)


def _contact_tangent(contact: ContactReport, frame: Frame) -> Vec2:
    if contact.segment == "inner_section":
        return frame.u2
    return contact.normal.perp_ccw()


# ---------------------------------------------------------------------------
# World state
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Event:
    type: str
    data: dict = field(default_factory=dict)


@dataclass(frozen=True)
class WorldState:
    tick: int
    width: float
    left: AppendageState
    right: AppendageState
    objects: tuple[SimObject, ...]
    contacts: tuple[ContactReport, ...]
    events: tuple[Event, ...]
    estimates: dict


@dataclass(frozen=True)
class WorldCommand:
    left: ActuatorCommand = ActuatorCommand()
    right: ActuatorCommand = ActuatorCommand()
    width_rate: float = 0.0
    grasp: str | None = None
    release: str | None = None


def make_world(cfg: SimConfig, objects: tuple[SimObject, ...] = (),
               width: float | None = None,
               L: float | None = None, theta4: float | None = None,
               left: AppendageState | None = None,
               right: AppendageState | None = None) -> WorldState:
    """Fresh world.  The default pose parks both appendages splayed near
    their outboard angular limit at short length, clear of the central
    workspace, so freshly spawned objects start uncontacted."""
    g = cfg.geometry
    w = width if width is not None else 0.5 * (g.width_min + g.width_max)
    a = g.width_to_a(w)
    L0 = L if L is not None else g.L_min + 80.0
    t4 = theta4 if theta4 is not None else g.theta4_max - 0.1
    if left is None:
        left = forward_kinematics(g, L0, t4, a, side="left", max_iter=cfg.max_iter)
    if right is None:
        right = forward_kinematics(g, L0, t4, a, side="right", max_iter=cfg.max_iter)
    for st in (left, right):
        if abs(st.a - a) > 1e-9:
            raise ValueError(
                f"appendage base width a={st.a} inconsistent with grip width "
                f"w={w} (expected a={a})")
    world = WorldState(tick=0, width=w, left=left, right=right,
                       objects=tuple(objects), contacts=(), events=(), estimates={})
    contacts, events, estimates = _sense(cfg, world, {"left": (0.0, 0.0),
                                                      "right": (0.0, 0.0)})
    return replace(world, contacts=contacts, events=(), estimates=estimates)


def add_object(world: WorldState, obj: SimObject) -> WorldState:
    if any(o.id == obj.id for o in world.objects):
        raise ValueError(f"duplicate object id {obj.id!r}")
    return replace(world, objects=world.objects + (obj,))


def remove_object(world: WorldState, object_id: str) -> WorldState:
    return replace(world, objects=tuple(o for o in world.objects if o.id != object_id))


def _state_of(world: WorldState, side: str) -> AppendageState:
    return world.left if side == "left" else world.right


def _contacts_by_object(contacts) -> dict:
    out: dict[str, dict[str, ContactReport]] = {}
    for c in contacts:
        out.setdefault(c.object_id, {})[c.side] = c
    return out


def _update_held_object(cfg: SimConfig, obj: SimObject,
                        prev: dict[str, ContactReport],
                        frames_old: dict[str, Frame], frames_new: dict[str, Frame],
                        feeds: dict[str, float], dt: float) -> SimObject:
    """No-slip rigid motion from the two contact points.

    Two tangential no-slip constraints plus one normal closure: along the
    grip axis the object tracks the mean surface motion (the spring-balance
    answer for matched springs; the position-level relaxation afterwards
    absorbs the residual).  Solving the square system keeps pure rotation
    and pure translation exact even when the contact rays are tilted, where
    a minimal-norm fit would leak rotation into translation.
    """
    ca, cb = prev.get("left"), prev.get("right")
    if ca is None or cb is None:
        return obj
    rows, rhs, levers, vels = [], [], [], []
    for c in (ca, cb):
        fo, fn = frames_old[c.side], frames_new[c.side]
        u = _surface_velocity(fo, fn, c, feeds[c.side], dt)
        t_hat = _contact_tangent(c, fo)
        lever = (c.point - obj.position).cross(t_hat)
        rows.append((t_hat.x, t_hat.y, lever))
        rhs.append(t_hat.dot(u))
        levers.append(abs(lever))
        vels.append(u)
    rho = max(0.5 * (levers[0] + levers[1]), 1e-6)
    # Force-balance closure: matched springs keep equal penetration rates,
    # n_L . (u_L - v) = n_R . (u_R - v).
    axis = ca.normal - cb.normal
    if axis.norm() > 1e-9:
        rows.append((axis.x, axis.y, 0.0))
        rhs.append(ca.normal.dot(vels[0]) - cb.normal.dot(vels[1]))
        A = np.array([[r[0], r[1], r[2] / rho] for r in rows])
        b = np.array(rhs)
        if abs(np.linalg.det(A)) > 1e-9:
            sol = np.linalg.solve(A, b)
        else:
            sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    else:
        A = np.array([[r[0], r[1], r[2] / rho] for r in rows])
        sol, *_ = np.linalg.lstsq(A, np.array(rhs), rcond=None)
    v = Vec2(float(sol[0]), float(sol[1]))
    omega = float(sol[2]) / rho
    moved = replace(obj,
                    position=obj.position + dt * v,
                    orientation=obj.orientation + dt * omega)
    return _relax_normal(cfg, moved, frames_new)


def _find_contact_geometry(frame: Frame, obj: SimObject):
    """Penetration and push normal even when negative (for relaxation),
    using the same deeper-surface rule as the contact search."""
    C = obj.position
    candidates = []
    dist = (C - frame.E2).dot(frame.m_in)
    h, off = support(obj.shape, obj.orientation, -1.0 * frame.m_in)
    p = C + off
    s = (p - frame.E2).dot(frame.u2)
    if 0.0 <= s <= frame.L2:
        candidates.append((h - dist, frame.m_in))
    if frame.r > 0.0:
        dvec = C - frame.X
        d = dvec.norm()
        if d > 1e-9:
            n_hat = dvec * (1.0 / d)
            h, _ = support(obj.shape, obj.orientation, -1.0 * n_hat)
            if _arc_contains(frame, n_hat):
                candidates.append(((h + frame.r) - d, n_hat))
    if not candidates:
        return None
    return max(candidates, key=lambda c: c[0])


def _relax_normal(cfg: SimConfig, obj: SimObject, frames: dict[str, Frame]) -> SimObject:
    """Quasi-static relaxation along the grip normal.

    With identical springs on both sides, force balance means equal
    penetrations; shift the object along the (near-antiparallel) contact
    normals until pen_left == pen_right.  If the balanced penetration would
    be negative the springs relax fully instead: the object stops at the
    just-touching point of the deeper side.  A few Newton passes absorb the
    curvature of arc contacts.
    """
    for _ in range(3):
        ga = _find_contact_geometry(frames["left"], obj)
        gb = _find_contact_geometry(frames["right"], obj)
        if ga is None or gb is None:
            return obj
        pen_a, n_a = ga
        pen_b, n_b = gb
        if pen_a <= 0.0 and pen_b <= 0.0:
            return obj
        axis = n_a - n_b
        if axis.norm() < 1e-9:
            return obj
        axis = axis.normalized()
        # pen_a(s) = pen_a - s*grad_a for a shift of s*axis, same for b.
        grad_a = axis.dot(n_a)
        grad_b = axis.dot(n_b)
        if abs(grad_a - grad_b) < 1e-12:
            return obj
        s = (pen_a - pen_b) / (grad_a - grad_b)
        if pen_a - s * grad_a < 0.0:
            if pen_a > 0.0 and abs(grad_a) > 1e-12:
                s = pen_a / grad_a
            elif pen_b > 0.0 and abs(grad_b) > 1e-12:
                s = pen_b / grad_b
            else:
                return obj
        if abs(s) < 1e-13:
            return obj
        obj = replace(obj, position=obj.position + s * axis)
    return obj


def _sense(cfg: SimConfig, world: WorldState, feeds: dict[str, float]):
    """Contacts, per-contact forces, events, and the sensing pipeline output."""
    spring = cfg.mechanics.spring()
    buckling = cfg.mechanics.buckling()
    tau = cfg.mechanics.torque()
    frames = {s: appendage_frame(cfg, _state_of(world, s), s) for s in SIDES}
    previous = {(c.object_id, c.side): c.penetration for c in world.contacts}
    contacts: list[ContactReport] = []
    events: list[Event] = []
    for obj in world.objects:
        for side in SIDES:
            c = _find_contact(cfg, frames[side], obj)
            if c is None:
                continue
            pen = c.penetration
            overtravel = pen > spring.delta_max
            # With a hysteresis curve configured, the branch follows the
            # penetration velocity: compression loads, retreat unloads.
            branch = "loading"
            if spring.unloading is not None:
                prev_pen = previous.get((obj.id, side))
                if prev_pen is not None and pen < prev_pen - 1e-12:
                    branch = "unloading"
            force = spring_force(spring, min(pen, spring.delta_max), branch)
            state = _state_of(world, side)
            cap = buckling.M_b / max(state.L1 - buckling.L_offset, 1.0)
            buckled = force > cap
            if overtravel:
                events.append(Event("spring_overtravel", {
                    "object_id": obj.id, "side": side, "penetration": pen}))
            if buckled:
                events.append(Event("buckling", {
                    "object_id": obj.id, "side": side, "force": force, "cap": cap}))
                force = cap
            contacts.append(replace(
                c, normal_force=force, overtravel=overtravel, buckled=buckled,
                surface_displacement=feeds[side][1]))
    estimates = {}
    for side in SIDES:
        state = _state_of(world, side)
        side_contacts = [c for c in contacts if c.side == side]
        strongest = max(side_contacts, key=lambda c: c.normal_force, default=None)
        l2p = state.L2 if strongest is None else min(max(strongest.s_along, 1.0), state.L2)
        true_force = 0.0 if strongest is None else strongest.normal_force
        ring = guide_ring_position(cfg.geometry, state.theta4).norm()
        l1p = min(ring, state.L1)
        try:
            f_read = simulate_load_cell(cfg.geometry, state, true_force, l2p, tau, l1p)
            est = estimate_contact_force(cfg.geometry, state, f_read, l1p, l2p, tau)
        except (NearSingularError, ValueError):
            est = None
        estimates[side] = est
    return tuple(contacts), events, estimates


def step(cfg: SimConfig, world: WorldState, cmd: WorldCommand) -> WorldState:
    """Advance the world by one tick.

    Order: width and appendage actuation, held-object motion from the
    previous tick's contacts, contact/force recomputation, grasp and release
    processing, then events (buckling, drops).
    """
    g = cfg.geometry
    dt = cfg.tick_dt
    events: list[Event] = []

    rate = min(max(cmd.width_rate, -g.dwidth_rate_max), g.dwidth_rate_max)
    width = min(max(world.width + rate * dt, g.width_min), g.width_max)
    a = g.width_to_a(width)

    frames_old = {s: appendage_frame(cfg, _state_of(world, s), s) for s in SIDES}
    new_states: dict[str, AppendageState] = {}
    feeds: dict[str, tuple[float, float]] = {}
    for side, acmd in (("left", cmd.left), ("right", cmd.right)):
        state = _state_of(world, side)
        new_states[side], feed2 = apply_command(
            g, state, acmd, dt, a=a, max_iter=cfg.max_iter)
        feed1 = (new_states[side].L - state.L) - feed2
        feeds[side] = (feed1, feed2)
    frames_new = {s: appendage_frame(cfg, new_states[s], s) for s in SIDES}

    by_obj = _contacts_by_object(world.contacts)
    objects = []
    for obj in world.objects:
        if obj.held:
            obj = _update_held_object(cfg, obj, by_obj.get(obj.id, {}),
                                      frames_old, frames_new, feeds, dt)
        objects.append(obj)

    interim = replace(world, width=width, left=new_states["left"],
                      right=new_states["right"], objects=tuple(objects))
    contacts, sense_events, estimates = _sense(cfg, interim, feeds)
    events.extend(sense_events)

    by_obj_new = _contacts_by_object(contacts)
    final_objects = []
    for obj in interim.objects:
        if cmd.grasp == obj.id and not obj.held:
            pair = by_obj_new.get(obj.id, {})
            forces = [pair[s].normal_force for s in SIDES if s in pair]
            if len(forces) == 2 and min(forces) >= cfg.contact_threshold:
                obj = replace(obj, held=True)
                events.append(Event("object_grasped", {"object_id": obj.id}))
            else:
                events.append(Event("grasp_failed", {"object_id": obj.id}))
        if cmd.release == obj.id and obj.held:
            obj = replace(obj, held=False)
            events.append(Event("object_released", {"object_id": obj.id}))
        if obj.held:
            pair = by_obj_new.get(obj.id, {})
            forces = [pair[s].normal_force for s in SIDES if s in pair]
            if len(forces) < 2 or min(forces) < cfg.contact_threshold:
                obj = replace(obj, held=False)
                events.append(Event("object_dropped", {"object_id": obj.id}))
        final_objects.append(obj)

    return WorldState(
        tick=world.tick + 1, width=width,
        left=new_states["left"], right=new_states["right"],
        objects=tuple(final_objects), contacts=contacts,
        events=tuple(events), estimates=estimates,
    )


def grasp_gap_force(cfg: SimConfig, world: WorldState, object_id: str) -> tuple[float, float]:
    """Per-side spring force on an object engaged between both appendages."""
    obj = next((o for o in world.objects if o.id == object_id), None)
    if obj is None:
        raise NoContactError(f"unknown object {object_id!r}")
    spring = cfg.mechanics.spring()
    forces = []
    for side in SIDES:
        frame = appendage_frame(cfg, _state_of(world, side), side)
        geomc = _find_contact_geometry(frame, obj)
        if geomc is None or (obj.position - frame.E2).dot(frame.m_in) < 0.0:
            raise NoContactError(f"object {object_id!r} not between the appendages "
                                 f"({side} side disengaged)")
        pen = geomc[0]
        forces.append(spring_force(spring, min(max(pen, 0.0), spring.delta_max)))
    return (forces[0], forces[1])


# ---------------------------------------------------------------------------
# Snapshots
# ---------------------------------------------------------------------------

def _vec(v: Vec2) -> list[float]:
    return [v.x, v.y]


def _shape_to_dict(shape: Shape) -> dict:
    if isinstance(shape, Circle):
        return {"kind": "circle", "radius": shape.radius}
    return {"kind": "ellipse", "semi_major": shape.semi_major, "semi_minor": shape.semi_minor}


def shape_from_dict(data: dict) -> Shape:
    kind = data.get("kind")
    if kind == "circle":
        return Circle(radius=float(data["radius"]))
    if kind == "ellipse":
        return Ellipse(semi_major=float(data["semi_major"]), semi_minor=float(data["semi_minor"]))
    raise ValueError(f"unknown shape kind {kind!r}")


def _appendage_to_dict(s: AppendageState) -> dict:
    return {
        "side": s.side, "L": s.L, "a": s.a, "theta4": s.theta4,
        "L1": s.L1, "L2": s.L2, "L3": s.L3,
        "theta1": s.theta1, "theta2": s.theta2, "r": s.r,
        "tip": _vec(s.tip),
    }


def _appendage_from_dict(d: dict) -> AppendageState:
    return AppendageState(
        side=d["side"], L=d["L"], a=d["a"], theta4=d["theta4"],
        L1=d["L1"], L2=d["L2"], theta1=d["theta1"], theta2=d["theta2"],
        r=d["r"], tip=Vec2(d["tip"][0], d["tip"][1]),
    )


def snapshot(world: WorldState) -> dict:
    """Complete, deterministic record of one tick."""
    return {
        "schema_version": SNAPSHOT_SCHEMA_VERSION,
        "tick": world.tick,
        "width": world.width,
        "left": _appendage_to_dict(world.left),
        "right": _appendage_to_dict(world.right),
        "objects": [
            {"id": o.id, "shape": _shape_to_dict(o.shape), "position": _vec(o.position),
             "orientation": o.orientation, "held": o.held}
            for o in world.objects
        ],
        "contacts": [
            {"object_id": c.object_id, "side": c.side, "segment": c.segment,
             "point": _vec(c.point), "normal": _vec(c.normal),
             "penetration": c.penetration, "normal_force": c.normal_force,
             "s_along": c.s_along, "surface_displacement": c.surface_displacement,
             "lever": c.lever, "overtravel": c.overtravel, "buckled": c.buckled}
            for c in world.contacts
        ],
        "events": [{"type": e.type, "data": e.data} for e in world.events],
        "estimates": {
            side: (None if est is None else {
                "F_read": est.F_read, "F2_prime": est.F2_prime,
                "F2_prime_raw": est.F2_prime_raw, "L2_prime": est.L2_prime})
            for side, est in world.estimates.items()
        },
    }


def snapshot_line(world: WorldState) -> str:
    return json.dumps(snapshot(world), sort_keys=True, separators=(",", ":"))


def restore(snap: dict) -> WorldState:
    """Rebuild a WorldState from a snapshot record."""
    version = snap.get("schema_version")
    if version != SNAPSHOT_SCHEMA_VERSION:
        raise SchemaVersionError(
            f"snapshot schema_version {version!r} unsupported "
            f"(this build reads version {SNAPSHOT_SCHEMA_VERSION})"
        )
    objects = tuple(
        SimObject(id=o["id"], shape=shape_from_dict(o["shape"]),
                  position=Vec2(o["position"][0], o["position"][1]),
                  orientation=o["orientation"], held=o["held"])
        for o in snap["objects"]
    )
    contacts = tuple(
        ContactReport(
            object_id=c["object_id"], side=c["side"], segment=c["segment"],
            point=Vec2(c["point"][0], c["point"][1]),
            normal=Vec2(c["normal"][0], c["normal"][1]),
            penetration=c["penetration"], normal_force=c["normal_force"],
            s_along=c["s_along"], surface_displacement=c["surface_displacement"],
            lever=c["lever"], overtravel=c["overtravel"], buckled=c["buckled"])
        for c in snap["contacts"]
    )
    estimates = {
        side: (None if est is None else ForceEstimate(
            F_read=est["F_read"], F2_prime=est["F2_prime"],
            F2_prime_raw=est["F2_prime_raw"], L2_prime=est["L2_prime"]))
        for side, est in snap["estimates"].items()
    }
    return WorldState(
        tick=snap["tick"], width=snap["width"],
        left=_appendage_from_dict(snap["left"]),
        right=_appendage_from_dict(snap["right"]),
        objects=objects, contacts=contacts,
        events=tuple(Event(e["type"], e["data"]) for e in snap["events"]),
        estimates=estimates,
    )
