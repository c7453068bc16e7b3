import math
import random

import pytest

from tapegrip.config import default_config
from tapegrip.control import (
    AUTO_GRIP_PHASES,
    AutoGripController,
    ConveyController,
    ForceServoParams,
    GraspController,
    PathFollowController,
    PathSpec,
    RotateController,
    TranslateController,
    auto_grip,
    default_servo,
    follow_path,
    grasp_and_translate,
    rotate_in_grasp,
    run_controller,
)
from tapegrip.errors import OutOfWorkspaceError
from tapegrip.geometry import Vec2
from tapegrip.kinematics import inverse_kinematics
from tapegrip.sim import (
    Circle,
    Ellipse,
    SimObject,
    add_object,
    make_world,
    step,
    world_to_local,
)

CFG = default_config()
GEOM = CFG.geometry


def world_at(side_target: Vec2, side="right"):
    a = 0.5 * (GEOM.a_min + GEOM.a_max)
    st = inverse_kinematics(GEOM, world_to_local(CFG, side_target, side), a, side=side)
    kwargs = {side: st}
    return make_world(CFG, width=GEOM.a_to_width(a), **kwargs)


def grasped_world(shape, center=Vec2(0.0, 430.0), object_id="obj"):
    world = make_world(CFG)
    world = add_object(world, SimObject(id=object_id, shape=shape, position=center))
    ctl = GraspController(CFG, object_id)
    world = run_controller(CFG, world, ctl)
    assert ctl.failure is None
    return world


# -- commands respect rate limits ---------------------------------------------

def command_respects_limits(cmd):
    g = GEOM
    ok = True
    for side_cmd in (cmd.left, cmd.right):
        ok &= abs(side_cmd.dL1_rate) <= g.dL_rate_max + 1e-6
        ok &= abs(side_cmd.dL2_rate) <= g.dL_rate_max + 1e-6
        ok &= abs(side_cmd.dtheta4_rate) <= g.dtheta4_rate_max + 1e-6
    ok &= abs(cmd.width_rate) <= g.dwidth_rate_max + 1e-6
    return ok


def test_all_controllers_emit_rate_limited_commands():
    world = make_world(CFG)
    world = add_object(world, SimObject(id="b", shape=Circle(25.0),
                                        position=Vec2(20.0, 420.0)))
    ctl = AutoGripController(CFG)
    w = world
    for _ in range(5000):
        cmd = ctl.step(CFG, w)
        if cmd is None:
            break
        assert command_respects_limits(cmd)
        w = step(CFG, w, cmd)


# -- path following -------------------------------------------------------------

def test_stationary_waypoint_converges_exactly():
    p = Vec2(80.0, 430.0)
    world = world_at(p)
    path = PathSpec(waypoints=(p, p), speed=10.0, loops=1)
    world, trace = follow_path(CFG, world, "right", path)
    assert trace[-1]["error"] < 1e-6


def test_square_tracking_error_bounded_by_speed_dt():
    center, size, speed = Vec2(80.0, 430.0), 100.0, 50.0
    half = size / 2
    pts = [center + Vec2(x, y) for x, y in
           ((-half, -half), (half, -half), (half, half), (-half, half), (-half, -half))]
    world = world_at(pts[0])
    path = PathSpec(waypoints=tuple(pts), speed=speed, loops=1)
    world, trace = follow_path(CFG, world, "right", path)
    bound = speed * CFG.tick_dt + 1e-9
    assert max(row["error"] for row in trace) <= bound


def test_three_loops_identical_traces():
    center, size = Vec2(80.0, 430.0), 90.0
    half = size / 2
    pts = [center + Vec2(x, y) for x, y in
           ((-half, -half), (half, -half), (half, half), (-half, half), (-half, -half))]
    world = world_at(pts[0])
    path = PathSpec(waypoints=tuple(pts), speed=45.0, loops=3)
    world, trace = follow_path(CFG, world, "right", path)
    loops = {}
    for row in trace:
        loops.setdefault(row["loop"], []).append((row["target"], row["actual"]))
    assert set(loops) == {0, 1, 2}
    assert loops[0] == loops[1] == loops[2]


def test_path_outside_workspace_aborts_with_boundary():
    p = Vec2(80.0, 430.0)
    world = world_at(p)
    path = PathSpec(waypoints=(p, Vec2(0.0, 2000.0)), speed=50.0, loops=1)
    with pytest.raises(OutOfWorkspaceError):
        follow_path(CFG, world, "right", path)


def test_path_spec_validation():
    with pytest.raises(ValueError):
        PathSpec(waypoints=(Vec2(0, 400),), speed=10.0)
    with pytest.raises(ValueError):
        PathSpec(waypoints=(Vec2(0, 400), Vec2(1, 400)), speed=-1.0)


# -- rotation --------------------------------------------------------------------

def test_rotate_zero_angle_is_empty():
    world = grasped_world(Circle(20.0))
    w2, ctl = rotate_in_grasp(CFG, world, "obj", 0.0)
    assert w2.tick == world.tick
    assert ctl.commanded_surface == {"left": 0.0, "right": 0.0}


def test_rotate_circle_surface_displacement_anchor():
    # 90 deg of a 20 mm circle: +/- pi*20/2 mm of opposing surface feed.
    world = grasped_world(Circle(20.0))
    w2, ctl = rotate_in_grasp(CFG, world, "obj", -math.pi / 2)
    o = [o for o in w2.objects if o.id == "obj"][0]
    want = math.pi * 20.0 / 2
    assert abs(ctl.commanded_surface["left"]) == pytest.approx(want, abs=1e-9)
    assert abs(ctl.commanded_surface["right"]) == pytest.approx(want, abs=1e-9)
    assert ctl.commanded_surface["left"] == pytest.approx(-ctl.commanded_surface["right"], abs=1e-9)
    assert math.degrees(o.orientation) == pytest.approx(-90.0, abs=0.01)


def test_rotate_length_bookkeeping():
    world = grasped_world(Circle(20.0))
    L0 = (world.left.L, world.right.L)
    w2, _ = rotate_in_grasp(CFG, world, "obj", math.pi / 2)
    assert w2.left.L == pytest.approx(L0[0], abs=1e-9)
    assert w2.right.L == pytest.approx(L0[1], abs=1e-9)


def test_rotate_ellipse_open_loop_drops():
    world = grasped_world(Ellipse(40.0, 20.0))
    w2, ctl = rotate_in_grasp(CFG, world, "obj", 2 * math.pi)
    assert ctl.failure == "object_dropped"
    assert any(e.type == "object_dropped" for e in w2.events) or \
        not [o for o in w2.objects if o.id == "obj"][0].held


def test_rotate_ellipse_servo_completes_within_band():
    world = grasped_world(Ellipse(40.0, 20.0))
    servo = default_servo(CFG)
    forces = []

    def watch(w):
        for c in w.contacts:
            if c.object_id == "obj":
                forces.append(c.normal_force)

    ctl = RotateController(CFG, "obj", 2 * math.pi, servo=servo)
    w2 = run_controller(CFG, world, ctl, observer=watch, max_ticks=500_000)
    o = [o for o in w2.objects if o.id == "obj"][0]
    assert ctl.failure is None
    assert o.held
    assert math.degrees(o.orientation) == pytest.approx(360.0, abs=0.5)
    settle = len(forces) // 4  # documented: converges within a quarter turn
    band = forces[settle:]
    assert min(band) > 0.8 * servo.F_desired
    assert max(band) < 1.2 * servo.F_desired


def test_servo_sign_correctness():
    # Force below setpoint -> next commanded gap strictly decreases;
    # above -> strictly increases.
    world = grasped_world(Circle(20.0))
    servo = ForceServoParams(F_desired=2.0, Kp=2.0, deadband=0.05,
                             width_rate_limit=50.0)
    ctl = RotateController(CFG, "obj", math.pi, servo=servo)
    ctl.step(CFG, world)         # initializes gap from current tips
    gap0 = ctl._gap
    ctl.step(CFG, world)         # measured ~1 N < 2 N: close the grip
    assert ctl._gap < gap0
    servo_hi = ForceServoParams(F_desired=0.2, Kp=2.0, deadband=0.05,
                                width_rate_limit=50.0)
    ctl = RotateController(CFG, "obj", math.pi, servo=servo_hi)
    ctl.step(CFG, world)
    gap0 = ctl._gap
    ctl.step(CFG, world)         # measured ~1 N > 0.2 N: open the grip
    assert ctl._gap > gap0


# -- translate --------------------------------------------------------------------

def test_translate_zero_displacement_noop():
    world = grasped_world(Circle(20.0))
    target = world.objects[0].position
    w2, ctl = grasp_and_translate(CFG, world, "obj", target)
    assert ctl.failure is None
    assert w2.tick == world.tick


def test_translate_diagonal_constant_force():
    # ~200 mm diagonal within the clean tip-grasp corridor: the grasp rides
    # the arcs the whole way, so the commanded interference (and force)
    # never changes.
    world = grasped_world(Circle(20.0), center=Vec2(-25.0, 360.0))
    target = Vec2(25.0, 555.0)
    forces = []

    def watch(w):
        for c in w.contacts:
            if c.object_id == "obj":
                forces.append(c.normal_force)
                assert c.segment == "tip_arc"

    ctl = TranslateController(CFG, "obj", target)
    w2 = run_controller(CFG, world, ctl, observer=watch)
    assert ctl.failure is None
    o = [o for o in w2.objects if o.id == "obj"][0]
    assert (o.position - target).norm() < 1e-3
    assert o.held
    assert max(forces) - min(forces) < 1e-6


def test_translate_with_mixed_contact_still_arrives():
    # A grasp whose left contact rides the inner section: force constancy
    # is not guaranteed there, but the carry must still converge and hold.
    world = grasped_world(Circle(20.0), center=Vec2(-90.0, 380.0))
    target = Vec2(50.0, 520.0)
    ctl = TranslateController(CFG, "obj", target)
    w2 = run_controller(CFG, world, ctl)
    o = [o for o in w2.objects if o.id == "obj"][0]
    assert ctl.failure is None
    assert (o.position - target).norm() < 1e-3
    assert o.held


def test_translate_target_outside_grip_region_fails_before_motion():
    world = grasped_world(Circle(20.0))
    ctl = TranslateController(CFG, "obj", Vec2(900.0, 300.0))
    with pytest.raises(OutOfWorkspaceError):
        ctl.step(CFG, world)


# -- convey ------------------------------------------------------------------------

def test_convey_controller_moves_held_objects_baseward():
    from test_sim import corridor_world
    world = corridor_world(ys=(320.0,))
    y0 = world.objects[0].position.y
    ctl = ConveyController(CFG, displacement=120.0)
    w2 = run_controller(CFG, world, ctl)
    assert w2.objects[0].position.y == pytest.approx(y0 - 120.0, abs=1e-6)


# -- auto grip -----------------------------------------------------------------------

def test_auto_grip_circle_bounds():
    pos, rho = Vec2(30.0, 430.0), 25.0
    world = make_world(CFG)
    world = add_object(world, SimObject(id="ball", shape=Circle(rho), position=pos))
    world, ctx = auto_grip(CFG, world)
    assert ctx.phase == "grasped"
    sweep_bound = max(CFG.control.sweep_step * pos.norm(), 2.0)
    assert (ctx.center_estimate - pos).norm() <= sweep_bound
    from tapegrip.mechanics import displacement_for_force
    bias_bound = displacement_for_force(CFG.mechanics.spring(), CFG.contact_threshold)
    assert abs(ctx.w_obj - 2 * rho) <= bias_bound
    assert [o.held for o in world.objects] == [True]


def test_auto_grip_empty_world_fails_after_both_sweeps():
    world = make_world(CFG)
    world, ctx = auto_grip(CFG, world)
    assert ctx.phase == "failed"
    assert ctx.failure == "no_object_found"
    assert "sweep_right" in ctx.phase_history


def test_auto_grip_object_outside_both_region():
    # reachable by the left appendage only: left detects, right sweep
    # completes empty, and the search reports no (grippable) object.
    world = make_world(CFG)
    world = add_object(world, SimObject(id="far", shape=Circle(20.0),
                                        position=Vec2(-430.0, 330.0)))
    world, ctx = auto_grip(CFG, world)
    assert ctx.phase == "failed"
    assert ctx.failure == "no_object_found"


def test_auto_grip_phase_monotonicity():
    world = make_world(CFG)
    world = add_object(world, SimObject(id="ball", shape=Circle(25.0),
                                        position=Vec2(-20.0, 410.0)))
    ctl = AutoGripController(CFG)
    run_controller(CFG, world, ctl)
    seq = ctl.ctx.phase_history + [ctl.ctx.phase]
    assert len(seq) == len(set(seq)), f"revisited a phase: {seq}"
    order = [AUTO_GRIP_PHASES.index(p) for p in seq]
    assert order == sorted(order)


def test_auto_grip_randomized_positions():
    rng = random.Random(20260811)
    for _ in range(4):
        x = rng.uniform(-55.0, 55.0)
        y = rng.uniform(330.0, 500.0)
        rho = rng.uniform(18.0, 38.0)
        world = make_world(CFG)
        world = add_object(world, SimObject(id="ball", shape=Circle(rho),
                                            position=Vec2(x, y)))
        world, ctx = auto_grip(CFG, world)
        assert ctx.phase == "grasped", (x, y, rho, ctx.failure)
        assert (ctx.center_estimate - Vec2(x, y)).norm() <= 2.0


def test_per_segment_speeds():
    # a slow first edge and fast second edge: tracking stays within each
    # segment's own speed*dt bound
    p0, p1, p2 = Vec2(50.0, 400.0), Vec2(110.0, 400.0), Vec2(110.0, 460.0)
    world = world_at(p0)
    path = PathSpec(waypoints=(p0, p1, p2), speed=10.0,
                    segment_speeds=(10.0, 60.0))
    ctl = PathFollowController(CFG, "right", path)
    world = run_controller(CFG, world, ctl)
    assert ctl.failure is None
    slow = [r for r in ctl.trace if r["target"][1] == 400.0]
    fast = [r for r in ctl.trace if r["target"][0] == 110.0 and r["target"][1] > 400.0]
    assert max(r["error"] for r in slow) <= 10.0 * CFG.tick_dt + 1e-9
    assert max(r["error"] for r in fast) <= 60.0 * CFG.tick_dt + 1e-9
    # 60 mm at 10 mm/s, then 60 mm at 60 mm/s: tick counts reflect the speeds
    assert len(slow) == pytest.approx(6 * len(fast), abs=3)
    with pytest.raises(ValueError):
        PathSpec(waypoints=(p0, p1, p2), speed=10.0, segment_speeds=(10.0,))
