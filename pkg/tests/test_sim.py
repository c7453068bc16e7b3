import math
from dataclasses import replace

import pytest

from tapegrip.config import default_config
from tapegrip.errors import NoContactError, SchemaVersionError
from tapegrip.geometry import Vec2
from tapegrip.kinematics import ActuatorCommand, inverse_kinematics
from tapegrip.mechanics import spring_force
from tapegrip.sim import (
    Circle,
    Ellipse,
    SimObject,
    WorldCommand,
    add_object,
    appendage_frame,
    grasp_gap_force,
    make_world,
    restore,
    snapshot,
    snapshot_line,
    step,
    support,
    world_to_local,
)

CFG = default_config()
GEOM = CFG.geometry


def tip_grasp_world(rho=20.0, delta=3.5, center=Vec2(0.0, 450.0), held=True,
                    shape=None):
    """World with an object held between the two tip arcs at penetration delta."""
    shape = shape if shape is not None else Circle(rho)
    h, _ = support(shape, 0.0, Vec2(1.0, 0.0))
    off = h + GEOM.r0 - delta
    a = 0.5 * (GEOM.a_min + GEOM.a_max)
    left = inverse_kinematics(GEOM, world_to_local(CFG, Vec2(center.x - off, center.y), "left"),
                              a, side="left")
    right = inverse_kinematics(GEOM, world_to_local(CFG, Vec2(center.x + off, center.y), "right"),
                               a, side="right")
    obj = SimObject(id="obj", shape=shape, position=center, held=held)
    return make_world(CFG, objects=(obj,), width=GEOM.a_to_width(a),
                      left=left, right=right)


def corridor_world(rho=50.0, delta=3.5, ys=(200.0, 320.0, 440.0), L2=650.0):
    """Vertical parallel inner sections with held circles between them."""
    w = 2 * rho - 2 * delta
    a = GEOM.width_to_a(w)
    tip_local = Vec2(a - GEOM.r0, L2 - GEOM.b)
    left = inverse_kinematics(GEOM, tip_local, a, side="left")
    right = inverse_kinematics(GEOM, tip_local, a, side="right")
    objs = tuple(SimObject(id=f"c{i}", shape=Circle(rho), position=Vec2(0.0, y), held=True)
                 for i, y in enumerate(ys))
    return make_world(CFG, objects=objs, width=w, left=left, right=right)


def rotate_cmd(v):
    return WorldCommand(left=ActuatorCommand(dL1_rate=-v, dL2_rate=v),
                        right=ActuatorCommand(dL1_rate=v, dL2_rate=-v))


def convey_cmd(v):
    # positive v streams the inner surfaces toward the base
    c = ActuatorCommand(dL1_rate=v, dL2_rate=-v)
    return WorldCommand(left=c, right=c)


def test_empty_step_is_identity():
    world = make_world(CFG)
    nxt = step(CFG, world, WorldCommand())
    assert nxt.tick == 1
    assert nxt.left == world.left and nxt.right == world.right
    assert nxt.width == world.width and nxt.objects == world.objects


def test_tip_grasp_contact_forces_symmetric():
    world = tip_grasp_world()
    assert len(world.contacts) == 2
    f = [c.normal_force for c in world.contacts]
    assert f[0] == pytest.approx(f[1], abs=1e-9)
    spring = CFG.mechanics.spring()
    assert f[0] == pytest.approx(spring_force(spring, 3.5), abs=1e-9)
    assert all(c.segment == "tip_arc" for c in world.contacts)


def test_rotation_90_exact():
    world = tip_grasp_world(rho=20.0)
    v, total = 20.0, math.pi * 20.0 / 2
    ticks = int(total / (v * CFG.tick_dt))
    rem = total - ticks * v * CFG.tick_dt
    for _ in range(ticks):
        world = step(CFG, world, rotate_cmd(v))
    if rem > 1e-12:
        world = step(CFG, world, rotate_cmd(rem / CFG.tick_dt))
    o = world.objects[0]
    assert math.degrees(abs(o.orientation)) == pytest.approx(90.0, abs=0.01)
    assert (o.position - Vec2(0.0, 450.0)).norm() < 1e-6
    assert o.held


def test_rotation_matches_finer_dt_oracle():
    # 10x finer dt must integrate to the same rotation within 0.01 deg.
    def run(dt_scale):
        cfg = replace(CFG, tick_dt=CFG.tick_dt * dt_scale)
        world = tip_grasp_world(rho=20.0)
        v, total = 20.0, math.pi * 20.0 / 2
        ticks = int(total / (v * cfg.tick_dt))
        rem = total - ticks * v * cfg.tick_dt
        for _ in range(ticks):
            world = step(cfg, world, rotate_cmd(v))
        if rem > 1e-12:
            world = step(cfg, world, rotate_cmd(rem / cfg.tick_dt))
        return world.objects[0].orientation

    coarse = run(1.0)
    fine = run(0.1)
    assert math.degrees(abs(coarse - fine)) < 0.01


def test_rolling_without_slip_invariant():
    world = tip_grasp_world(rho=25.0)
    rho = 25.0
    total_rot = 0.0
    diff_surface = 0.0
    v = 30.0
    for k in range(120):
        vv = v if k % 3 else 0.5 * v  # non-uniform stream
        before = world.objects[0].orientation
        world = step(CFG, world, rotate_cmd(vv))
        total_rot += world.objects[0].orientation - before
        diff_surface += (vv * CFG.tick_dt - (-vv * CFG.tick_dt))
        forces = [c.normal_force for c in world.contacts]
        assert abs(forces[0] - forces[1]) < 1e-9  # quasi-static balance
    assert abs(abs(total_rot) * rho - diff_surface / 2) < 1e-6


def test_conveyance_translates_by_surface_displacement():
    world = corridor_world()
    start = [o.position for o in world.objects]
    v, dist = 40.0, 150.0
    for _ in range(int(dist / (v * CFG.tick_dt))):
        world = step(CFG, world, convey_cmd(v))
    for o, p0 in zip(world.objects, start):
        d = o.position - p0
        assert d.y == pytest.approx(-dist, abs=1e-6)
        assert abs(d.x) < 1e-6
        assert abs(o.orientation) < 1e-9
        assert o.held


def test_multi_object_conveyance_no_interpenetration():
    world = corridor_world(rho=50.0, ys=(200.0, 320.0, 440.0))
    v = 40.0
    min_clearance = math.inf
    for _ in range(int(150.0 / (v * CFG.tick_dt))):
        world = step(CFG, world, convey_cmd(v))
        deltas = [abs(world.objects[i + 1].position.y - world.objects[i].position.y)
                  for i in range(2)]
        min_clearance = min(min_clearance, min(deltas))
        shifts = [world.objects[i].position.y for i in range(3)]
        assert max(shifts) - min(shifts) == pytest.approx(240.0, abs=1e-6)
    assert min_clearance > 2 * 50.0  # center spacing never below a diameter


def test_same_sign_conveyance_cancels_rotation():
    world = corridor_world(ys=(320.0,))
    for _ in range(100):
        world = step(CFG, world, convey_cmd(25.0))
    assert abs(world.objects[0].orientation) < 1e-9


def test_unheld_objects_are_anchored():
    world = tip_grasp_world(held=False)
    p0 = world.objects[0].position
    for _ in range(50):
        world = step(CFG, world, rotate_cmd(20.0))
    assert world.objects[0].position == p0
    assert world.objects[0].orientation == 0.0


def test_grasp_command_and_drop_event():
    world = tip_grasp_world(held=False)
    world = step(CFG, world, WorldCommand(grasp="obj"))
    assert world.objects[0].held
    assert any(e.type == "object_grasped" for e in world.events)
    # open wide: forces vanish -> drop event, never a silent loss
    opened = world
    g = GEOM
    for _ in range(400):
        opened = step(CFG, opened, WorldCommand(
            left=ActuatorCommand(dtheta4_rate=g.dtheta4_rate_max),
            right=ActuatorCommand(dtheta4_rate=g.dtheta4_rate_max)))
        if any(e.type == "object_dropped" for e in opened.events):
            break
    else:
        pytest.fail("no drop event")
    assert not opened.objects[0].held


def test_release_event():
    world = tip_grasp_world(held=True)
    world = step(CFG, world, WorldCommand(release="obj"))
    assert not world.objects[0].held
    assert any(e.type == "object_released" for e in world.events)


def test_grasp_gap_force_examples():
    # penetration 2 mm on the default spring: 0.05*2 + 0.002*8 = 0.116 N
    world = tip_grasp_world(delta=2.0)
    fl, fr = grasp_gap_force(CFG, world, "obj")
    assert fl == pytest.approx(0.116, abs=1e-9)
    assert fr == pytest.approx(0.116, abs=1e-9)
    # gap exactly the object width: zero force
    world = tip_grasp_world(delta=0.0, held=False)
    fl, fr = grasp_gap_force(CFG, world, "obj")
    assert fl == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(NoContactError):
        grasp_gap_force(CFG, world, "missing")


def test_grasp_gap_force_outside_grip():
    world = make_world(CFG)
    world = add_object(world, SimObject(id="far", shape=Circle(10.0),
                                        position=Vec2(600.0, 100.0)))
    with pytest.raises(NoContactError):
        grasp_gap_force(CFG, world, "far")


def test_spring_overtravel_warning():
    spring = CFG.mechanics.spring()
    world = tip_grasp_world(delta=spring.delta_max + 2.0, held=False)
    assert any(e.type == "spring_overtravel" for e in world.events) or any(
        c.overtravel for c in world.contacts)
    forces = [c.normal_force for c in world.contacts]
    cap = spring_force(spring, spring.delta_max)
    assert all(f <= cap + 1e-9 for f in forces)


def test_buckling_event_caps_force():
    # long appendages (weak cap) pressed hard: cap = M_b / L1 < spring force
    center = Vec2(0.0, 620.0)
    world = tip_grasp_world(rho=30.0, delta=12.0, center=center, held=False)
    world = step(CFG, world, WorldCommand())  # events are tick artifacts
    buckled = [c for c in world.contacts if c.buckled]
    assert buckled, "expected buckling at this penetration"
    assert any(e.type == "buckling" for e in world.events)
    model = CFG.mechanics.buckling()
    for c in buckled:
        state = world.left if c.side == "left" else world.right
        assert c.normal_force == pytest.approx(model.M_b / state.L1, abs=1e-9)


def test_ellipse_support_contact():
    world = tip_grasp_world(shape=Ellipse(40.0, 20.0), delta=3.0, held=False)
    assert len(world.contacts) == 2
    for c in world.contacts:
        assert c.penetration == pytest.approx(3.0, abs=1e-9)
        assert c.lever == pytest.approx(40.0, abs=1e-9)


def test_snapshot_restore_identity():
    world = tip_grasp_world()
    world = step(CFG, world, rotate_cmd(10.0))
    snap = snapshot(world)
    back = restore(snap)
    assert snapshot_line(back) == snapshot_line(world)
    assert back.left == world.left
    assert back.objects == world.objects


def test_snapshot_schema_version_gate():
    snap = snapshot(make_world(CFG))
    snap["schema_version"] = 999
    with pytest.raises(SchemaVersionError):
        restore(snap)


def test_determinism_identical_streams():
    def run():
        world = tip_grasp_world()
        lines = [snapshot_line(world)]
        for k in range(60):
            world = step(CFG, world, rotate_cmd(15.0 if k % 2 else 7.5))
        lines.append(snapshot_line(world))
        return lines

    assert run() == run()


def test_mirrored_world_states():
    # mirroring targets across x=0 and swapping sides yields mirrored tips
    a = 0.5 * (GEOM.a_min + GEOM.a_max)
    t = Vec2(40.0, 420.0)
    left = inverse_kinematics(GEOM, world_to_local(CFG, t, "left"), a, side="left")
    right = inverse_kinematics(GEOM, world_to_local(CFG, Vec2(-t.x, t.y), "right"),
                               a, side="right")
    fl = appendage_frame(CFG, left, "left")
    fr = appendage_frame(CFG, right, "right")
    assert fl.X.x == pytest.approx(-fr.X.x, abs=1e-12)
    assert fl.X.y == pytest.approx(fr.X.y, abs=1e-12)
    assert fl.E2.x == pytest.approx(-fr.E2.x, abs=1e-12)


def test_width_consistency_enforced():
    a = 0.5 * (GEOM.a_min + GEOM.a_max)
    left = inverse_kinematics(GEOM, Vec2(100.0, 400.0), a, side="left")
    with pytest.raises(ValueError, match="inconsistent"):
        make_world(CFG, width=GEOM.a_to_width(a) + 10.0, left=left)


def test_hysteresis_branch_switches_on_retreat():
    from tapegrip.config import MechanicsParams
    mech = MechanicsParams(spring_unloading=(0.04, 0.0, 0.0018))
    cfg = replace(CFG, mechanics=mech)
    spring = mech.spring()
    world = tip_grasp_world(delta=5.0, held=False)
    world = replace(world, events=(), estimates={})
    # rebuild under the hysteretic config so the previous-contact table exists
    world = step(cfg, world, WorldCommand())
    loading = [c.normal_force for c in world.contacts]
    assert loading[0] == pytest.approx(spring_force(spring, 5.0, "loading"), abs=1e-9)
    # open the grip slightly: penetration decreases -> unloading branch
    g = GEOM
    opened = step(cfg, world, WorldCommand(
        left=ActuatorCommand(dtheta4_rate=0.05),
        right=ActuatorCommand(dtheta4_rate=0.05)))
    retreating = [c for c in opened.contacts if c.object_id == "obj"]
    for c in retreating:
        assert c.normal_force == pytest.approx(
            spring_force(spring, c.penetration, "unloading"), abs=1e-9)
        assert c.normal_force < spring_force(spring, c.penetration, "loading")
