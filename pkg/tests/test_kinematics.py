import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from fk_oracle import forward_oracle, inverse_oracle
from tapegrip.config import GripperGeometry, default_config
from tapegrip.errors import NoSolutionError, OutOfRangeError, OutOfWorkspaceError
from tapegrip.geometry import Vec2
from tapegrip.kinematics import (
    ActuatorCommand,
    apply_command,
    closure_residuals,
    forward_kinematics,
    guide_ring_position,
    inverse_kinematics,
    theta1_to_theta4,
    theta4_to_theta1,
)

GEOM = default_config().geometry

# Frozen from the dense-scan bisection oracle (tests/fk_oracle.py).
FK_500_60_80_TIP = (40.92340653132355, 215.04814333205192)
IK_0_400_80 = {
    "L1": 399.71865105346285,
    "L2": 427.2879591095447,
    "theta1_deg": 92.14909562686402,
    "theta2_deg": 98.77374763526635,
    "L": 872.3961701266722,
}


def grid(n_L=10, n_t4=10, n_a=5):
    for iL in range(n_L):
        L = GEOM.L_min + (GEOM.L_max - GEOM.L_min) * iL / (n_L - 1)
        for i4 in range(n_t4):
            t4 = GEOM.theta4_min + (GEOM.theta4_max - GEOM.theta4_min) * i4 / (n_t4 - 1)
            for ia in range(n_a):
                a = GEOM.a_min + (GEOM.a_max - GEOM.a_min) * ia / (n_a - 1)
                yield L, t4, a


def test_fk_residuals_on_grid():
    worst = 0.0
    prev = None
    for L, t4, a in grid():
        prev = forward_kinematics(GEOM, L, t4, a, initial=prev)
        worst = max(worst, max(abs(r) for r in closure_residuals(GEOM, prev)))
    assert worst < 1e-9


def test_fk_matches_frozen_oracle_value():
    st_ = forward_kinematics(GEOM, 500.0, math.radians(60.0), 80.0)
    assert st_.tip.x == pytest.approx(FK_500_60_80_TIP[0], abs=1e-9)
    assert st_.tip.y == pytest.approx(FK_500_60_80_TIP[1], abs=1e-9)


def test_fk_agrees_with_live_oracle_on_random_configs():
    rng = random.Random(20240811)
    for _ in range(30):
        L = rng.uniform(GEOM.L_min, GEOM.L_max)
        t4 = rng.uniform(GEOM.theta4_min, GEOM.theta4_max)
        a = rng.uniform(GEOM.a_min, GEOM.a_max)
        got = forward_kinematics(GEOM, L, t4, a)
        want = forward_oracle(GEOM, L, t4, a)
        assert want is not None
        err = math.hypot(got.tip.x - want["tip"][0], got.tip.y - want["tip"][1])
        assert err < 0.01


def test_ik_matches_frozen_oracle_value():
    st_ = inverse_kinematics(GEOM, Vec2(0.0, 400.0), 80.0)
    assert st_.L1 == pytest.approx(IK_0_400_80["L1"], abs=1e-9)
    assert st_.L2 == pytest.approx(IK_0_400_80["L2"], abs=1e-9)
    assert math.degrees(st_.theta1) == pytest.approx(IK_0_400_80["theta1_deg"], abs=1e-10)
    assert math.degrees(st_.theta2) == pytest.approx(IK_0_400_80["theta2_deg"], abs=1e-10)
    assert st_.L == pytest.approx(IK_0_400_80["L"], abs=1e-9)
    live = inverse_oracle(GEOM, 0.0, 400.0, 80.0)
    assert live["outer"]["dist_check"] < 1e-9
    assert live["inner"]["line_check"] < 1e-9


def test_ik_fk_roundtrip_grid():
    prev = None
    for L, t4, a in grid():
        prev = forward_kinematics(GEOM, L, t4, a, initial=prev)
        back = inverse_kinematics(GEOM, prev.tip, a)
        assert (back.tip - prev.tip).norm() < 1e-6
        assert abs(back.L - L) < 1e-8
        assert abs(back.theta4 - t4) < 1e-8
        assert abs(back.L1 - prev.L1) < 1e-6
        assert abs(back.L2 - prev.L2) < 1e-6


def test_fk_of_ik_identity():
    target = Vec2(-60.0, 380.0)
    ik = inverse_kinematics(GEOM, target, 95.0)
    fk = forward_kinematics(GEOM, ik.L, ik.theta4, 95.0)
    assert (fk.tip - target).norm() < 1e-6


def test_degenerate_symmetric_collapse():
    # r = 0, b = 0, a = 0: both sections coincide, theta2 = theta1,
    # L1 = L2 = L/2, tip on the ray at L/2.
    geom = GripperGeometry(b=0.0, r0=0.0, a_min=0.0, L_min=100.0)
    st_ = forward_kinematics(geom, 300.0, math.radians(60.0), 0.0)
    assert st_.theta2 == pytest.approx(st_.theta1, abs=1e-10)
    assert st_.L1 == pytest.approx(150.0, abs=1e-9)
    assert st_.L2 == pytest.approx(150.0, abs=1e-9)
    assert st_.tip.norm() == pytest.approx(150.0, abs=1e-9)


def test_no_solution_near_closure_minimum():
    geom = GripperGeometry(L_min=420.0)
    with pytest.raises(NoSolutionError):
        # below the geometric floor (the tape cannot even span the extruders)
        forward_kinematics(geom, 60.0, math.radians(60.0), 80.0)


def test_ik_radial_outer_boundary():
    with pytest.raises(OutOfWorkspaceError) as exc:
        inverse_kinematics(GEOM, Vec2(0.0, GEOM.L_max + 100.0), 80.0)
    assert exc.value.boundary == "radial_outer"


def test_ik_radial_inner_boundary():
    with pytest.raises(OutOfWorkspaceError) as exc:
        inverse_kinematics(GEOM, Vec2(60.0, 120.0), 80.0)
    assert exc.value.boundary == "radial_inner"


def test_ik_angular_boundaries():
    with pytest.raises(OutOfWorkspaceError) as exc:
        inverse_kinematics(GEOM, Vec2(-480.0, 260.0), 80.0)
    assert exc.value.boundary == "angular_left"
    with pytest.raises(OutOfWorkspaceError) as exc:
        inverse_kinematics(GEOM, Vec2(520.0, 160.0), 80.0)
    assert exc.value.boundary == "angular_right"


# -- theta1 <-> theta4 -------------------------------------------------------

def test_theta4_90_gives_ring_vector_angle():
    want = math.atan2(GEOM.c + GEOM.L4, -GEOM.d)
    assert theta4_to_theta1(GEOM, math.pi / 2) == pytest.approx(want, abs=1e-15)


def test_theta1_zero_when_ring_on_x_ray():
    # Guiding ring on the +x axis ray: needs sin(theta4) = -c/L4.
    geom = GripperGeometry(theta4_min=-math.pi / 2, theta4_max=math.pi / 2)
    t4 = math.asin(-geom.c / geom.L4)
    v = guide_ring_position(geom, t4)
    assert v.y == pytest.approx(0.0, abs=1e-12) and v.x > 0
    assert theta4_to_theta1(geom, t4) == pytest.approx(0.0, abs=1e-12)


def test_theta_maps_mutually_inverse():
    worst = 0.0
    for k in range(1000):
        t4 = GEOM.theta4_min + (GEOM.theta4_max - GEOM.theta4_min) * k / 999
        t1 = theta4_to_theta1(GEOM, t4)
        back = theta1_to_theta4(GEOM, t1)
        worst = max(worst, abs(back - t4))
    assert worst < 1e-10


def test_theta_maps_out_of_range():
    with pytest.raises(OutOfRangeError):
        theta4_to_theta1(GEOM, GEOM.theta4_max + 0.1)
    with pytest.raises(OutOfRangeError):
        theta1_to_theta4(GEOM, theta4_to_theta1(GEOM, GEOM.theta4_max) + 0.2)


def test_theta1_independent_of_width():
    # Fixed theta4: sweeping a changes theta2/L2 but not theta1.
    t4 = math.radians(40.0)
    ref = forward_kinematics(GEOM, 800.0, t4, GEOM.a_min)
    for k in range(10):
        a = GEOM.a_min + (GEOM.a_max - GEOM.a_min) * k / 9
        st_ = forward_kinematics(GEOM, 800.0, t4, a)
        assert abs(st_.theta1 - ref.theta1) < 1e-12
        if a != GEOM.a_min:
            assert st_.theta2 != ref.theta2


# -- apply_command -----------------------------------------------------------

def test_zero_command_identity():
    st_ = forward_kinematics(GEOM, 700.0, math.radians(50.0), 80.0)
    new, feed = apply_command(GEOM, st_, ActuatorCommand(), 0.01)
    assert new is st_
    assert feed == 0.0


def test_conveyance_leaves_shape_unchanged():
    st_ = forward_kinematics(GEOM, 700.0, math.radians(50.0), 80.0)
    new, feed = apply_command(GEOM, st_, ActuatorCommand(dL1_rate=-40.0, dL2_rate=40.0), 0.01)
    assert (new.tip - st_.tip).norm() < 1e-9
    assert new.L == st_.L and new.theta1 == st_.theta1 and new.theta2 == st_.theta2
    assert feed == pytest.approx(0.4, abs=1e-15)


def test_rate_clamping():
    st_ = forward_kinematics(GEOM, 700.0, math.radians(50.0), 80.0)
    new, feed = apply_command(GEOM, st_, ActuatorCommand(dL1_rate=1e6), 1.0)
    assert new.L - st_.L <= GEOM.dL_rate_max + 1e-9
    new, _ = apply_command(GEOM, st_, ActuatorCommand(dtheta4_rate=100.0), 1.0)
    assert new.theta4 <= GEOM.theta4_max + 1e-12


def test_length_limit_scales_both_feeds():
    st_ = forward_kinematics(GEOM, GEOM.L_max - 0.5, math.radians(50.0), 80.0)
    new, feed = apply_command(GEOM, st_, ActuatorCommand(dL1_rate=100.0, dL2_rate=100.0), 0.01)
    assert new.L == GEOM.L_max
    assert feed == pytest.approx(0.25, abs=1e-12)  # both feeds scaled by 1/4


def test_ellipse_sweep_at_zero_radius():
    # Constant L, r=0: the tip traces the ellipse with foci at the extruder
    # exits: |X - E_outer| + |X - E_inner| = L exactly.
    geom = GripperGeometry(r0=0.0, L_min=200.0)
    L, a = 650.0, 80.0
    e2 = Vec2(a, -geom.b)
    worst = 0.0
    prev = None
    for k in range(200):
        t4 = geom.theta4_min + (geom.theta4_max - geom.theta4_min) * k / 199
        prev = forward_kinematics(geom, L, t4, a, initial=prev)
        total = prev.tip.norm() + (prev.tip - e2).norm()
        worst = max(worst, abs(total - L))
    assert worst < 1e-6


def test_mirror_symmetry_via_sides():
    # The side label carries no geometry: mirroring happens in the world
    # composition, so identical local inputs give identical local states.
    a = 90.0
    left = forward_kinematics(GEOM, 750.0, math.radians(30.0), a, side="left")
    right = forward_kinematics(GEOM, 750.0, math.radians(30.0), a, side="right")
    assert left.tip == right.tip and left.L1 == right.L1


@settings(max_examples=40, deadline=None)
@given(
    L=st.floats(min_value=GEOM.L_min, max_value=GEOM.L_max),
    t4=st.floats(min_value=GEOM.theta4_min, max_value=GEOM.theta4_max),
    a=st.floats(min_value=GEOM.a_min, max_value=GEOM.a_max),
)
def test_property_fk_invariants(L, t4, a):
    st_ = forward_kinematics(GEOM, L, t4, a)
    g1, g2, g3 = closure_residuals(GEOM, st_)
    assert max(abs(g1), abs(g2), abs(g3)) < 1e-9
    assert st_.L1 > 0 and st_.L2 > 0
    assert 0.0 < st_.arc_sweep < 2.0 * math.pi
    assert st_.theta3 == st_.theta1 + st_.theta2
    back = inverse_kinematics(GEOM, st_.tip, a)
    assert (back.tip - st_.tip).norm() < 1e-6


def test_theta1_roundtrip_direction():
    # theta1 -> theta4 -> theta1 over the reachable appendage-angle range
    lo = theta4_to_theta1(GEOM, GEOM.theta4_min)
    hi = theta4_to_theta1(GEOM, GEOM.theta4_max)
    worst = 0.0
    for k in range(1000):
        t1 = lo + (hi - lo) * k / 999
        back = theta4_to_theta1(GEOM, theta1_to_theta4(GEOM, t1))
        worst = max(worst, abs(back - t1))
    assert worst < 1e-10
