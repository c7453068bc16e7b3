"""Appendage triangle kinematics.

One appendage is modeled in its local frame: the outer extruder exit is the
origin, the inner extruder exit sits at (a, -b), and the workspace extends
into +y.  The tape leaves the origin along angle theta1 for length L1,
wraps the rolling joint (a constant-curvature arc of radius r and sweep
theta1 - theta2 + pi), and returns along angle theta2 for length L2 to the
inner extruder.  The guiding ring on the angular control beam fixes theta1:

    v = (-d, c) + L4 * (cos theta4, sin theta4),     theta1 = angle(v)

and the rolling-joint center is

    X = L1 * v_hat + r * rot(-90) * v_hat.

Forward kinematics solves the three closure constraints

    L  = L1 + L2 + r*(theta1 - theta2 + pi)
    L1*sin(t1) + r*sin(t1 - pi/2) = L2*sin(t2) + r*sin(t2 + pi/2) - b
    L1*cos(t1) + r*cos(t1 - pi/2) = L2*cos(t2) + r*cos(t2 + pi/2) + a

by damped Newton iteration on (L1, L2, theta2) with theta1 fixed by the
beam angle; inverse kinematics is a closed-form tangent construction.

The rolling-joint radius is held at the configured no-load value r0; the
load-dependent radius reduction belongs to the mechanics layer and is not
fed back into positions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .config import GripperGeometry
from .errors import NoSolutionError, NotConvergedError, OutOfRangeError, OutOfWorkspaceError
from .geometry import Vec2, unit, wrap_angle

# Solver internals: polish well below the public residual budget.
_NEWTON_TOL = 1e-12
_MIN_SECTION = 1.0   # solutions with a straight section under 1 mm are rejected
_COLD_SCAN = 181     # theta2 samples for the cold-start scan


@dataclass(frozen=True)
class ActuatorCommand:
    """Per-appendage rate command: tape feed at each extruder plus beam slew.

    Positive feed extrudes tape into the appendage.  dL1 acts at the outer
    extruder, dL2 at the inner one; their sum changes the total length and
    their difference drives conveyance.
    """

    dL1_rate: float = 0.0      # mm/s
    dL2_rate: float = 0.0      # mm/s
    dtheta4_rate: float = 0.0  # rad/s


@dataclass(frozen=True)
class AppendageState:
    """Solved triangle configuration of one appendage (local frame)."""

    side: str            # "left" | "right" (label only; geometry is frame-local)
    L: float             # total tape length (mm)
    a: float             # base width (mm)
    theta4: float        # control-beam angle (rad)
    L1: float            # outer straight section (mm)
    L2: float            # inner straight section (mm)
    theta1: float        # outer-section angle (rad)
    theta2: float        # inner-section angle (rad)
    r: float             # rolling-joint radius (mm)
    tip: Vec2            # rolling-joint center X

    @property
    def L3(self) -> float:
        """Arc length of the rolling joint."""
        return self.r * self.arc_sweep

    @property
    def arc_sweep(self) -> float:
        return self.theta1 - self.theta2 + math.pi

    @property
    def theta3(self) -> float:
        """Derived bend angle, theta1 - theta3 = -theta2."""
        return self.theta1 + self.theta2


def guide_ring_position(geom: GripperGeometry, theta4: float) -> Vec2:
    """Guiding-ring location v on the angular control beam."""
    return Vec2(-geom.d + geom.L4 * math.cos(theta4),
                geom.c + geom.L4 * math.sin(theta4))


def theta4_to_theta1(geom: GripperGeometry, theta4: float, check_limits: bool = True) -> float:
    if check_limits and not (geom.theta4_min - 1e-9 <= theta4 <= geom.theta4_max + 1e-9):
        raise OutOfRangeError(
            f"theta4 = {theta4:.6f} outside [{geom.theta4_min:.6f}, {geom.theta4_max:.6f}]"
        )
    return guide_ring_position(geom, theta4).angle()


def theta1_to_theta4(geom: GripperGeometry, theta1: float, check_limits: bool = True) -> float:
    """Invert the beam-to-appendage angle map.

    From cross(u1, v) = 0:  sin(theta4 - theta1) = -(c*cos t1 + d*sin t1)/L4.
    Of the two asin branches the one with cos(theta4 - theta1) >= 0 keeps the
    ring in front of the extruder (v . u1 > 0) for beams longer than the
    pivot offset; that principal branch is the supported one.
    """
    s = -(geom.c * math.cos(theta1) + geom.d * math.sin(theta1)) / geom.L4
    if abs(s) > 1.0:
        raise OutOfRangeError(f"no beam angle reaches appendage angle {theta1:.6f}")
    candidates = [theta1 + math.asin(s), theta1 + math.pi - math.asin(s)]
    valid = []
    for cand in candidates:
        cand = wrap_angle(cand)
        v = guide_ring_position(geom, cand)
        if v.dot(unit(theta1)) <= 0.0:
            continue
        if abs(wrap_angle(v.angle() - theta1)) > 1e-9:
            continue
        valid.append(cand)
    if not valid:
        raise OutOfRangeError(f"appendage angle {theta1:.6f} unreachable by the control beam")
    theta4 = min(valid, key=lambda t: 0 if geom.theta4_min <= t <= geom.theta4_max else 1)
    if check_limits and not (geom.theta4_min - 1e-9 <= theta4 <= geom.theta4_max + 1e-9):
        raise OutOfRangeError(
            f"theta4 = {theta4:.6f} outside [{geom.theta4_min:.6f}, {geom.theta4_max:.6f}]"
        )
    return theta4


def closure_residuals(geom: GripperGeometry, state: AppendageState) -> tuple[float, float, float]:
    """The three constraint residuals (length, y-closure, x-closure) in mm."""
    t1, t2, r = state.theta1, state.theta2, state.r
    g1 = state.L1 + state.L2 + r * (t1 - t2 + math.pi) - state.L
    g2 = (state.L1 * math.sin(t1) + r * math.sin(t1 - math.pi / 2)
          - state.L2 * math.sin(t2) - r * math.sin(t2 + math.pi / 2) + geom.b)
    g3 = (state.L1 * math.cos(t1) + r * math.cos(t1 - math.pi / 2)
          - state.L2 * math.cos(t2) - r * math.cos(t2 + math.pi / 2) - state.a)
    return (g1, g2, g3)


def tip_from_outer(theta1: float, L1: float, r: float) -> Vec2:
    u1 = unit(theta1)
    return L1 * u1 + r * u1.perp_cw()


def _closure_linear(theta1: float, theta2: float, a: float, b: float, r: float):
    """Solve the two planar closure equations for (L1, L2) at fixed angles.

    Returns (L1, L2) or None when the sections are parallel (singular).
    """
    c1, s1 = math.cos(theta1), math.sin(theta1)
    c2, s2 = math.cos(theta2), math.sin(theta2)
    # L1*u1 - L2*u2 = (a, -b) + r*rot(+90)u2 - r*rot(-90)u1
    det = -c1 * s2 + c2 * s1
    if abs(det) < 1e-14:
        return None
    rx = a + r * (-s2) - r * s1
    ry = -b + r * c2 + r * c1
    L1 = (rx * (-s2) - ry * (-c2)) / det
    L2 = (c1 * ry - s1 * rx) / det
    return (L1, L2)


def _length_residual(theta1: float, theta2: float, a: float, b: float, r: float, L: float):
    lin = _closure_linear(theta1, theta2, a, b, r)
    if lin is None:
        return None
    L1, L2 = lin
    return (L1 + L2 + r * (theta1 - theta2 + math.pi) - L, L1, L2)


def forward_kinematics(geom: GripperGeometry, L: float, theta4: float, a: float,
                       side: str = "left",
                       initial: AppendageState | None = None,
                       max_iter: int = 60) -> AppendageState:
    """Solve the appendage triangle for actuator inputs (L, theta4, a).

    ``initial`` warm-starts the Newton iteration (typically the previous
    tick's state); a coarse theta2 scan seeds cold starts.  Raises
    NoSolutionError when the triangle cannot close (including solutions
    within 1 mm of the closure minimum, which are treated as unreachable)
    and NotConvergedError when the iteration stalls.
    """
    r = geom.r0
    b = geom.b
    theta1 = theta4_to_theta1(geom, theta4, check_limits=False)

    bracketed = True
    if initial is not None and abs(initial.a - a) < 50.0:
        guesses = [(initial.L1, initial.L2, initial.theta2)]
    else:
        guesses, bracketed = _cold_start_guesses(theta1, a, b, r, L)

    state = None
    for L1, L2, theta2 in guesses:
        solved = _newton_solve(theta1, L1, L2, theta2, a, b, r, L, max_iter)
        if solved is not None:
            state = solved
            break
    if state is None:
        # Warm start failed; retry cold.
        if initial is not None:
            return forward_kinematics(geom, L, theta4, a, side=side, initial=None,
                                      max_iter=max_iter)
        if not bracketed:
            raise NoSolutionError(
                f"triangle cannot close for L={L}, theta4={theta4:.4f}, a={a}"
            )
        res = _best_residual(theta1, guesses[0], a, b, r, L)
        raise NotConvergedError(
            f"FK did not converge for L={L}, theta4={theta4:.4f}, a={a}", res
        )

    L1, L2, theta2 = state
    sweep = theta1 - theta2 + math.pi
    if L1 < _MIN_SECTION or L2 < _MIN_SECTION or not 0.0 < sweep < 2.0 * math.pi:
        raise NoSolutionError(
            f"configuration within 1 mm of the closure minimum "
            f"(L1={L1:.3f}, L2={L2:.3f} mm)"
        )
    return AppendageState(
        side=side, L=L, a=a, theta4=theta4,
        L1=L1, L2=L2, theta1=theta1, theta2=theta2, r=r,
        tip=tip_from_outer(theta1, L1, r),
    )


def _cold_start_guesses(theta1, a, b, r, L):
    """Seed triples (L1, L2, theta2) for the Newton iteration.

    The closure system has a pole at theta2 = theta1 (parallel sections) and
    the physical root can sit arbitrarily close to it for long thin
    triangles, so theta2 is sampled log-spaced around theta1; sign changes
    of the length residual are bisected into seeds.  Falls back to the
    symmetric-collapse seed (degenerate a = b = r = 0 geometries have their
    root exactly at the pole).
    """
    offsets = [1e-5 * (0.97 * math.pi / 1e-5) ** (k / (_COLD_SCAN - 1))
               for k in range(_COLD_SCAN)]
    thetas = sorted([theta1 - o for o in offsets] + [theta1 + o for o in offsets])
    samples = []
    for theta2 in thetas:
        res = _length_residual(theta1, theta2, a, b, r, L)
        if res is not None:
            samples.append((theta2, res[0]))
    roots = []
    for (t_lo, g_lo), (t_hi, g_hi) in zip(samples, samples[1:]):
        if g_lo * g_hi > 0 or t_lo < theta1 < t_hi:
            continue  # same sign, or bracket straddles the pole
        for _ in range(60):
            mid = 0.5 * (t_lo + t_hi)
            rm = _length_residual(theta1, mid, a, b, r, L)
            if rm is None:
                break
            if g_lo * rm[0] <= 0:
                t_hi = mid
            else:
                t_lo, g_lo = mid, rm[0]
        theta2 = 0.5 * (t_lo + t_hi)
        res = _length_residual(theta1, theta2, a, b, r, L)
        if res is None:
            continue
        g, L1, L2 = res
        sweep = theta1 - theta2 + math.pi
        if L1 > 0.0 and L2 > 0.0 and 0.0 < sweep < 2.0 * math.pi:
            roots.append((L1, L2, theta2))
    if roots:
        # Prefer the branch with the widest rolling-joint wrap.
        roots.sort(key=lambda rt: theta1 - rt[2] + math.pi, reverse=True)
        return roots, True
    # Symmetric-collapse fallback: root at the pole itself.
    return [(0.5 * L, 0.5 * L, theta1 - 1e-7), (0.5 * L, 0.5 * L, theta1 + 1e-7)], False


def _residual_vec(theta1, L1, L2, theta2, a, b, r, L):
    c1, s1 = math.cos(theta1), math.sin(theta1)
    c2, s2 = math.cos(theta2), math.sin(theta2)
    g1 = L1 + L2 + r * (theta1 - theta2 + math.pi) - L
    g2 = L1 * s1 - r * c1 - L2 * s2 - r * c2 + b
    g3 = L1 * c1 + r * s1 - L2 * c2 + r * s2 - a
    return g1, g2, g3, c1, s1, c2, s2


def _best_residual(theta1, guess, a, b, r, L):
    g1, g2, g3, *_ = _residual_vec(theta1, guess[0], guess[1], guess[2], a, b, r, L)
    return max(abs(g1), abs(g2), abs(g3))


def _newton_solve(theta1, L1, L2, theta2, a, b, r, L, max_iter):
    """Damped Newton on (L1, L2, theta2); returns the triple or None."""
    g1, g2, g3, c1, s1, c2, s2 = _residual_vec(theta1, L1, L2, theta2, a, b, r, L)
    norm = abs(g1) + abs(g2) + abs(g3)
    for _ in range(max_iter):
        if norm < _NEWTON_TOL:
            return (L1, L2, theta2)
        # Jacobian rows d(g1,g2,g3)/d(L1,L2,theta2)
        j11, j12, j13 = 1.0, 1.0, -r
        j21, j22, j23 = s1, -s2, -L2 * c2 + r * s2
        j31, j32, j33 = c1, -c2, L2 * s2 + r * c2
        det = (j11 * (j22 * j33 - j23 * j32)
               - j12 * (j21 * j33 - j23 * j31)
               + j13 * (j21 * j32 - j22 * j31))
        if abs(det) < 1e-14:
            return None
        # Cramer's rule for the 3x3 step
        d1 = (g1 * (j22 * j33 - j23 * j32)
              - j12 * (g2 * j33 - j23 * g3)
              + j13 * (g2 * j32 - j22 * g3))
        d2 = (j11 * (g2 * j33 - j23 * g3)
              - g1 * (j21 * j33 - j23 * j31)
              + j13 * (j21 * g3 - g2 * j31))
        d3 = (j11 * (j22 * g3 - g2 * j32)
              - j12 * (j21 * g3 - g2 * j31)
              + g1 * (j21 * j32 - j22 * j31))
        step1, step2, step3 = d1 / det, d2 / det, d3 / det
        # Damping: halve until the residual shrinks.
        t = 1.0
        for _ in range(30):
            n1, n2, n3 = L1 - t * step1, L2 - t * step2, theta2 - t * step3
            h1, h2, h3, nc1, ns1, nc2, ns2 = _residual_vec(theta1, n1, n2, n3, a, b, r, L)
            new_norm = abs(h1) + abs(h2) + abs(h3)
            if new_norm < norm or new_norm < _NEWTON_TOL:
                L1, L2, theta2 = n1, n2, n3
                g1, g2, g3, c1, s1, c2, s2 = h1, h2, h3, nc1, ns1, nc2, ns2
                norm = new_norm
                break
            t *= 0.5
        else:
            return None
    return (L1, L2, theta2) if norm < _NEWTON_TOL else None


def inverse_kinematics(geom: GripperGeometry, target: Vec2, a: float,
                       side: str = "left") -> AppendageState:
    """Closed-form geometric inverse kinematics: tip lands exactly on target.

    Each straight section is the tangent from its extruder exit to the
    circle of radius r0 around the target, on the winding consistent with
    the rolling bend curling outboard.
    """
    r = geom.r0
    d1_sq = target.x ** 2 + target.y ** 2
    if d1_sq <= r * r:
        raise OutOfWorkspaceError("radial_inner", "target inside the rolling-joint circle of the outer extruder")
    L1 = math.sqrt(d1_sq - r * r)
    theta1 = math.atan2(target.y, target.x) + math.atan2(r, L1)

    # Classify against the reachable appendage-angle range (the beam map is
    # monotone over the workspace); boundary checks carry float-noise slack
    # so exact-limit forward solutions round-trip.
    t1_lo = theta4_to_theta1(geom, geom.theta4_min, check_limits=False)
    t1_hi = theta4_to_theta1(geom, geom.theta4_max, check_limits=False)
    if theta1 > t1_hi + 1e-9:
        raise OutOfWorkspaceError("angular_left",
                                  f"appendage angle {theta1:.4f} beyond reach {t1_hi:.4f}")
    if theta1 < t1_lo - 1e-9:
        raise OutOfWorkspaceError("angular_right",
                                  f"appendage angle {theta1:.4f} below reach {t1_lo:.4f}")
    try:
        theta4 = theta1_to_theta4(geom, theta1, check_limits=False)
    except OutOfRangeError as exc:
        raise OutOfWorkspaceError("angular_left", str(exc)) from exc

    rel = target - Vec2(a, -geom.b)
    d2_sq = rel.x ** 2 + rel.y ** 2
    if d2_sq <= r * r:
        raise OutOfWorkspaceError("radial_inner", "target inside the rolling-joint circle of the inner extruder")
    L2 = math.sqrt(d2_sq - r * r)
    theta2 = rel.angle() - math.atan2(r, L2)

    sweep = theta1 - theta2 + math.pi
    if not 0.0 < sweep < 2.0 * math.pi:
        raise OutOfWorkspaceError("radial_inner",
                                  f"rolling-joint sweep {sweep:.4f} rad outside (0, 2*pi)")
    L = L1 + L2 + r * sweep
    if L > geom.L_max + 1e-6:
        raise OutOfWorkspaceError("radial_outer",
                                  f"required length {L:.2f} exceeds L_max {geom.L_max}")
    if L < geom.L_min - 1e-6:
        raise OutOfWorkspaceError("radial_inner",
                                  f"required length {L:.2f} below L_min {geom.L_min}")
    if L1 < _MIN_SECTION or L2 < _MIN_SECTION:
        raise OutOfWorkspaceError("radial_inner", "straight section shorter than 1 mm")
    return AppendageState(
        side=side, L=L, a=a, theta4=theta4,
        L1=L1, L2=L2, theta1=theta1, theta2=theta2, r=r,
        tip=target,
    )


def apply_command(geom: GripperGeometry, state: AppendageState, cmd: ActuatorCommand,
                  dt: float, a: float | None = None,
                  max_iter: int = 60) -> tuple[AppendageState, float]:
    """Advance one appendage by a rate command over dt.

    Returns the new state plus the conveyance displacement of the inner
    surface this tick: the signed tape feed through the inner section,
    positive toward the tip.  Feed rates clamp to the per-extruder limit and
    the total length clamps to [L_min, L_max] (both feeds scale together so
    conveyance commands stay balanced at the travel limits).
    """
    lim = geom.dL_rate_max
    f1 = min(max(cmd.dL1_rate, -lim), lim) * dt
    f2 = min(max(cmd.dL2_rate, -lim), lim) * dt
    w4 = min(max(cmd.dtheta4_rate, -geom.dtheta4_rate_max), geom.dtheta4_rate_max) * dt

    new_L = state.L + f1 + f2
    clamped_L = min(max(new_L, geom.L_min), geom.L_max)
    if clamped_L != new_L and (f1 + f2) != 0.0:
        scale = (clamped_L - state.L) / (f1 + f2)
        f1 *= scale
        f2 *= scale
    new_theta4 = min(max(state.theta4 + w4, geom.theta4_min), geom.theta4_max)
    new_a = state.a if a is None else a

    if (clamped_L == state.L and new_theta4 == state.theta4 and new_a == state.a):
        return state, f2

    new_state = forward_kinematics(geom, clamped_L, new_theta4, new_a,
                                   side=state.side, initial=state, max_iter=max_iter)
    return new_state, f2
