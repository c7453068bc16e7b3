"""Parametric mechanics models for the tape appendages.

Three fitted models drive the simulator's force behavior:

* ``BucklingModel`` -- the transverse force a deployed straight section
  supports before collapse, ``F_max(L) = M_b / (L - L_offset)`` (constant
  buckling moment about an offset pivot).
* ``BendSpring`` -- the rolling bend at the appendage tip acts as a
  nonlinear spring; contact force is a polynomial in the bend compression.
* ``TorqueSpline`` -- internal bending torque of the tape as a function of
  fold angle, interpolated monotone-cubically through measured knots.

The base load cell sits in the angular control beam; ``estimate_contact_force``
maps its reading to the force on the inner (contact) section through the
lever balance

    F2' = (((F_read * L1' / cos(theta1 - theta4)) + tau1) / L1 * L2 + tau2) / L2'

and ``simulate_load_cell`` is the exact algebraic inverse used as the
simulator's virtual load cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import (
    BelowOffsetError,
    DegenerateDataError,
    NearSingularError,
    OutOfRangeError,
)

# Lever projection cos(theta1 - theta4) is considered unusable past this angle.
NEAR_SINGULAR_ANGLE = math.radians(80.0)

# Bisection on the loading curve resolves displacements to this precision (mm).
_INVERSION_TOL = 1e-12


# ---------------------------------------------------------------------------
# Buckling force vs. deployed length
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BucklingModel:
    """F_max(L) = M_b / (L - L_offset), M_b in N*mm, lengths in mm."""

    M_b: float
    L_offset: float = 0.0

    def __post_init__(self):
        if not self.M_b > 0.0:
            raise ValueError(f"buckling moment must be positive, got {self.M_b}")


def buckling_force(model: BucklingModel, L: float) -> float:
    """Maximum transverse force a section of deployed length L supports."""
    if L < model.L_offset + 1.0:
        raise BelowOffsetError(
            f"length {L} mm within 1 mm of buckling offset {model.L_offset} mm"
        )
    return model.M_b / (L - model.L_offset)


@dataclass(frozen=True)
class BucklingFit:
    """Fit result. ``model`` is populated for the moment_offset form; the
    alternative moment_plus_constant form reports raw (M_b, F_0) only."""

    form: str
    coefficients: tuple[float, float]
    rms_residual: float
    model: BucklingModel | None = None


def fit_buckling(samples: Sequence[tuple[float, float]],
                 form: str = "moment_offset") -> BucklingFit:
    """Least-squares fit of the buckling model to (L, F) samples.

    ``form = "moment_offset"`` fits F = M_b / (L - L_offset) via the exact
    linearization F*L = M_b + L_offset*F.  ``form = "moment_plus_constant"``
    fits the alternative F = M_b / L + F_0.
    """
    if form not in ("moment_offset", "moment_plus_constant"):
        raise ValueError(f"unknown fit form {form!r}")
    if len(samples) < 3:
        raise DegenerateDataError(f"need at least 3 samples, got {len(samples)}")
    L = np.asarray([s[0] for s in samples], dtype=float)
    F = np.asarray([s[1] for s in samples], dtype=float)
    if len(np.unique(L)) < 3:
        raise DegenerateDataError("need at least 3 distinct lengths")
    if np.any(F <= 0.0) or np.any(L <= 0.0):
        raise DegenerateDataError("lengths and forces must be positive")

    if form == "moment_offset":
        # F*L = M_b + L_offset*F: regress y = F*L on x = F.
        x, y = F, F * L
    else:
        # F = M_b*(1/L) + F_0: regress y = F on x = 1/L.
        x, y = 1.0 / L, F
    if np.ptp(x) < 1e-12 * max(1.0, float(np.max(np.abs(x)))):
        raise DegenerateDataError("samples collinear: slope parameter unidentifiable")
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)

    if form == "moment_offset":
        L_offset, M_b = float(coef[0]), float(coef[1])
        if M_b <= 0.0:
            raise DegenerateDataError(f"fit produced non-positive moment {M_b}")
        model = BucklingModel(M_b=M_b, L_offset=L_offset)
        pred = M_b / (L - L_offset)
        coefficients = (M_b, L_offset)
    else:
        M_b, F0 = float(coef[0]), float(coef[1])
        if M_b <= 0.0:
            raise DegenerateDataError(f"fit produced non-positive moment {M_b}")
        model = None
        pred = M_b / L + F0
        coefficients = (M_b, F0)
    rms = float(np.sqrt(np.mean((pred - F) ** 2)))
    return BucklingFit(form=form, coefficients=coefficients,
                       rms_residual=rms, model=model)


# ---------------------------------------------------------------------------
# Bend-joint spring
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BendSpring:
    """Contact spring at the rolling bend.

    ``loading`` holds polynomial coefficients for powers 1..deg (the constant
    term is identically zero so f(0) = 0).  Displacements in mm, forces in N.
    An optional ``unloading`` branch models hysteresis; when absent the
    loading curve is used in both directions.
    """

    loading: tuple[float, ...]
    delta_max: float
    unloading: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.delta_max > 0.0:
            raise ValueError("delta_max must be positive")
        if not self.loading:
            raise ValueError("loading polynomial needs at least one coefficient")
        # Strict monotonicity of the loading branch on [0, delta_max].
        grid = np.linspace(0.0, self.delta_max, 512)
        vals = _polyval_zero_const(self.loading, grid)
        if np.any(np.diff(vals) <= 0.0):
            raise ValueError("loading polynomial must be strictly increasing on [0, delta_max]")
        if self.unloading is not None:
            uvals = _polyval_zero_const(self.unloading, grid[1:])
            if np.any(uvals > vals[1:] + 1e-12):
                raise ValueError("unloading branch must not exceed the loading branch")


def _polyval_zero_const(coeffs: Sequence[float], delta):
    acc = 0.0
    p = delta
    for c in coeffs:
        acc = acc + c * p
        p = p * delta
    return acc


def spring_force(spring: BendSpring, displacement: float, direction: str = "loading") -> float:
    """Force (N) at a given bend compression (mm) on the requested branch."""
    if direction not in ("loading", "unloading"):
        raise ValueError(f"unknown branch {direction!r}")
    if not 0.0 <= displacement <= spring.delta_max:
        raise OutOfRangeError(
            f"displacement {displacement} mm outside [0, {spring.delta_max}] mm"
        )
    coeffs = spring.loading
    if direction == "unloading" and spring.unloading is not None:
        coeffs = spring.unloading
    return float(_polyval_zero_const(coeffs, displacement))


def displacement_for_force(spring: BendSpring, force: float, direction: str = "loading") -> float:
    """Unique preimage of a force on the (strictly increasing) branch, by bisection."""
    f_max = spring_force(spring, spring.delta_max, direction)
    if not 0.0 <= force <= f_max:
        raise OutOfRangeError(f"force {force} N outside [0, {f_max}] N")
    lo, hi = 0.0, spring.delta_max
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if spring_force(spring, mid, direction) < force:
            lo = mid
        else:
            hi = mid
        if hi - lo < _INVERSION_TOL:
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class SpringFit:
    spring: BendSpring
    rms_residual: float
    monotone: bool


def fit_spring(samples: Sequence[tuple[float, float]], degree: int = 3,
               delta_max: float | None = None) -> SpringFit:
    """Zero-intercept polynomial least squares on (displacement, force) samples."""
    if len(samples) < degree + 1:
        raise DegenerateDataError(
            f"need at least {degree + 1} samples for degree {degree}, got {len(samples)}"
        )
    d = np.asarray([s[0] for s in samples], dtype=float)
    f = np.asarray([s[1] for s in samples], dtype=float)
    if len(np.unique(d)) < degree + 1:
        raise DegenerateDataError("not enough distinct displacements")
    A = np.column_stack([d ** k for k in range(1, degree + 1)])
    coef, *_ = np.linalg.lstsq(A, f, rcond=None)
    dmax = float(delta_max if delta_max is not None else np.max(d))
    coeffs = tuple(float(c) for c in coef)
    grid = np.linspace(0.0, dmax, 512)
    vals = _polyval_zero_const(coeffs, grid)
    monotone = bool(np.all(np.diff(vals) > 0.0))
    rms = float(np.sqrt(np.mean((_polyval_zero_const(coeffs, d) - f) ** 2)))
    if monotone:
        spring = BendSpring(loading=coeffs, delta_max=dmax)
    else:
        # Caller is warned through the flag; ship the raw polynomial anyway by
        # bypassing the dataclass monotonicity validation.
        spring = object.__new__(BendSpring)
        object.__setattr__(spring, "loading", coeffs)
        object.__setattr__(spring, "delta_max", dmax)
        object.__setattr__(spring, "unloading", None)
    return SpringFit(spring=spring, rms_residual=rms, monotone=monotone)


# ---------------------------------------------------------------------------
# Internal bending torque vs. fold angle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TorqueSpline:
    """Monotone piecewise-cubic interpolation of (fold angle, torque) knots.

    Evaluation clamps outside the knot range; ``evaluate_checked`` reports
    whether clamping occurred.
    """

    angles: tuple[float, ...]
    torques: tuple[float, ...]
    _interp: object = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.angles) != len(self.torques) or len(self.angles) < 1:
            raise ValueError("need matching, non-empty angle/torque knot arrays")
        if any(b <= a for a, b in zip(self.angles, self.angles[1:])):
            raise ValueError("knot angles must be strictly increasing")
        if len(self.angles) == 1:
            interp = None
        else:
            interp = PchipInterpolator(np.asarray(self.angles), np.asarray(self.torques))
        object.__setattr__(self, "_interp", interp)

    def evaluate(self, angle: float) -> float:
        return self.evaluate_checked(angle)[0]

    def evaluate_checked(self, angle: float) -> tuple[float, bool]:
        """(torque, extrapolated). Clamps the angle to the knot range."""
        lo, hi = self.angles[0], self.angles[-1]
        clamped = min(max(angle, lo), hi)
        extrapolated = clamped != angle
        if self._interp is None:
            return self.torques[0], extrapolated
        return float(self._interp(clamped)), extrapolated


def zero_torque_spline() -> TorqueSpline:
    return TorqueSpline(angles=(0.0, math.pi), torques=(0.0, 0.0))


def fit_torque_spline(samples: Sequence[tuple[float, float]]) -> TorqueSpline:
    """Build the interpolating spline through measured (angle, torque) points."""
    if len(samples) < 2:
        raise DegenerateDataError("need at least 2 knots")
    ordered = sorted(samples, key=lambda s: s[0])
    angles = tuple(float(s[0]) for s in ordered)
    torques = tuple(float(s[1]) for s in ordered)
    if any(b <= a for a, b in zip(angles, angles[1:])):
        raise DegenerateDataError("duplicate angles in torque data")
    return TorqueSpline(angles=angles, torques=torques)


# ---------------------------------------------------------------------------
# Base load cell <-> contact force
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ForceEstimate:
    """Contact-force estimate derived from the base load cell."""

    F_read: float
    F2_prime: float        # rectified (>= 0)
    F2_prime_raw: float    # signed value before rectification
    L2_prime: float


def _lever_terms(state, tau: TorqueSpline):
    """tau at the guiding ring (fold angle 0 in the rigid-link model) and at
    the rolling joint (arc sweep angle)."""
    tau1 = tau.evaluate(0.0)
    tau2 = tau.evaluate(state.theta1 - state.theta2 + math.pi)
    return tau1, tau2


def _check_levers(state, L1_prime: float, L2_prime: float) -> float:
    if not 0.0 < L1_prime <= state.L1:
        raise ValueError(f"L1' = {L1_prime} must be in (0, L1 = {state.L1}]")
    if not 0.0 < L2_prime <= state.L2:
        raise ValueError(f"L2' = {L2_prime} must be in (0, L2 = {state.L2}]")
    ang = state.theta1 - state.theta4
    cosine = math.cos(ang)
    if abs(ang) >= NEAR_SINGULAR_ANGLE:
        raise NearSingularError(
            f"|theta1 - theta4| = {math.degrees(abs(ang)):.1f} deg too close to 90",
            cosine,
        )
    return cosine


def estimate_contact_force(geom, state, F_read: float, L1_prime: float,
                           L2_prime: float, tau: TorqueSpline) -> ForceEstimate:
    """Map a base load-cell reading to the force on the contact section.

    ``L1_prime`` is the guiding-ring distance from the outer extruder along
    the outer section; ``L2_prime`` the contact distance from the inner
    extruder along the inner section.
    """
    cosine = _check_levers(state, L1_prime, L2_prime)
    tau1, tau2 = _lever_terms(state, tau)
    # Factored so the lever ratios collapse to exactly 1.0 in the
    # tau == 0, theta1 == theta4, L1' = L1, L2' = L2 identity case.
    raw = (F_read * (L1_prime / state.L1) * (state.L2 / L2_prime) / cosine
           + tau1 * state.L2 / (state.L1 * L2_prime)
           + tau2 / L2_prime)
    return ForceEstimate(
        F_read=F_read,
        F2_prime=max(raw, 0.0),
        F2_prime_raw=raw,
        L2_prime=L2_prime,
    )


def simulate_load_cell(geom, state, true_contact_force: float, L2_prime: float,
                       tau: TorqueSpline, L1_prime: float) -> float:
    """Virtual load cell: the exact algebraic inverse of the estimator."""
    cosine = _check_levers(state, L1_prime, L2_prime)
    tau1, tau2 = _lever_terms(state, tau)
    return ((true_contact_force
             - tau1 * state.L2 / (state.L1 * L2_prime)
             - tau2 / L2_prime)
            * cosine * (state.L1 / L1_prime) * (L2_prime / state.L2))


def max_contact_force(model: BucklingModel, state) -> float:
    """Admissible contact force before the supporting outer section buckles."""
    return buckling_force(model, state.L1)


def loaded_radius(r0: float, force: float, slope: float | None,
                  r_min: float = 1.0) -> float:
    """Optional load-dependent rolling-joint radius hook, r(F) = r0 - slope*F.

    The bend tightens as grip force rises; the relation is only known
    qualitatively, so this linear hook is disabled (slope None) by default
    and is never fed back into positions -- kinematics always use r0.
    """
    if slope is None:
        return r0
    if force < 0.0:
        raise ValueError("force must be non-negative")
    return max(r0 - slope * force, r_min)
