"""Gripper geometry, model parameters, and the JSON config file format.

Units are millimeters, Newtons, radians, and seconds everywhere in memory.
The config file stores the same canonical units, except that any angle field
may instead carry a string with an explicit suffix ("110 deg" or "1.92 rad"),
converted at load time.  The full schema is documented in docs/config.md.

The default hardware dimensions (b, c, d, L4, rack travel) are stand-ins:
the reference hardware's exact layout is not published, so the shipped
numbers are chosen to give a sector-annulus workspace roughly 150-700 mm
deep.  Everything is configurable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .errors import ConfigError
from .mechanics import BendSpring, BucklingModel, TorqueSpline

CONFIG_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class GripperGeometry:
    """Fixed mounting geometry and actuation limits of one appendage pair.

    One block serves both appendages; the left appendage is modeled in its
    local frame (origin at its outer extruder, +x toward the center line)
    and the right appendage is its mirror across x = 0.
    """

    b: float = 20.0              # vertical offset of inner extruder exit (mm)
    c: float = 80.0              # control-beam pivot offset, +y (mm)
    d: float = 30.0              # control-beam pivot offset, -x (mm)
    L4: float = 100.0            # pivot-to-guiding-ring beam length (mm)
    r0: float = 15.0             # no-load rolling-joint radius (mm)
    outer_extruder_spacing: float = 280.0   # distance between outer extruders (mm)
    a_min: float = 40.0          # inner-extruder rack travel (mm)
    a_max: float = 130.0
    theta4_min: float = math.radians(-15.0)
    theta4_max: float = math.radians(110.0)
    L_min: float = 420.0         # total tape length limits (mm)
    L_max: float = 1524.0        # ~5 ft self-weight buckling limit
    dL_rate_max: float = 200.0   # per-extruder feed limit (mm/s)
    dtheta4_rate_max: float = math.radians(45.0)   # beam slew limit (rad/s)
    dwidth_rate_max: float = 100.0                 # rack limit (mm/s)

    def validate(self) -> None:
        strictly_positive = {
            "c": self.c, "d": self.d, "L4": self.L4,
            "outer_extruder_spacing": self.outer_extruder_spacing,
            "a_max": self.a_max, "L_min": self.L_min, "L_max": self.L_max,
            "dL_rate_max": self.dL_rate_max,
            "dtheta4_rate_max": self.dtheta4_rate_max,
            "dwidth_rate_max": self.dwidth_rate_max,
        }
        for name, value in strictly_positive.items():
            if not value > 0.0:
                raise ConfigError(f"geometry.{name} must be > 0, got {value}")
        # b may be zero (exits at the same height); r0 and a_min may be zero
        # for the degenerate analysis configurations.
        for name, value in (("b", self.b), ("r0", self.r0), ("a_min", self.a_min)):
            if value < 0.0:
                raise ConfigError(f"geometry.{name} must be >= 0, got {value}")
        if not self.a_min < self.a_max:
            raise ConfigError(f"geometry requires a_min < a_max, got {self.a_min} >= {self.a_max}")
        if not self.theta4_min < self.theta4_max:
            raise ConfigError("geometry requires theta4_min < theta4_max")
        if not self.L_min < self.L_max:
            raise ConfigError(f"geometry requires L_min < L_max, got {self.L_min} >= {self.L_max}")
        # Arc length never exceeds r0 * 2*pi, so this guarantees the triangle
        # can close at L_min for every reachable configuration.
        if not self.L_min > self.r0 * 2.0 * math.pi:
            raise ConfigError(
                f"geometry.L_min = {self.L_min} must exceed r0*2*pi = "
                f"{self.r0 * 2.0 * math.pi:.1f} so the triangle can close"
            )
        if 2.0 * self.a_max >= self.outer_extruder_spacing:
            raise ConfigError("rack travel exceeds outer extruder spacing (width would go negative)")

    @property
    def width_min(self) -> float:
        return self.outer_extruder_spacing - 2.0 * self.a_max

    @property
    def width_max(self) -> float:
        return self.outer_extruder_spacing - 2.0 * self.a_min

    def width_to_a(self, width: float) -> float:
        """Symmetric rack: both inner extruders retreat equally."""
        return 0.5 * (self.outer_extruder_spacing - width)

    def a_to_width(self, a: float) -> float:
        return self.outer_extruder_spacing - 2.0 * a


@dataclass(frozen=True)
class MechanicsParams:
    """Raw numbers behind the fitted models; models are built on demand.

    The shipped defaults are placeholders calibrated to the one anchored
    data point F(200 mm) = 4.97 N (so M_b = 994 N*mm with zero offset), a
    cubic contact spring, and an all-zero torque table.
    """

    buckling_M_b: float = 994.0
    buckling_L_offset: float = 0.0
    spring_loading: tuple[float, ...] = (0.05, 0.0, 0.002)
    spring_unloading: tuple[float, ...] | None = None
    spring_delta_max: float = 20.0
    torque_angles: tuple[float, ...] = (0.0, math.pi)
    torque_values: tuple[float, ...] = (0.0, 0.0)
    # optional linear load-dependent rolling-radius hook, r(F) = r0 - slope*F;
    # None keeps the constant no-load radius everywhere
    r_force_slope: float | None = None

    def validate(self) -> None:
        try:
            self.buckling()
            self.spring()
            self.torque()
        except ValueError as exc:
            raise ConfigError(f"mechanics: {exc}") from exc

    def buckling(self) -> BucklingModel:
        return BucklingModel(M_b=self.buckling_M_b, L_offset=self.buckling_L_offset)

    def spring(self) -> BendSpring:
        return BendSpring(loading=self.spring_loading, delta_max=self.spring_delta_max,
                          unloading=self.spring_unloading)

    def torque(self) -> TorqueSpline:
        return TorqueSpline(angles=self.torque_angles, torques=self.torque_values)


@dataclass(frozen=True)
class ControlDefaults:
    """Declared controller tuning (not a reproduction of any hardware values)."""

    servo_force: float = 1.0          # desired grip force (N)
    servo_kp: float = 2.0             # proportional gain (mm/N)
    servo_deadband: float = 0.05      # force deadband (N)
    servo_width_rate: float = 50.0    # grip-width correction limit (mm/s)
    sweep_step: float = math.radians(0.25)   # auto-grip sweep per tick (rad)
    sweep_radius_frac: float = 0.75   # sweep tip radius as fraction of outer reach
    retract_step: float = 0.5         # auto-grip retraction per tick (mm)
    open_factor: float = 1.5          # step-3 opening vs. inter-contact distance
    lost_contact_ticks: int = 3       # below-threshold ticks before "contact lost"
    rotate_speed: float = 20.0        # open-loop surface speed (mm/s)
    rotate_speed_servo: float = 8.0   # servo-assisted surface speed (mm/s)
    translate_speed: float = 80.0     # grasp translation speed (mm/s)
    convey_speed: float = 40.0        # conveyance surface speed (mm/s)

    def validate(self) -> None:
        if not self.servo_kp > 0.0:
            raise ConfigError("control.servo_kp must be > 0")
        if self.lost_contact_ticks < 1:
            raise ConfigError("control.lost_contact_ticks must be >= 1")
        for name in ("servo_force", "servo_width_rate", "sweep_step", "retract_step",
                     "open_factor", "rotate_speed", "rotate_speed_servo",
                     "translate_speed", "convey_speed"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"control.{name} must be > 0")


@dataclass(frozen=True)
class SimConfig:
    geometry: GripperGeometry = field(default_factory=GripperGeometry)
    mechanics: MechanicsParams = field(default_factory=MechanicsParams)
    control: ControlDefaults = field(default_factory=ControlDefaults)
    tick_dt: float = 0.01            # s
    contact_threshold: float = 0.25  # N
    residual_tol: float = 1e-9       # mm
    max_iter: int = 60

    def validate(self) -> None:
        if not self.tick_dt > 0.0:
            raise ConfigError(f"tick_dt must be > 0, got {self.tick_dt}")
        if not self.contact_threshold > 0.0:
            raise ConfigError(f"contact_threshold must be > 0, got {self.contact_threshold}")
        if not self.residual_tol > 0.0:
            raise ConfigError(f"residual_tol must be > 0, got {self.residual_tol}")
        if self.max_iter < 1:
            raise ConfigError(f"max_iter must be >= 1, got {self.max_iter}")
        self.geometry.validate()
        self.mechanics.validate()
        self.control.validate()
        if self.contact_threshold > self.control.servo_force:
            raise ConfigError("control.servo_force must exceed contact_threshold")


def default_config() -> SimConfig:
    cfg = SimConfig()
    cfg.validate()
    return cfg


# ---------------------------------------------------------------------------
# File format
# ---------------------------------------------------------------------------

_ANGLE_FIELDS = {
    ("geometry", "theta4_min"), ("geometry", "theta4_max"),
    ("geometry", "dtheta4_rate_max"),
    ("control", "sweep_step"),
}


def _parse_angle(raw, where: str) -> float:
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return float(raw)
    if isinstance(raw, str):
        parts = raw.split()
        if len(parts) == 2:
            try:
                value = float(parts[0])
            except ValueError:
                raise ConfigError(f"{where}: cannot parse angle {raw!r}") from None
            if parts[1] == "deg":
                return math.radians(value)
            if parts[1] == "rad":
                return value
        raise ConfigError(f"{where}: angle strings need a 'deg' or 'rad' suffix, got {raw!r}")
    raise ConfigError(f"{where}: expected number or suffixed string, got {type(raw).__name__}")


def _coerce_section(cls, data: dict, section: str):
    fields = {f.name: f for f in cls.__dataclass_fields__.values()}
    kwargs = {}
    for key, raw in data.items():
        if key not in fields:
            raise ConfigError(f"unknown key {section}.{key}")
        if (section, key) in _ANGLE_FIELDS:
            kwargs[key] = _parse_angle(raw, f"{section}.{key}")
        elif isinstance(raw, list):
            kwargs[key] = tuple(raw)
        elif raw is None:
            kwargs[key] = None
        elif isinstance(raw, bool):
            raise ConfigError(f"{section}.{key}: booleans are not valid values")
        elif isinstance(raw, (int, float)):
            kwargs[key] = float(raw) if fields[key].type != "int" else int(raw)
        else:
            raise ConfigError(f"{section}.{key}: unsupported value {raw!r}")
    return cls(**kwargs)


def config_from_dict(data: dict) -> SimConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    data = dict(data)
    version = data.pop("schema_version", CONFIG_SCHEMA_VERSION)
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema_version {version}")
    sections = {}
    for name, cls in (("geometry", GripperGeometry), ("mechanics", MechanicsParams),
                      ("control", ControlDefaults)):
        block = data.pop(name, {})
        if not isinstance(block, dict):
            raise ConfigError(f"{name} must be an object")
        try:
            sections[name] = _coerce_section(cls, block, name)
        except TypeError as exc:
            raise ConfigError(f"{name}: {exc}") from exc
    top = {}
    for key in ("tick_dt", "contact_threshold", "residual_tol", "max_iter"):
        if key in data:
            raw = data.pop(key)
            top[key] = int(raw) if key == "max_iter" else float(raw)
    if data:
        raise ConfigError(f"unknown top-level keys: {sorted(data)}")
    cfg = SimConfig(**sections, **top)
    cfg.validate()
    return cfg


def config_to_dict(cfg: SimConfig) -> dict:
    out = {"schema_version": CONFIG_SCHEMA_VERSION}
    out["geometry"] = asdict(cfg.geometry)
    mech = asdict(cfg.mechanics)
    mech["spring_loading"] = list(cfg.mechanics.spring_loading)
    if cfg.mechanics.spring_unloading is not None:
        mech["spring_unloading"] = list(cfg.mechanics.spring_unloading)
    mech["torque_angles"] = list(cfg.mechanics.torque_angles)
    mech["torque_values"] = list(cfg.mechanics.torque_values)
    out["mechanics"] = mech
    out["control"] = asdict(cfg.control)
    out["tick_dt"] = cfg.tick_dt
    out["contact_threshold"] = cfg.contact_threshold
    out["residual_tol"] = cfg.residual_tol
    out["max_iter"] = cfg.max_iter
    return out


def load_config(path: str | Path) -> SimConfig:
    """Load and validate a config file; raises ConfigError with location info."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    try:
        return config_from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def save_config(cfg: SimConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n")
