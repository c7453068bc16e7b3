"""Scenario files: scripted, deterministic simulation runs.

A scenario bundles a config reference, an initial world, and an ordered
script of timed entries (jogs, primitive invocations, spawns, grasp and
release commands).  The teleop service records live sessions in exactly
this format, so any recorded session replays through ``run_scenario`` and
must reproduce the recorded snapshot stream tick for tick.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .config import SimConfig, config_from_dict, default_config, load_config
from .control import (
    AutoGripController,
    Controller,
    ConveyController,
    ForceServoParams,
    GotoController,
    GraspController,
    ReleaseController,
    RotateController,
    TranslateController,
    default_servo,
)
from .errors import ScenarioError, TapegripError
from .geometry import Vec2
from .kinematics import ActuatorCommand
from .sim import (
    Event,
    SimObject,
    WorldCommand,
    WorldState,
    add_object,
    make_world,
    shape_from_dict,
    snapshot_line,
    step,
)

SCENARIO_SCHEMA_VERSION = 1

PRIMITIVES = ("grasp", "release", "translate", "rotate", "convey", "auto_grip")


def _object_from_dict(data: dict) -> SimObject:
    pose = data.get("pose", {})
    return SimObject(
        id=str(data["id"]),
        shape=shape_from_dict(data["shape"]),
        position=Vec2(float(pose.get("x", 0.0)), float(pose.get("y", 0.0))),
        orientation=float(pose.get("theta", 0.0)),
        held=bool(data.get("held", False)),
    )


def _angle(params: dict, key: str = "angle") -> float:
    if key in params:
        return float(params[key])
    if key + "_deg" in params:
        return math.radians(float(params[key + "_deg"]))
    raise ScenarioError(f"rotate needs {key} or {key}_deg")


def build_controller(cfg: SimConfig, name: str, params: dict,
                     servo_defaults: ForceServoParams | None = None) -> Controller:
    """Instantiate a named primitive with a parameter map (scenario/teleop)."""
    p = dict(params or {})
    try:
        if name == "grasp":
            return GraspController(cfg, str(p["object_id"]),
                                   force=p.get("force"),
                                   axis_angle=float(p.get("axis_angle", 0.0)))
        if name == "release":
            return ReleaseController(str(p["object_id"]),
                                     retreat=float(p.get("retreat", 10.0)))
        if name == "translate":
            return TranslateController(cfg, str(p["object_id"]),
                                       Vec2(float(p["x"]), float(p["y"])),
                                       speed=p.get("speed"))
        if name == "rotate":
            servo = None
            raw = p.get("servo", False)
            if raw is True:
                servo = servo_defaults or default_servo(cfg)
            elif isinstance(raw, dict):
                servo = ForceServoParams(**raw)
            return RotateController(cfg, str(p["object_id"]), _angle(p),
                                    servo=servo, surface_speed=p.get("surface_speed"))
        if name == "convey":
            return ConveyController(cfg, float(p["displacement"]),
                                    speed=p.get("speed"))
        if name == "auto_grip":
            return AutoGripController(cfg, p or None)
        if name == "goto":
            return GotoController(str(p["side"]), Vec2(float(p["x"]), float(p["y"])),
                                  speed=float(p.get("speed", 120.0)))
    except KeyError as exc:
        raise ScenarioError(f"primitive {name!r} missing parameter {exc}") from exc
    raise ScenarioError(f"unknown primitive {name!r}")


@dataclass
class Scenario:
    config: SimConfig
    objects: tuple[SimObject, ...]
    script: list[dict]
    ticks: int
    initial: dict = field(default_factory=dict)
    record: str | None = None

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "Scenario":
        if not isinstance(data, dict):
            raise ScenarioError("scenario root must be an object")
        version = data.get("schema_version", SCENARIO_SCHEMA_VERSION)
        if version != SCENARIO_SCHEMA_VERSION:
            raise ScenarioError(f"unsupported scenario schema_version {version}")
        cfg_ref = data.get("config")
        if cfg_ref is None:
            cfg = default_config()
        elif isinstance(cfg_ref, str):
            path = Path(cfg_ref)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            cfg = load_config(path)
        elif isinstance(cfg_ref, dict):
            cfg = config_from_dict(cfg_ref)
        else:
            raise ScenarioError("config must be a path or an inline object")
        try:
            objects = tuple(_object_from_dict(o) for o in data.get("objects", []))
        except (KeyError, ValueError) as exc:
            raise ScenarioError(f"bad object entry: {exc}") from exc
        script = list(data.get("script", []))
        for entry in script:
            if not isinstance(entry, dict) or "tick" not in entry:
                raise ScenarioError(f"script entry needs a tick: {entry!r}")
            if "primitive" in entry:
                name = entry["primitive"].get("name")
                if name not in PRIMITIVES + ("goto",):
                    raise ScenarioError(f"unknown primitive {name!r}")
        script.sort(key=lambda e: int(e["tick"]))
        ticks = int(data.get("ticks", 0))
        if ticks < 0:
            raise ScenarioError("ticks must be >= 0")
        return cls(config=cfg, objects=objects, script=script, ticks=ticks,
                   initial=dict(data.get("initial", {})),
                   record=data.get("record"))

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: parse error at line {exc.lineno}: {exc.msg}") from exc
        except OSError as exc:
            raise ScenarioError(f"cannot read {path}: {exc}") from exc
        return cls.from_dict(data, base_dir=path.parent)


@dataclass
class RunResult:
    world: WorldState
    snapshots: list[str]
    events: list[Event]
    failed_primitives: list[str]

    @property
    def had_failure_event(self) -> bool:
        bad = {"object_dropped", "buckling"}
        return (any(e.type in bad for e in self.events)
                or bool(self.failed_primitives))


def initial_world(scn: Scenario) -> WorldState:
    """Build the starting world.  ``initial`` may give actuator coordinates
    (width, L, theta4) or prescribe the inner-section pose directly via
    inner_theta2[_deg] and inner_length (both appendages mirrored)."""
    init = scn.initial
    cfg = scn.config
    if "inner_theta2" in init or "inner_theta2_deg" in init:
        from .geometry import Vec2, unit
        from .kinematics import inverse_kinematics
        g = cfg.geometry
        theta2 = (float(init["inner_theta2"]) if "inner_theta2" in init
                  else math.radians(float(init["inner_theta2_deg"])))
        L2 = float(init.get("inner_length", 600.0))
        width = float(init.get("width", 0.5 * (g.width_min + g.width_max)))
        a = g.width_to_a(width)
        u2 = unit(theta2)
        tip = Vec2(a, -g.b) + L2 * u2 + g.r0 * u2.perp_ccw()
        left = inverse_kinematics(g, tip, a, side="left")
        right = inverse_kinematics(g, tip, a, side="right")
        return make_world(cfg, objects=scn.objects, width=width,
                          left=left, right=right)
    return make_world(cfg, objects=scn.objects,
                      width=init.get("width"),
                      L=init.get("L"), theta4=init.get("theta4"))


def run_scenario(scn: Scenario, record_path: str | Path | None = None,
                 on_world=None) -> RunResult:
    """Execute a scenario tick loop deterministically.

    Script entries apply at their tick in file order.  Jog entries set
    persistent base rates; a primitive occupies the single controller slot
    until done (later primitives wait for the slot, keeping their relative
    order).  Jogs are ignored while a primitive runs.
    """
    cfg = scn.config
    world = initial_world(scn)
    snapshots = [snapshot_line(world)]
    all_events: list[Event] = []
    failed: list[str] = []
    jog = {"left": ActuatorCommand(), "right": ActuatorCommand(), "width": 0.0}
    servo_defaults: ForceServoParams | None = None
    active: Controller | None = None
    pending: list[dict] = list(scn.script)
    queue: list[dict] = []

    if on_world is not None:
        on_world(world)

    for _ in range(scn.ticks):
        while pending and int(pending[0]["tick"]) <= world.tick:
            queue.append(pending.pop(0))

        one_shot_grasp: str | None = None
        one_shot_release: str | None = None
        still_queued: list[dict] = []
        for entry in queue:
            if "jog" in entry:
                j = entry["jog"]
                side = j.get("side", "left")
                cmdj = ActuatorCommand(
                    dL1_rate=float(j.get("dL1_rate", 0.0)),
                    dL2_rate=float(j.get("dL2_rate", 0.0)),
                    dtheta4_rate=float(j.get("dTheta4_rate", j.get("dtheta4_rate", 0.0))),
                )
                jog[side] = cmdj
                if "dWidth_rate" in j or "dwidth_rate" in j:
                    jog["width"] = float(j.get("dWidth_rate", j.get("dwidth_rate", 0.0)))
            elif "spawn" in entry:
                try:
                    world = add_object(world, _object_from_dict(entry["spawn"]))
                except (ValueError, KeyError) as exc:
                    raise ScenarioError(f"spawn at tick {world.tick}: {exc}") from exc
            elif "grasp" in entry:
                one_shot_grasp = str(entry["grasp"])
            elif "release" in entry:
                one_shot_release = str(entry["release"])
            elif "set_servo" in entry:
                servo_defaults = ForceServoParams(**entry["set_servo"])
            elif "primitive" in entry:
                if active is None:
                    spec = entry["primitive"]
                    active = build_controller(cfg, spec["name"], spec.get("params", {}),
                                              servo_defaults)
                else:
                    still_queued.append(entry)
            else:
                raise ScenarioError(f"unrecognized script entry: {entry!r}")
        queue = still_queued

        finished: Controller | None = None
        if active is not None:
            try:
                cmd = active.step(cfg, world)
            except TapegripError as exc:
                active.failure = str(exc)
                cmd = None
            if cmd is None:
                finished = active
                active = None
                cmd = WorldCommand(left=jog["left"], right=jog["right"],
                                   width_rate=jog["width"])
        else:
            cmd = WorldCommand(left=jog["left"], right=jog["right"],
                               width_rate=jog["width"])
        if one_shot_grasp is not None:
            cmd = replace(cmd, grasp=one_shot_grasp)
        if one_shot_release is not None:
            cmd = replace(cmd, release=one_shot_release)

        world = step(cfg, world, cmd)

        if finished is not None:
            if finished.failure:
                evt = Event("primitive_failed",
                            {"name": finished.name, "reason": finished.failure,
                             "result": finished.result()})
                failed.append(finished.name)
            else:
                evt = Event("primitive_done",
                            {"name": finished.name, "result": finished.result()})
            world = replace(world, events=world.events + (evt,))

        all_events.extend(world.events)
        snapshots.append(snapshot_line(world))
        if on_world is not None:
            on_world(world)

    if record_path is not None:
        Path(record_path).write_text("\n".join(snapshots) + "\n")
    return RunResult(world=world, snapshots=snapshots, events=all_events,
                     failed_primitives=failed)
