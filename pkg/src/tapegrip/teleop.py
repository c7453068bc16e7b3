"""Live teleoperation service.

Exposes one world over a WebSocket: a fixed-rate tick loop owns the world
exclusively; client messages are validated, queued, and applied in arrival
order at tick boundaries; every subscriber receives a state stream at its
requested rate (latest-wins when slow: intermediate state frames drop,
events never do).  With recording enabled the applied message script and
the per-tick snapshot stream are written in the scenario format, so a
session replays headlessly through ``tapegrip run`` with tick-identical
snapshots -- the service adds transport, not behavior.

Message formats (JSON text frames) are documented field by field in
docs/protocol.md; the JSON Schema below is the machine-readable contract.
"""

from __future__ import annotations

import asyncio
import json
from contextlib import asynccontextmanager
from dataclasses import replace
from pathlib import Path

import jsonschema
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .config import SimConfig, config_to_dict
from .control import Controller, ForceServoParams
from .errors import ScenarioError, TapegripError
from .kinematics import ActuatorCommand
from .scenario import build_controller, _object_from_dict
from .sim import (
    Event,
    WorldCommand,
    add_object,
    make_world,
    snapshot,
    snapshot_line,
    step,
)

PROTOCOL_VERSION = 1

_SIDE = {"type": "string", "enum": ["left", "right"]}
_NUM = {"type": "number"}

CLIENT_MESSAGE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["protocol_version", "type"],
    "properties": {"protocol_version": {"const": PROTOCOL_VERSION},
                   "type": {"type": "string"}},
    "oneOf": [
        {
            "properties": {
                "protocol_version": {}, "type": {"const": "jog"},
                "side": _SIDE, "dL1_rate": _NUM, "dL2_rate": _NUM,
                "dTheta4_rate": _NUM, "dWidth_rate": _NUM,
            },
            "required": ["type", "side"],
            "additionalProperties": False,
        },
        {
            "properties": {
                "protocol_version": {}, "type": {"const": "goto"},
                "side": _SIDE, "x": _NUM, "y": _NUM, "speed": _NUM,
            },
            "required": ["type", "side", "x", "y"],
            "additionalProperties": False,
        },
        {
            "properties": {
                "protocol_version": {}, "type": {"const": "primitive"},
                "name": {"type": "string",
                         "enum": ["grasp", "release", "translate", "rotate",
                                  "convey", "auto_grip"]},
                "params": {"type": "object"},
            },
            "required": ["type", "name"],
            "additionalProperties": False,
        },
        {
            "properties": {
                "protocol_version": {}, "type": {"const": "set_servo"},
                "F_desired": _NUM, "Kp": _NUM, "deadband": _NUM,
                "width_rate_limit": _NUM,
            },
            "required": ["type", "F_desired", "Kp", "deadband", "width_rate_limit"],
            "additionalProperties": False,
        },
        {
            "properties": {
                "protocol_version": {}, "type": {"const": "spawn_object"},
                "id": {"type": "string"},
                "shape": {"type": "object"},
                "pose": {"type": "object"},
                "held": {"type": "boolean"},
            },
            "required": ["type", "id", "shape"],
            "additionalProperties": False,
        },
        {
            "properties": {"protocol_version": {}, "type": {"const": "reset"}},
            "required": ["type"],
            "additionalProperties": False,
        },
        {
            "properties": {
                "protocol_version": {}, "type": {"const": "subscribe"},
                "rate_hz": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["type", "rate_hz"],
            "additionalProperties": False,
        },
    ],
}

_VALIDATOR = jsonschema.Draft202012Validator(CLIENT_MESSAGE_SCHEMA)


class _Client:
    _next_id = 0

    def __init__(self, ws: WebSocket, tick_hz: float):
        _Client._next_id += 1
        self.id = _Client._next_id
        self.ws = ws
        self.rate_hz = tick_hz
        self.state_slot: dict | None = None
        self.events: list[dict] = []
        self.ack_pending = False
        self.wakeup = asyncio.Event()
        self.next_state_at = 0.0
        self.closed = False


class TeleopServer:
    """World owner: one tick loop, an ordered command queue, subscribers."""

    def __init__(self, cfg: SimConfig, tick_hz: float, record: str | None = None):
        self.cfg = cfg
        self.tick_hz = tick_hz
        self.record_base = record
        self.world = make_world(cfg)
        self.clients: dict[int, _Client] = {}
        self.queue: list[tuple[_Client, dict]] = []
        self.jog = {"left": ActuatorCommand(), "right": ActuatorCommand(),
                    "width": 0.0}
        self.active: Controller | None = None
        self.active_name: str | None = None
        self.servo_defaults: ForceServoParams | None = None
        self.script: list[dict] = []
        self.snapshots: list[str] = [snapshot_line(self.world)]
        self._stop = asyncio.Event()
        self._task: asyncio.Task | None = None

    # -- wire helpers -------------------------------------------------------

    def hello(self) -> dict:
        g = self.cfg.geometry
        return {
            "type": "hello",
            "protocol_version": PROTOCOL_VERSION,
            "tick_hz": self.tick_hz,
            "config": {
                "outer_extruder_spacing": g.outer_extruder_spacing,
                "width_min": g.width_min, "width_max": g.width_max,
                "L_min": g.L_min, "L_max": g.L_max,
                "theta4_min": g.theta4_min, "theta4_max": g.theta4_max,
                "r0": g.r0, "b": g.b,
                "contact_threshold": self.cfg.contact_threshold,
            },
        }

    def state_message(self) -> dict:
        snap = snapshot(self.world)
        snap["type"] = "state"
        snap["active_primitive"] = None
        if self.active is not None:
            phase = getattr(getattr(self.active, "ctx", None), "phase", None)
            snap["active_primitive"] = {"name": self.active_name, "phase": phase}
        return snap

    # -- client management --------------------------------------------------

    def attach(self, ws: WebSocket) -> _Client:
        client = _Client(ws, self.tick_hz)
        self.clients[client.id] = client
        return client

    def detach(self, client: _Client) -> None:
        client.closed = True
        client.wakeup.set()
        self.clients.pop(client.id, None)

    def enqueue(self, client: _Client, msg: dict) -> None:
        self.queue.append((client, msg))

    # -- message application (tick boundary only) ---------------------------

    def _apply(self, client: _Client, msg: dict) -> None:
        kind = msg["type"]
        tick = self.world.tick
        if kind == "_deadman":
            # Vanished client: zero all rates, as a recorded script entry so
            # replays stay tick-identical.
            self.jog = {"left": ActuatorCommand(), "right": ActuatorCommand(),
                        "width": 0.0}
            for side in ("left", "right"):
                self._record_entry(tick, {"jog": {
                    "side": side, "dL1_rate": 0.0, "dL2_rate": 0.0,
                    "dTheta4_rate": 0.0, "dWidth_rate": 0.0}})
            return
        if kind == "subscribe":
            client.rate_hz = float(msg["rate_hz"])
            client.ack_pending = True
            return
        if kind == "jog":
            if self.active is not None:
                self._error(client, "busy", "a primitive is running")
                return
            side = msg["side"]
            self.jog[side] = ActuatorCommand(
                dL1_rate=float(msg.get("dL1_rate", 0.0)),
                dL2_rate=float(msg.get("dL2_rate", 0.0)),
                dtheta4_rate=float(msg.get("dTheta4_rate", 0.0)),
            )
            if "dWidth_rate" in msg:
                self.jog["width"] = float(msg["dWidth_rate"])
            self._record_entry(tick, {"jog": {
                "side": side,
                "dL1_rate": float(msg.get("dL1_rate", 0.0)),
                "dL2_rate": float(msg.get("dL2_rate", 0.0)),
                "dTheta4_rate": float(msg.get("dTheta4_rate", 0.0)),
                **({"dWidth_rate": float(msg["dWidth_rate"])}
                   if "dWidth_rate" in msg else {}),
            }})
            client.ack_pending = True
            return
        if kind in ("goto", "primitive"):
            if self.active is not None:
                self._error(client, "busy", "a primitive is already running")
                return
            if kind == "goto":
                name, params = "goto", {"side": msg["side"], "x": msg["x"],
                                        "y": msg["y"],
                                        "speed": msg.get("speed", 120.0)}
            else:
                name, params = msg["name"], dict(msg.get("params", {}))
            try:
                self.active = build_controller(self.cfg, name, params,
                                               self.servo_defaults)
            except (ScenarioError, TapegripError, ValueError, KeyError) as exc:
                self._error(client, "invalid", str(exc))
                return
            self.active_name = name
            self._record_entry(tick, {"primitive": {"name": name, "params": params}})
            client.ack_pending = True
            return
        if kind == "set_servo":
            self.servo_defaults = ForceServoParams(
                F_desired=float(msg["F_desired"]), Kp=float(msg["Kp"]),
                deadband=float(msg["deadband"]),
                width_rate_limit=float(msg["width_rate_limit"]))
            self._record_entry(tick, {"set_servo": {
                "F_desired": float(msg["F_desired"]), "Kp": float(msg["Kp"]),
                "deadband": float(msg["deadband"]),
                "width_rate_limit": float(msg["width_rate_limit"])}})
            client.ack_pending = True
            return
        if kind == "spawn_object":
            record = {"id": msg["id"], "shape": msg["shape"],
                      "pose": msg.get("pose", {}), "held": msg.get("held", False)}
            try:
                obj = _object_from_dict(record)
                self.world = add_object(self.world, obj)
            except (ValueError, KeyError) as exc:
                self._error(client, "invalid", f"spawn failed: {exc}")
                return
            self._record_entry(tick, {"spawn": record})
            client.ack_pending = True
            return
        if kind == "reset":
            self.world = make_world(self.cfg)
            self.active = None
            self.active_name = None
            self.jog = {"left": ActuatorCommand(), "right": ActuatorCommand(),
                        "width": 0.0}
            self.script = []
            self.snapshots = [snapshot_line(self.world)]
            client.ack_pending = True
            return
        self._error(client, "invalid", f"unhandled message type {kind!r}")

    def _record_entry(self, tick: int, entry: dict) -> None:
        self.script.append({"tick": tick, **entry})

    def _error(self, client: _Client, code: str, message: str) -> None:
        client.events.append({"type": "error", "code": code, "message": message})
        client.wakeup.set()

    # -- tick loop -----------------------------------------------------------

    def _tick_once(self) -> None:
        pending, self.queue = self.queue, []
        for client, msg in pending:
            self._apply(client, msg)

        finished: Controller | None = None
        failure_override: str | None = None
        if self.active is not None:
            try:
                cmd = self.active.step(self.cfg, self.world)
            except TapegripError as exc:
                # A bad primitive must never take the tick loop down.
                failure_override = str(exc)
                cmd = None
            if cmd is None:
                finished = self.active
                if failure_override is not None:
                    finished.failure = failure_override
                self.active = None
                cmd = WorldCommand(left=self.jog["left"], right=self.jog["right"],
                                   width_rate=self.jog["width"])
        else:
            cmd = WorldCommand(left=self.jog["left"], right=self.jog["right"],
                               width_rate=self.jog["width"])
        self.world = step(self.cfg, self.world, cmd)
        if finished is not None:
            if finished.failure:
                evt = Event("primitive_failed",
                            {"name": self.active_name, "reason": finished.failure,
                             "result": finished.result()})
            else:
                evt = Event("primitive_done",
                            {"name": self.active_name, "result": finished.result()})
            self.world = replace(self.world, events=self.world.events + (evt,))
            self.active_name = None
        self.snapshots.append(snapshot_line(self.world))
        self._broadcast()

    def _broadcast(self) -> None:
        state = self.state_message()
        loop_time = asyncio.get_event_loop().time()
        tick_events = [{"type": "event", "tick": self.world.tick,
                        "event": {"type": e.type, "data": e.data}}
                       for e in self.world.events]
        for client in list(self.clients.values()):
            client.state_slot = state  # latest wins
            if tick_events:
                client.events.extend(tick_events)
            due = loop_time >= client.next_state_at
            if due or client.ack_pending or tick_events:
                if due:
                    client.next_state_at = loop_time + 1.0 / max(client.rate_hz, 1e-6)
                client.ack_pending = False
                client.wakeup.set()

    async def run(self) -> None:
        period = 1.0 / self.tick_hz
        loop = asyncio.get_event_loop()
        next_at = loop.time() + period
        while not self._stop.is_set():
            self._tick_once()
            delay = next_at - loop.time()
            next_at += period
            if delay > 0:
                try:
                    await asyncio.wait_for(self._stop.wait(), timeout=delay)
                except asyncio.TimeoutError:
                    pass
            else:
                await asyncio.sleep(0)  # keep the loop fair when overloaded
        self._write_recording()

    def stop(self) -> None:
        self._stop.set()

    def _write_recording(self) -> None:
        if not self.record_base:
            return
        base = Path(self.record_base)
        scenario = {
            "schema_version": 1,
            "config": config_to_dict(self.cfg),
            "objects": [],
            "script": self.script,
            "ticks": self.world.tick,
        }
        base.with_suffix(".scenario.json").write_text(
            json.dumps(scenario, indent=2, sort_keys=True) + "\n")
        base.with_suffix(".snapshots").write_text("\n".join(self.snapshots) + "\n")


async def _client_sender(server: TeleopServer, client: _Client) -> None:
    try:
        while not client.closed:
            await client.wakeup.wait()
            client.wakeup.clear()
            events, client.events = client.events, []
            for evt in events:
                await client.ws.send_text(json.dumps(evt, sort_keys=True))
            if client.state_slot is not None:
                state, client.state_slot = client.state_slot, None
                await client.ws.send_text(json.dumps(state, sort_keys=True))
    except (WebSocketDisconnect, RuntimeError):
        pass


def create_app(cfg: SimConfig, tick_hz: float = 100.0, record: str | None = None,
               ui_dir: str | None = None) -> FastAPI:
    server = TeleopServer(cfg, tick_hz, record=record)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        server._task = asyncio.create_task(server.run())
        yield
        server.stop()
        await server._task

    app = FastAPI(lifespan=lifespan)
    app.state.server = server

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        client = server.attach(ws)
        await ws.send_text(json.dumps(server.hello(), sort_keys=True))
        sender = asyncio.create_task(_client_sender(server, client))
        try:
            while True:
                raw = await ws.receive_text()
                try:
                    msg = json.loads(raw)
                except json.JSONDecodeError as exc:
                    server._error(client, "protocol", f"not JSON: {exc.msg}")
                    continue
                errors = sorted(_VALIDATOR.iter_errors(msg), key=str)
                if errors:
                    server._error(client, "protocol", errors[0].message)
                    continue
                server.enqueue(client, msg)
        except WebSocketDisconnect:
            pass
        finally:
            # Deadman: a vanished client must not leave rates applied.
            server.enqueue(client, {"type": "_deadman"})
            server.detach(client)
            sender.cancel()

    if ui_dir:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def serve(cfg: SimConfig, port: int, tick_hz: float, record: str | None = None,
          ui_dir: str | None = None, host: str = "127.0.0.1") -> None:
    import uvicorn
    app = create_app(cfg, tick_hz=tick_hz, record=record, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="warning")
