import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import {
  inputToMessages,
  keyboardDeflection,
  neutralInput,
  primitiveMessage,
  rotateMessage,
} from "../src/input.js";
import { ClientMessage, StateMessage, validateOutbound } from "../src/protocol.js";

const LIMITS = { dL: 200, dTheta4: 0.785, dWidth: 100 };

describe("outbound message schema conformance", () => {
  it("validates every UI-emitted message shape", () => {
    const samples: unknown[] = [
      ...inputToMessages(
        { ...neutralInput(), left: { x: 0.5, y: -1 }, width: 0.25 },
        null,
        LIMITS,
      ),
      primitiveMessage("auto_grip", {}),
      primitiveMessage("grasp", { object_id: "ball" }),
      primitiveMessage("release", { object_id: "ball" }),
      primitiveMessage("translate", { object_id: "ball", x: 10, y: 400 }),
      primitiveMessage("convey", { displacement: 120 }),
      rotateMessage("ball", 90, true),
      {
        protocol_version: 1,
        type: "spawn_object",
        id: "egg",
        shape: { kind: "ellipse", semi_major: 40, semi_minor: 20 },
        pose: { x: 0, y: 430 },
      },
      { protocol_version: 1, type: "subscribe", rate_hz: 30 },
      { protocol_version: 1, type: "reset" },
      { protocol_version: 1, type: "goto", side: "left", x: -50, y: 400 },
    ];
    for (const msg of samples) {
      expect(() => ClientMessage.parse(msg)).not.toThrow();
    }
  });

  it("rejects unknown fields and missing protocol version", () => {
    expect(() =>
      ClientMessage.parse({ protocol_version: 1, type: "jog", side: "left", warp: 9 }),
    ).toThrow();
    expect(() => ClientMessage.parse({ type: "reset" })).toThrow();
    expect(() =>
      validateOutbound({ protocol_version: 2, type: "reset" }),
    ).toThrow();
  });

  it("rotate button converts degrees to radians", () => {
    const msg = rotateMessage("ball", 90, true);
    if (msg.type !== "primitive") throw new Error("wrong type");
    expect(msg.params?.angle).toBeCloseTo(Math.PI / 2, 12);
  });
});

describe("joystick mapping", () => {
  it("zero deflection emits no message (and never nonzero rates)", () => {
    const neutral = neutralInput();
    // cold start at neutral: a single all-zero jog per side arms the deadman
    const first = inputToMessages(neutral, null, LIMITS);
    for (const m of first) {
      if (m.type !== "jog") throw new Error("expected jog");
      expect(m.dL1_rate).toBe(0);
      expect(m.dL2_rate).toBe(0);
      expect(m.dTheta4_rate).toBe(0);
      expect(m.dWidth_rate).toBe(0);
    }
    // steady neutral: nothing at all
    expect(inputToMessages(neutral, neutral, LIMITS)).toHaveLength(0);
  });

  it("full deflection maps to the configured maxima", () => {
    const input = { ...neutralInput(), left: { x: 1, y: 1 } };
    const msgs = inputToMessages(input, neutralInput(), LIMITS);
    const left = msgs.find((m) => m.type === "jog" && m.side === "left");
    if (!left || left.type !== "jog") throw new Error("no left jog");
    expect(left.dTheta4_rate).toBeCloseTo(LIMITS.dTheta4, 12);
    expect((left.dL1_rate ?? 0) + (left.dL2_rate ?? 0)).toBeCloseTo(LIMITS.dL, 12);
  });

  it("conveyance deflection streams the extruders in opposition", () => {
    const input = { ...neutralInput(), leftConvey: 1 };
    const msgs = inputToMessages(input, neutralInput(), LIMITS);
    const left = msgs.find((m) => m.type === "jog" && m.side === "left");
    if (!left || left.type !== "jog") throw new Error("no left jog");
    expect(left.dL1_rate).toBeCloseTo(-(left.dL2_rate ?? 0), 12);
    expect(left.dL2_rate).toBeGreaterThan(0);
  });

  it("keyboard fallback mirrors the joystick mapping", () => {
    const state = keyboardDeflection(new Set(["w", "d", "u"]));
    expect(state.left.y).toBe(1);
    expect(state.left.x).toBe(-1);
    expect(state.rightConvey).toBe(1);
  });
});

describe("server message parsing", () => {
  it("accepts a recorded simulator state frame", () => {
    const fixture = JSON.parse(
      readFileSync(new URL("./fixtures/final_state.json", import.meta.url), "utf-8"),
    );
    const state = { ...fixture.state, type: "state", active_primitive: null };
    expect(() => StateMessage.parse(state)).not.toThrow();
  });
});
