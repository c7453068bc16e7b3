// Joystick/keyboard state -> protocol messages.  Deflections in [-1, 1] map
// linearly onto the rate limits from the hello config; messages are emitted
// only when the commanded rates change (returning to center emits a single
// all-zero jog so the deadman engages).

import { PROTOCOL_VERSION, validateOutbound, type ClientMessage } from "./protocol.js";

export interface RateLimits {
  dL: number; // mm/s per extruder
  dTheta4: number; // rad/s
  dWidth: number; // mm/s
}

export interface InputState {
  left: { x: number; y: number }; // x: beam slew, y: total length feed
  right: { x: number; y: number };
  leftConvey: number; // -1..1, opposing feed pair (surface stream)
  rightConvey: number;
  width: number; // -1..1 width rate
}

export function neutralInput(): InputState {
  return {
    left: { x: 0, y: 0 },
    right: { x: 0, y: 0 },
    leftConvey: 0,
    rightConvey: 0,
    width: 0,
  };
}

const clamp = (v: number) => Math.max(-1, Math.min(1, v));

export interface JogRates {
  side: "left" | "right";
  dL1_rate: number;
  dL2_rate: number;
  dTheta4_rate: number;
  dWidth_rate: number;
}

export function ratesFor(input: InputState, limits: RateLimits): JogRates[] {
  const out: JogRates[] = [];
  for (const side of ["left", "right"] as const) {
    const stick = input[side];
    const convey = side === "left" ? input.leftConvey : input.rightConvey;
    // stick y feeds both extruders together (length change); convey streams
    // them in opposition (surface motion at constant shape)
    const feed = clamp(stick.y) * limits.dL * 0.5;
    const stream = clamp(convey) * limits.dL * 0.5;
    out.push({
      side,
      dL1_rate: feed - stream,
      dL2_rate: feed + stream,
      dTheta4_rate: clamp(stick.x) * limits.dTheta4,
      dWidth_rate: clamp(input.width) * limits.dWidth,
    });
  }
  return out;
}

export function inputToMessages(
  input: InputState,
  previous: InputState | null,
  limits: RateLimits,
): ClientMessage[] {
  const now = ratesFor(input, limits);
  const before = previous === null ? null : ratesFor(previous, limits);
  const messages: ClientMessage[] = [];
  now.forEach((rates, i) => {
    if (before !== null && JSON.stringify(rates) === JSON.stringify(before[i])) {
      return; // unchanged: emit nothing
    }
    messages.push(
      validateOutbound({
        protocol_version: PROTOCOL_VERSION,
        type: "jog",
        ...rates,
      }),
    );
  });
  return messages;
}

export function primitiveMessage(
  name: "grasp" | "release" | "translate" | "rotate" | "convey" | "auto_grip",
  params: Record<string, unknown>,
): ClientMessage {
  return validateOutbound({
    protocol_version: PROTOCOL_VERSION,
    type: "primitive",
    name,
    params,
  });
}

export function rotateMessage(objectId: string, angleDeg: number, servo: boolean): ClientMessage {
  return primitiveMessage("rotate", {
    object_id: objectId,
    angle: (angleDeg * Math.PI) / 180,
    servo,
  });
}

export function keyboardDeflection(keys: Set<string>): InputState {
  // Keyboard fallback mirroring the joystick mapping (CI-testable input).
  const state = neutralInput();
  const add = (v: number, plus: string, minus: string) =>
    v + (keys.has(plus) ? 1 : 0) - (keys.has(minus) ? 1 : 0);
  state.left.x = add(0, "a", "d");
  state.left.y = add(0, "w", "s");
  state.right.x = add(0, "j", "l");
  state.right.y = add(0, "i", "k");
  state.leftConvey = add(0, "q", "e");
  state.rightConvey = add(0, "u", "o");
  state.width = add(0, "]", "[");
  return state;
}
