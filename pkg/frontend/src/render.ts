// Scene construction and canvas drawing.  Scene building is pure (testable);
// draw() walks the ops against a CanvasRenderingContext2D-compatible target.

import { appendageScene } from "./geometry.js";
import type { StateMessage, HelloMessage } from "./protocol.js";
import { Viewport, worldToCanvas } from "./transform.js";

export type SceneOp =
  | { kind: "segment"; from: [number, number]; to: [number, number]; color: string; width: number }
  | { kind: "arc"; center: [number, number]; radius: number; start: number; end: number; ccw: boolean; color: string; width: number }
  | { kind: "circle"; center: [number, number]; radius: number; color: string; fill: boolean; tag?: string }
  | { kind: "ellipse"; center: [number, number]; rx: number; ry: number; rotation: number; color: string }
  | { kind: "marker"; center: [number, number]; radius: number; color: string; tag?: string };

const TAPE = "#2b6cb0";
const TAPE_DIM = "#90b8e0";
const OBJECT = "#b83280";
const CONTACT = "#e53e3e";
const BASE = "#4a5568";

export function baseScene(v: Viewport, hello: HelloMessage): SceneOp[] {
  const s = hello.config.outer_extruder_spacing;
  const ops: SceneOp[] = [];
  ops.push({
    kind: "segment",
    from: worldToCanvas(v, -s / 2 - 40, 0),
    to: worldToCanvas(v, s / 2 + 40, 0),
    color: BASE,
    width: 3,
  });
  for (const x of [-s / 2, s / 2]) {
    ops.push({ kind: "marker", center: worldToCanvas(v, x, 0), radius: 4, color: BASE });
  }
  return ops;
}

export function worldScene(v: Viewport, hello: HelloMessage, state: StateMessage): SceneOp[] {
  const spacing = hello.config.outer_extruder_spacing;
  const b = hello.config.b;
  const ops = baseScene(v, hello);
  for (const side of ["left", "right"] as const) {
    const app = side === "left" ? state.left : state.right;
    const sc = appendageScene(app, side, spacing, b);
    ops.push({
      kind: "segment",
      from: worldToCanvas(v, sc.e1[0], sc.e1[1]),
      to: worldToCanvas(v, sc.p1[0], sc.p1[1]),
      color: TAPE_DIM,
      width: 2,
    });
    ops.push({
      kind: "segment",
      from: worldToCanvas(v, sc.e2[0], sc.e2[1]),
      to: worldToCanvas(v, sc.p2[0], sc.p2[1]),
      color: TAPE,
      width: 3,
    });
    const [cx, cy] = worldToCanvas(v, sc.joint[0], sc.joint[1]);
    // canvas y flips: world angles negate, sense flips
    ops.push({
      kind: "arc",
      center: [cx, cy],
      radius: sc.r * v.scale,
      start: -sc.arcStart,
      end: -sc.arcEnd,
      ccw: !sc.ccw,
      color: TAPE,
      width: 3,
      // tagging via tag field is reserved for markers; the tip arc is
      // identified by its center matching the joint position
    } as SceneOp);
    ops.push({
      kind: "marker",
      center: [cx, cy],
      radius: 3,
      color: TAPE,
      tag: `tip_${side}`,
    });
  }
  for (const obj of state.objects) {
    const [cx, cy] = worldToCanvas(v, obj.position[0], obj.position[1]);
    if (obj.shape.kind === "circle") {
      ops.push({
        kind: "circle",
        center: [cx, cy],
        radius: obj.shape.radius * v.scale,
        color: OBJECT,
        fill: obj.held,
        tag: `object_${obj.id}`,
      });
    } else {
      ops.push({
        kind: "ellipse",
        center: [cx, cy],
        rx: obj.shape.semi_major * v.scale,
        ry: obj.shape.semi_minor * v.scale,
        rotation: -obj.orientation,
        color: OBJECT,
      });
    }
  }
  for (const c of state.contacts) {
    const [cx, cy] = worldToCanvas(v, c.point[0], c.point[1]);
    // marker radius scales with force so grip strength is visible at a glance
    ops.push({
      kind: "marker",
      center: [cx, cy],
      radius: 2 + 3 * Math.min(c.normal_force, 5),
      color: CONTACT,
      tag: `contact_${c.object_id}_${c.side}`,
    });
  }
  return ops;
}

interface Ctx2D {
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number, ccw?: boolean): void;
  ellipse(
    x: number, y: number, rx: number, ry: number,
    rotation: number, a0: number, a1: number,
  ): void;
  stroke(): void;
  fill(): void;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
}

export function draw(ctx: Ctx2D, ops: SceneOp[]): void {
  for (const op of ops) {
    ctx.beginPath();
    switch (op.kind) {
      case "segment":
        ctx.strokeStyle = op.color;
        ctx.lineWidth = op.width;
        ctx.moveTo(op.from[0], op.from[1]);
        ctx.lineTo(op.to[0], op.to[1]);
        ctx.stroke();
        break;
      case "arc":
        ctx.strokeStyle = op.color;
        ctx.lineWidth = op.width;
        ctx.arc(op.center[0], op.center[1], op.radius, op.start, op.end, op.ccw);
        ctx.stroke();
        break;
      case "circle":
        ctx.strokeStyle = op.color;
        ctx.fillStyle = op.color + "44";
        ctx.lineWidth = 2;
        ctx.arc(op.center[0], op.center[1], op.radius, 0, 2 * Math.PI);
        if (op.fill) ctx.fill();
        ctx.stroke();
        break;
      case "ellipse":
        ctx.strokeStyle = op.color;
        ctx.lineWidth = 2;
        ctx.ellipse(op.center[0], op.center[1], op.rx, op.ry, op.rotation, 0, 2 * Math.PI);
        ctx.stroke();
        break;
      case "marker":
        ctx.fillStyle = op.color;
        ctx.arc(op.center[0], op.center[1], op.radius, 0, 2 * Math.PI);
        ctx.fill();
        break;
    }
  }
}
