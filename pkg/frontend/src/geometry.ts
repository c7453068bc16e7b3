// World-frame geometry of an appendage, reconstructed from the local-frame
// triangle carried in state messages.  The left appendage's local frame has
// its outer extruder at the world point (-spacing/2, 0) with +x toward the
// center line; the right appendage mirrors across x = 0.

import type { Appendage } from "./protocol.js";

export interface AppendageScene {
  e1: [number, number]; // outer extruder exit
  e2: [number, number]; // inner extruder exit
  p1: [number, number]; // outer tangent point
  p2: [number, number]; // inner tangent point
  joint: [number, number]; // rolling-joint center
  r: number;
  arcStart: number; // canvas-agnostic world angles of the arc span
  arcEnd: number;
  ccw: boolean;
}

function mirror(p: [number, number], spacing: number): [number, number] {
  return [spacing - p[0], p[1]];
}

export function appendageScene(
  app: Appendage,
  side: "left" | "right",
  spacing: number,
  b: number,
): AppendageScene {
  const half = spacing / 2;
  const u1: [number, number] = [Math.cos(app.theta1), Math.sin(app.theta1)];
  const u2: [number, number] = [Math.cos(app.theta2), Math.sin(app.theta2)];
  let e1: [number, number] = [0, 0];
  let e2: [number, number] = [app.a, -b];
  let p1: [number, number] = [app.L1 * u1[0], app.L1 * u1[1]];
  let joint: [number, number] = [app.tip[0], app.tip[1]];
  let p2: [number, number] = [e2[0] + app.L2 * u2[0], e2[1] + app.L2 * u2[1]];
  const offset = (p: [number, number]): [number, number] => [p[0] - half, p[1]];
  if (side === "left") {
    e1 = offset(e1);
    e2 = offset(e2);
    p1 = offset(p1);
    p2 = offset(p2);
    joint = offset(joint);
  } else {
    e1 = mirror(e1, half);
    e2 = mirror(e2, half);
    p1 = mirror(p1, half);
    p2 = mirror(p2, half);
    joint = mirror(joint, half);
  }
  const angleOf = (p: [number, number]) =>
    Math.atan2(p[1] - joint[1], p[0] - joint[0]);
  return {
    e1,
    e2,
    p1,
    p2,
    joint,
    r: app.r,
    arcStart: angleOf(p1),
    arcEnd: angleOf(p2),
    // the rolling bend wraps clockwise from P1 to P2 in the left local
    // frame; mirroring flips the sense
    ccw: side === "right",
  };
}

export function worldTip(app: Appendage, side: "left" | "right", spacing: number): [number, number] {
  const half = spacing / 2;
  if (side === "left") return [app.tip[0] - half, app.tip[1]];
  return [half - app.tip[0], app.tip[1]];
}
