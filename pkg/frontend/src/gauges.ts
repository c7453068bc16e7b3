// Force gauge view models: the displayed numbers are the state message's
// estimator fields verbatim, colored against the servo setpoint band.

import type { StateMessage } from "./protocol.js";

export interface Gauge {
  side: "left" | "right";
  fRead: number;
  f2Prime: number;
  band: "zero" | "below" | "in" | "above";
}

export function gaugeBand(
  force: number,
  setpoint: number,
  tolerance = 0.2,
): Gauge["band"] {
  if (force <= 1e-9) return "zero";
  if (force < setpoint * (1 - tolerance)) return "below";
  if (force > setpoint * (1 + tolerance)) return "above";
  return "in";
}

export function forceGauges(state: StateMessage, setpoint: number): Gauge[] {
  return (["left", "right"] as const).map((side) => {
    const est = state.estimates[side];
    const fRead = est === null ? 0 : est.F_read;
    const f2 = est === null ? 0 : est.F2_prime;
    return { side, fRead, f2Prime: f2, band: gaugeBand(f2, setpoint) };
  });
}

export const BAND_COLORS: Record<Gauge["band"], string> = {
  zero: "#718096",
  below: "#d69e2e",
  in: "#38a169",
  above: "#e53e3e",
};
