import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { forceGauges, gaugeBand } from "../src/gauges.js";
import { forceColor, parseHeatmapCsv } from "../src/heatmap.js";
import type { StateMessage } from "../src/protocol.js";

const fixture = JSON.parse(
  readFileSync(new URL("./fixtures/final_state.json", import.meta.url), "utf-8"),
);
const state: StateMessage = { ...fixture.state, type: "state", active_primitive: null };

describe("force gauges", () => {
  it("passes the estimator fields through verbatim", () => {
    const gauges = forceGauges(state, 1.0);
    for (const g of gauges) {
      const est = state.estimates[g.side];
      expect(g.f2Prime).toBe(est === null ? 0 : est.F2_prime);
      expect(g.fRead).toBe(est === null ? 0 : est.F_read);
    }
  });

  it("classifies bands around the setpoint", () => {
    expect(gaugeBand(0, 1.0)).toBe("zero");
    expect(gaugeBand(0.5, 1.0)).toBe("below");
    expect(gaugeBand(1.0, 1.0)).toBe("in");
    expect(gaugeBand(1.19, 1.0)).toBe("in");
    expect(gaugeBand(1.5, 1.0)).toBe("above");
  });

  it("shows zero on no contact", () => {
    const empty = { ...state, estimates: { left: null, right: null } };
    for (const g of forceGauges(empty, 1.0)) {
      expect(g.f2Prime).toBe(0);
      expect(g.band).toBe("zero");
    }
  });
});

describe("heatmap overlay", () => {
  const text = readFileSync(
    new URL("./fixtures/heatmap_small.csv", import.meta.url),
    "utf-8",
  );

  it("parses the exported CSV", () => {
    const map = parseHeatmapCsv(text);
    expect(map.cells.length).toBeGreaterThan(100);
    const gripped = map.cells.filter((c) => c.reachBoth);
    expect(gripped.length).toBeGreaterThan(10);
    for (const cell of gripped) {
      expect(cell.force).not.toBeNull();
      expect(cell.force!).toBeGreaterThan(0);
    }
    expect(map.resolution).toBeCloseTo(60, 6);
    expect(map.fMax).toBeGreaterThan(map.fMin);
  });

  it("rejects foreign CSVs", () => {
    expect(() => parseHeatmapCsv("a,b,c\n1,2,3\n")).toThrow();
  });

  it("colors span the force range", () => {
    const map = parseHeatmapCsv(text);
    expect(forceColor(map, map.fMin)).not.toBe(forceColor(map, map.fMax));
  });
});
