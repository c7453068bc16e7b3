// Grip-force heatmap overlay: parses the CSV exported by the workspace
// command (columns x_mm,y_mm,reach_left,reach_right,reach_both,F_grip_N).

export interface HeatmapCell {
  x: number;
  y: number;
  reachBoth: boolean;
  force: number | null;
}

export interface Heatmap {
  cells: HeatmapCell[];
  resolution: number;
  fMin: number;
  fMax: number;
}

export function parseHeatmapCsv(text: string): Heatmap {
  const lines = text.trim().split(/\r?\n/);
  const header = lines[0];
  if (header !== "x_mm,y_mm,reach_left,reach_right,reach_both,F_grip_N") {
    throw new Error(`unexpected heatmap header: ${header}`);
  }
  const cells: HeatmapCell[] = [];
  const xs = new Set<number>();
  let fMin = Infinity;
  let fMax = -Infinity;
  for (const line of lines.slice(1)) {
    if (!line) continue;
    const [x, y, , , both, force] = line.split(",");
    const cell: HeatmapCell = {
      x: parseFloat(x),
      y: parseFloat(y),
      reachBoth: both === "1",
      force: force === "" ? null : parseFloat(force),
    };
    xs.add(cell.x);
    if (cell.force !== null) {
      fMin = Math.min(fMin, cell.force);
      fMax = Math.max(fMax, cell.force);
    }
    cells.push(cell);
  }
  const sorted = [...xs].sort((a, b) => a - b);
  let resolution = 10;
  if (sorted.length > 1) resolution = sorted[1] - sorted[0];
  return { cells, resolution, fMin, fMax };
}

export function forceColor(map: Heatmap, force: number): string {
  const t =
    map.fMax > map.fMin ? (force - map.fMin) / (map.fMax - map.fMin) : 0.5;
  // blue (weak) -> red (strong)
  const r = Math.round(40 + 215 * t);
  const b = Math.round(255 - 215 * t);
  return `rgba(${r},60,${b},0.35)`;
}
