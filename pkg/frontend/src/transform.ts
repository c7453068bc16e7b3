// World <-> canvas mapping. World: mm, +y up, origin at the base center.
// Canvas: px, +y down.

export interface Viewport {
  widthPx: number;
  heightPx: number;
  scale: number; // px per mm
  worldCenter: [number, number];
}

export function defaultViewport(widthPx: number, heightPx: number): Viewport {
  // Fit a bit more than the full reach annulus (about +/-950 mm, 0..820 mm).
  const scale = Math.min(widthPx / 1950, heightPx / 950);
  return { widthPx, heightPx, scale, worldCenter: [0, 380] };
}

export function worldToCanvas(v: Viewport, x: number, y: number): [number, number] {
  return [
    v.widthPx / 2 + (x - v.worldCenter[0]) * v.scale,
    v.heightPx / 2 - (y - v.worldCenter[1]) * v.scale,
  ];
}

export function canvasToWorld(v: Viewport, px: number, py: number): [number, number] {
  return [
    v.worldCenter[0] + (px - v.widthPx / 2) / v.scale,
    v.worldCenter[1] - (py - v.heightPx / 2) / v.scale,
  ];
}
