/** Field geometry: yard coordinates to canvas pixels, snapping, colors. */

import type { Point, RoleName } from "./types.js";

/** Field extents in yards; the origin (ball spot) sits at the center. */
export const FIELD = { halfLength: 60, halfWidth: 26.65 };

export const PX_PER_YARD = 9;
export const CANVAS_WIDTH = Math.round(2 * FIELD.halfLength * PX_PER_YARD);
export const CANVAS_HEIGHT = Math.round(2 * FIELD.halfWidth * PX_PER_YARD);

export const GROUP_COLORS: Record<string, string> = {
  qb: "#d62728",
  back: "#2ca089",
  wr: "#1f77b4",
  te: "#ff7f0e",
  line: "#8a8a8a",
};

const ROLE_GROUP: Record<RoleName, string> = {
  QB: "qb",
  RB: "back",
  FB: "back",
  WR: "wr",
  TE: "te",
  C: "line",
  G: "line",
  T: "line",
};

export function roleColor(role: RoleName): string {
  return GROUP_COLORS[ROLE_GROUP[role]];
}

/** Yard coordinates -> canvas pixels (y axis flips; +y is the offense's left). */
export function toPixels([x, y]: Point): Point {
  return [(x + FIELD.halfLength) * PX_PER_YARD, (FIELD.halfWidth - y) * PX_PER_YARD];
}

/** Canvas pixels -> yard coordinates. */
export function toYards([px, py]: Point): Point {
  return [px / PX_PER_YARD - FIELD.halfLength, FIELD.halfWidth - py / PX_PER_YARD];
}

/** Snap a yard coordinate to the half-yard grid, clamped to the field. */
export function snapToGrid([x, y]: Point, step = 0.5): Point {
  const snap = (v: number, bound: number) =>
    Math.min(bound, Math.max(-bound, Math.round(v / step) * step));
  return [snap(x, FIELD.halfLength), snap(y, FIELD.halfWidth)];
}

export function distance(a: Point, b: Point): number {
  return Math.hypot(a[0] - b[0], a[1] - b[1]);
}

/** Index of the player within `radius` yards of `point`, or -1. */
export function hitTest(point: Point, positions: Point[], radius = 1.5): number {
  let best = -1;
  let bestDist = radius;
  positions.forEach((pos, i) => {
    const d = distance(point, pos);
    if (d <= bestDist) {
      best = i;
      bestDist = d;
    }
  });
  return best;
}

/**
 * Stroke width for trajectory segment `index` of `count`: tapers linearly
 * from thick at the start to thin at the end to show direction of movement.
 */
export function taperWidth(index: number, count: number, max = 4, min = 1): number {
  if (count <= 1) return max;
  return max + ((min - max) * index) / (count - 1);
}
