/** Canvas-space <-> normalized image-space mapping and gesture shaping.
 *
 * The scene is a unit square rendered into a square viewport; every
 * guidance coordinate crossing the wire is normalized, so all pixel
 * arithmetic lives here.
 */

import {
  BoxPrior,
  PointPrior,
  TracePrior,
  TRACE_MAX_POINTS,
} from "./protocol.js";

export interface Viewport {
  width: number;
  height: number;
}

export function pixelToNormalized(
  px: number,
  py: number,
  view: Viewport
): { x: number; y: number } | null {
  if (view.width <= 0 || view.height <= 0) return null;
  if (px < 0 || py < 0 || px > view.width || py > view.height) return null;
  return { x: px / view.width, y: py / view.height };
}

export function normalizedToPixel(
  x: number,
  y: number,
  view: Viewport
): { px: number; py: number } {
  return { px: x * view.width, py: y * view.height };
}

/** Single click -> point prior. Returns null for gestures off the canvas. */
export function pointFromClick(
  px: number,
  py: number,
  view: Viewport
): PointPrior | null {
  const p = pixelToNormalized(px, py, view);
  return p ? { kind: "point", x: p.x, y: p.y } : null;
}

/** Drag in any direction -> well-ordered box prior. */
export function boxFromDrag(
  startPx: number,
  startPy: number,
  endPx: number,
  endPy: number,
  view: Viewport
): BoxPrior | null {
  const a = pixelToNormalized(startPx, startPy, view);
  const b = pixelToNormalized(endPx, endPy, view);
  if (!a || !b) return null;
  const xMin = Math.min(a.x, b.x);
  const xMax = Math.max(a.x, b.x);
  const yMin = Math.min(a.y, b.y);
  const yMax = Math.max(a.y, b.y);
  if (xMin === xMax || yMin === yMax) return null; // degenerate drag
  return { kind: "box", x_min: xMin, y_min: yMin, x_max: xMax, y_max: yMax };
}

/** Uniform arc-length resampling keeping both endpoints. */
export function resamplePolyline(
  points: Array<[number, number]>,
  n: number
): Array<[number, number]> {
  if (points.length <= n) return points.slice();
  const first = points[0]!;
  const last = points[points.length - 1]!;
  const cum: number[] = [0];
  for (let i = 1; i < points.length; i++) {
    const [x0, y0] = points[i - 1]!;
    const [x1, y1] = points[i]!;
    cum.push(cum[i - 1]! + Math.hypot(x1 - x0, y1 - y0));
  }
  const total = cum[cum.length - 1]!;
  if (total === 0) return [first, last];
  const out: Array<[number, number]> = [first];
  let seg = 1;
  for (let k = 1; k < n - 1; k++) {
    const target = (total * k) / (n - 1);
    while (seg < points.length - 1 && cum[seg]! < target) seg++;
    const t0 = cum[seg - 1]!;
    const t1 = cum[seg]!;
    const f = t1 > t0 ? (target - t0) / (t1 - t0) : 0;
    const [x0, y0] = points[seg - 1]!;
    const [x1, y1] = points[seg]!;
    out.push([x0 + f * (x1 - x0), y0 + f * (y1 - y0)]);
  }
  out.push(last);
  return out;
}

/** Freehand stroke (pixel samples) -> trace prior with <= 32 points.
 * The server resamples again to its own waypoint count; the client cap
 * only bounds the message size. */
export function traceFromStroke(
  strokePx: Array<[number, number]>,
  view: Viewport
): TracePrior | null {
  const normalized: Array<[number, number]> = [];
  for (const [px, py] of strokePx) {
    const p = pixelToNormalized(px, py, view);
    if (!p) return null; // stroke left the canvas: discard the gesture
    normalized.push([p.x, p.y]);
  }
  if (normalized.length < 2) return null;
  return {
    kind: "trace",
    points: resamplePolyline(normalized, TRACE_MAX_POINTS),
  };
}
