/** Draw one frame of the console onto a 2D canvas context.
 *
 * Only the Canvas2D subset actually used is required, so tests can pass a
 * recording stub instead of a real canvas.
 */

import { Viewport, normalizedToPixel } from "./geometry.js";
import { ViewState, stalenessOf } from "./view.js";

export interface Canvas2DLike {
  // Write-only in this module; the union mirrors CanvasRenderingContext2D
  // so a real context satisfies the interface.
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  stroke(): void;
  fill(): void;
  fillText(text: string, x: number, y: number): void;
}

const OBJECT_COLORS: Record<string, string> = {
  red: "#d64541",
  blue: "#4169b0",
  green: "#3f9b4f",
  yellow: "#d4b23c",
};

function colorFor(color: string | null, label: string): string {
  if (color && OBJECT_COLORS[color]) return OBJECT_COLORS[color];
  for (const key of Object.keys(OBJECT_COLORS)) {
    if (label.includes(key)) return OBJECT_COLORS[key]!;
  }
  return "#888888";
}

function drawBox(
  ctx: Canvas2DLike,
  view: Viewport,
  box: { xMin: number; yMin: number; xMax: number; yMax: number },
  style: string,
  width: number
): void {
  const a = normalizedToPixel(box.xMin, box.yMin, view);
  const b = normalizedToPixel(box.xMax, box.yMax, view);
  ctx.strokeStyle = style;
  ctx.lineWidth = width;
  ctx.strokeRect(a.px, a.py, b.px - a.px, b.py - a.py);
}

/** Render the scene, the parsed reasoning overlay, and the status strip.
 * A missing reasoning record simply omits the overlay. */
export function renderFrame(
  state: ViewState,
  ctx: Canvas2DLike,
  view: Viewport
): void {
  ctx.clearRect(0, 0, view.width, view.height);
  ctx.fillStyle = "#1e1e24";
  ctx.fillRect(0, 0, view.width, view.height);
  if (!state.observation) return; // nothing received yet

  // Scene: observed objects as labeled boxes.
  ctx.font = "12px sans-serif";
  for (const item of state.observation.main_view) {
    const [xMin, yMin, xMax, yMax] = item.box;
    drawBox(ctx, view, { xMin, yMin, xMax, yMax }, colorFor(item.color, item.label), 2);
    const at = normalizedToPixel(xMin, yMin, view);
    ctx.fillStyle = "#e8e8e8";
    ctx.fillText(item.label, at.px, at.py - 4);
  }

  // Gripper marker: circle scaled slightly by aperture.
  const [gx, gy, aperture] = state.observation.proprio;
  const g = normalizedToPixel(gx, gy, view);
  ctx.beginPath();
  ctx.arc(g.px, g.py, 5 + 4 * aperture, 0, 2 * Math.PI);
  ctx.strokeStyle = "#ffffff";
  ctx.lineWidth = 2;
  ctx.stroke();

  // Reasoning overlay (omitted when no record has arrived).
  const overlay = state.overlay;
  if (overlay) {
    if (overlay.pick) drawBox(ctx, view, overlay.pick.box, "#ffd23c", 3);
    if (overlay.gripperPath.length >= 2) {
      ctx.beginPath();
      const first = normalizedToPixel(
        overlay.gripperPath[0]!.x,
        overlay.gripperPath[0]!.y,
        view
      );
      ctx.moveTo(first.px, first.py);
      for (const p of overlay.gripperPath.slice(1)) {
        const q = normalizedToPixel(p.x, p.y, view);
        ctx.lineTo(q.px, q.py);
      }
      ctx.strokeStyle = "#7fd4ff";
      ctx.lineWidth = 2;
      ctx.stroke();
    }
    if (overlay.affordance) {
      const a = normalizedToPixel(overlay.affordance.x, overlay.affordance.y, view);
      ctx.beginPath();
      ctx.arc(a.px, a.py, 4, 0, 2 * Math.PI);
      ctx.fillStyle = "#ff8c42";
      ctx.fill();
    }
  }

  // Staged guidance draft, drawn distinctly until confirmed.
  if (state.draft) {
    const prior = state.draft.prior;
    ctx.strokeStyle = "#b57fff";
    ctx.lineWidth = 1;
    if (prior.kind === "point") {
      const p = normalizedToPixel(prior.x, prior.y, view);
      ctx.beginPath();
      ctx.arc(p.px, p.py, 6, 0, 2 * Math.PI);
      ctx.stroke();
    } else if (prior.kind === "box") {
      drawBox(
        ctx,
        view,
        { xMin: prior.x_min, yMin: prior.y_min, xMax: prior.x_max, yMax: prior.y_max },
        "#b57fff",
        1
      );
    } else {
      ctx.beginPath();
      const [x0, y0] = prior.points[0]!;
      const p0 = normalizedToPixel(x0, y0, view);
      ctx.moveTo(p0.px, p0.py);
      for (const [x, y] of prior.points.slice(1)) {
        const p = normalizedToPixel(x, y, view);
        ctx.lineTo(p.px, p.py);
      }
      ctx.stroke();
    }
  }

  // Status strip: staleness, dropped frames, errors, outcome banner.
  ctx.fillStyle = "#e8e8e8";
  const staleness = stalenessOf(state);
  if (staleness !== null) {
    ctx.fillText(`staleness ${staleness}`, 8, view.height - 8);
  }
  if (state.droppedFrames > 0) {
    ctx.fillStyle = "#ff8c42";
    ctx.fillText(`dropped ${state.droppedFrames} frames`, 8, view.height - 24);
  }
  if (state.lastError) {
    ctx.fillStyle = "#d64541";
    ctx.fillText(state.lastError, 8, 16);
  }
  if (state.outcome) {
    ctx.fillStyle = state.outcome === "success" ? "#3f9b4f" : "#d64541";
    ctx.font = "20px sans-serif";
    ctx.fillText(
      `${state.outcome.toUpperCase()} at tick ${state.finalTick}`,
      view.width / 2 - 80,
      28
    );
  }
}
