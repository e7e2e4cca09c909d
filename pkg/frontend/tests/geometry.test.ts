import { describe, expect, it } from "vitest";

import {
  boxFromDrag,
  normalizedToPixel,
  pixelToNormalized,
  pointFromClick,
  resamplePolyline,
  traceFromStroke,
  Viewport,
} from "../src/geometry.js";

const VIEW: Viewport = { width: 640, height: 640 };

describe("pixel <-> normalized mapping", () => {
  it("maps the canvas center to (0.5, 0.5)", () => {
    expect(pointFromClick(320, 320, VIEW)).toEqual({ kind: "point", x: 0.5, y: 0.5 });
  });

  it("round-trips within one pixel everywhere", () => {
    for (let px = 0; px <= VIEW.width; px += 41) {
      for (let py = 0; py <= VIEW.height; py += 53) {
        const n = pixelToNormalized(px, py, VIEW)!;
        const back = normalizedToPixel(n.x, n.y, VIEW);
        expect(Math.abs(back.px - px)).toBeLessThan(1);
        expect(Math.abs(back.py - py)).toBeLessThan(1);
      }
    }
  });

  it("ignores gestures outside the canvas", () => {
    expect(pointFromClick(-3, 100, VIEW)).toBeNull();
    expect(pointFromClick(100, 700, VIEW)).toBeNull();
  });
});

describe("drag -> box", () => {
  it("re-orders a bottom-right to top-left drag", () => {
    const box = boxFromDrag(500, 400, 100, 50, VIEW)!;
    expect(box.x_min).toBeCloseTo(100 / 640);
    expect(box.y_min).toBeCloseTo(50 / 640);
    expect(box.x_max).toBeCloseTo(500 / 640);
    expect(box.y_max).toBeCloseTo(400 / 640);
  });

  it("discards zero-area drags", () => {
    expect(boxFromDrag(100, 100, 100, 250, VIEW)).toBeNull();
  });
});

describe("stroke -> trace", () => {
  it("caps a 200-point stroke at 32 points keeping both endpoints", () => {
    const stroke: Array<[number, number]> = Array.from({ length: 200 }, (_, i) => [
      i * 3,
      320 + 100 * Math.sin(i / 20),
    ]);
    const trace = traceFromStroke(stroke, VIEW)!;
    expect(trace.points.length).toBeLessThanOrEqual(32);
    const first = stroke[0]!;
    const last = stroke[stroke.length - 1]!;
    expect(trace.points[0]![0]).toBeCloseTo(first[0] / 640);
    expect(trace.points[0]![1]).toBeCloseTo(first[1] / 640);
    expect(trace.points[trace.points.length - 1]![0]).toBeCloseTo(last[0] / 640);
    expect(trace.points[trace.points.length - 1]![1]).toBeCloseTo(last[1] / 640);
  });

  it("passes short strokes through unchanged", () => {
    const trace = traceFromStroke([[0, 0], [320, 320], [640, 160]], VIEW)!;
    expect(trace.points).toEqual([
      [0, 0],
      [0.5, 0.5],
      [1, 0.25],
    ]);
  });

  it("discards strokes that leave the canvas or are degenerate", () => {
    expect(traceFromStroke([[100, 100], [700, 100]], VIEW)).toBeNull();
    expect(traceFromStroke([[100, 100]], VIEW)).toBeNull();
  });
});

describe("polyline resampling", () => {
  it("spaces points uniformly by arc length on a straight line", () => {
    const line: Array<[number, number]> = Array.from({ length: 100 }, (_, i) => [
      i / 99,
      0,
    ]);
    const out = resamplePolyline(line, 5);
    expect(out.length).toBe(5);
    for (let i = 0; i < 5; i++) {
      expect(out[i]![0]).toBeCloseTo(i / 4, 6);
    }
  });

  it("collapses a zero-length stroke to its endpoints", () => {
    const out = resamplePolyline(Array(50).fill([0.3, 0.3]), 5);
    expect(out).toEqual([
      [0.3, 0.3],
      [0.3, 0.3],
    ]);
  });
});
