/** Parse the serialized reasoning record into overlay geometry.
 *
 * The console only needs the grounded, drawable fields: the object list,
 * the pick, the affordance point, and the 2D motion sketch, plus the
 * task/subtask text for the side pane.  Coordinates in the record are
 * quantized to 0..999; we dequantize to bin centers, matching the
 * server's bin-center semantics.
 */

import { dequantizeCoord } from "./protocol.js";

export interface OverlayBox {
  xMin: number;
  yMin: number;
  xMax: number;
  yMax: number;
}

export interface OverlayObject {
  label: string;
  box: OverlayBox;
}

export interface CotOverlay {
  task: string;
  subtasks: string[];
  current: string;
  objects: OverlayObject[];
  pick: OverlayObject | null;
  affordance: { x: number; y: number } | null;
  gripperPath: Array<{ x: number; y: number }>;
}

export class CotFormatError extends Error {}

function block(text: string, start: string, end: string): string | null {
  const a = text.indexOf(start);
  if (a < 0) return null;
  const b = text.indexOf(end, a + start.length);
  if (b < 0) throw new CotFormatError(`unterminated block ${start}`);
  return text.slice(a + start.length, b).trim();
}

const POINT_RE = /\((\d{1,3}),(\d{1,3})\)/g;
const BOX_RE = /^(.*?)\s*<\|box_start\|>\s*\((\d{1,3}),(\d{1,3})\),\((\d{1,3}),(\d{1,3})\)\s*<\|box_end\|>$/;

function parsePoint(text: string): { x: number; y: number } {
  const m = /^\((\d{1,3}),(\d{1,3})\)$/.exec(text.trim());
  if (!m) throw new CotFormatError(`bad point ${text}`);
  return { x: dequantizeCoord(Number(m[1])), y: dequantizeCoord(Number(m[2])) };
}

function parseObjectLine(line: string): OverlayObject {
  const m = BOX_RE.exec(line.trim());
  if (!m) throw new CotFormatError(`bad object line ${line}`);
  return {
    label: m[1]!,
    box: {
      xMin: dequantizeCoord(Number(m[2])),
      yMin: dequantizeCoord(Number(m[3])),
      xMax: dequantizeCoord(Number(m[4])),
      yMax: dequantizeCoord(Number(m[5])),
    },
  };
}

/** Extract drawable fields; absent blocks (e.g. after an ablation) yield
 * empty/null fields rather than errors. */
export function parseCotOverlay(text: string): CotOverlay {
  const task = block(text, "<TASK>", "</TASK>") ?? "";
  const subtasksRaw = block(text, "<SUBTASKS>", "</SUBTASKS>") ?? "";
  const current = block(text, "<CURRENT>", "</CURRENT>") ?? "";

  const objectsRaw = block(text, "<|objects_start|>", "<|objects_end|>");
  const objects = objectsRaw
    ? objectsRaw.split("\n").filter((l) => l.trim()).map(parseObjectLine)
    : [];

  const pickRaw = block(text, "<|pick_start|>", "<|pick_end|>");
  const pick = pickRaw && pickRaw.trim() ? parseObjectLine(pickRaw) : null;

  const affRaw = block(text, "<|affordance_2d_start|>", "<|affordance_2d_end|>");
  const affordance = affRaw && affRaw.trim() ? parsePoint(affRaw) : null;

  const pathRaw = block(text, "<|gripper_path_2d_start|>", "<|gripper_path_2d_end|>");
  const gripperPath: Array<{ x: number; y: number }> = [];
  if (pathRaw) {
    for (const m of pathRaw.matchAll(POINT_RE)) {
      gripperPath.push({
        x: dequantizeCoord(Number(m[1])),
        y: dequantizeCoord(Number(m[2])),
      });
    }
  }

  return {
    task,
    subtasks: subtasksRaw ? subtasksRaw.split("->").map((s) => s.trim()) : [],
    current,
    objects,
    pick,
    affordance,
    gripperPath,
  };
}
