/** Wire types and client-side validation for the gateway protocol (v1).
 *
 * This module mirrors the server's schema (`docs/protocol.md`) so the
 * console can reject malformed guidance locally before anything hits the
 * socket.  All coordinates on the wire are normalized image coordinates
 * in [0, 1].
 */

export const PROTOCOL_VERSION = 1;

export const QUANT_BINS = 1000;

/** Map a normalized coordinate to its 0..999 bin index. */
export function quantizeCoord(v: number): number {
  if (!Number.isFinite(v) || v < 0 || v > 1) {
    throw new RangeError(`coordinate ${v} outside [0, 1]`);
  }
  return Math.min(QUANT_BINS - 1, Math.floor(v * QUANT_BINS));
}

/** Bin index back to the bin-center coordinate. */
export function dequantizeCoord(q: number): number {
  if (!Number.isInteger(q) || q < 0 || q >= QUANT_BINS) {
    throw new RangeError(`bin ${q} outside 0..${QUANT_BINS - 1}`);
  }
  return (q + 0.5) / QUANT_BINS;
}

// ---------------------------------------------------------------------------
// Spatial priors

export interface PointPrior {
  kind: "point";
  x: number;
  y: number;
}

export interface BoxPrior {
  kind: "box";
  x_min: number;
  y_min: number;
  x_max: number;
  y_max: number;
}

export interface TracePrior {
  kind: "trace";
  points: Array<[number, number]>;
}

export type Prior = PointPrior | BoxPrior | TracePrior;

export const TRACE_MIN_POINTS = 2;
export const TRACE_MAX_POINTS = 32;

export class PriorValidationError extends Error {}

function checkUnit(v: number, what: string): void {
  if (!Number.isFinite(v) || v < 0 || v > 1) {
    throw new PriorValidationError(`${what} must be in [0, 1], got ${v}`);
  }
}

/** Client-side mirror of the server's prior validation. */
export function validatePrior(prior: Prior): void {
  switch (prior.kind) {
    case "point":
      checkUnit(prior.x, "point.x");
      checkUnit(prior.y, "point.y");
      return;
    case "box":
      checkUnit(prior.x_min, "box.x_min");
      checkUnit(prior.y_min, "box.y_min");
      checkUnit(prior.x_max, "box.x_max");
      checkUnit(prior.y_max, "box.y_max");
      if (prior.x_min >= prior.x_max || prior.y_min >= prior.y_max) {
        throw new PriorValidationError("box corners must be strictly ordered");
      }
      return;
    case "trace": {
      const n = prior.points.length;
      if (n < TRACE_MIN_POINTS || n > TRACE_MAX_POINTS) {
        throw new PriorValidationError(
          `trace needs ${TRACE_MIN_POINTS}..${TRACE_MAX_POINTS} points, got ${n}`
        );
      }
      for (const [x, y] of prior.points) {
        checkUnit(x, "trace.x");
        checkUnit(y, "trace.y");
      }
      return;
    }
  }
}

// ---------------------------------------------------------------------------
// Guidance envelope

export type GuidanceTiming = "up_front" | "mid_episode";

export interface GuidanceEventWire {
  prior: Prior;
  timing: GuidanceTiming;
  source: string;
  issued_at: number;
}

export interface GuidanceMessage {
  type: "Guidance";
  event: GuidanceEventWire;
}

export function guidanceMessage(
  prior: Prior,
  issuedAt: number,
  timing: GuidanceTiming = "mid_episode"
): GuidanceMessage {
  validatePrior(prior);
  if (timing === "up_front" && issuedAt !== 0) {
    throw new PriorValidationError("up-front events must have issued_at = 0");
  }
  return {
    type: "Guidance",
    event: { prior, timing, source: "user", issued_at: issuedAt },
  };
}

// ---------------------------------------------------------------------------
// Stream messages (server -> client)

interface StreamBase {
  type: string;
  session: string;
  seq: number;
}

export interface HelloMessage extends StreamBase {
  type: "Hello";
  protocol_version: number;
}

export interface ObservedItem {
  label: string;
  box: [number, number, number, number];
  color: string | null;
}

export interface ObservationMessage extends StreamBase {
  type: "Observation";
  fast_tick: number;
  main_view: ObservedItem[];
  wrist_view: Array<{ label: string; offset: [number, number] }>;
  proprio: [number, number, number];
  tick: number;
}

export interface CotMessage extends StreamBase {
  type: "Cot";
  slow_tick: number;
  fast_tick: number;
  cot: string;
  picked_label: string | null;
  picked_box: [number, number, number, number] | null;
  grounding_rule: string;
}

export interface ActionMessage extends StreamBase {
  type: "Action";
  fast_tick: number;
  executed_step: [number, number, number];
  gripper: [number, number, number];
  staleness: number;
  chunk_digest: string;
}

export interface GuidanceAckMessage extends StreamBase {
  type: "GuidanceAck";
  effective_fast_tick: number;
}

export interface ErrorMessage extends StreamBase {
  type: "Error";
  class: string;
  detail: string;
}

export interface ResultMessage extends StreamBase {
  type: "Result";
  outcome: "success" | "failure";
  final_tick: number;
  trace_ref: string;
}

export interface GapMessage extends StreamBase {
  type: "Gap";
  dropped: number;
}

export type StreamMessage =
  | HelloMessage
  | ObservationMessage
  | CotMessage
  | ActionMessage
  | GuidanceAckMessage
  | ErrorMessage
  | ResultMessage
  | GapMessage;

const STREAM_TYPES = new Set([
  "Hello",
  "Observation",
  "Cot",
  "Action",
  "GuidanceAck",
  "Error",
  "Result",
  "Gap",
]);

export class ProtocolError extends Error {}

/** Parse one raw frame off the socket; unknown types are an error. */
export function parseStreamMessage(raw: string): StreamMessage {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    throw new ProtocolError(`frame is not JSON: ${raw.slice(0, 80)}`);
  }
  if (typeof data !== "object" || data === null) {
    throw new ProtocolError("frame is not an object");
  }
  const msg = data as Record<string, unknown>;
  if (typeof msg.type !== "string" || !STREAM_TYPES.has(msg.type)) {
    throw new ProtocolError(`unknown message type ${String(msg.type)}`);
  }
  if (typeof msg.seq !== "number") {
    throw new ProtocolError(`message ${msg.type} lacks a seq`);
  }
  return msg as unknown as StreamMessage;
}
