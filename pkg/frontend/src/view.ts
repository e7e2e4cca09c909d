/** Console view state: a reducer over the gateway's message stream.
 *
 * Rendering always reads from the latest received sequence number; stream
 * consumption and drawing are decoupled, so the reducer is pure and the
 * renderer just snapshots whatever is current (latest-wins).
 */

import { CotOverlay, parseCotOverlay } from "./cot.js";
import {
  CotMessage,
  ObservationMessage,
  Prior,
  StreamMessage,
} from "./protocol.js";

export interface GuidanceDraft {
  prior: Prior;
  /** Drafts are staged while the pointer is down and sent on confirm,
   * never mid-drag. */
  staged: boolean;
}

export interface ViewState {
  session: string | null;
  lastSeq: number;
  observation: ObservationMessage | null;
  cot: CotMessage | null;
  overlay: CotOverlay | null;
  lastAction: { fastTick: number; staleness: number } | null;
  draft: GuidanceDraft | null;
  /** effective_fast_tick of the last acknowledged guidance. */
  lastAckTick: number | null;
  lastError: string | null;
  droppedFrames: number;
  outcome: "success" | "failure" | null;
  finalTick: number | null;
}

export function initialViewState(): ViewState {
  return {
    session: null,
    lastSeq: -1,
    observation: null,
    cot: null,
    overlay: null,
    lastAction: null,
    draft: null,
    lastAckTick: null,
    lastError: null,
    droppedFrames: 0,
    outcome: null,
    finalTick: null,
  };
}

/** Fast ticks elapsed since the reasoning record in use was produced. */
export function stalenessOf(state: ViewState): number | null {
  return state.lastAction ? state.lastAction.staleness : null;
}

export function applyMessage(state: ViewState, msg: StreamMessage): ViewState {
  // Mid-episode reconnects replay the full log; anything at or below the
  // last applied seq has already been folded in.
  if (msg.seq <= state.lastSeq && msg.type !== "Hello") return state;
  const next: ViewState = { ...state, lastSeq: msg.seq };
  switch (msg.type) {
    case "Hello":
      return { ...state, session: msg.session };
    case "Observation":
      next.observation = msg;
      return next;
    case "Cot":
      next.cot = msg;
      next.overlay = parseCotOverlay(msg.cot);
      return next;
    case "Action":
      next.lastAction = { fastTick: msg.fast_tick, staleness: msg.staleness };
      return next;
    case "GuidanceAck":
      next.lastAckTick = msg.effective_fast_tick;
      next.draft = null;
      return next;
    case "Error":
      next.lastError = `${msg.class}: ${msg.detail}`;
      return next;
    case "Result":
      next.outcome = msg.outcome;
      next.finalTick = msg.final_tick;
      return next;
    case "Gap":
      next.droppedFrames = state.droppedFrames + msg.dropped;
      return next;
  }
}

export function stageDraft(state: ViewState, prior: Prior): ViewState {
  return { ...state, draft: { prior, staged: true }, lastError: null };
}

export function discardDraft(state: ViewState): ViewState {
  return { ...state, draft: null };
}
