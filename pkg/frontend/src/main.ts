/** Browser entry point: wire the canvas, the raw-record pane, and the
 * guidance gestures to a live gateway session.
 *
 * Gestures: click = point, drag = box, shift+drag = freehand trace.
 * Drafts are staged on pointer-up and sent with the Send button, so a
 * slipped drag never injects guidance by accident.
 */

import { GatewayClient, SessionStream, SocketLike } from "./client.js";
import { boxFromDrag, pointFromClick, traceFromStroke, Viewport } from "./geometry.js";
import { guidanceMessage } from "./protocol.js";
import {
  applyMessage,
  discardDraft,
  initialViewState,
  stageDraft,
  ViewState,
} from "./view.js";
import { renderFrame } from "./render.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function startConsole(baseUrl: string): void {
  const canvas = el<HTMLCanvasElement>("scene");
  const rawPane = el<HTMLPreElement>("raw-cot");
  const statusPane = el<HTMLElement>("status");
  const sendButton = el<HTMLButtonElement>("send-guidance");
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("2D canvas unavailable");
  const view: Viewport = { width: canvas.width, height: canvas.height };

  const client = new GatewayClient(
    baseUrl,
    (url) => new WebSocket(url) as unknown as SocketLike
  );

  let state: ViewState = initialViewState();
  let stream: SessionStream | null = null;
  let lastFastTick = 0;

  // Frame queue with latest-wins rendering: messages mutate `state`, and a
  // single rAF loop snapshots it.
  function loop(): void {
    renderFrame(state, ctx!, view);
    // The raw serialized record sits beside the overlay so the operator can
    // see exactly the text the reasoner produced.
    rawPane.textContent = state.cot?.cot ?? "(no reasoning record yet)";
    statusPane.textContent = state.outcome
      ? `episode ${state.outcome} at tick ${state.finalTick}`
      : state.session
        ? `session ${state.session} running`
        : "connecting...";
    requestAnimationFrame(loop);
  }

  async function connect(): Promise<void> {
    const descriptor = await client.createSession({
      scenario: "single_target",
      seed: Math.floor(Math.random() * 10_000),
      config: { clock_mode: "wall", chunk_stride: 4 },
    });
    stream = client.openStream(descriptor.session_id);
    stream.onMessage((msg) => {
      state = applyMessage(state, msg);
      if (msg.type === "Observation") lastFastTick = msg.fast_tick;
    });
  }

  // Gesture capture: pointer-down starts a stroke; short strokes collapse
  // to clicks, axis-spanning drags become boxes, shift-drags become traces.
  let stroke: Array<[number, number]> | null = null;
  let traceMode = false;

  canvas.addEventListener("pointerdown", (ev) => {
    stroke = [[ev.offsetX, ev.offsetY]];
    traceMode = ev.shiftKey;
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (stroke) stroke.push([ev.offsetX, ev.offsetY]);
  });
  canvas.addEventListener("pointerup", (ev) => {
    if (!stroke) return;
    stroke.push([ev.offsetX, ev.offsetY]);
    const [sx, sy] = stroke[0]!;
    const moved = Math.hypot(ev.offsetX - sx, ev.offsetY - sy) > 4;
    const prior = traceMode
      ? traceFromStroke(stroke, view)
      : moved
        ? boxFromDrag(sx, sy, ev.offsetX, ev.offsetY, view)
        : pointFromClick(ev.offsetX, ev.offsetY, view);
    stroke = null;
    if (prior) state = stageDraft(state, prior);
  });

  sendButton.addEventListener("click", () => {
    const draft = state.draft;
    if (!draft || !stream) return;
    state = discardDraft(state);
    stream
      .sendGuidance(guidanceMessage(draft.prior, lastFastTick))
      .then((ack) => {
        statusPane.textContent = `guidance effective at tick ${ack.effective_fast_tick}`;
      })
      .catch((err: Error) => {
        // Server-side validation problems surface inline, not as crashes.
        state = { ...state, lastError: err.message };
      });
  });

  connect().catch((err: Error) => {
    statusPane.textContent = `connection failed: ${err.message}`;
  });
  requestAnimationFrame(loop);
}

declare global {
  interface Window {
    startConsole: typeof startConsole;
  }
}

if (typeof window !== "undefined" && typeof document !== "undefined") {
  window.startConsole = startConsole;
}
