/** Gateway client: session HTTP calls plus the per-session stream socket.
 *
 * The socket constructor is injected so the same client runs in a browser
 * (native WebSocket) and under Node tests (the `ws` package).
 */

import {
  GuidanceAckMessage,
  GuidanceMessage,
  ErrorMessage,
  StreamMessage,
  parseStreamMessage,
} from "./protocol.js";

export interface SessionDescriptor {
  session_id: string;
  scenario: string;
  seed: number;
  state: string;
  outcome: boolean | null;
}

export interface SessionRequest {
  scenario: string;
  seed: number;
  perturbation?: Record<string, unknown>;
  config?: Record<string, unknown>;
  script?: Record<string, unknown[]>;
}

/** Minimal socket shape shared by browser WebSocket and `ws`. */
export interface SocketLike {
  send(data: string): void;
  close(): void;
  addEventListener(type: "open", fn: () => void): void;
  addEventListener(type: "message", fn: (ev: { data: unknown }) => void): void;
  addEventListener(type: "close", fn: () => void): void;
  addEventListener(type: "error", fn: (err: unknown) => void): void;
}

export type SocketFactory = (url: string) => SocketLike;

export class GatewayError extends Error {
  constructor(
    message: string,
    public readonly errorClass: string,
    public readonly status: number
  ) {
    super(message);
  }
}

async function raiseOnError(res: Response): Promise<void> {
  if (res.ok) return;
  let cls = "unknown";
  let detail = res.statusText;
  try {
    const body = (await res.json()) as { detail?: { class?: string; detail?: string } };
    cls = body.detail?.class ?? cls;
    detail = body.detail?.detail ?? detail;
  } catch {
    // non-JSON error body: keep the status text
  }
  throw new GatewayError(detail, cls, res.status);
}

export class GatewayClient {
  constructor(
    private readonly baseUrl: string,
    private readonly socketFactory: SocketFactory
  ) {}

  async createSession(req: SessionRequest): Promise<SessionDescriptor> {
    const res = await fetch(`${this.baseUrl}/sessions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(req),
    });
    await raiseOnError(res);
    return (await res.json()) as SessionDescriptor;
  }

  async listSessions(): Promise<SessionDescriptor[]> {
    const res = await fetch(`${this.baseUrl}/sessions`);
    await raiseOnError(res);
    return (await res.json()) as SessionDescriptor[];
  }

  async fetchResult(
    sessionId: string
  ): Promise<{ outcome: string; final_tick: number; trace_jsonl: string }> {
    const res = await fetch(`${this.baseUrl}/sessions/${sessionId}/result`);
    await raiseOnError(res);
    return (await res.json()) as {
      outcome: string;
      final_tick: number;
      trace_jsonl: string;
    };
  }

  openStream(sessionId: string): SessionStream {
    const wsBase = this.baseUrl.replace(/^http/, "ws");
    const socket = this.socketFactory(`${wsBase}/sessions/${sessionId}/stream`);
    return new SessionStream(socket);
  }
}

/** Stream wrapper: fan-out to listeners plus awaitable one-shot matchers. */
export class SessionStream {
  private listeners: Array<(msg: StreamMessage) => void> = [];
  private waiters: Array<{
    match: (msg: StreamMessage) => boolean;
    resolve: (msg: StreamMessage) => void;
  }> = [];
  private closed = false;
  private closeWaiters: Array<() => void> = [];

  constructor(private readonly socket: SocketLike) {
    socket.addEventListener("message", (ev) => {
      const msg = parseStreamMessage(String(ev.data));
      for (const fn of this.listeners) fn(msg);
      this.waiters = this.waiters.filter((w) => {
        if (!w.match(msg)) return true;
        w.resolve(msg);
        return false;
      });
    });
    socket.addEventListener("close", () => {
      this.closed = true;
      for (const fn of this.closeWaiters) fn();
      this.closeWaiters = [];
    });
  }

  onMessage(fn: (msg: StreamMessage) => void): void {
    this.listeners.push(fn);
  }

  /** Resolve with the first message matching `match`. */
  next(
    match: (msg: StreamMessage) => boolean,
    timeoutMs = 15_000
  ): Promise<StreamMessage> {
    return new Promise((resolve, reject) => {
      const timer = setTimeout(
        () => reject(new Error("timed out waiting for stream message")),
        timeoutMs
      );
      this.waiters.push({
        match,
        resolve: (msg) => {
          clearTimeout(timer);
          resolve(msg);
        },
      });
    });
  }

  /** Send a guidance message and await its GuidanceAck (or server Error). */
  async sendGuidance(msg: GuidanceMessage): Promise<GuidanceAckMessage> {
    const reply = this.next(
      (m) => m.type === "GuidanceAck" || m.type === "Error"
    );
    this.socket.send(JSON.stringify(msg));
    const m = await reply;
    if (m.type === "Error") {
      const err = m as ErrorMessage;
      throw new GatewayError(err.detail, err.class, 0);
    }
    return m as GuidanceAckMessage;
  }

  waitClosed(timeoutMs = 30_000): Promise<void> {
    if (this.closed) return Promise.resolve();
    return new Promise((resolve, reject) => {
      const timer = setTimeout(
        () => reject(new Error("timed out waiting for stream close")),
        timeoutMs
      );
      this.closeWaiters.push(() => {
        clearTimeout(timer);
        resolve();
      });
    });
  }

  close(): void {
    this.socket.close();
  }
}
