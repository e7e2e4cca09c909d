/** Live console loop against a real gateway process.
 *
 * Spawns the Python server, connects over a real WebSocket, receives the
 * reasoning overlay, submits a click on the picked object, and checks
 * that the next streamed record's affordance echoes the click within one
 * quantization bin.  Also checks that a connected console is a pure
 * observer: traces with and without one attached are byte-identical.
 */

import { ChildProcess, execFileSync, spawn } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";
import WebSocket from "ws";

import { GatewayClient, SocketLike } from "../src/client.js";
import { parseCotOverlay } from "../src/cot.js";
import { guidanceMessage, quantizeCoord, CotMessage } from "../src/protocol.js";

const PORT = 8765 + (process.pid % 500);
const BASE = `http://127.0.0.1:${PORT}`;
const REPO_ROOT = join(__dirname, "..", "..");

let server: ChildProcess;
let workDir: string;

function makeClient(): GatewayClient {
  return new GatewayClient(
    BASE,
    (url) => new WebSocket(url) as unknown as SocketLike
  );
}

async function waitForServer(): Promise<void> {
  for (let i = 0; i < 100; i++) {
    try {
      const res = await fetch(`${BASE}/sessions`);
      if (res.ok) return;
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error("gateway never came up");
}

beforeAll(async () => {
  workDir = mkdtempSync(join(tmpdir(), "steertab-e2e-"));
  const modelPath = join(workDir, "model.stfw");
  // The loop under test is the guidance echo, not policy quality, so an
  // untrained action head is enough and keeps setup fast.
  execFileSync(
    "python3",
    ["-c", `from steertab import flow; flow.save_model(flow.FlowModel(seed=0), ${JSON.stringify(modelPath)})`],
    { cwd: REPO_ROOT }
  );
  server = spawn(
    "python3",
    ["-m", "steertab.cli", "serve", "--model", modelPath,
     "--port", String(PORT), "--fast-hz", "25"],
    { cwd: REPO_ROOT, stdio: "ignore" }
  );
  await waitForServer();
}, 60_000);

afterAll(() => {
  server?.kill();
  rmSync(workDir, { recursive: true, force: true });
});

describe("console loop", () => {
  it(
    "click-point guidance is acknowledged and echoed by the next record",
    async () => {
      const client = makeClient();
      const session = await client.createSession({
        scenario: "single_target",
        seed: 0,
        config: { clock_mode: "wall", max_fast_ticks: 400, chunk_stride: 4 },
      });
      const stream = client.openStream(session.session_id);
      let lastFastTick = 0;
      stream.onMessage((msg) => {
        if (msg.type === "Observation") lastFastTick = msg.fast_tick;
      });

      // 1. At least one reasoning overlay arrives.
      const firstCot = (await stream.next((m) => m.type === "Cot")) as CotMessage;
      const overlay = parseCotOverlay(firstCot.cot);
      expect(overlay.pick).not.toBeNull();

      // 2. Click just off the picked object's center (but still on it).
      const box = overlay.pick!.box;
      const click = {
        x: (box.xMin + box.xMax) / 2 + 0.01,
        y: (box.yMin + box.yMax) / 2 - 0.01,
      };
      const ack = await stream.sendGuidance(
        guidanceMessage({ kind: "point", x: click.x, y: click.y }, lastFastTick)
      );

      // 3. The ack promises the next slow boundary strictly after injection.
      expect(ack.effective_fast_tick).toBeGreaterThan(lastFastTick);

      // 4. The record produced at that boundary carries the click as its
      //    affordance, within one quantization bin per axis.
      const echoed = (await stream.next(
        (m) => m.type === "Cot" && (m as CotMessage).fast_tick >= ack.effective_fast_tick
      )) as CotMessage;
      const affordance = parseCotOverlay(echoed.cot).affordance;
      expect(affordance).not.toBeNull();
      expect(Math.abs(quantizeCoord(affordance!.x) - quantizeCoord(click.x))).toBeLessThanOrEqual(1);
      expect(Math.abs(quantizeCoord(affordance!.y) - quantizeCoord(click.y))).toBeLessThanOrEqual(1);

      stream.close();
    },
    60_000
  );

  it(
    "a connected console never affects the episode (pure observer)",
    async () => {
      const client = makeClient();
      const request = {
        scenario: "single_target",
        seed: 7,
        config: { clock_mode: "simulated" as const, max_fast_ticks: 60 },
      };

      // Run once with a console attached for the whole episode...
      const watched = await client.createSession(request);
      const stream = client.openStream(watched.session_id);
      await stream.next((m) => m.type === "Result", 30_000);
      stream.close();

      // ...and once with no console at all.
      const unwatched = await client.createSession(request);
      for (let i = 0; i < 100; i++) {
        const d = await client.listSessions();
        if (d.find((s) => s.session_id === unwatched.session_id)?.state === "done") break;
        await new Promise((r) => setTimeout(r, 100));
      }

      const a = await client.fetchResult(watched.session_id);
      const b = await client.fetchResult(unwatched.session_id);
      expect(a.trace_jsonl).toBe(b.trace_jsonl);
    },
    60_000
  );
});
