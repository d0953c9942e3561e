/**
 * Console round trip against the real runtime: start a live two-module
 * run, consume the gateway stream, check the rendered topology encodings,
 * and issue an attach that must show up in telemetry within 3 seconds.
 */

import { test } from "node:test";
import assert from "node:assert/strict";
import { spawn, ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, existsSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, dirname } from "node:path";
import { fileURLToPath } from "node:url";
import WebSocket from "ws";

import { parseFrame, parseRegistry, StreamState } from "../src/model.js";
import { ConsoleStream } from "../src/stream.js";
import { buildViewModel } from "../src/viewmodel.js";

const WS = WebSocket as unknown as new (url: string) => globalThis.WebSocket;
const HERE = dirname(fileURLToPath(import.meta.url));
// compiled to dist/test/: the fixture lives next to the sources
const SCENARIO = join(HERE, "..", "..", "test", "ui-scenario.toml");

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

async function waitFor(pred: () => boolean, timeoutMs: number, what: string): Promise<void> {
  const t0 = Date.now();
  while (!pred()) {
    if (Date.now() - t0 > timeoutMs) throw new Error(`timeout waiting for ${what}`);
    await sleep(50);
  }
}

test("UI round trip: live topology, advice badge, attach within 3s", { timeout: 90_000 }, async () => {
  const outDir = mkdtempSync(join(tmpdir(), "vmcsim-ui-"));
  const python: ChildProcess = spawn(
    "python3",
    ["-m", "vmcsim.cli", "run", SCENARIO, "--out", outDir],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  let stderr = "";
  python.stderr?.on("data", (chunk) => (stderr += chunk));

  try {
    const servicesPath = join(outDir, "services.json");
    await waitFor(() => existsSync(servicesPath), 20_000, "services.json");
    const services = JSON.parse(readFileSync(servicesPath, "utf-8"));
    const base = `127.0.0.1:${services.ws}`;

    const state = new StreamState();
    const frames: string[] = [];
    const stream = new ConsoleStream({
      url: `ws://${base}/stream`,
      onRecord: (data) => {
        const frame = parseFrame(data);
        state.absorb(frame);
        frames.push(frame.module);
      },
      webSocket: WS,
    });
    stream.connect();

    // let vessels converge and the child wire go live
    await waitFor(
      () => (state.latest.get("RPN1")?.iter ?? 0) > 60 && state.latest.get("RPN1")!.slots[0].live,
      30_000,
      "converged live run",
    );

    const registryText = await (await fetch(`http://${base}/registry`)).text();
    assert.match(registryText, /RPN1\.1 -> RPN2/);
    const registry = parseRegistry(registryText);
    const view = buildViewModel(registry, state, stream.stale);

    // growth-state topology: the RPN1 -> RPN2 edge is strictly thickest
    const trunk = view.edges.find((e) => e.from === "RPN1" && e.to === "RPN2");
    assert.ok(trunk, "trunk edge rendered");
    for (const edge of view.edges) {
      if (edge !== trunk) {
        assert.ok(
          trunk!.strokeWidth > edge.strokeWidth,
          `trunk (${trunk!.strokeWidth.toFixed(2)}) vs ${edge.from}->${edge.to} (${edge.strokeWidth.toFixed(2)})`,
        );
      }
    }

    // the advice badge sits on the leaf with the highest windowed resource
    const advised = view.nodes.filter((n) => n.advised);
    assert.equal(advised.length, 1);
    assert.equal(advised[0].id, view.advice[0].leaf);
    const best = Math.max(
      ...view.nodes.filter((n) => n.role === "leaf").map((n) => n.resource),
    );
    assert.equal(advised[0].resource, best);
    assert.equal(advised[0].id, "RPN2-2"); // lamp-left growth state

    // rejected action surfaces its reason
    const occupied = await stream.sendAction({
      action: "attach", parent: "RPN1", slot: 1, child: "RPN4",
    });
    assert.equal(occupied.ok, false);
    assert.equal(occupied.error, "occupied-slot");

    // a valid attach must appear in topology telemetry within 3 s
    const attachedAt = Date.now();
    const ack = await stream.sendAction({
      action: "attach", parent: "RPN2", slot: 1, child: "RPN4",
    });
    assert.equal(ack.ok, true);
    await waitFor(() => state.latest.has("RPN4"), 3_000, "RPN4 telemetry");
    const latency = Date.now() - attachedAt;
    assert.ok(latency <= 3_000, `attach visible after ${latency}ms`);
    const updated = await (await fetch(`http://${base}/registry`)).text();
    assert.match(updated, /RPN2\.1 -> RPN4/);

    stream.close();
  } finally {
    python.kill("SIGTERM");
    await sleep(300);
    python.kill("SIGKILL");
    if (stderr && process.env.DEBUG) console.error(stderr);
  }
});
