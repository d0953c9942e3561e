import { test } from "node:test";
import assert from "node:assert/strict";
import { once } from "node:events";
import WebSocket, { WebSocketServer } from "ws";

import { ConsoleStream } from "../src/stream.js";

const WS = WebSocket as unknown as new (url: string) => globalThis.WebSocket;

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

async function startServer(): Promise<{ wss: WebSocketServer; port: number }> {
  const wss = new WebSocketServer({ host: "127.0.0.1", port: 0 });
  await once(wss, "listening");
  const address = wss.address();
  if (typeof address === "string" || address === null) throw new Error("no port");
  return { wss, port: address.port };
}

test("delivers record envelopes and correlates acks by id", async () => {
  const { wss, port } = await startServer();
  wss.on("connection", (socket) => {
    socket.send(JSON.stringify({ type: "record", data: { module: "RPN1", iter: 1 } }));
    socket.on("message", (raw) => {
      const action = JSON.parse(String(raw));
      socket.send(
        JSON.stringify({ type: "ack", data: { ok: action.action === "attach", id: action.id } }),
      );
    });
  });

  const records: unknown[] = [];
  const stream = new ConsoleStream({
    url: `ws://127.0.0.1:${port}/`,
    onRecord: (d) => records.push(d),
    webSocket: WS,
  });
  stream.connect();
  await sleep(200);
  assert.equal(records.length, 1);

  const ok = await stream.sendAction({ action: "attach" });
  assert.equal(ok.ok, true);
  const bad = await stream.sendAction({ action: "detach" });
  assert.equal(bad.ok, false);

  stream.close();
  wss.close();
});

test("flags a stale feed within the banner threshold", async () => {
  const { wss, port } = await startServer();
  wss.on("connection", (socket) => {
    socket.send(JSON.stringify({ type: "record", data: { module: "RPN1", iter: 1 } }));
    // then silence
  });
  const statuses: string[] = [];
  const stream = new ConsoleStream({
    url: `ws://127.0.0.1:${port}/`,
    onRecord: () => {},
    onStatus: (s) => statuses.push(s),
    staleAfterMs: 300,
    webSocket: WS,
  });
  stream.connect();
  await sleep(150);
  assert.equal(stream.stale, false); // still fresh
  await sleep(500);
  assert.equal(stream.stale, true);
  assert.ok(statuses.includes("stale"));
  stream.close();
  wss.close();
});

test("reconnects after the server drops the connection", async () => {
  const { wss, port } = await startServer();
  let connections = 0;
  wss.on("connection", (socket) => {
    connections += 1;
    if (connections === 1) socket.close();
  });
  const stream = new ConsoleStream({
    url: `ws://127.0.0.1:${port}/`,
    onRecord: () => {},
    reconnectDelayMs: 100,
    webSocket: WS,
  });
  stream.connect();
  await sleep(600);
  assert.ok(connections >= 2, `expected a reconnect, saw ${connections}`);
  stream.close();
  wss.close();
});

test("sendAction without a connection resolves to a rejection", async () => {
  const stream = new ConsoleStream({ url: "ws://127.0.0.1:9/", onRecord: () => {}, webSocket: WS });
  const ack = await stream.sendAction({ action: "attach" });
  assert.equal(ack.ok, false);
});
