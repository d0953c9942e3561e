/**
 * Console wire-up: stream consumption, registry polling, graph rendering,
 * and the operator controls (attach/detach, lamp, shades, tilt).
 *
 * The view is stateless with respect to simulation truth: everything
 * rendered derives from the telemetry stream and the registry document,
 * and topology edits appear only once telemetry/registry reflect them
 * (no optimistic updates).
 */

import { parseFrame, parseRegistry, Registry, StreamState } from "./model.js";
import { ConsoleStream, fetchRegistry } from "./stream.js";
import { buildViewModel } from "./viewmodel.js";
import { renderBanner, renderGraph } from "./render.js";

const params = new URLSearchParams(location.search);
const gatewayHost = params.get("gateway") ?? `${location.hostname || "127.0.0.1"}:8787`;
const wsUrl = `ws://${gatewayHost}/stream`;
const httpUrl = `http://${gatewayHost}`;

const svg = document.getElementById("graph") as unknown as SVGSVGElement;
const banner = document.getElementById("banner") as HTMLElement;
const adviceList = document.getElementById("advice") as HTMLElement;
const ackLog = document.getElementById("ack-log") as HTMLElement;

const state = new StreamState();
let registry: Registry = { modules: new Map(), edges: [] };
let status = "connecting…";

const stream = new ConsoleStream({
  url: wsUrl,
  onRecord: (data) => state.absorb(parseFrame(data)),
  onStatus: (s) => {
    status = s;
  },
});
stream.connect();

async function pollRegistry(): Promise<void> {
  try {
    registry = parseRegistry(await fetchRegistry(httpUrl));
  } catch {
    /* gateway down: stale banner covers it */
  }
}
void pollRegistry();
setInterval(pollRegistry, 1000);

const t0 = performance.now();
function frame(): void {
  const view = buildViewModel(registry, state, stream.stale);
  renderGraph(svg, view, (performance.now() - t0) / 1000);
  renderBanner(banner, view.stale, status);
  adviceList.innerHTML = view.advice
    .slice(0, 6)
    .map(
      (a, i) =>
        `<li${i === 0 ? ' class="best"' : ""}><button data-leaf="${a.leaf}">` +
        `${a.leaf}</button> ${(a.share * 100).toFixed(1)}%</li>`,
    )
    .join("");
  requestAnimationFrame(frame);
}
requestAnimationFrame(frame);

function logAck(action: string, ack: { ok: boolean; error?: string }): void {
  const line = document.createElement("div");
  line.textContent = ack.ok ? `✓ ${action}` : `✗ ${action}: ${ack.error}`;
  line.className = ack.ok ? "ack ok" : "ack rejected";
  ackLog.prepend(line);
  while (ackLog.childElementCount > 8) ackLog.removeChild(ackLog.lastChild!);
}

async function send(action: Record<string, unknown>): Promise<void> {
  const ack = await stream.sendAction(action);
  logAck(String(action.action), ack);
}

// clicking an advice entry pre-fills the attach form with that leaf
adviceList.addEventListener("click", (event) => {
  const button = (event.target as HTMLElement).closest("button[data-leaf]");
  if (!button) return;
  const leaf = button.getAttribute("data-leaf")!;
  const dash = leaf.lastIndexOf("-");
  (document.getElementById("attach-parent") as HTMLInputElement).value = leaf.slice(0, dash);
  (document.getElementById("attach-slot") as HTMLInputElement).value = leaf.slice(dash + 1);
  (document.getElementById("attach-child") as HTMLInputElement).focus();
});

document.getElementById("attach-form")!.addEventListener("submit", (event) => {
  event.preventDefault();
  void send({
    action: "attach",
    parent: (document.getElementById("attach-parent") as HTMLInputElement).value,
    slot: Number((document.getElementById("attach-slot") as HTMLInputElement).value),
    child: (document.getElementById("attach-child") as HTMLInputElement).value,
  });
});

document.getElementById("detach-form")!.addEventListener("submit", (event) => {
  event.preventDefault();
  void send({
    action: "detach",
    parent: (document.getElementById("detach-parent") as HTMLInputElement).value,
    slot: Number((document.getElementById("detach-slot") as HTMLInputElement).value),
  });
});

document.getElementById("lamp-form")!.addEventListener("submit", (event) => {
  event.preventDefault();
  void send({
    action: "scene",
    kind: "move_lamp",
    index: Number((document.getElementById("lamp-index") as HTMLInputElement).value),
    position: ["x", "y", "z"].map((axis) =>
      Number((document.getElementById(`lamp-${axis}`) as HTMLInputElement).value),
    ),
  });
});

document.getElementById("shade-form")!.addEventListener("submit", (event) => {
  event.preventDefault();
  const leaf = (document.getElementById("shade-leaf") as HTMLInputElement).value;
  const attenuation = Number(
    (document.getElementById("shade-attenuation") as HTMLInputElement).value,
  );
  void send(
    attenuation > 0
      ? { action: "scene", kind: "add_shade", leaf, attenuation }
      : { action: "scene", kind: "remove_shade", leaf },
  );
});

document.getElementById("tilt-form")!.addEventListener("submit", (event) => {
  event.preventDefault();
  void send({
    action: "scene",
    kind: "set_tilt",
    branch: (document.getElementById("tilt-branch") as HTMLInputElement).value,
    degrees: Number((document.getElementById("tilt-degrees") as HTMLInputElement).value),
  });
});

document.getElementById("pause")!.addEventListener("click", () => void send({ action: "pause" }));
document.getElementById("resume")!.addEventListener("click", () => void send({ action: "resume" }));
