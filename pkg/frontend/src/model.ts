/**
 * Pure data model: telemetry frames, the connectivity registry, and the
 * rolling per-module state the console accumulates. No DOM, no sockets —
 * everything here is reconstructable from the stream plus the registry,
 * so reloading the page rebuilds an equivalent view.
 */

export interface SlotSample {
  s: number;
  v: number;
  r: number;
  live: boolean;
  light: number;
  upright: number;
}

export interface TelemetryFrame {
  ts: string;
  module: string;
  iter: number;
  rIn: number;
  rGen: number;
  sOut: number;
  slots: [SlotSample, SlotSample];
}

/** One record object of the gateway stream, field names = CSV columns. */
export function parseFrame(data: Record<string, unknown>): TelemetryFrame {
  const num = (k: string) => Number(data[k]);
  const slot = (k: number): SlotSample => ({
    s: num(`s_slot${k}`),
    v: num(`v_slot${k}`),
    r: num(`r_slot${k}`),
    live: Boolean(Number(data[`live_slot${k}`])),
    light: num(`light_slot${k}`),
    upright: num(`upright_slot${k}`),
  });
  return {
    ts: String(data["ts_iso8601"]),
    module: String(data["module"]),
    iter: num("iter"),
    rIn: num("r_in"),
    rGen: num("r_gen"),
    sOut: num("s_out"),
    slots: [slot(1), slot(2)],
  };
}

export interface RegistryEdge {
  parent: string;
  slot: number;
  child: string;
}

export interface Registry {
  modules: Map<string, number>; // id -> level
  edges: RegistryEdge[];
}

/** Parses the line-oriented connectivity document served at /registry. */
export function parseRegistry(text: string): Registry {
  const modules = new Map<string, number>();
  const edges: RegistryEdge[] = [];
  for (const raw of text.split("\n")) {
    const line = raw.trim();
    if (!line || line.startsWith("#")) continue;
    if (line.startsWith("module ")) {
      const m = line.match(/^module\s+(\S+)\s+level=(\d+)$/);
      if (m) modules.set(m[1], Number(m[2]));
      continue;
    }
    const e = line.match(/^(.+)\.(\d+)\s*->\s*(\S+)$/);
    if (e) edges.push({ parent: e[1], slot: Number(e[2]), child: e[3] });
  }
  return { modules, edges };
}

const WINDOW = 20; // iterations averaged for badge/advice numbers

/** Rolling view of the stream: latest frame and windowed slot resources. */
export class StreamState {
  latest = new Map<string, TelemetryFrame>();
  private history = new Map<string, TelemetryFrame[]>();

  absorb(frame: TelemetryFrame): void {
    this.latest.set(frame.module, frame);
    const rows = this.history.get(frame.module) ?? [];
    rows.push(frame);
    if (rows.length > WINDOW) rows.shift();
    this.history.set(frame.module, rows);
  }

  /** Windowed mean resource assigned to one child slot of a module. */
  meanSlotR(module: string, slot: number): number {
    const rows = this.history.get(module) ?? [];
    if (rows.length === 0) return 0;
    const sum = rows.reduce((acc, f) => acc + f.slots[slot - 1].r, 0);
    return sum / rows.length;
  }
}
