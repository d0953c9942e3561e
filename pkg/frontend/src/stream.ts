/**
 * WebSocket client for the runtime gateway: receives telemetry record
 * envelopes, correlates command acks by id, flags a stale feed after
 * silence, and reconnects with backoff.
 */

export interface Envelope {
  type: "record" | "ack";
  data: Record<string, unknown>;
}

export interface CommandAck {
  ok: boolean;
  error?: string;
  [key: string]: unknown;
}

type WebSocketCtor = new (url: string) => WebSocket;

export interface ConsoleStreamOptions {
  url: string;
  onRecord: (data: Record<string, unknown>) => void;
  onStatus?: (status: "connecting" | "open" | "stale" | "closed") => void;
  staleAfterMs?: number; // banner threshold: default 3000
  reconnectDelayMs?: number;
  webSocket?: WebSocketCtor; // injectable for tests / node
  now?: () => number;
}

export class ConsoleStream {
  private ws: WebSocket | null = null;
  private pending = new Map<number, (ack: CommandAck) => void>();
  private nextId = 1;
  private lastFrameAt = 0;
  private staleTimer: ReturnType<typeof setInterval> | null = null;
  private closed = false;
  stale = false;

  constructor(private readonly options: ConsoleStreamOptions) {}

  private get nowMs(): number {
    return (this.options.now ?? Date.now)();
  }

  connect(): void {
    this.closed = false;
    const Ctor = this.options.webSocket ?? (globalThis as any).WebSocket;
    this.options.onStatus?.("connecting");
    const ws: WebSocket = new Ctor(this.options.url);
    this.ws = ws;
    ws.onopen = () => {
      this.lastFrameAt = this.nowMs;
      this.setStale(false);
      this.options.onStatus?.("open");
    };
    ws.onmessage = (event: MessageEvent) => {
      this.lastFrameAt = this.nowMs;
      this.setStale(false);
      let envelope: Envelope;
      try {
        envelope = JSON.parse(String(event.data));
      } catch {
        return;
      }
      if (envelope.type === "record") {
        this.options.onRecord(envelope.data);
      } else if (envelope.type === "ack") {
        const ack = envelope.data as CommandAck;
        const id = typeof ack.id === "number" ? ack.id : undefined;
        if (id !== undefined && this.pending.has(id)) {
          this.pending.get(id)!(ack);
          this.pending.delete(id);
        }
      }
    };
    ws.onclose = () => {
      this.options.onStatus?.("closed");
      this.rejectAllPending("connection closed");
      if (!this.closed) {
        setTimeout(() => this.connect(), this.options.reconnectDelayMs ?? 1000);
      }
    };
    ws.onerror = () => {
      /* close handler drives reconnection */
    };

    const staleAfter = this.options.staleAfterMs ?? 3000;
    if (this.staleTimer) clearInterval(this.staleTimer);
    this.staleTimer = setInterval(() => {
      if (this.lastFrameAt > 0 && this.nowMs - this.lastFrameAt > staleAfter) {
        this.setStale(true);
      }
    }, Math.min(250, staleAfter / 4));
  }

  private setStale(value: boolean): void {
    if (this.stale !== value) {
      this.stale = value;
      if (value) this.options.onStatus?.("stale");
    }
  }

  /** Posts a command-stream action; resolves with its ack. */
  sendAction(action: Record<string, unknown>, timeoutMs = 5000): Promise<CommandAck> {
    const ws = this.ws;
    if (!ws || ws.readyState !== 1) {
      return Promise.resolve({ ok: false, error: "not connected" });
    }
    const id = this.nextId++;
    return new Promise((resolve) => {
      const timer = setTimeout(() => {
        this.pending.delete(id);
        resolve({ ok: false, error: "ack timeout" });
      }, timeoutMs);
      this.pending.set(id, (ack) => {
        clearTimeout(timer);
        resolve(ack);
      });
      ws.send(JSON.stringify({ ...action, id }));
    });
  }

  private rejectAllPending(reason: string): void {
    for (const resolve of this.pending.values()) {
      resolve({ ok: false, error: reason });
    }
    this.pending.clear();
  }

  close(): void {
    this.closed = true;
    if (this.staleTimer) clearInterval(this.staleTimer);
    this.ws?.close();
  }
}

/** Fetches and returns the registry document text (read-only endpoint). */
export async function fetchRegistry(baseHttpUrl: string): Promise<string> {
  const response = await fetch(`${baseHttpUrl}/registry`);
  if (!response.ok) throw new Error(`registry fetch failed: ${response.status}`);
  return response.text();
}
