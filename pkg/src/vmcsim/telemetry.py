"""Per-iteration state logging: CSV rows, a TCP publish stream, an aggregator,
a command stream, and the WebSocket bridge the browser console consumes.

A module is unaware of its neighbours' identities, so published records
carry no connectivity; the aggregator joins each row with the module's
current parents/children from the connectivity registry before appending
it to the unified CSV.
"""

from __future__ import annotations

import io
import json
import os
import socket
import threading
from collections import deque
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Callable, Iterator, Optional

from .topology import TopologyGraph, registry_import

CSV_SCHEMA_VERSION = 1
SLOT_FIELDS = ("s", "v", "r", "live", "light", "upright")
N_SLOTS = 2
PUBLISH_BUFFER_LIMIT = 1000  # per-subscriber backlog before oldest records drop

CSV_COLUMNS: tuple[str, ...] = (
    "ts_iso8601",
    "module",
    "iter",
    "r_in",
    "r_gen",
    "s_out",
    *(f"{f}_slot{k}" for k in range(1, N_SLOTS + 1) for f in SLOT_FIELDS),
    "parents",
    "children",
)


@dataclass(frozen=True)
class SlotTelemetry:
    s: float
    v: float
    r: float
    live: bool
    light: float
    upright: float


@dataclass(frozen=True)
class TelemetryRecord:
    ts: float  # unix seconds (simulated clock in fast-forward mode)
    module: str
    iter: int
    r_in: float
    r_gen: float
    s_out: float
    slots: tuple[SlotTelemetry, ...]


def _iso(ts: float) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).isoformat(timespec="milliseconds")


def record_fields(record: TelemetryRecord) -> dict:
    """Module-known fields, named exactly like the CSV columns."""
    fields = {
        "ts_iso8601": _iso(record.ts),
        "module": record.module,
        "iter": record.iter,
        "r_in": record.r_in,
        "r_gen": record.r_gen,
        "s_out": record.s_out,
    }
    for k, slot in enumerate(record.slots, start=1):
        fields[f"s_slot{k}"] = slot.s
        fields[f"v_slot{k}"] = slot.v
        fields[f"r_slot{k}"] = slot.r
        fields[f"live_slot{k}"] = int(slot.live)
        fields[f"light_slot{k}"] = slot.light
        fields[f"upright_slot{k}"] = slot.upright
    return fields


def record_to_json(record: TelemetryRecord) -> str:
    return json.dumps(record_fields(record), separators=(",", ":"))


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


# ------------------------------------------------------------------- registry


class RegistryView:
    """Resolves a module's current connectivity at row-append time."""

    def connectivity(self, module_id: str) -> tuple[str, str]:
        raise NotImplementedError


class GraphRegistryView(RegistryView):
    def __init__(self, graph: TopologyGraph):
        self.graph = graph

    def connectivity(self, module_id: str) -> tuple[str, str]:
        if module_id not in self.graph.modules:
            raise KeyError(module_id)
        parents = ";".join(p for _, p, _ in self.graph.parents_of(module_id))
        children = ";".join(c or "" for c in self.graph.children_of(module_id))
        return parents, children


class FileRegistryView(RegistryView):
    """Re-reads the registry document whenever it changes on disk."""

    def __init__(self, path: str):
        self.path = path
        self._mtime: Optional[float] = None
        self._view: Optional[GraphRegistryView] = None

    def connectivity(self, module_id: str) -> tuple[str, str]:
        try:
            mtime = os.stat(self.path).st_mtime_ns
        except FileNotFoundError:
            raise KeyError(module_id)
        if self._view is None or mtime != self._mtime:
            with open(self.path, encoding="utf-8") as fh:
                self._view = GraphRegistryView(registry_import(fh.read()))
            self._mtime = mtime
        return self._view.connectivity(module_id)


# ------------------------------------------------------------------ CSV sink


class CsvAggregator:
    """Append-only unified CSV; one row per published (module, iteration)."""

    def __init__(self, path: str, registry: RegistryView):
        self.path = path
        self.registry = registry
        self.unknown_module_warnings = 0
        self._lock = threading.Lock()
        self._fh: Optional[io.TextIOBase] = None

    def _file(self) -> io.TextIOBase:
        if self._fh is None:
            fresh = not os.path.exists(self.path) or os.path.getsize(self.path) == 0
            self._fh = open(self.path, "a", encoding="utf-8", newline="")
            if fresh:
                self._fh.write(",".join(CSV_COLUMNS) + "\n")
                self._fh.flush()
        return self._fh

    def consume(self, record: TelemetryRecord) -> None:
        fields = record_fields(record)
        try:
            parents, children = self.registry.connectivity(record.module)
        except KeyError:
            parents, children = "", ""
            self.unknown_module_warnings += 1
        fields["parents"] = parents
        fields["children"] = children
        row = ",".join(_cell(fields[col]) for col in CSV_COLUMNS)
        with self._lock:
            fh = self._file()
            fh.write(row + "\n")
            fh.flush()

    def close(self) -> None:
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None


def read_csv_rows(path: str) -> Iterator[dict]:
    """Rows as dicts with floats/ints restored for the numeric columns."""
    with open(path, encoding="utf-8", newline="") as fh:
        header = fh.readline().rstrip("\n").split(",")
        for line in fh:
            raw = line.rstrip("\n").split(",")
            row = dict(zip(header, raw))
            for key, value in row.items():
                if key in ("module", "parents", "children", "ts_iso8601"):
                    continue
                row[key] = int(value) if key in ("iter",) or key.startswith("live_") else float(value)
            yield row


# ------------------------------------------------------------ publish stream


class TelemetryPublisher:
    """Fire-and-forget newline-delimited JSON broadcast over TCP.

    Publishing never blocks the module loop: each subscriber gets a bounded
    backlog (oldest dropped beyond 1000 records) drained by its own writer
    thread.
    """

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self._server = socket.create_server((host, port))
        self.host, self.port = self._server.getsockname()[:2]
        self._subscribers: dict[socket.socket, deque] = {}
        self._events: dict[socket.socket, threading.Event] = {}
        self._lock = threading.Lock()
        self._closed = False
        self._sinks: list[Callable[[TelemetryRecord], None]] = []
        threading.Thread(target=self._accept_loop, daemon=True).start()

    def attach_sink(self, sink: Callable[[TelemetryRecord], None]) -> None:
        """In-process fan-out (e.g. the WebSocket gateway)."""
        self._sinks.append(sink)

    def _accept_loop(self) -> None:
        while not self._closed:
            try:
                conn, _ = self._server.accept()
            except OSError:
                return
            backlog: deque = deque(maxlen=PUBLISH_BUFFER_LIMIT)
            event = threading.Event()
            with self._lock:
                self._subscribers[conn] = backlog
                self._events[conn] = event
            threading.Thread(
                target=self._writer_loop, args=(conn, backlog, event), daemon=True
            ).start()

    def _writer_loop(self, conn: socket.socket, backlog: deque, event: threading.Event) -> None:
        try:
            while not self._closed:
                event.wait(timeout=0.2)
                event.clear()
                while backlog:
                    line = backlog.popleft()
                    conn.sendall(line.encode("utf-8") + b"\n")
        except OSError:
            pass
        finally:
            with self._lock:
                self._subscribers.pop(conn, None)
                self._events.pop(conn, None)
            conn.close()

    @property
    def subscriber_count(self) -> int:
        with self._lock:
            return len(self._subscribers)

    def publish(self, record: TelemetryRecord) -> None:
        line = record_to_json(record)
        with self._lock:
            targets = list(zip(self._subscribers.values(), self._events.values()))
        for backlog, event in targets:
            backlog.append(line)  # deque maxlen drops the oldest when full
            event.set()
        for sink in self._sinks:
            sink(record)

    def close(self) -> None:
        self._closed = True
        self._server.close()
        with self._lock:
            conns = list(self._subscribers)
        for conn in conns:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            conn.close()


def subscribe_lines(host: str, port: int, timeout: Optional[float] = None) -> Iterator[dict]:
    """Blocking NDJSON subscriber; yields parsed objects until the stream closes."""
    with socket.create_connection((host, port), timeout=timeout) as conn:
        buf = b""
        while True:
            chunk = conn.recv(65536)
            if not chunk:
                return
            buf += chunk
            while b"\n" in buf:
                line, _, buf = buf.partition(b"\n")
                if line.strip():
                    yield json.loads(line)


# ------------------------------------------------------------ command stream


class CommandServer:
    """Newline-delimited JSON actions in, one ack object out per action."""

    def __init__(self, handler: Callable[[dict], dict], host: str = "127.0.0.1", port: int = 0):
        self.handler = handler
        self._server = socket.create_server((host, port))
        self.host, self.port = self._server.getsockname()[:2]
        self._closed = False
        threading.Thread(target=self._accept_loop, daemon=True).start()

    def _accept_loop(self) -> None:
        while not self._closed:
            try:
                conn, _ = self._server.accept()
            except OSError:
                return
            threading.Thread(target=self._serve_conn, args=(conn,), daemon=True).start()

    def _serve_conn(self, conn: socket.socket) -> None:
        try:
            with conn, conn.makefile("rwb") as fh:
                for raw in fh:
                    ack = handle_command_line(self.handler, raw.decode("utf-8"))
                    fh.write((json.dumps(ack, separators=(",", ":")) + "\n").encode("utf-8"))
                    fh.flush()
        except OSError:
            pass

    def close(self) -> None:
        self._closed = True
        self._server.close()


def handle_command_line(handler: Callable[[dict], dict], line: str) -> dict:
    try:
        action = json.loads(line)
    except json.JSONDecodeError as exc:
        return {"ok": False, "error": f"malformed JSON: {exc.msg}"}
    if not isinstance(action, dict):
        return {"ok": False, "error": "action must be a JSON object"}
    try:
        ack = handler(action)
    except Exception as exc:  # handler contract: structured errors come back as acks
        ack = {"ok": False, "error": str(exc)}
    if "id" in action:
        ack = {**ack, "id": action["id"]}
    return ack


# ----------------------------------------------------------- browser gateway


class WebSocketGateway:
    """Bridges the telemetry stream and command stream to browser clients.

    Text frames to clients are envelopes {"type": "record", "data": {...}}
    and {"type": "ack", "data": {...}}; incoming frames are command-stream
    actions. GET /registry on the same port serves the connectivity
    document read-only.
    """

    def __init__(
        self,
        command_handler: Callable[[dict], dict],
        registry_text: Callable[[], str],
        host: str = "127.0.0.1",
        port: int = 0,
    ):
        from websockets.http11 import Headers, Response
        from websockets.sync.server import serve

        self.command_handler = command_handler
        self.registry_text = registry_text
        self._clients: set = set()
        self._lock = threading.Lock()

        def process_request(conn, request):
            if request.path == "/registry":
                body = self.registry_text().encode("utf-8")
                headers = Headers(
                    [
                        ("Content-Type", "text/plain; charset=utf-8"),
                        ("Content-Length", str(len(body))),
                        ("Access-Control-Allow-Origin", "*"),
                    ]
                )
                return Response(200, "OK", headers, body)
            return None

        def ws_handler(conn):
            with self._lock:
                self._clients.add(conn)
            try:
                for message in conn:
                    ack = handle_command_line(self.command_handler, message)
                    conn.send(json.dumps({"type": "ack", "data": ack}, separators=(",", ":")))
            finally:
                with self._lock:
                    self._clients.discard(conn)

        self._server = serve(ws_handler, host, port, process_request=process_request)
        self.host, self.port = self._server.socket.getsockname()[:2]
        threading.Thread(target=self._server.serve_forever, daemon=True).start()

    def forward(self, record: TelemetryRecord) -> None:
        frame = json.dumps(
            {"type": "record", "data": record_fields(record)}, separators=(",", ":")
        )
        with self._lock:
            clients = list(self._clients)
        for conn in clients:
            try:
                conn.send(frame)
            except Exception:
                with self._lock:
                    self._clients.discard(conn)

    def close(self) -> None:
        self._server.shutdown()
