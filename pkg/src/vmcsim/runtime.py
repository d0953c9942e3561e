"""Run loop: each module is an isolated logical process iterating the
five-step controller chronology with randomized waits, talking to its
neighbours only over channel links.

Two schedulers share the same module code path: a single-threaded
deterministic discrete-event mode (fast-forward) and a multi-threaded
real-time mode. Snapshots make any module resumable after a kill; the
growth advisor ranks unconnected leaves by windowed resource.
"""

from __future__ import annotations

import heapq
import json
import os
import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Any, Iterable, Optional

from . import environment as env
from .channel import ChannelFabric, RxPort, TxPort
from .controller import (
    DEFAULT_ROOT_GENERATION,
    Genome,
    NodeVmcState,
    StepResult,
    StructuralError,
    clamp01,
    node_step,
)
from .prng import Stream, derive_seed
from .scenario import RunConfig, ScenarioSpec, TimedEvent
from .telemetry import (
    CommandServer,
    CsvAggregator,
    GraphRegistryView,
    SlotTelemetry,
    TelemetryPublisher,
    TelemetryRecord,
    WebSocketGateway,
)
from .topology import TopologyGraph, TopologyError, WireEvent, leaf_id

SNAPSHOT_SUFFIX = ".snapshot.json"


# ------------------------------------------------------------------ snapshots


@dataclass(frozen=True)
class StateSnapshot:
    module_id: str
    state: NodeVmcState
    slot_occupied: tuple[bool, ...]
    iteration: int
    written_at: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "module": self.module_id,
                "iteration": self.iteration,
                "written_at": self.written_at,
                "slot_occupied": list(self.slot_occupied),
                "state": {
                    "resource": self.state.resource,
                    "successin_out": self.state.successin_out,
                    "vessels": list(self.state.vessels),
                    "child_successin": list(self.state.child_successin),
                },
            },
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text: str) -> "StateSnapshot":
        doc = json.loads(text)
        state = doc["state"]
        vessels = tuple(float(v) for v in state["vessels"])
        child_s = tuple(float(v) for v in state["child_successin"])
        if len(vessels) != len(child_s) or len(vessels) != len(doc["slot_occupied"]):
            raise ValueError("snapshot slot bookkeeping is inconsistent")
        return cls(
            module_id=doc["module"],
            state=NodeVmcState(
                resource=float(state["resource"]),
                successin_out=float(state["successin_out"]),
                vessels=vessels,
                child_successin=child_s,
            ),
            slot_occupied=tuple(bool(b) for b in doc["slot_occupied"]),
            iteration=int(doc["iteration"]),
            written_at=float(doc["written_at"]),
        )


class SnapshotStore:
    """One JSON file per module; writes are write-new-then-swap atomic."""

    def __init__(self, directory: str):
        self.directory = directory
        os.makedirs(directory, exist_ok=True)
        self.warnings: list[str] = []

    def _path(self, module_id: str) -> str:
        return os.path.join(self.directory, module_id + SNAPSHOT_SUFFIX)

    def write(self, snapshot: StateSnapshot) -> None:
        path = self._path(snapshot.module_id)
        tmp = path + ".tmp"
        payload = snapshot.to_json()
        for attempt in (0, 1):
            try:
                with open(tmp, "w", encoding="utf-8") as fh:
                    fh.write(payload)
                os.replace(tmp, path)
                return
            except OSError:
                if attempt:
                    raise

    def load(self, module_id: str) -> Optional[StateSnapshot]:
        path = self._path(module_id)
        try:
            with open(path, encoding="utf-8") as fh:
                return StateSnapshot.from_json(fh.read())
        except FileNotFoundError:
            return None
        except (ValueError, KeyError) as exc:
            self.warnings.append(f"corrupt snapshot for {module_id}: {exc}")
            return None


# ------------------------------------------------------------ module process


@dataclass
class ParentPlug:
    rx_r: RxPort
    tx_s: TxPort


@dataclass
class ChildSlot:
    tx_r: TxPort
    rx_s: RxPort


class ModuleProcess:
    """The continuous per-module loop body; the scheduler owns timing."""

    def __init__(
        self,
        sim: "Simulation",
        module_id: str,
        incarnation: int = 0,
    ):
        self.sim = sim
        self.module_id = module_id
        desc = sim.graph.modules[module_id]
        self.level = desc.level
        self.n_slots = desc.child_slots
        self.plugs = sim.ports_parent[module_id]
        self.slots = sim.ports_child[module_id]
        self.genome = sim.genome
        self.halted = False
        self.halt_reason: Optional[str] = None

        seed = sim.config.iteration.seed
        self.wait_stream = Stream(derive_seed(seed, module_id, "wait", incarnation))
        self.noise = (
            [Stream(derive_seed(seed, module_id, "noise", k)) for k in range(1, self.n_slots + 1)]
            if sim.config.jitter
            else [None] * self.n_slots
        )

        snapshot = sim.snapshots.load(module_id) if sim.snapshots else None
        if snapshot is not None and len(snapshot.state.vessels) == self.n_slots:
            self.state = snapshot.state
            self.iteration = snapshot.iteration
        else:
            self.state = NodeVmcState.initial(self.n_slots)
            self.iteration = 0
        self.last_step: Optional[StepResult] = None

    def next_wait(self) -> float:
        cfg = self.sim.config.iteration
        return self.wait_stream.uniform(cfg.min_wait, cfg.max_wait)

    def iterate(self, now: float) -> None:
        sim = self.sim
        scene = sim.scene
        poses = sim.poses

        live_parents: list[tuple[int, float]] = []
        for idx, plug in enumerate(self.plugs):
            res = plug.rx_r.decode(now)
            if res.ready and res.live:
                live_parents.append((idx, res.value))

        child_values: list[Optional[float]] = []
        slot_live: list[bool] = []
        sensors = []
        for k, slot in enumerate(self.slots):
            res = slot.rx_s.decode(now)
            if res.ready and res.live:
                child_values.append(res.value)
                slot_live.append(True)
            else:
                child_values.append(None)
                slot_live.append(False)
            leaf = leaf_id(self.module_id, k + 1)
            pose = poses.get(leaf, env.LeafPose(position=(0.0, 0.0, 0.0)))
            sensors.append(env.sample_sensors(scene, pose, leaf, self.noise[k]))

        try:
            result = node_step(
                self.state,
                [v for _, v in live_parents],
                child_values,
                sensors,
                self.genome,
                leaf_scale=1.0 / sim.config.max_leaves,
                generation=DEFAULT_ROOT_GENERATION,
            )
        except StructuralError as exc:
            self.halted = True
            self.halt_reason = str(exc)
            sim.log_event(now, "halt", f"{self.module_id}: {exc}")
            return

        self.state = result.state
        self.iteration += 1
        self.last_step = result

        # Outbound wires carry clamped values; raw amounts stay in telemetry.
        for k, slot in enumerate(self.slots):
            slot.tx_r.set_value(clamp01(result.resource_to_children[k]), now)
        shares = dict(zip((idx for idx, _ in live_parents), result.successin_to_parents))
        for idx, plug in enumerate(self.plugs):
            plug.tx_s.set_value(clamp01(shares.get(idx, 0.0)), now)

        record = TelemetryRecord(
            ts=sim.record_ts(now),
            module=self.module_id,
            iter=self.iteration,
            r_in=0.0 if result.generated else result.resource_in,
            r_gen=result.resource_in if result.generated else 0.0,
            s_out=result.state.successin_out,
            slots=tuple(
                SlotTelemetry(
                    s=result.state.child_successin[k],
                    v=result.state.vessels[k],
                    r=result.resource_to_children[k],
                    live=slot_live[k],
                    light=sensors[k].light,
                    upright=sensors[k].uprightness,
                )
                for k in range(self.n_slots)
            ),
        )
        sim.emit(record)

        if sim.snapshots and sim.config.snapshot_every > 0:
            if self.iteration % sim.config.snapshot_every == 0:
                try:
                    sim.snapshots.write(
                        StateSnapshot(
                            module_id=self.module_id,
                            state=self.state,
                            slot_occupied=tuple(slot_live),
                            iteration=self.iteration,
                            written_at=sim.record_ts(now),
                        )
                    )
                except OSError as exc:
                    self.halted = True
                    self.halt_reason = f"snapshot write failed: {exc}"
                    sim.log_event(now, "halt", f"{self.module_id}: {self.halt_reason}")


# --------------------------------------------------------------- simulation


class Simulation:
    """Builds the whole run from a scenario and drives it in either mode."""

    def __init__(
        self,
        spec: ScenarioSpec,
        out_dir: Optional[str] = None,
        keep_history: bool = False,
    ):
        self.spec = spec
        self.config: RunConfig = spec.runtime
        self.genome: Genome = spec.genome
        self.out_dir = out_dir
        self.keep_history = keep_history
        self.history: list[TelemetryRecord] = []
        self.events_log: list[tuple[float, str, str]] = []

        seed = self.config.iteration.seed
        self.fabric = ChannelFabric(
            seed=derive_seed(seed, "fabric"),
            sample_rate_hz=self.config.sample_rate_hz,
            ideal=self.config.ideal_channel,
        )

        self.graph = TopologyGraph()
        for desc in spec.modules:
            self.graph.add_module(desc)

        self.ports_parent: dict[str, list[ParentPlug]] = {}
        self.ports_child: dict[str, list[ChildSlot]] = {}
        for desc in spec.modules:
            m = desc.module_id
            self.ports_parent[m] = [
                ParentPlug(
                    rx_r=self.fabric.new_rx(f"{m}.plug{j}.r"),
                    tx_s=self.fabric.new_tx(f"{m}.plug{j}.s"),
                )
                for j in range(1, desc.parent_plugs + 1)
            ]
            self.ports_child[m] = [
                ChildSlot(
                    tx_r=self.fabric.new_tx(f"{m}.slot{k}.r"),
                    rx_s=self.fabric.new_rx(f"{m}.slot{k}.s"),
                )
                for k in range(1, desc.child_slots + 1)
            ]

        self.scene = spec.scene
        self.poses = env.layout_poses(self.graph)

        self.snapshots = (
            SnapshotStore(os.path.join(out_dir, "snapshots")) if out_dir else None
        )
        self.csv_path = os.path.join(out_dir, "telemetry.csv") if out_dir else None
        self.registry_path = os.path.join(out_dir, "registry.txt") if out_dir else None
        self._aggregator = (
            CsvAggregator(self.csv_path, GraphRegistryView(self.graph)) if self.csv_path else None
        )

        self.publisher: Optional[TelemetryPublisher] = None
        self.command_server: Optional[CommandServer] = None
        self.gateway: Optional[WebSocketGateway] = None

        self._recent: dict[str, deque] = {
            m.module_id: deque(maxlen=max(self.config.advice_window, 64)) for m in spec.modules
        }
        self._action_lock = threading.RLock()
        self._killed: set[str] = set()
        self._paused = False
        self._rt_resume = threading.Event()
        self._rt_resume.set()
        self._rt_stop = threading.Event()
        self._t0_monotonic = time.monotonic()

        # Shelf modules are declared but powered off; they boot when attached.
        self.processes: dict[str, ModuleProcess] = {
            desc.module_id: ModuleProcess(self, desc.module_id)
            for desc in spec.modules
            if desc.module_id not in spec.shelf
        }

        for parent, slot, child in spec.attachments:
            event = self.graph.attach(parent, slot, child)
            self._realize_wires(event, t=0.0)
        self.poses = env.layout_poses(self.graph)
        self._export_registry()

    # ------------------------------------------------------------- plumbing

    def record_ts(self, now: float) -> float:
        if self.config.iteration.mode == "real-time":
            return time.time()
        return now  # simulated seconds since the unix epoch: deterministic

    def log_event(self, t: float, kind: str, detail: str) -> None:
        self.events_log.append((t, kind, detail))

    def emit(self, record: TelemetryRecord) -> None:
        self._recent[record.module].append(record)
        if self.keep_history:
            self.history.append(record)
        if self._aggregator:
            self._aggregator.consume(record)
        if self.publisher:
            self.publisher.publish(record)

    def _realize_wires(self, event: WireEvent, t: float) -> None:
        parent_slot = self.ports_child[event.parent][event.slot - 1]
        child_plug = self.ports_parent[event.child][event.child_plug - 1]
        if event.kind == "plug":
            self.fabric.plug(parent_slot.tx_r, child_plug.rx_r, t)
            self.fabric.plug(child_plug.tx_s, parent_slot.rx_s, t)
        else:
            self.fabric.unplug(child_plug.rx_r, t)
            self.fabric.unplug(parent_slot.rx_s, t)

    def _export_registry(self) -> None:
        if self.registry_path:
            from .topology import registry_export

            tmp = self.registry_path + ".tmp"
            with open(tmp, "w", encoding="utf-8") as fh:
                fh.write(registry_export(self.graph))
            os.replace(tmp, self.registry_path)

    def registry_text(self) -> str:
        from .topology import registry_export

        with self._action_lock:
            return registry_export(self.graph)

    # --------------------------------------------------------------- actions

    def apply_action(self, action: dict[str, Any], t: float) -> dict[str, Any]:
        """Validate and apply one command/script action; returns the ack."""
        with self._action_lock:
            kind = action.get("action")
            try:
                if kind == "attach":
                    event = self.graph.attach(
                        action["parent"], int(action["slot"]), action["child"]
                    )
                    self._realize_wires(event, t)
                    self.poses = env.layout_poses(self.graph)
                    self._export_registry()
                    for module_id in (action["child"], action["parent"]):
                        if module_id not in self.processes:
                            self._boot(module_id, t)
                elif kind == "detach":
                    event = self.graph.detach(action["parent"], int(action["slot"]))
                    self._realize_wires(event, t)
                    self.poses = env.layout_poses(self.graph)
                    self._export_registry()
                elif kind == "scene":
                    self.scene = self._scene_event(self.scene, action)
                elif kind == "kill":
                    self._kill(action["module"], t)
                elif kind == "restore":
                    self._restore(action["module"], t)
                elif kind == "pause":
                    self._paused = True
                    self._rt_resume.clear()
                elif kind == "resume":
                    self._paused = False
                    self._rt_resume.set()
                else:
                    return {"ok": False, "error": f"unknown action {kind!r}"}
            except (TopologyError, env.SceneError) as exc:
                reason = getattr(exc, "reason", str(exc))
                return {"ok": False, "error": reason}
            except KeyError as exc:
                return {"ok": False, "error": f"missing field {exc}"}
            return {"ok": True, "action": kind}

    def _scene_event(self, scene: env.Scene, action: dict[str, Any]) -> env.Scene:
        kind = action.get("kind")
        if kind == "move_lamp":
            return env.move_lamp(scene, int(action["index"]), action["position"])
        if kind == "set_ambient":
            return env.set_ambient(scene, float(action["value"]))
        if kind == "add_shade":
            self._check_entity(action["leaf"])
            return env.add_shade(scene, action["leaf"], float(action["attenuation"]))
        if kind == "remove_shade":
            return env.remove_shade(scene, action["leaf"])
        if kind == "set_tilt":
            self._check_entity(action["branch"])
            return env.set_tilt(scene, action["branch"], float(action["degrees"]))
        raise env.SceneError(f"unknown scene event {kind!r}")

    def _check_entity(self, ref: str) -> None:
        if ref in self.graph.modules:
            return
        module, _, slot = ref.rpartition("-")
        if module in self.graph.modules and slot.isdigit():
            return
        raise env.SceneError(f"unknown entity {ref!r}")

    def _kill(self, module_id: str, t: float) -> None:
        if module_id not in self.processes:
            raise TopologyError("unknown-module", f"unknown module {module_id!r}")
        self._killed.add(module_id)
        # A dead process stops driving its PWM lines: they read low.
        for slot in self.ports_child[module_id]:
            rx = slot.tx_r.rx
            if rx is not None:
                rx._note_duty(t, 0.0)
        for plug in self.ports_parent[module_id]:
            rx = plug.tx_s.rx
            if rx is not None:
                rx._note_duty(t, 0.0)
        self.log_event(t, "kill", module_id)

    def _boot(self, module_id: str, t: float) -> None:
        proc = ModuleProcess(self, module_id)
        self.processes[module_id] = proc
        self.log_event(t, "boot", module_id)
        if self._ff_heap is not None:
            start = t + proc.wait_stream.uniform(0.0, self.config.iteration.min_wait)
            self._ff_push(start, 1, module_id, ("module", module_id))
        else:
            self._start_rt_thread(proc)

    def _restore(self, module_id: str, t: float) -> None:
        if module_id not in self.processes:
            raise TopologyError("unknown-module", f"unknown module {module_id!r}")
        if module_id not in self._killed:
            raise TopologyError("not-killed", f"{module_id} is not down")
        self._killed.discard(module_id)
        old = self.processes[module_id]
        incarnation = getattr(old, "_incarnation", 0) + 1
        proc = ModuleProcess(self, module_id, incarnation=incarnation)
        proc._incarnation = incarnation
        self.processes[module_id] = proc
        self.log_event(t, "restore", module_id)
        if self._ff_heap is not None:
            self._ff_push(t + proc.next_wait(), 1, module_id, ("module", module_id))
        else:
            self._start_rt_thread(proc)

    # ---------------------------------------------------------------- advice

    def growth_advice(self, window: Optional[int] = None) -> list[tuple[str, float]]:
        """Unconnected leaves ranked by windowed mean resource share."""
        window = window or self.config.advice_window
        with self._action_lock:
            free = [
                (m, slot)
                for m, slot in self.graph.free_leaf_slots()
                if m in self.processes and m not in self._killed
            ]
        averages: list[tuple[str, float]] = []
        for module_id, slot in free:
            recent = list(self._recent[module_id])[-window:]
            if recent:
                avg = sum(rec.slots[slot - 1].r for rec in recent) / len(recent)
            else:
                avg = 0.0
            averages.append((leaf_id(module_id, slot), avg))
        return rank_advice(averages)

    # ------------------------------------------------------------------ run

    _ff_heap: Optional[list] = None

    def run(self, duration: Optional[float] = None) -> None:
        duration = duration if duration is not None else self.config.duration
        if self.config.iteration.mode == "real-time":
            self._run_real_time(duration)
        else:
            self._run_fast_forward(duration)

    def _ff_push(self, t: float, prio: int, key, payload) -> None:
        heapq.heappush(self._ff_heap, (t, prio, key, payload))

    def _run_fast_forward(self, duration: float) -> None:
        self._ff_heap = []
        for module_id, proc in sorted(self.processes.items()):
            start = proc.wait_stream.uniform(0.0, self.config.iteration.min_wait)
            self._ff_push(start, 1, module_id, ("module", module_id))
        for idx, event in enumerate(self.spec.events):
            self._ff_push(event.t, 0, idx, ("script", event))

        paused_at = 0.0
        buffered: list[tuple[float, str]] = []
        while self._ff_heap:
            t, prio, key, payload = heapq.heappop(self._ff_heap)
            if t > duration:
                break
            kind = payload[0]
            if kind == "script":
                event: TimedEvent = payload[1]
                was_paused = self._paused
                ack = self.apply_action({"action": event.action, **event.params}, t)
                if not ack.get("ok"):
                    self.log_event(t, "rejected-event", f"{event.action}: {ack.get('error')}")
                if was_paused and not self._paused:
                    for orig_t, module_id in buffered:
                        self._ff_push(t + (orig_t - paused_at), 1, module_id, ("module", module_id))
                    buffered = []
                elif not was_paused and self._paused:
                    paused_at = t
                continue
            module_id = payload[1]
            proc = self.processes[module_id]
            if module_id in self._killed or proc.halted:
                continue
            if self._paused:
                buffered.append((t, module_id))
                continue
            proc.iterate(t)
            if not proc.halted:
                self._ff_push(t + proc.next_wait(), 1, module_id, ("module", module_id))
        self._ff_heap = None
        self._close_sinks()

    def _now_rt(self) -> float:
        return time.monotonic() - self._t0_monotonic

    def _start_rt_thread(self, proc: ModuleProcess) -> None:
        def loop():
            while not self._rt_stop.is_set():
                self._rt_resume.wait()
                if self._rt_stop.is_set():
                    return
                if proc.halted or proc.module_id in self._killed:
                    return
                proc.iterate(self._now_rt())
                if self._rt_stop.wait(timeout=proc.next_wait()):
                    return

        thread = threading.Thread(target=loop, name=f"module-{proc.module_id}", daemon=True)
        thread.start()

    def start_servers(self, host: str = "127.0.0.1", ports: Optional[dict] = None) -> dict:
        """Publish stream + command stream + browser gateway; returns bound ports."""
        ports = ports or {}
        self.publisher = TelemetryPublisher(host, ports.get("telemetry", 0))

        def command_handler(action: dict) -> dict:
            return self.apply_action(action, self._now_rt())

        self.command_server = CommandServer(command_handler, host, ports.get("command", 0))
        self.gateway = WebSocketGateway(
            command_handler, self.registry_text, host, ports.get("ws", 0)
        )
        self.publisher.attach_sink(self.gateway.forward)
        info = {
            "telemetry": self.publisher.port,
            "command": self.command_server.port,
            "ws": self.gateway.port,
        }
        if self.out_dir:
            with open(os.path.join(self.out_dir, "services.json"), "w", encoding="utf-8") as fh:
                json.dump({"host": host, **info}, fh)
        return info

    def _run_real_time(self, duration: float) -> None:
        self._t0_monotonic = time.monotonic()
        for proc in self.processes.values():
            self._start_rt_thread(proc)
        script = sorted(self.spec.events, key=lambda e: e.t)
        idx = 0
        try:
            while self._now_rt() < duration and not self._rt_stop.is_set():
                while idx < len(script) and script[idx].t <= self._now_rt():
                    event = script[idx]
                    ack = self.apply_action({"action": event.action, **event.params}, event.t)
                    if not ack.get("ok"):
                        self.log_event(event.t, "rejected-event", str(ack.get("error")))
                    idx += 1
                time.sleep(0.02)
        finally:
            self.stop()

    def stop(self) -> None:
        self._rt_stop.set()
        self._rt_resume.set()
        self._close_sinks()

    def _close_sinks(self) -> None:
        if self._aggregator:
            self._aggregator.close()
        if self.publisher:
            self.publisher.close()
        if self.command_server:
            self.command_server.close()
        if self.gateway:
            self.gateway.close()


# ----------------------------------------------------------- advice helpers


def rank_advice(leaf_averages: Iterable[tuple[str, float]]) -> list[tuple[str, float]]:
    """Normalize windowed leaf resources into shares; ties break lexicographically."""
    pairs = list(leaf_averages)
    total = sum(avg for _, avg in pairs)
    if total > 0:
        shares = [(leaf, avg / total) for leaf, avg in pairs]
    else:
        shares = [(leaf, 1.0 / len(pairs)) for leaf, _ in pairs] if pairs else []
    return sorted(shares, key=lambda item: (-item[1], item[0]))


def advice_from_rows(rows: Iterable[dict], window: int = 20) -> list[tuple[str, float]]:
    """Advice computed from aggregated CSV rows (the `advise` CLI path)."""
    per_module: dict[str, deque] = {}
    children_now: dict[str, list[str]] = {}
    for row in rows:
        module = row["module"]
        per_module.setdefault(module, deque(maxlen=window)).append(row)
        children_now[module] = str(row.get("children", "")).split(";")
    averages = []
    for module, recent in per_module.items():
        slots = children_now[module]
        for k in range(1, len(slots) + 1):
            if slots[k - 1] == "":
                avg = sum(float(r[f"r_slot{k}"]) for r in recent) / len(recent)
                averages.append((leaf_id(module, k), avg))
    return rank_advice(averages)
