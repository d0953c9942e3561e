"""Rooted directed graph of Y-modules and its serializable connectivity registry.

Each module offers exactly two child slots (its leaf arms) and up to three
parent plugs at its base. Attach/detach events are validated here and
echoed as logical wire events the runtime maps onto the channel fabric.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

CHILD_SLOTS = 2
MAX_PARENT_PLUGS = 3


class TopologyError(Exception):
    """Rejected topology mutation; ``reason`` is a stable machine-readable code."""

    def __init__(self, reason: str, message: str):
        super().__init__(message)
        self.reason = reason


class RegistryParseError(ValueError):
    """Malformed or inconsistent registry document; carries the line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class ModuleDescriptor:
    module_id: str
    level: int = 0
    child_slots: int = CHILD_SLOTS
    parent_plugs: int = MAX_PARENT_PLUGS

    def __post_init__(self):
        if not self.module_id or any(c.isspace() for c in self.module_id):
            raise ValueError(f"module id must be a non-blank token, got {self.module_id!r}")
        if self.level < 0:
            raise ValueError("level must be >= 0")
        if self.child_slots != CHILD_SLOTS:
            raise ValueError(f"modules have exactly {CHILD_SLOTS} child slots")
        if not 1 <= self.parent_plugs <= MAX_PARENT_PLUGS:
            raise ValueError(f"parent plugs must lie in 1..{MAX_PARENT_PLUGS}")


@dataclass(frozen=True)
class WireEvent:
    """Logical plug/unplug to be realized on the channel layer (one per wire pair)."""

    kind: str  # "plug" | "unplug"
    parent: str
    slot: int
    child: str
    child_plug: int


def leaf_id(module_id: str, slot: int) -> str:
    return f"{module_id}-{slot}"


def parse_leaf_id(leaf: str) -> tuple[str, int]:
    module, _, slot = leaf.rpartition("-")
    if not module or not slot.isdigit():
        raise ValueError(f"not a leaf id: {leaf!r}")
    return module, int(slot)


class TopologyGraph:
    """Mutable module graph; all mutations validate the acyclicity invariant."""

    def __init__(self):
        self.modules: dict[str, ModuleDescriptor] = {}
        self._edges: dict[tuple[str, int], tuple[str, int]] = {}  # (parent, slot) -> (child, plug)
        self._plugs: dict[str, dict[int, tuple[str, int]]] = {}  # child -> plug -> (parent, slot)

    def add_module(self, descriptor: ModuleDescriptor) -> None:
        if descriptor.module_id in self.modules:
            raise TopologyError("duplicate-module", f"module {descriptor.module_id} already exists")
        self.modules[descriptor.module_id] = descriptor
        self._plugs[descriptor.module_id] = {}

    def _require(self, module_id: str) -> ModuleDescriptor:
        try:
            return self.modules[module_id]
        except KeyError:
            raise TopologyError("unknown-module", f"unknown module {module_id!r}") from None

    def child_at(self, parent_id: str, slot: int) -> Optional[str]:
        edge = self._edges.get((parent_id, slot))
        return edge[0] if edge else None

    def children_of(self, module_id: str) -> list[Optional[str]]:
        desc = self._require(module_id)
        return [self.child_at(module_id, s) for s in range(1, desc.child_slots + 1)]

    def parents_of(self, child_id: str) -> list[tuple[int, str, int]]:
        """(plug, parent, parent_slot) triples ordered by plug index."""
        self._require(child_id)
        return sorted((plug, p, s) for plug, (p, s) in self._plugs[child_id].items())

    def descendants(self, module_id: str) -> set[str]:
        self._require(module_id)
        seen: set[str] = set()
        stack = [module_id]
        while stack:
            cur = stack.pop()
            for (parent, _), (child, _) in self._edges.items():
                if parent == cur and child not in seen:
                    seen.add(child)
                    stack.append(child)
        return seen

    def roots(self) -> list[str]:
        return sorted(m for m in self.modules if not self._plugs[m])

    def free_leaf_slots(self) -> list[tuple[str, int]]:
        out = []
        for module_id in sorted(self.modules):
            desc = self.modules[module_id]
            for slot in range(1, desc.child_slots + 1):
                if (module_id, slot) not in self._edges:
                    out.append((module_id, slot))
        return out

    def edges(self) -> Iterator[tuple[str, int, str, int]]:
        for (parent, slot), (child, plug) in sorted(self._edges.items()):
            yield parent, slot, child, plug

    def attach(self, parent_id: str, slot: int, child_id: str) -> WireEvent:
        parent = self._require(parent_id)
        child = self._require(child_id)
        if not 1 <= slot <= parent.child_slots:
            raise TopologyError("bad-slot", f"{parent_id} has no slot {slot}")
        if (parent_id, slot) in self._edges:
            raise TopologyError("occupied-slot", f"slot {parent_id}.{slot} is occupied")
        plugs = self._plugs[child_id]
        if len(plugs) >= child.parent_plugs:
            raise TopologyError("no-free-plug", f"{child_id} has no free parent plug")
        if parent_id == child_id or parent_id in self.descendants(child_id):
            raise TopologyError("cycle", f"attaching {child_id} under {parent_id} forms a cycle")
        plug = next(i for i in range(1, child.parent_plugs + 1) if i not in plugs)
        self._edges[(parent_id, slot)] = (child_id, plug)
        plugs[plug] = (parent_id, slot)
        return WireEvent("plug", parent_id, slot, child_id, plug)

    def detach(self, parent_id: str, slot: int) -> WireEvent:
        self._require(parent_id)
        edge = self._edges.get((parent_id, slot))
        if edge is None:
            raise TopologyError("empty-slot", f"slot {parent_id}.{slot} is not occupied")
        child_id, plug = edge
        del self._edges[(parent_id, slot)]
        del self._plugs[child_id][plug]
        return WireEvent("unplug", parent_id, slot, child_id, plug)


def registry_export(graph: TopologyGraph) -> str:
    """Line-oriented connectivity document: module lines, then one edge per line."""
    lines = [
        f"module {m.module_id} level={m.level}"
        for m in sorted(graph.modules.values(), key=lambda d: d.module_id)
    ]
    lines += [f"{parent}.{slot} -> {child}" for parent, slot, child, _ in graph.edges()]
    return "\n".join(lines) + ("\n" if lines else "")


def registry_import(text: str) -> TopologyGraph:
    """Parse and validate a connectivity document (order-insensitive)."""
    graph = TopologyGraph()
    edges: list[tuple[int, str, int, str]] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("module "):
            parts = line.split()
            if len(parts) != 3 or not parts[2].startswith("level="):
                raise RegistryParseError(line_no, f"malformed module line: {raw!r}")
            try:
                level = int(parts[2][len("level=") :])
                graph.add_module(ModuleDescriptor(parts[1], level=level))
            except (ValueError, TopologyError) as exc:
                raise RegistryParseError(line_no, str(exc)) from exc
            continue
        if "->" in line:
            lhs, _, child = line.partition("->")
            parent, _, slot_text = lhs.strip().rpartition(".")
            if not parent or not slot_text.isdigit():
                raise RegistryParseError(line_no, f"malformed edge line: {raw!r}")
            edges.append((line_no, parent, int(slot_text), child.strip()))
            continue
        raise RegistryParseError(line_no, f"unrecognized line: {raw!r}")
    for line_no, parent, slot, child in edges:
        try:
            graph.attach(parent, slot, child)
        except TopologyError as exc:
            raise RegistryParseError(line_no, str(exc)) from exc
    return graph
