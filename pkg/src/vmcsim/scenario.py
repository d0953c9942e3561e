"""Scenario files: one TOML document describing a whole run.

Sections: [genome] (the eight controller constants), [[modules]] and
[[attachments]] (initial topology), [scene] (lamps, shades, tilts,
ambient), [[events]] (the timed script: attach/detach/scene/kill/restore/
pause/resume), [runtime] (seed, mode, waits, leaf cap, channel knobs) and
[[assertions]] (qualitative checks evaluated after the run).
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .controller import Genome
from .environment import Lamp, Scene, Shade
from .topology import CHILD_SLOTS, ModuleDescriptor, parse_leaf_id

SCENE_EVENT_KINDS = ("move_lamp", "set_ambient", "add_shade", "remove_shade", "set_tilt")
ACTIONS = ("attach", "detach", "scene", "kill", "restore", "pause", "resume")
ASSERTION_KINDS = (
    "split-near",
    "slot-share-order",
    "slot-share-above",
    "branch-share-band",
    "leaf-share-band",
    "advice-first",
    "share-drop",
)


class ScenarioError(ValueError):
    """Scenario file failed to parse or validate."""


@dataclass(frozen=True)
class IterationConfig:
    """Per-module loop timing: randomized wait bounds, run seed, execution mode."""

    min_wait: float = 0.8
    max_wait: float = 1.2
    seed: int = 0
    mode: str = "fast-forward"

    def __post_init__(self):
        if not 0.0 < self.min_wait <= self.max_wait:
            raise ValueError("wait bounds must satisfy 0 < min_wait <= max_wait")
        if self.mode not in ("fast-forward", "real-time"):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass(frozen=True)
class RunConfig:
    iteration: IterationConfig = IterationConfig()
    duration: float = 60.0
    max_leaves: int = 6
    sample_rate_hz: float = 1000.0
    ideal_channel: bool = False
    advice_window: int = 20
    snapshot_every: int = 1
    jitter: bool = True

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.max_leaves < 1:
            raise ValueError("max_leaves must be >= 1")
        if self.advice_window < 1:
            raise ValueError("advice_window must be >= 1")


@dataclass(frozen=True)
class TimedEvent:
    t: float
    action: str
    params: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class AssertionSpec:
    name: str
    kind: str
    at: float
    window: float = 60.0
    params: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    genome: Genome
    modules: tuple[ModuleDescriptor, ...]
    shelf: frozenset[str]  # declared but powered off until first attached
    attachments: tuple[tuple[str, int, str], ...]
    scene: Scene
    events: tuple[TimedEvent, ...]
    assertions: tuple[AssertionSpec, ...]
    runtime: RunConfig

    def with_overrides(
        self,
        seed: Optional[int] = None,
        mode: Optional[str] = None,
        duration: Optional[float] = None,
    ) -> "ScenarioSpec":
        iteration = self.runtime.iteration
        if seed is not None:
            iteration = replace(iteration, seed=seed)
        if mode is not None:
            iteration = replace(iteration, mode=mode)
        runtime = replace(self.runtime, iteration=iteration)
        if duration is not None:
            runtime = replace(runtime, duration=duration)
        return replace(self, runtime=runtime)


def _genome(table: dict) -> Genome:
    known = {"omega_c", "omega_phi", "omega_lam", "rho_c", "rho_phi", "rho_lam", "alpha", "beta"}
    unknown = set(table) - known
    if unknown:
        raise ScenarioError(f"unknown genome fields: {sorted(unknown)}")
    try:
        return Genome(**{k: float(v) for k, v in table.items()})
    except ValueError as exc:
        raise ScenarioError(f"bad genome: {exc}") from exc


def _scene(table: dict) -> Scene:
    known = {"ambient", "lamps", "shades", "tilts", "falloff_softening"}
    unknown = set(table) - known
    if unknown:
        raise ScenarioError(f"unknown scene fields: {sorted(unknown)}")
    try:
        lamps = tuple(
            Lamp(
                position=tuple(float(c) for c in lamp["position"]),
                intensity=float(lamp.get("intensity", 1.0)),
                softening=float(lamp["softening"]) if "softening" in lamp else None,
            )
            for lamp in table.get("lamps", [])
        )
        shades = tuple(
            Shade(leaf=s["leaf"], attenuation=float(s["attenuation"]))
            for s in table.get("shades", [])
        )
        return Scene(
            ambient=float(table.get("ambient", 0.0)),
            lamps=lamps,
            shades=shades,
            tilts={k: float(v) for k, v in table.get("tilts", {}).items()},
            falloff_softening=float(table.get("falloff_softening", 1.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"bad scene section: {exc}") from exc


def parse_scenario_text(text: str, name: str = "scenario") -> ScenarioSpec:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"TOML parse error: {exc}") from exc

    runtime_table = dict(doc.get("runtime", {}))
    iteration = IterationConfig(
        min_wait=float(runtime_table.pop("min_wait", 0.8)),
        max_wait=float(runtime_table.pop("max_wait", 1.2)),
        seed=int(runtime_table.pop("seed", 0)),
        mode=runtime_table.pop("mode", "fast-forward"),
    )
    try:
        runtime = RunConfig(iteration=iteration, **runtime_table)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"bad runtime section: {exc}") from exc

    modules = []
    shelf = set()
    for entry in doc.get("modules", []):
        try:
            modules.append(
                ModuleDescriptor(
                    module_id=entry["id"],
                    level=int(entry.get("level", 0)),
                    parent_plugs=int(entry.get("parent_plugs", 3)),
                )
            )
            if not entry.get("boot", True):
                shelf.add(entry["id"])
        except (KeyError, ValueError) as exc:
            raise ScenarioError(f"bad module entry {entry!r}: {exc}") from exc

    attachments = tuple(
        (a["parent"], int(a["slot"]), a["child"]) for a in doc.get("attachments", [])
    )

    events = []
    for entry in doc.get("events", []):
        params = {k: v for k, v in entry.items() if k not in ("t", "action")}
        try:
            events.append(TimedEvent(t=float(entry["t"]), action=entry["action"], params=params))
        except KeyError as exc:
            raise ScenarioError(f"event missing field {exc}: {entry!r}") from exc

    assertions = []
    for idx, entry in enumerate(doc.get("assertions", [])):
        params = {k: v for k, v in entry.items() if k not in ("name", "kind", "at", "window")}
        try:
            assertions.append(
                AssertionSpec(
                    name=entry.get("name", f"assertion-{idx}"),
                    kind=entry["kind"],
                    at=float(entry["at"]),
                    window=float(entry.get("window", 60.0)),
                    params=params,
                )
            )
        except KeyError as exc:
            raise ScenarioError(f"assertion missing field {exc}: {entry!r}") from exc

    return ScenarioSpec(
        name=doc.get("name", name),
        genome=_genome(doc.get("genome", {})),
        modules=tuple(modules),
        shelf=frozenset(shelf),
        attachments=attachments,
        scene=_scene(doc.get("scene", {})),
        events=tuple(events),
        assertions=tuple(assertions),
        runtime=runtime,
    )


def parse_scenario(path: str) -> ScenarioSpec:
    with open(path, "rb") as fh:
        text = fh.read().decode("utf-8")
    return parse_scenario_text(text, name=path)


def validate_scenario(spec: ScenarioSpec) -> list[str]:
    """Semantic checks beyond parsing; returns a list of problems (empty = valid)."""
    problems: list[str] = []
    ids = {m.module_id for m in spec.modules}
    if len(ids) != len(spec.modules):
        problems.append("duplicate module ids")

    def check_leaf(ref: str, where: str) -> None:
        try:
            module, slot = parse_leaf_id(ref)
        except ValueError:
            problems.append(f"{where}: {ref!r} is not a leaf id")
            return
        if module not in ids:
            problems.append(f"{where}: unknown module in leaf {ref!r}")
        elif not 1 <= slot <= CHILD_SLOTS:
            problems.append(f"{where}: leaf {ref!r} has no slot {slot}")

    def check_branch(ref: str, where: str) -> None:
        if ref in ids:
            return
        check_leaf(ref, where)

    for parent, slot, child in spec.attachments:
        if parent not in ids:
            problems.append(f"attachment: unknown parent {parent!r}")
        if child not in ids:
            problems.append(f"attachment: unknown child {child!r}")
        if not 1 <= slot <= CHILD_SLOTS:
            problems.append(f"attachment: bad slot {slot} on {parent!r}")
        for ref in (parent, child):
            if ref in spec.shelf:
                problems.append(f"attachment: {ref} is on the shelf (boot = false)")

    for shade in spec.scene.shades:
        check_leaf(shade.leaf, "scene shade")
    for branch in spec.scene.tilts:
        check_branch(branch, "scene tilt")

    last_t = None
    for event in spec.events:
        where = f"event at t={event.t}"
        if last_t is not None and event.t < last_t:
            problems.append(f"{where}: events must be sorted by time")
        last_t = event.t
        if event.action not in ACTIONS:
            problems.append(f"{where}: unknown action {event.action!r}")
            continue
        if event.action in ("attach", "detach"):
            if event.params.get("parent") not in ids:
                problems.append(f"{where}: unknown parent module")
            if event.action == "attach" and event.params.get("child") not in ids:
                problems.append(f"{where}: unknown child module")
        elif event.action in ("kill", "restore"):
            if event.params.get("module") not in ids:
                problems.append(f"{where}: unknown module")
        elif event.action == "scene":
            kind = event.params.get("kind")
            if kind not in SCENE_EVENT_KINDS:
                problems.append(f"{where}: unknown scene event kind {kind!r}")
            elif kind in ("add_shade", "remove_shade"):
                check_leaf(event.params.get("leaf", ""), where)
            elif kind == "set_tilt":
                check_branch(event.params.get("branch", ""), where)
        if event.t > spec.runtime.duration:
            problems.append(f"{where}: beyond run duration {spec.runtime.duration}")

    for assertion in spec.assertions:
        where = f"assertion {assertion.name!r}"
        if assertion.kind not in ASSERTION_KINDS:
            problems.append(f"{where}: unknown kind {assertion.kind!r}")
        if assertion.at > spec.runtime.duration:
            problems.append(f"{where}: evaluated after run end")
        module = assertion.params.get("module")
        if module is not None and module not in ids:
            problems.append(f"{where}: unknown module {module!r}")
        leaf = assertion.params.get("leaf")
        if leaf is not None:
            check_leaf(leaf, where)
    return problems
