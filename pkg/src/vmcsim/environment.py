"""Declarative scene model and per-leaf sensor derivation.

A Scene is an immutable snapshot (ambient level, point lamps with gentle
inverse-square falloff, per-leaf shades, per-branch tilts); scene events
produce new snapshots. Leaf poses come from a deterministic layout
heuristic over the module graph and stand in for the physical geometry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Optional, Sequence

from .controller import SensorFrame, clamp01
from .prng import Stream
from .topology import TopologyGraph, leaf_id

JITTER_SIGMA = 0.01  # per-draw sensor noise; four light draws are averaged


class SceneError(Exception):
    """Scene event referencing a missing entity."""


@dataclass(frozen=True)
class Lamp:
    position: tuple[float, float, float]
    intensity: float = 1.0
    softening: Optional[float] = None  # overrides the scene-wide falloff constant

    def __post_init__(self):
        if self.intensity < 0:
            raise ValueError("lamp intensity must be >= 0")


@dataclass(frozen=True)
class Shade:
    leaf: str
    attenuation: float

    def __post_init__(self):
        if not 0.0 <= self.attenuation <= 1.0:
            raise ValueError("shade attenuation must lie in [0, 1]")


@dataclass(frozen=True)
class Scene:
    ambient: float = 0.0
    lamps: tuple[Lamp, ...] = ()
    shades: tuple[Shade, ...] = ()
    tilts: Mapping[str, float] = None  # branch id (leaf or module) -> degrees from vertical
    falloff_softening: float = 1.0

    def __post_init__(self):
        if self.tilts is None:
            object.__setattr__(self, "tilts", {})
        if not 0.0 <= self.ambient <= 1.0:
            raise ValueError("ambient must lie in [0, 1]")
        for angle in self.tilts.values():
            if not 0.0 <= angle <= 180.0:
                raise ValueError("tilt angles must lie in [0, 180] degrees")
        if self.falloff_softening <= 0:
            raise ValueError("falloff softening must be positive")


@dataclass(frozen=True)
class LeafPose:
    position: tuple[float, float, float]
    orientation: tuple[float, float, float] = (0.0, 0.0, 1.0)

    def __post_init__(self):
        norm = math.sqrt(sum(c * c for c in self.orientation))
        if norm == 0:
            raise ValueError("orientation must be nonzero")
        object.__setattr__(self, "orientation", tuple(c / norm for c in self.orientation))


# ---------------------------------------------------------------- scene events


def set_ambient(scene: Scene, value: float) -> Scene:
    return replace(scene, ambient=value)


def move_lamp(scene: Scene, index: int, position: Sequence[float]) -> Scene:
    if not 0 <= index < len(scene.lamps):
        raise SceneError(f"no lamp with index {index}")
    lamps = list(scene.lamps)
    lamps[index] = replace(lamps[index], position=tuple(position))
    return replace(scene, lamps=tuple(lamps))


def add_shade(scene: Scene, leaf: str, attenuation: float) -> Scene:
    return replace(scene, shades=scene.shades + (Shade(leaf, attenuation),))


def remove_shade(scene: Scene, leaf: str) -> Scene:
    kept = tuple(s for s in scene.shades if s.leaf != leaf)
    if len(kept) == len(scene.shades):
        raise SceneError(f"no shade on {leaf}")
    return replace(scene, shades=kept)


def set_tilt(scene: Scene, branch: str, degrees: float) -> Scene:
    tilts = dict(scene.tilts)
    tilts[branch] = degrees
    return replace(scene, tilts=tilts)


# ------------------------------------------------------------- sensor sampling


def _tilt_for_leaf(scene: Scene, leaf: str) -> float:
    if leaf in scene.tilts:
        return scene.tilts[leaf]
    module, _, _ = leaf.rpartition("-")
    return scene.tilts.get(module, 0.0)


def light_at(scene: Scene, position: Sequence[float], leaf: str) -> float:
    """Noise-free irradiance: ambient plus shaded, softened lamp falloff."""
    shade_factor = 1.0
    for shade in scene.shades:
        if shade.leaf == leaf:
            shade_factor *= 1.0 - shade.attenuation
    total = scene.ambient
    for lamp in scene.lamps:
        soft = lamp.softening if lamp.softening is not None else scene.falloff_softening
        d2 = sum((a - b) ** 2 for a, b in zip(position, lamp.position))
        total += lamp.intensity * (soft * soft) / (soft * soft + d2) * shade_factor
    return clamp01(total)


def uprightness_for(scene: Scene, leaf: str) -> float:
    """Noise-free posture: cos(tilt), floored at 0 for horizontal or inverted arms."""
    return max(0.0, math.cos(math.radians(_tilt_for_leaf(scene, leaf))))


def sample_sensors(
    scene: Scene, pose: LeafPose, leaf: str, noise: Optional[Stream] = None
) -> SensorFrame:
    """Derive one leaf's sensor frame; pure when ``noise`` is None.

    The four photoresistors are modeled as four identical-mean draws whose
    average forms the single light value the controller consumes.
    """
    light = light_at(scene, pose.position, leaf)
    upright = uprightness_for(scene, leaf)
    if noise is not None:
        light += sum(noise.gauss(0.0, JITTER_SIGMA) for _ in range(4)) / 4.0
        upright += noise.gauss(0.0, JITTER_SIGMA)
    return SensorFrame(light=light, uprightness=upright)


# ------------------------------------------------------------------ leaf poses


@dataclass(frozen=True)
class LayoutGeometry:
    base_height: float = 0.9
    base_spread: float = 0.3
    shrink: float = 0.67  # per-level size decay, mirroring the L0/L1/L2 sizing
    min_height: float = 0.25
    min_spread: float = 0.1
    root_gap: float = 2.0


def _arm_dimensions(geometry: LayoutGeometry, level: int) -> tuple[float, float]:
    f = geometry.shrink**level
    return (
        max(geometry.min_spread, geometry.base_spread * f),
        max(geometry.min_height, geometry.base_height * f),
    )


def layout_poses(
    graph: TopologyGraph, geometry: LayoutGeometry = LayoutGeometry()
) -> dict[str, LeafPose]:
    """Deterministic plant-like layout: roots on the ground, arms spreading +/-x."""
    order: list[str] = []
    pending = {m: len(graph.parents_of(m)) for m in graph.modules}
    ready = sorted(m for m, n in pending.items() if n == 0)
    while ready:
        cur = ready.pop(0)
        order.append(cur)
        for child in graph.children_of(cur):
            if child is not None:
                pending[child] -= 1
                if pending[child] == 0:
                    ready.append(child)
                    ready.sort()

    bases: dict[str, tuple[float, float, float]] = {}
    tips: dict[str, LeafPose] = {}
    next_root_x = 0.0
    for module_id in order:
        parents = graph.parents_of(module_id)
        if not parents:
            bases[module_id] = (next_root_x, 0.0, 0.0)
            next_root_x += geometry.root_gap
        else:
            anchor = [tips[leaf_id(p, s)].position for _, p, s in parents]
            bases[module_id] = tuple(sum(c) / len(anchor) for c in zip(*anchor))
        dx, dz = _arm_dimensions(geometry, graph.modules[module_id].level)
        base = bases[module_id]
        for slot, sign in ((1, -1.0), (2, 1.0)):
            offset = (sign * dx, 0.0, dz)
            tips[leaf_id(module_id, slot)] = LeafPose(
                position=(base[0] + offset[0], base[1] + offset[1], base[2] + offset[2]),
                orientation=offset,
            )
    return tips
