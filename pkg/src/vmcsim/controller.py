"""Per-node vascular-morphogenesis controller mathematics.

Pure functions over value-semantics records: successin production at
leaves, sensor-modulated transfer of child successin, vessel adaptation,
resource distribution by relative vessel thickness, and the back-split of
successin to parents. All cross-node interaction lives elsewhere
(vmcsim.channel / vmcsim.runtime); everything here is safe to call from
any thread.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

INITIAL_VESSEL = 0.01  # small nonzero cold-start value; avoids an all-zero plateau
DEFAULT_ROOT_GENERATION = 1.0  # resource injected per iteration at an unparented node


class StructuralError(Exception):
    """Node bookkeeping is inconsistent with its slot occupancy; the node must halt."""


def clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else (1.0 if x > 1.0 else x)


@dataclass(frozen=True)
class Genome:
    """The constant parameter set shared by every node of a run.

    omega_* weigh leaf successin production, rho_* weigh the transfer
    factor applied to relayed successin; subscripts c/phi/lam are the
    constant, uprightness and light weights. alpha is the vessel memory
    coefficient, beta the successin amplification exponent.
    """

    omega_c: float = 0.0
    omega_phi: float = 0.5
    omega_lam: float = 0.5
    rho_c: float = 0.9
    rho_phi: float = 0.1
    rho_lam: float = 0.0
    alpha: float = 0.9
    beta: float = 2.0

    def __post_init__(self):
        for name in ("omega_c", "omega_phi", "omega_lam", "rho_c", "rho_phi", "rho_lam"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha!r}")
        if not self.beta >= 1.0:
            raise ValueError(f"beta must be >= 1, got {self.beta!r}")


#: The published parameterization used by the shipped scenarios.
DEFAULT_GENOME = Genome()


@dataclass(frozen=True)
class SensorFrame:
    """One leaf board's aggregated readings, clamped to [0, 1].

    light: normalized irradiance (the four photoresistors collapse to one
    value); uprightness: 1 when the arm is vertical, 0 at horizontal or
    beyond.
    """

    light: float = 0.0
    uprightness: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "light", clamp01(self.light))
        object.__setattr__(self, "uprightness", clamp01(self.uprightness))


@dataclass(frozen=True)
class NodeVmcState:
    """Live controller variables of one module."""

    resource: float = 0.0
    successin_out: float = 0.0
    vessels: tuple[float, ...] = ()
    child_successin: tuple[float, ...] = ()

    @classmethod
    def initial(cls, n_slots: int) -> "NodeVmcState":
        return cls(
            resource=0.0,
            successin_out=0.0,
            vessels=(INITIAL_VESSEL,) * n_slots,
            child_successin=(0.0,) * n_slots,
        )


@dataclass(frozen=True)
class StepResult:
    """Outcome of one five-step iteration: new state plus outbound wire values."""

    state: NodeVmcState
    resource_in: float
    generated: bool
    resource_to_children: tuple[float, ...]
    successin_to_parents: tuple[float, ...]


def produce_successin(sensors: SensorFrame, genome: Genome) -> float:
    """Successin compiled at an unconnected leaf from its local sensors."""
    s = genome.omega_c + genome.omega_phi * sensors.uprightness + genome.omega_lam * sensors.light
    return clamp01(s)


def transfer_successin(
    children_successin: Sequence[float], sensors: SensorFrame, genome: Genome
) -> float:
    """Sum of child successin, modulated by the relaying node's sensors."""
    if not children_successin:
        raise ValueError("transfer requires at least one child value; leaves produce instead")
    factor = genome.rho_c + genome.rho_phi * sensors.uprightness + genome.rho_lam * sensors.light
    return clamp01(factor * sum(children_successin))


def update_vessel(current_vessel: float, child_successin: float, genome: Genome) -> float:
    """Exponential pursuit of S^beta; alpha is the memory, beta the amplifier."""
    return genome.alpha * current_vessel + (1.0 - genome.alpha) * child_successin**genome.beta


def _proportional(total: float, weights: Sequence[float]) -> tuple[float, ...]:
    n = len(weights)
    if n == 0:
        return ()
    denom = sum(weights)
    if denom <= 0.0:
        return (total / n,) * n
    # ratio first: total*w can underflow to a subnormal before the divide
    # when weights have decayed to the bottom of the float range
    return tuple(w / denom * total for w in weights)


def distribute_resource(incoming_resource: float, vessels: Sequence[float]) -> tuple[float, ...]:
    """Split resource over child slots by relative vessel thickness.

    A junction whose vessels are all zero splits equally so a freshly
    attached subtree is never starved before its first vessel update.
    """
    return _proportional(incoming_resource, vessels)


def split_successin_to_parents(
    total_successin: float, resource_per_parent: Sequence[float]
) -> tuple[float, ...]:
    """Split outgoing successin over parents by the resource each supplied."""
    return _proportional(total_successin, resource_per_parent)


def node_step(
    state: NodeVmcState,
    parent_resources: Sequence[float],
    child_successin: Sequence[Optional[float]],
    slot_sensors: Sequence[SensorFrame],
    genome: Genome,
    *,
    leaf_scale: float = 1.0,
    generation: float = DEFAULT_ROOT_GENERATION,
) -> StepResult:
    """One full iteration of the five-step chronology.

    1. Sum resource received from live parents, or generate it when none
       are live.
    2. Gather successin per child slot: a live child's decoded value is
       relayed through the slot's transfer modulation, an unconnected slot
       produces from its own sensors (scaled by ``leaf_scale``, the 1/L
       cap on what a single leaf may put on the wire).
    3. Adapt each slot's vessel toward that successin.
    4. Distribute the step-1 resource over the slots by relative vessel.
    5. Split the summed successin back over the parents in proportion to
       the resource each delivered.

    parent_resources holds only live decoded values; child_successin has
    one entry per slot, None meaning unconnected.
    """
    n = len(state.vessels)
    if len(child_successin) != n or len(slot_sensors) != n:
        raise StructuralError(
            f"slot bookkeeping mismatch: {n} vessels, "
            f"{len(child_successin)} child inputs, {len(slot_sensors)} sensor frames"
        )

    generated = len(parent_resources) == 0
    resource_in = generation if generated else float(sum(parent_resources))

    slot_s = []
    for k in range(n):
        incoming = child_successin[k]
        if incoming is None:
            slot_s.append(leaf_scale * produce_successin(slot_sensors[k], genome))
        else:
            slot_s.append(transfer_successin([incoming], slot_sensors[k], genome))

    vessels = tuple(update_vessel(state.vessels[k], slot_s[k], genome) for k in range(n))
    resource_out = distribute_resource(resource_in, vessels)
    successin_total = clamp01(sum(slot_s))
    to_parents = (
        () if generated else split_successin_to_parents(successin_total, parent_resources)
    )

    new_state = NodeVmcState(
        resource=resource_in,
        successin_out=successin_total,
        vessels=vessels,
        child_successin=tuple(slot_s),
    )
    return StepResult(
        state=new_state,
        resource_in=resource_in,
        generated=generated,
        resource_to_children=resource_out,
        successin_to_parents=to_parents,
    )
