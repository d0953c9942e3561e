"""Distributed vascular-morphogenesis controller simulator.

A dynamic graph of Y-modules locally computes successin, vessels and
resource flow over a simulated fuzzy analog PWM channel; a human operator
steers structural growth through attach/detach and scene events.
"""

from .controller import (
    DEFAULT_GENOME,
    Genome,
    NodeVmcState,
    SensorFrame,
    StepResult,
    distribute_resource,
    node_step,
    produce_successin,
    split_successin_to_parents,
    transfer_successin,
    update_vessel,
)
from .scenario import ScenarioSpec, parse_scenario, validate_scenario
from .runtime import Simulation

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_GENOME",
    "Genome",
    "NodeVmcState",
    "SensorFrame",
    "StepResult",
    "Simulation",
    "ScenarioSpec",
    "distribute_resource",
    "node_step",
    "parse_scenario",
    "produce_successin",
    "split_successin_to_parents",
    "transfer_successin",
    "update_vessel",
    "validate_scenario",
    "__version__",
]
