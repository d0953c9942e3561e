"""Executable scenario scripts and their assertion runner."""

from .runner import (
    RunResult,
    run_characterization,
    run_interactive_growth,
    run_scenario,
    scenario_path,
)

__all__ = [
    "RunResult",
    "run_characterization",
    "run_interactive_growth",
    "run_scenario",
    "scenario_path",
]
