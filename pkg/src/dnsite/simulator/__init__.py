from .engine import (
    DelayModel,
    FlowState,
    RunResult,
    pareto_gaps,
    run,
    synthetic_cbr,
    synthetic_pareto,
)
from .replay import MissingAttributionError, ReplayResult, replay_mb
from .scenario import DEFAULT_SEED, Scenario, ScenarioError, expand, load, loads, parse

__all__ = [
    "DEFAULT_SEED",
    "DelayModel",
    "FlowState",
    "MissingAttributionError",
    "ReplayResult",
    "RunResult",
    "Scenario",
    "ScenarioError",
    "expand",
    "load",
    "loads",
    "pareto_gaps",
    "parse",
    "replay_mb",
    "run",
    "synthetic_cbr",
    "synthetic_pareto",
]
