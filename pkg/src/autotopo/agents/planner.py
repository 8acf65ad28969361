"""Planner: freezes a validated spec into an executable run plan.

The plan's task list covers each stage of the kernel workflow exactly
once; the parameter snapshot is the spec's numbers merged with every
refinement directive issued so far that targets planning (filter radius
increases, continuation steepening, optimizer adjustments).  Directives
fold in the order they were issued, so repeated radius increases
compound.
"""

from __future__ import annotations

from typing import Any

from ..plan import RunPlan, make_plan
from ..problem import ProblemSpec
from ..regularization import STEEPENED_BETA_CAP, steepen_schedule
from .memory import SessionMemory

_INT_PARAMS = {"max_iterations", "objective_window"}


def planner_overrides(spec: ProblemSpec, memory: SessionMemory) -> dict[str, Any]:
    """Parameter overrides implied by the planner-targeted directives."""
    overrides: dict[str, Any] = {}
    r_min = spec.regularization.r_min
    schedule = spec.regularization.beta_schedule
    for directive in memory.planner_directives():
        if directive.action == "increase_r_min":
            r_min *= directive.factor
            overrides["r_min"] = r_min
        elif directive.action == "steepen_beta_schedule":
            schedule = steepen_schedule(schedule, cap=STEEPENED_BETA_CAP)
            overrides["beta_schedule"] = schedule
        elif directive.action == "adjust_optimizer":
            value: Any = directive.value
            if directive.parameter in _INT_PARAMS:
                value = int(value)
            overrides[directive.parameter] = value
    return overrides


def planner_plan(spec: ProblemSpec, memory: SessionMemory) -> RunPlan:
    return make_plan(spec, planner_overrides(spec, memory))
