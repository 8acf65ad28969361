"""Run plans: the executable snapshot handed from planning to execution.

A plan carries the validated spec, the fully resolved numerical
parameters (spec values merged with any refinement overrides), and the
ordered task list covering each stage of the kernel workflow exactly
once.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any

from .oc import VOLUME_TOL as OC_VOLUME_TOL
from .problem import (
    ConstraintSpec,
    ProblemSpec,
    SimpParams,
    StressParams,
    to_dict,
)

TASK_STAGES = (
    "build_mesh",
    "resolve_boundary_conditions",
    "build_filter",
    "projection_schedule",
    "assemble_and_solve",
    "evaluate_sensitivities",
    "design_update",
    "iterate_to_termination",
)


@dataclass(frozen=True)
class PlanTask:
    name: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]


@dataclass(frozen=True)
class ResolvedParams:
    """Every number the kernel loop needs, after overrides."""

    simp: SimpParams
    r_min: float
    eta: float
    beta_schedule: tuple[tuple[int, float], ...]
    stress: StressParams | None
    method: str
    move_limit: float
    max_iterations: int
    change_tolerance: float
    objective_window: int
    volume_tolerance: float
    objective_kind: str
    constraints: tuple[ConstraintSpec, ...]

    def volume_bound(self) -> float | None:
        for c in self.constraints:
            if c.kind == "volume_fraction":
                return c.bound
        return None


@dataclass(frozen=True)
class RunPlan:
    spec: ProblemSpec
    params: ResolvedParams
    tasks: tuple[PlanTask, ...]


def canonical_tasks(params: ResolvedParams) -> tuple[PlanTask, ...]:
    update_name = "oc_update" if params.method == "oc" else "mma_update"
    return (
        PlanTask("build_mesh", ("geometry",), ("mesh",)),
        PlanTask(
            "resolve_boundary_conditions",
            ("mesh", "supports", "loads"),
            ("fixed_dofs", "load_vector"),
        ),
        PlanTask("build_filter", ("mesh", "r_min"), ("filter_operator",)),
        PlanTask(
            "projection_schedule", ("beta_schedule", "eta"), ("projection",)
        ),
        PlanTask(
            "assemble_and_solve",
            ("mesh", "simp", "projected_densities", "fixed_dofs", "load_vector"),
            ("displacements", "element_stress"),
        ),
        PlanTask(
            "evaluate_sensitivities",
            ("displacements", "projected_densities"),
            ("objective_gradient", "constraint_gradients"),
        ),
        PlanTask(
            update_name,
            ("objective_gradient", "constraint_gradients", "move_limit"),
            ("densities",),
        ),
        PlanTask(
            "iterate_to_termination",
            ("change_tolerance", "max_iterations", "objective_window"),
            ("history", "termination"),
        ),
    )


def resolve_params(spec: ProblemSpec, overrides: dict[str, Any] | None = None) -> ResolvedParams:
    """Merge spec parameters with refinement overrides."""
    overrides = dict(overrides or {})
    reg = spec.regularization
    params = ResolvedParams(
        simp=spec.simp,
        r_min=float(overrides.pop("r_min", reg.r_min)),
        eta=reg.eta,
        beta_schedule=tuple(
            (int(i), float(b)) for i, b in overrides.pop("beta_schedule", reg.beta_schedule)
        ),
        stress=spec.stress,
        method=str(overrides.pop("method", spec.optimizer.method)),
        move_limit=float(overrides.pop("move_limit", spec.optimizer.move_limit)),
        max_iterations=int(overrides.pop("max_iterations", spec.optimizer.max_iterations)),
        change_tolerance=float(
            overrides.pop("change_tolerance", spec.optimizer.change_tolerance)
        ),
        objective_window=int(
            overrides.pop("objective_window", spec.optimizer.objective_window)
        ),
        volume_tolerance=float(overrides.pop("volume_tolerance", OC_VOLUME_TOL)),
        objective_kind=spec.objective.kind,
        constraints=spec.constraints,
    )
    if overrides:
        raise KeyError(f"unknown parameter overrides: {sorted(overrides)}")
    # stress params are needed whenever a stress quantity is evaluated,
    # even if a misformulated spec forgot to carry them
    needs_stress = params.objective_kind == "pnorm_stress" or any(
        c.kind == "pnorm_stress_limit" for c in params.constraints
    )
    if needs_stress and params.stress is None:
        params = replace(params, stress=StressParams())
    # the OC scheme only knows how to rebalance a single volume bound, so
    # any other constraint structure falls back to the general optimizer
    oc_capable = len(params.constraints) == 1 and params.constraints[0].kind == "volume_fraction"
    if params.method == "oc" and not oc_capable:
        params = replace(params, method="mma")
    return params


def make_plan(spec: ProblemSpec, overrides: dict[str, Any] | None = None) -> RunPlan:
    params = resolve_params(spec, overrides)
    return RunPlan(spec=spec, params=params, tasks=canonical_tasks(params))


def plan_to_dict(plan: RunPlan) -> dict:
    params = plan.params
    out: dict[str, Any] = {
        "tasks": [
            {"name": t.name, "inputs": list(t.inputs), "outputs": list(t.outputs)}
            for t in plan.tasks
        ],
        "params": {
            "method": params.method,
            "r_min": params.r_min,
            "eta": params.eta,
            "beta_schedule": [[i, b] for i, b in params.beta_schedule],
            "move_limit": params.move_limit,
            "max_iterations": params.max_iterations,
            "change_tolerance": params.change_tolerance,
            "objective_window": params.objective_window,
            "volume_tolerance": params.volume_tolerance,
            "objective": params.objective_kind,
            "constraints": [{"kind": c.kind, "bound": c.bound} for c in params.constraints],
            "simp": {
                "penal": params.simp.penal,
                "e0": params.simp.e0,
                "emin": params.simp.emin,
                "nu": params.simp.nu,
            },
        },
        "spec": to_dict(plan.spec),
    }
    if params.stress is not None:
        out["params"]["stress"] = {
            "pnorm_exponent": params.stress.pnorm_exponent,
            "relaxation_exponent": params.stress.relaxation_exponent,
        }
    return out
