"""Refinement routing: turn a rejected verdict into a directive.

A rejected verdict is mapped to exactly one directive, targeted at the
agent that owns the failing concern.  The mapping keys off the first
failed criterion and, within it, the tags the critic attached; the
directive records which verdict justified it so the session memory
stays auditable.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..plan import RunPlan
from .memory import (
    PolicyCaps,
    RefinementDirective,
    SessionMemory,
    Verdict,
)

R_MIN_GROWTH = 1.5


@dataclass(frozen=True)
class RouteDecision:
    kind: str  # accept | abort | refine
    directive: RefinementDirective | None = None
    reason: str = ""


def _formulation_directive(
    verdict: Verdict, source: str
) -> RefinementDirective:
    criterion = verdict.criterion("formulation_consistency")
    tags = set(criterion.tags)
    if "constraint_kind" in tags or "volume_bound" in tags:
        return RefinementDirective(
            target="scientist",
            action="change_constraint",
            rationale=criterion.detail,
            source=source,
            criterion="formulation_consistency",
        )
    if "load_position" in tags or "support_position" in tags:
        return RefinementDirective(
            target="scientist",
            action="fix_bc",
            rationale=criterion.detail,
            source=source,
            criterion="formulation_consistency",
        )
    return RefinementDirective(
        target="scientist",
        action="reformulate",
        rationale=criterion.detail,
        source=source,
        criterion="formulation_consistency",
    )


def _convergence_directive(
    verdict: Verdict, plan: RunPlan, source: str
) -> RefinementDirective:
    criterion = verdict.criterion("convergence")
    if verdict.metrics.termination == "max_iterations":
        return RefinementDirective(
            target="planner",
            action="adjust_optimizer",
            rationale=criterion.detail + "; allowing more iterations",
            source=source,
            criterion="convergence",
            parameter="max_iterations",
            value=plan.params.max_iterations * 2,
        )
    return RefinementDirective(
        target="planner",
        action="adjust_optimizer",
        rationale=criterion.detail + "; halving the move limit to stabilise",
        source=source,
        criterion="convergence",
        parameter="move_limit",
        value=plan.params.move_limit / 2,
    )


def _design_directive(verdict: Verdict, source: str) -> RefinementDirective:
    criterion = verdict.criterion("design_quality")
    tags = criterion.tags
    if "checkerboard" in tags:
        return RefinementDirective(
            target="planner",
            action="increase_r_min",
            rationale=criterion.detail,
            source=source,
            criterion="design_quality",
            factor=R_MIN_GROWTH,
        )
    if "grayness" in tags:
        return RefinementDirective(
            target="planner",
            action="steepen_beta_schedule",
            rationale=criterion.detail,
            source=source,
            criterion="design_quality",
        )
    # disconnected designs usually mean the filter wiped out thin
    # members; growing the radius rebuilds them wider
    return RefinementDirective(
        target="planner",
        action="increase_r_min",
        rationale=criterion.detail,
        source=source,
        criterion="design_quality",
        factor=R_MIN_GROWTH,
    )


def route_refinement(
    verdict: Verdict,
    memory: SessionMemory,
    policy: PolicyCaps,
    plan: RunPlan,
) -> RouteDecision:
    if verdict.accepted:
        return RouteDecision(kind="accept", reason="all criteria passed")

    if memory.counters["system_refinements"] >= policy.system_refinements:
        return RouteDecision(
            kind="abort",
            reason=(
                f"refinement budget exhausted after "
                f"{memory.counters['system_refinements']} rounds; "
                f"last failure: {verdict.first_failed}"
            ),
        )

    source = f"verdict:{len(memory.verdicts) - 1}"
    if verdict.first_failed == "output_validity":
        directive = RefinementDirective(
            target="runner",
            action="retry_with",
            rationale=verdict.criterion("output_validity").detail,
            source=source,
            criterion="output_validity",
        )
    elif verdict.first_failed == "formulation_consistency":
        directive = _formulation_directive(verdict, source)
    elif verdict.first_failed == "convergence":
        directive = _convergence_directive(verdict, plan, source)
    else:
        directive = _design_directive(verdict, source)

    return RouteDecision(
        kind="refine",
        directive=directive,
        reason=f"{verdict.first_failed} failed",
    )
