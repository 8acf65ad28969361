"""Reviewer: diagnoses failed runs and issues correction directives.

Each kernel failure code maps to one corrective rule.  Corrections may
be imperfect: the loop re-enters on the next failure, so a correction
that does not stick simply produces the next diagnosis, up to the retry
cap enforced by the pipeline.
"""

from __future__ import annotations

from ..plan import RunPlan
from .memory import Diagnosis, RefinementDirective, RunArtifacts, SessionMemory

VOLUME_TOL_RELAX = 10.0


def reviewer_diagnose(
    artifacts: RunArtifacts, plan: RunPlan, memory: SessionMemory
) -> tuple[Diagnosis, RefinementDirective]:
    """Analyze a failed run; records the diagnosis, returns the correction.

    The returned directive is not yet recorded; the caller appends it
    (and decides whether the retry budget allows acting on it).
    """
    result = artifacts.result
    if result.termination != "solver_failure":
        raise ValueError("reviewer_diagnose expects a failed run")
    code = result.error_code or "unknown"
    attempt = memory.counters["reviewer_retries"]
    params = plan.params

    if code == "singular_system":
        diagnosis = Diagnosis(
            error_code=code,
            explanation=(
                "the constrained system is singular; supports or load "
                "placement are inconsistent with the material layout — "
                "boundary conditions need re-checking"
            ),
            attempt=attempt,
        )
        index = memory.add_diagnosis(diagnosis)
        directive = RefinementDirective(
            target="validator",
            action="fix_bc",
            rationale=diagnosis.explanation,
            source=f"diagnosis:{index}",
        )
        return diagnosis, directive

    if code == "oc_bisection_failure":
        relaxed = params.volume_tolerance * VOLUME_TOL_RELAX
        diagnosis = Diagnosis(
            error_code=code,
            explanation=(
                "the volume bisection could not settle; relaxing the "
                f"volume tolerance one notch to {relaxed:g}"
            ),
            attempt=attempt,
        )
        index = memory.add_diagnosis(diagnosis)
        directive = RefinementDirective(
            target="runner",
            action="retry_with",
            rationale=diagnosis.explanation,
            source=f"diagnosis:{index}",
            overrides=(("volume_tolerance", relaxed),),
        )
        return diagnosis, directive

    if code == "oc_needs_volume":
        diagnosis = Diagnosis(
            error_code=code,
            explanation=(
                "the OC scheme has no volume bound to rebalance; "
                "switching to the general optimizer"
            ),
            attempt=attempt,
        )
        index = memory.add_diagnosis(diagnosis)
        directive = RefinementDirective(
            target="runner",
            action="retry_with",
            rationale=diagnosis.explanation,
            source=f"diagnosis:{index}",
            overrides=(("method", "mma"),),
        )
        return diagnosis, directive

    # non-finite objectives, linear-solver stagnation and degenerate
    # update subproblems all respond to smaller design steps; the kernel
    # already prefers the direct factorization, so the step size is the
    # remaining lever
    halved = params.move_limit / 2.0
    explanations = {
        "nan_objective": "the objective became non-finite",
        "solver_no_convergence": "the fallback linear solver stagnated",
    }
    diagnosis = Diagnosis(
        error_code=code,
        explanation=(
            f"{explanations.get(code, f'the run failed with {code}')}; "
            f"halving the move limit to {halved:g} and re-running"
        ),
        attempt=attempt,
    )
    index = memory.add_diagnosis(diagnosis)
    directive = RefinementDirective(
        target="runner",
        action="retry_with",
        rationale=diagnosis.explanation,
        source=f"diagnosis:{index}",
        overrides=(("move_limit", halved),),
    )
    return diagnosis, directive
