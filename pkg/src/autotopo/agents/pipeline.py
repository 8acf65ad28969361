"""The refinement pipeline: six agents, one session.

A session walks a stage machine — scientist, validator, planner,
runner, reviewer, critic — with three nested correction loops:

* the validator sends un-fixable formulations back to the scientist
  (capped by ``validator_loops``),
* the reviewer retries failed runs with adjusted parameters or a
  boundary-condition re-check (capped by ``reviewer_retries``),
* the critic's rejected verdicts become refinement directives routed
  to the responsible agent (capped by ``system_refinements``).

Every spec version, plan, run, finding, diagnosis, verdict and
directive is recorded in the session memory and mirrored to the
workspace event log, so the whole session replays from its artifacts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from ..errors import (
    GatewayError,
    PlanningError,
    ProblemFormatError,
    SchemaParseError,
    TranscriptExhausted,
)
from ..gateway import (
    PersonaHandle,
    default_persona_config,
    deterministic_persona,
    llm_persona,
    mock_persona,
)
from ..plan import RunPlan, make_plan, plan_to_dict
from ..problem import apply_changes, with_provenance
from ..report import generate_report
from ..workspace import EventLog, SessionWorkspace
from .critic import CriticThresholds, critic_evaluate
from .faults import FaultPlan, corrupt_spec
from .memory import (
    AGENTS,
    PolicyCaps,
    RefinementDirective,
    RunArtifacts,
    SessionMemory,
    Verdict,
)
from .planner import planner_overrides, planner_plan
from .reviewer import reviewer_diagnose
from .routing import route_refinement
from .runner import runner_execute
from .scientist import scientist_formulate
from .validator import validator_check

_FORMULATION_ERRORS = (
    ProblemFormatError,
    GatewayError,
    SchemaParseError,
    TranscriptExhausted,
    PlanningError,
)


@dataclass(frozen=True)
class PipelinePolicy:
    caps: PolicyCaps = PolicyCaps()
    seed: int = 0
    timing: str = "none"
    thresholds: CriticThresholds = CriticThresholds()
    fault_plan: FaultPlan | None = None


@dataclass(frozen=True)
class PipelineOutcome:
    status: str  # accepted | aborted
    memory: SessionMemory
    artifacts: RunArtifacts | None
    verdict: Verdict | None
    reason: str


@dataclass
class _SessionState:
    spec: Any = None
    plan: RunPlan | None = None
    plan_version: int = 0
    artifacts: RunArtifacts | None = None
    verdict: Verdict | None = None
    retry_overrides: dict[str, Any] = field(default_factory=dict)
    pending_directive: RefinementDirective | None = None
    pending_feedback: str | None = None


def default_personas() -> dict[str, PersonaHandle]:
    return {agent: deterministic_persona() for agent in AGENTS}


def build_personas(
    mode: str = "deterministic", transcript: tuple[str, ...] = ()
) -> dict[str, PersonaHandle]:
    """Personas for a session.  Only the scientist consults a language
    model; the rule-based roles stay deterministic in every mode."""
    from .scientist import SCIENTIST_TEMPLATE

    personas = default_personas()
    if mode == "deterministic":
        return personas
    if mode == "mock":
        personas["scientist"] = mock_persona(tuple(transcript), SCIENTIST_TEMPLATE)
        return personas
    if mode == "llm":
        personas["scientist"] = llm_persona(
            default_persona_config("scientist"), SCIENTIST_TEMPLATE
        )
        return personas
    raise ValueError(f"unknown persona mode: {mode!r}")


def _abort(
    memory: SessionMemory, events: EventLog, state: _SessionState, reason: str
) -> PipelineOutcome:
    events.emit(
        "critic", "aborted", {"reason": reason, "counters": dict(memory.counters)}
    )
    return PipelineOutcome(
        status="aborted",
        memory=memory,
        artifacts=state.artifacts,
        verdict=state.verdict,
        reason=reason,
    )


def _changes_payload(finding) -> list[dict[str, Any]]:
    return [
        {"path": c.path, "old": c.old, "new": c.new} for c in finding.correction
    ]


def _emit_plan(
    memory: SessionMemory,
    workspace: SessionWorkspace,
    state: _SessionState,
    plan: RunPlan,
) -> None:
    state.plan = plan
    state.plan_version = memory.add_plan(plan)
    workspace.write_plan(state.plan_version, plan)
    workspace.events.emit(
        "planner",
        "planned",
        {
            "version": state.plan_version,
            "file": workspace.plan_name(state.plan_version),
            "params": plan_to_dict(plan)["params"],
        },
    )


def _stage_scientist(
    query: str,
    memory: SessionMemory,
    workspace: SessionWorkspace,
    state: _SessionState,
    persona: PersonaHandle,
    fault: FaultPlan | None,
) -> str | PipelineOutcome:
    try:
        spec = scientist_formulate(
            query,
            memory,
            persona,
            directive=state.pending_directive,
            feedback=state.pending_feedback,
        )
    except _FORMULATION_ERRORS as exc:
        return _abort(
            memory, workspace.events, state, f"formulation failed: {exc}"
        )
    state.pending_directive = None
    state.pending_feedback = None
    if fault is not None:
        spec = corrupt_spec(spec, fault)
    state.spec = spec
    version = memory.add_spec(spec)
    workspace.write_spec(version, spec)
    workspace.events.emit(
        "scientist",
        "formulated",
        {
            "version": version,
            "file": workspace.spec_name(version),
            "provenance": spec.provenance,
            "objective": spec.objective.kind,
            "constraints": [
                {"kind": c.kind, "bound": c.bound} for c in spec.constraints
            ],
        },
    )
    return "validator"


def _stage_validator(
    query: str,
    memory: SessionMemory,
    workspace: SessionWorkspace,
    state: _SessionState,
    caps: PolicyCaps,
    fault: FaultPlan | None,
) -> str | PipelineOutcome:
    events = workspace.events
    disabled = fault.disabled_checks if fault is not None else frozenset()
    outcome = validator_check(state.spec, query, memory, disabled=disabled)

    escalation: tuple[int, Any] | None = None
    spec = state.spec
    for finding in outcome.findings:
        idx = memory.add_finding(finding)
        events.emit(
            "validator",
            "finding",
            {
                "index": idx,
                "code": finding.code,
                "severity": finding.severity,
                "path": finding.path,
                "message": finding.message,
            },
        )
        if finding.severity == "auto_correctable" and finding.code != "missing_param":
            spec = with_provenance(
                apply_changes(spec, list(finding.correction)), "validator_corrected"
            )
            version = memory.add_spec(spec)
            workspace.write_spec(version, spec)
            events.emit(
                "validator",
                "corrected",
                {
                    "version": version,
                    "file": workspace.spec_name(version),
                    "finding": idx,
                    "changes": _changes_payload(finding),
                },
            )
        elif finding.severity == "escalate" and escalation is None:
            escalation = (idx, finding)
    state.spec = spec

    if escalation is None:
        return "planner"

    memory.bump("validator_loops")
    idx, finding = escalation
    if memory.counters["validator_loops"] > caps.validator_loops:
        return _abort(
            memory,
            events,
            state,
            f"validation kept failing after {caps.validator_loops} "
            f"reformulations; last issue: {finding.message}",
        )
    action = "fix_bc" if finding.code == "bc_error" else "reformulate"
    directive = RefinementDirective(
        target="scientist",
        action=action,
        rationale=finding.message,
        source=f"finding:{idx}",
    )
    memory.add_directive(directive)
    events.emit(
        "validator",
        "escalated",
        {
            "finding": idx,
            "directive": directive.to_dict(),
            "loop": memory.counters["validator_loops"],
        },
    )
    state.pending_directive = directive
    return "scientist"


def _stage_runner(
    memory: SessionMemory,
    workspace: SessionWorkspace,
    state: _SessionState,
    policy: PipelinePolicy,
) -> str | PipelineOutcome:
    events = workspace.events
    fault = policy.fault_plan
    run_no = len(memory.artifacts) + 1
    events.emit(
        "runner", "run_started", {"plan": state.plan_version, "run": run_no}
    )
    forced = fault.next_kernel_failure() if fault is not None else None
    artifacts = runner_execute(
        state.plan,
        workspace,
        version=run_no,
        seed=policy.seed,
        timing=policy.timing,
        forced_failure=forced,
    )
    state.artifacts = artifacts
    memory.add_artifacts(artifacts)
    payload = artifacts.to_summary()
    payload["run"] = run_no
    events.emit("runner", "run_finished", payload)

    if artifacts.ok:
        return "critic"
    if memory.counters["reviewer_retries"] >= policy.caps.reviewer_retries:
        memory.note(
            "reviewer: retry budget exhausted; passing the failed run "
            "to the critic"
        )
        return "critic"

    memory.bump("reviewer_retries")
    diagnosis, directive = reviewer_diagnose(artifacts, state.plan, memory)
    memory.add_directive(directive)
    events.emit(
        "reviewer",
        "diagnosed",
        {
            "error_code": diagnosis.error_code,
            "explanation": diagnosis.explanation,
            "attempt": diagnosis.attempt,
            "directive": directive.to_dict(),
        },
    )
    if directive.target == "validator":
        return "validator"
    state.retry_overrides.update(directive.overrides_dict())
    if state.retry_overrides:
        merged = planner_overrides(state.spec, memory)
        merged.update(state.retry_overrides)
        _emit_plan(memory, workspace, state, make_plan(state.spec, merged))
    return "runner"


def _stage_critic(
    query: str,
    memory: SessionMemory,
    workspace: SessionWorkspace,
    state: _SessionState,
    policy: PipelinePolicy,
) -> str | PipelineOutcome:
    events = workspace.events
    verdict = critic_evaluate(
        state.artifacts, state.spec, query, workspace, policy.thresholds
    )
    state.verdict = verdict
    index = memory.add_verdict(verdict)
    payload = verdict.to_dict()
    payload["index"] = index
    events.emit("critic", "verdict", payload)

    decision = route_refinement(verdict, memory, policy.caps, state.plan)
    if decision.kind == "accept":
        report = generate_report(memory)
        workspace.write_text("report.md", report.markdown())
        result = state.artifacts.result
        events.emit(
            "critic",
            "accepted",
            {
                "run": len(memory.artifacts),
                "objective": result.history[-1].objective
                if result.history
                else None,
                "iterations": result.iterations,
                "report": "report.md",
            },
        )
        return PipelineOutcome(
            status="accepted",
            memory=memory,
            artifacts=state.artifacts,
            verdict=verdict,
            reason=decision.reason,
        )
    if decision.kind == "abort":
        return _abort(memory, events, state, decision.reason)

    directive = decision.directive
    d_idx = memory.add_directive(directive)
    memory.bump("system_refinements")
    payload = directive.to_dict()
    payload["index"] = d_idx
    payload["round"] = memory.counters["system_refinements"]
    events.emit("critic", "directive", payload)

    if directive.target == "scientist":
        state.pending_directive = directive
        return "scientist"
    if directive.target == "planner":
        return "planner"
    # runner retry: re-plan only if the directive carries overrides
    state.retry_overrides.update(directive.overrides_dict())
    if directive.overrides:
        merged = planner_overrides(state.spec, memory)
        merged.update(state.retry_overrides)
        _emit_plan(memory, workspace, state, make_plan(state.spec, merged))
    return "runner"


def run_pipeline(
    query: str,
    workspace: SessionWorkspace,
    policy: PipelinePolicy | None = None,
    personas: dict[str, PersonaHandle] | None = None,
    memory: SessionMemory | None = None,
    feedback: str | None = None,
) -> PipelineOutcome:
    """Run one design cycle: from a user query (or feedback on a prior
    accepted result) to an accepted report or an abort."""
    policy = policy if policy is not None else PipelinePolicy()
    personas = personas if personas is not None else default_personas()
    if memory is None:
        memory = SessionMemory(user_query=query)
    if feedback is not None:
        memory.add_feedback(feedback)
        memory.bump("user_cycles")

    state = _SessionState(pending_feedback=feedback)
    stage = "scientist"
    while True:
        if stage == "scientist":
            nxt = _stage_scientist(
                query, memory, workspace, state, personas["scientist"],
                policy.fault_plan,
            )
        elif stage == "validator":
            nxt = _stage_validator(
                query, memory, workspace, state, policy.caps, policy.fault_plan
            )
        elif stage == "planner":
            state.retry_overrides = {}
            _emit_plan(memory, workspace, state, planner_plan(state.spec, memory))
            nxt = "runner"
        elif stage == "runner":
            nxt = _stage_runner(memory, workspace, state, policy)
        else:  # critic
            nxt = _stage_critic(query, memory, workspace, state, policy)
        if isinstance(nxt, PipelineOutcome):
            return nxt
        stage = nxt
