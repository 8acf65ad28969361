"""Shared session memory and the record types the agents exchange.

The memory is the complete audit trail of one session: every spec
version, plan, run, finding, diagnosis, verdict and directive, in order,
append-only.  ``transcript()`` renders it canonically so two sessions
can be compared byte-for-byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from ..errors import SchemaParseError
from ..plan import RunPlan, plan_to_dict
from ..problem import FieldChange, ProblemSpec, to_dict
from ..runloop import OptimizationResult

AGENTS = ("scientist", "validator", "planner", "runner", "reviewer", "critic")

EVENT_KINDS = (
    "formulated",
    "finding",
    "corrected",
    "escalated",
    "planned",
    "run_started",
    "run_finished",
    "diagnosed",
    "verdict",
    "directive",
    "accepted",
    "aborted",
)

FINDING_CODES = (
    "query_mismatch",
    "bc_error",
    "load_in_void",
    "missing_param",
    "aspect_ratio",
    "filter_vs_mesh",
    "point_load_singularity",
)
SEVERITIES = ("auto_correctable", "escalate")

RUBRIC = (
    "output_validity",
    "formulation_consistency",
    "convergence",
    "design_quality",
)

DIRECTIVE_TARGETS = ("scientist", "validator", "planner", "runner")
DIRECTIVE_ACTIONS = (
    "reformulate",
    "fix_bc",
    "increase_r_min",
    "steepen_beta_schedule",
    "change_constraint",
    "adjust_optimizer",
    "retry_with",
)
# which agent may be asked to perform which action
ALLOWED_ROUTES = {
    "reformulate": ("scientist",),
    "change_constraint": ("scientist",),
    "fix_bc": ("scientist", "validator"),
    "increase_r_min": ("planner",),
    "steepen_beta_schedule": ("planner",),
    "adjust_optimizer": ("planner",),
    "retry_with": ("runner",),
}


# ---------------------------------------------------------------------------
# findings (validator)


@dataclass(frozen=True)
class Finding:
    """One defect the validator found in a problem specification."""

    code: str
    severity: str
    path: str
    message: str
    correction: tuple[FieldChange, ...] = ()

    def __post_init__(self):
        if self.code not in FINDING_CODES:
            raise ValueError(f"unknown finding code {self.code!r}")
        if self.severity not in SEVERITIES:
            raise ValueError(f"unknown severity {self.severity!r}")
        if self.severity == "auto_correctable" and not self.correction:
            raise ValueError("auto-correctable findings must carry a correction")

    def to_dict(self) -> dict:
        return {
            "code": self.code,
            "severity": self.severity,
            "path": self.path,
            "message": self.message,
            "correction": [
                {"path": c.path, "old": c.old, "new": c.new} for c in self.correction
            ],
        }


def finding_from_dict(raw: Any, where: str = "") -> Finding:
    if not isinstance(raw, dict):
        raise SchemaParseError(where, "finding must be an object")
    try:
        correction = tuple(
            FieldChange(c["path"], c.get("old"), c.get("new"))
            for c in raw.get("correction", [])
        )
        return Finding(
            code=raw["code"],
            severity=raw["severity"],
            path=raw.get("path", ""),
            message=raw.get("message", ""),
            correction=correction,
        )
    except (KeyError, TypeError, ValueError) as err:
        raise SchemaParseError(where, f"bad finding: {err}") from err


# ---------------------------------------------------------------------------
# diagnoses (reviewer)


@dataclass(frozen=True)
class Diagnosis:
    """Reviewer's reading of a failed run."""

    error_code: str
    explanation: str
    attempt: int

    def to_dict(self) -> dict:
        return {
            "error_code": self.error_code,
            "explanation": self.explanation,
            "attempt": self.attempt,
        }


# ---------------------------------------------------------------------------
# verdicts (critic)


@dataclass(frozen=True)
class CriterionResult:
    name: str
    passed: bool
    detail: str
    tags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "detail": self.detail,
            "tags": list(self.tags),
        }


@dataclass(frozen=True)
class VerdictMetrics:
    discreteness: float | None
    checkerboard: float | None
    connected: bool | None
    termination: str | None
    iterations: int

    def to_dict(self) -> dict:
        return {
            "discreteness": self.discreteness,
            "checkerboard": self.checkerboard,
            "connected": self.connected,
            "termination": self.termination,
            "iterations": self.iterations,
        }


@dataclass(frozen=True)
class Verdict:
    """Rubric evaluation of one run, criteria in fixed priority order."""

    criteria: tuple[CriterionResult, ...]
    metrics: VerdictMetrics
    accepted: bool
    first_failed: str | None

    def __post_init__(self):
        names = tuple(c.name for c in self.criteria)
        if names != RUBRIC:
            raise ValueError(f"criteria must cover the rubric in order, got {names}")
        failing = [c.name for c in self.criteria if not c.passed]
        if self.accepted != (not failing):
            raise ValueError("accepted must equal all-criteria-pass")
        expected_first = failing[0] if failing else None
        if self.first_failed != expected_first:
            raise ValueError(
                f"first_failed must be {expected_first!r}, got {self.first_failed!r}"
            )

    def criterion(self, name: str) -> CriterionResult:
        for c in self.criteria:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "criteria": [c.to_dict() for c in self.criteria],
            "metrics": self.metrics.to_dict(),
            "accepted": self.accepted,
            "first_failed": self.first_failed,
        }


def verdict_from_dict(raw: Any) -> Verdict:
    if not isinstance(raw, dict):
        raise SchemaParseError("", "verdict must be an object")
    try:
        criteria = tuple(
            CriterionResult(
                name=c["name"],
                passed=bool(c["passed"]),
                detail=c.get("detail", ""),
                tags=tuple(c.get("tags", [])),
            )
            for c in raw["criteria"]
        )
        metrics = raw.get("metrics", {})
        return Verdict(
            criteria=criteria,
            metrics=VerdictMetrics(
                discreteness=metrics.get("discreteness"),
                checkerboard=metrics.get("checkerboard"),
                connected=metrics.get("connected"),
                termination=metrics.get("termination"),
                iterations=int(metrics.get("iterations", 0)),
            ),
            accepted=bool(raw["accepted"]),
            first_failed=raw.get("first_failed"),
        )
    except (KeyError, TypeError, ValueError) as err:
        raise SchemaParseError("", f"bad verdict: {err}") from err


# ---------------------------------------------------------------------------
# refinement directives


@dataclass(frozen=True)
class RefinementDirective:
    """An instruction routing the workflow back to an upstream agent.

    ``source`` names the memory record that motivated the directive,
    e.g. ``"verdict:0"``, ``"finding:2"`` or ``"diagnosis:1"``.
    """

    target: str
    action: str
    rationale: str
    source: str
    criterion: str | None = None
    factor: float | None = None
    parameter: str | None = None
    value: float | None = None
    overrides: tuple[tuple[str, float | str], ...] = ()

    def __post_init__(self):
        if self.target not in DIRECTIVE_TARGETS:
            raise ValueError(f"unknown directive target {self.target!r}")
        if self.action not in DIRECTIVE_ACTIONS:
            raise ValueError(f"unknown directive action {self.action!r}")
        if self.target not in ALLOWED_ROUTES[self.action]:
            raise ValueError(
                f"action {self.action!r} cannot target {self.target!r}"
            )
        if self.action == "increase_r_min" and not (self.factor and self.factor > 1.0):
            raise ValueError("increase_r_min needs a factor > 1")
        if self.action == "adjust_optimizer" and (
            self.parameter is None or self.value is None
        ):
            raise ValueError("adjust_optimizer needs a parameter and value")

    def overrides_dict(self) -> dict[str, Any]:
        return dict(self.overrides)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "target": self.target,
            "action": self.action,
            "rationale": self.rationale,
            "source": self.source,
            "criterion": self.criterion,
        }
        if self.factor is not None:
            out["factor"] = self.factor
        if self.parameter is not None:
            out["parameter"] = self.parameter
            out["value"] = self.value
        if self.overrides:
            out["overrides"] = dict(self.overrides)
        return out


def directive_from_dict(raw: Any) -> RefinementDirective:
    if not isinstance(raw, dict):
        raise SchemaParseError("", "directive must be an object")
    try:
        return RefinementDirective(
            target=raw["target"],
            action=raw["action"],
            rationale=raw.get("rationale", ""),
            source=raw.get("source", ""),
            criterion=raw.get("criterion"),
            factor=raw.get("factor"),
            parameter=raw.get("parameter"),
            value=raw.get("value"),
            overrides=tuple(sorted(raw.get("overrides", {}).items())),
        )
    except (KeyError, TypeError, ValueError) as err:
        raise SchemaParseError("", f"bad directive: {err}") from err


# ---------------------------------------------------------------------------
# run artifacts


@dataclass(frozen=True)
class RunArtifacts:
    """Outputs of one kernel execution; paths are workspace-relative."""

    result: OptimizationResult
    density_image_path: str
    convergence_plot_path: str
    history_path: str
    run_log: str

    @property
    def ok(self) -> bool:
        return self.result.termination != "solver_failure"

    def to_summary(self) -> dict:
        result = self.result
        return {
            "density_image": self.density_image_path,
            "convergence_plot": self.convergence_plot_path,
            "history": self.history_path,
            "termination": result.termination,
            "iterations": result.iterations,
            "error_code": result.error_code,
            "final_objective": (
                result.history[-1].objective if result.history else None
            ),
        }


# ---------------------------------------------------------------------------
# events and policy


@dataclass(frozen=True)
class AgentEvent:
    seq: int
    timestamp: str
    agent: str
    kind: str
    payload: dict

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "timestamp": self.timestamp,
            "agent": self.agent,
            "kind": self.kind,
            "payload": self.payload,
        }


@dataclass(frozen=True)
class PolicyCaps:
    """Loop budgets; ``user_cycles`` is unbounded when None."""

    validator_loops: int = 5
    reviewer_retries: int = 10
    system_refinements: int = 12
    user_cycles: int | None = None


COUNTER_NAMES = ("validator_loops", "reviewer_retries", "system_refinements", "user_cycles")


# ---------------------------------------------------------------------------
# session memory


class SessionMemory:
    """Append-only record of everything the agents produced."""

    def __init__(self, user_query: str):
        self.user_query = user_query
        self.feedback: list[str] = []
        self.spec_versions: list[ProblemSpec] = []
        self.plans: list[RunPlan] = []
        self.artifacts: list[RunArtifacts] = []
        self.findings: list[Finding] = []
        self.diagnoses: list[Diagnosis] = []
        self.verdicts: list[Verdict] = []
        self.directives: list[RefinementDirective] = []
        self.counters: dict[str, int] = {name: 0 for name in COUNTER_NAMES}
        self.notes: list[str] = []

    # -- appends ------------------------------------------------------

    def add_spec(self, spec: ProblemSpec) -> int:
        self.spec_versions.append(spec)
        return len(self.spec_versions)

    def add_plan(self, plan: RunPlan) -> int:
        self.plans.append(plan)
        return len(self.plans)

    def add_artifacts(self, artifacts: RunArtifacts) -> int:
        self.artifacts.append(artifacts)
        return len(self.artifacts)

    def add_finding(self, finding: Finding) -> int:
        self.findings.append(finding)
        return len(self.findings) - 1

    def add_diagnosis(self, diagnosis: Diagnosis) -> int:
        self.diagnoses.append(diagnosis)
        return len(self.diagnoses) - 1

    def add_verdict(self, verdict: Verdict) -> int:
        self.verdicts.append(verdict)
        return len(self.verdicts) - 1

    def add_directive(self, directive: RefinementDirective) -> int:
        self._check_source(directive.source)
        self.directives.append(directive)
        return len(self.directives) - 1

    def add_feedback(self, text: str):
        self.feedback.append(text)

    def note(self, text: str):
        self.notes.append(text)

    def bump(self, counter: str) -> int:
        if counter not in self.counters:
            raise KeyError(counter)
        self.counters[counter] += 1
        return self.counters[counter]

    def _check_source(self, source: str):
        kind, _, index = source.partition(":")
        pools = {
            "verdict": self.verdicts,
            "finding": self.findings,
            "diagnosis": self.diagnoses,
        }
        if kind not in pools or not index.isdigit() or int(index) >= len(pools[kind]):
            raise ValueError(
                f"directive source {source!r} does not name an existing record"
            )

    # -- views --------------------------------------------------------

    @property
    def latest_spec(self) -> ProblemSpec:
        if not self.spec_versions:
            raise LookupError("no spec formulated yet")
        return self.spec_versions[-1]

    @property
    def latest_verdict(self) -> Verdict | None:
        return self.verdicts[-1] if self.verdicts else None

    def planner_directives(self) -> list[RefinementDirective]:
        return [d for d in self.directives if d.target == "planner"]

    def to_dict(self) -> dict:
        return {
            "user_query": self.user_query,
            "feedback": list(self.feedback),
            "spec_versions": [to_dict(s) for s in self.spec_versions],
            "plans": [plan_to_dict(p) for p in self.plans],
            "artifacts": [a.to_summary() for a in self.artifacts],
            "findings": [f.to_dict() for f in self.findings],
            "diagnoses": [d.to_dict() for d in self.diagnoses],
            "verdicts": [v.to_dict() for v in self.verdicts],
            "directives": [d.to_dict() for d in self.directives],
            "counters": dict(self.counters),
            "notes": list(self.notes),
        }

    def transcript(self) -> str:
        """Canonical serialization for byte-for-byte comparison."""
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)
