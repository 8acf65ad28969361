"""Critic: rubric-based assessment of a finished run.

Four criteria in fixed priority order — output validity, formulation
consistency, convergence, design quality — each pass/fail with the
numeric evidence attached.  The verdict is accepted only when all four
pass; otherwise the earliest failing criterion drives the refinement
routing.  Thresholds are configuration with conventional defaults.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..problem import ProblemSpec, builtin_benchmark
from ..quality import (
    CHECKERBOARD_LIMIT,
    GRAYNESS_LIMIT,
    checkerboard_score,
    connectivity_check,
    grayness,
)
from ..workspace import SessionWorkspace
from .intent import extract_intent
from .memory import CriterionResult, RunArtifacts, Verdict, VerdictMetrics

MIN_ITERATIONS = 5


@dataclass(frozen=True)
class CriticThresholds:
    grayness_limit: float = GRAYNESS_LIMIT
    checkerboard_limit: float = CHECKERBOARD_LIMIT
    connectivity_threshold: float = 0.3


def _output_validity(
    artifacts: RunArtifacts, workspace: SessionWorkspace
) -> CriterionResult:
    problems = []
    for label, name in (
        ("density image", artifacts.density_image_path),
        ("convergence plot", artifacts.convergence_plot_path),
        ("history", artifacts.history_path),
    ):
        path = workspace.root / name
        if not path.is_file() or path.stat().st_size == 0:
            problems.append(f"{label} {name} is missing or empty")

    result = artifacts.result
    if result.termination == "solver_failure":
        problems.append(f"run failed ({result.error_code}): {result.error_message}")
    active = result.field.rho_bar[result.mesh.active]
    spread = float(np.ptp(active)) if active.size else 0.0
    if spread < 1e-6:
        problems.append(f"density field is constant (spread {spread:.2e})")

    if problems:
        return CriterionResult("output_validity", False, "; ".join(problems))
    return CriterionResult(
        "output_validity", True, "all artifacts present and non-trivial"
    )


def _formulation_consistency(spec: ProblemSpec, query: str) -> CriterionResult:
    intent = extract_intent(query)
    problems = []
    tags = []

    if intent.objective is not None and spec.objective.kind != intent.objective:
        problems.append(
            f"objective is {spec.objective.kind} but the query asked for "
            f"{intent.objective}"
        )
        tags.append("objective_kind")

    if intent.volume_bound is not None:
        bound = spec.volume_bound()
        if bound is None:
            kinds = ", ".join(c.kind for c in spec.constraints) or "none"
            problems.append(
                f"the query limits material to {intent.volume_bound:g} but the "
                f"formulation constrains {kinds} instead of the volume fraction"
            )
            tags.append("constraint_kind")
        elif abs(bound - intent.volume_bound) > 1e-9:
            problems.append(
                f"volume bound {bound:g} differs from the query's "
                f"{intent.volume_bound:g}"
            )
            tags.append("volume_bound")

    if intent.benchmark is not None:
        reference = builtin_benchmark(intent.benchmark)
        tol = spec.geometry.element_size()
        for i, (load, ref) in enumerate(zip(spec.loads, reference.loads)):
            gap = math.hypot(
                load.location.x - ref.location.x, load.location.y - ref.location.y
            )
            if gap > tol:
                problems.append(
                    f"load {i} sits {gap:.3g} away from the position the query "
                    "describes"
                )
                tags.append("load_position")
        for i, (sup, ref) in enumerate(zip(spec.supports, reference.supports)):
            gap = max(
                math.hypot(
                    sup.segment.start.x - ref.segment.start.x,
                    sup.segment.start.y - ref.segment.start.y,
                ),
                math.hypot(
                    sup.segment.end.x - ref.segment.end.x,
                    sup.segment.end.y - ref.segment.end.y,
                ),
            )
            if gap > tol:
                problems.append(
                    f"support {i} sits {gap:.3g} away from the edge the query "
                    "describes"
                )
                tags.append("support_position")

    if problems:
        return CriterionResult(
            "formulation_consistency", False, "; ".join(problems), tuple(tags)
        )
    return CriterionResult(
        "formulation_consistency", True, "formulation matches the query intent"
    )


def _convergence(artifacts: RunArtifacts) -> CriterionResult:
    result = artifacts.result
    problems = []
    if not result.termination.startswith("converged"):
        problems.append(f"termination was {result.termination}, not converged")
    if result.iterations < MIN_ITERATIONS:
        problems.append(
            f"only {result.iterations} iterations; fewer than {MIN_ITERATIONS} "
            "suggests a degenerate run"
        )
    if len(result.history) >= 2:
        first = result.history[0].objective
        last = result.history[-1].objective
        if not last < first:
            problems.append(
                f"objective did not decrease ({first:.6g} -> {last:.6g})"
            )
    if problems:
        return CriterionResult("convergence", False, "; ".join(problems))
    return CriterionResult(
        "convergence",
        True,
        f"{result.termination} after {result.iterations} iterations",
    )


def _design_quality(
    artifacts: RunArtifacts, thresholds: CriticThresholds
) -> tuple[CriterionResult, VerdictMetrics]:
    result = artifacts.result
    mesh = result.mesh
    rho_bar = result.field.rho_bar

    m_nd = grayness(mesh, rho_bar)
    checker = checkerboard_score(mesh, rho_bar)
    connected: bool | None = None
    if result.bcs is not None:
        connected = connectivity_check(
            mesh, rho_bar, result.bcs, threshold=thresholds.connectivity_threshold
        ).connected

    metrics = VerdictMetrics(
        discreteness=m_nd,
        checkerboard=checker,
        connected=connected,
        termination=result.termination,
        iterations=result.iterations,
    )

    problems = []
    tags = []
    # tag order doubles as the repair priority: the filter radius is
    # fixed before projection sharpness, and both before connectivity
    if checker > thresholds.checkerboard_limit:
        problems.append(
            f"checkerboard score {checker:.4f} exceeds "
            f"{thresholds.checkerboard_limit:g}"
        )
        tags.append("checkerboard")
    if m_nd > thresholds.grayness_limit:
        problems.append(
            f"non-discreteness {m_nd:.4f} exceeds {thresholds.grayness_limit:g}"
        )
        tags.append("grayness")
    if connected is not True:
        problems.append(
            "load is not connected to the supports through solid material"
            if connected is False
            else "connectivity could not be evaluated (no boundary conditions)"
        )
        tags.append("connectivity")

    if problems:
        return (
            CriterionResult("design_quality", False, "; ".join(problems), tuple(tags)),
            metrics,
        )
    return (
        CriterionResult(
            "design_quality",
            True,
            f"M_nd {m_nd:.4f}, checkerboard {checker:.4f}, connected",
        ),
        metrics,
    )


def critic_evaluate(
    artifacts: RunArtifacts,
    spec: ProblemSpec,
    query: str,
    workspace: SessionWorkspace,
    thresholds: CriticThresholds = CriticThresholds(),
) -> Verdict:
    design, metrics = _design_quality(artifacts, thresholds)
    criteria = (
        _output_validity(artifacts, workspace),
        _formulation_consistency(spec, query),
        _convergence(artifacts),
        design,
    )
    failing = [c.name for c in criteria if not c.passed]
    return Verdict(
        criteria=criteria,
        metrics=metrics,
        accepted=not failing,
        first_failed=failing[0] if failing else None,
    )
