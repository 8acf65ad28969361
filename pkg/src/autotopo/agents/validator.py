"""Validator: rule-based inspection and correction of problem specs.

A fixed checklist runs in order; findings it can fix locally are applied
in place (the corrected spec gets provenance ``validator_corrected``),
findings that require re-thinking the formulation escalate back to the
scientist.  Later checks see the spec as corrected by earlier ones, so a
load that was moved out of a void is not re-flagged as sitting in it.

Check names (for selective disabling): ``consistency``, ``bc``,
``missing``, ``aspect``, ``filter``, ``point_load``, ``void``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from ..problem import (
    FieldChange,
    ProblemSpec,
    apply_changes,
    builtin_benchmark,
    defaulted_paths,
    to_dict,
    with_provenance,
)
from .intent import extract_intent
from .memory import Finding, SessionMemory

CHECK_NAMES = (
    "consistency",
    "bc",
    "missing",
    "aspect",
    "filter",
    "point_load",
    "void",
)

ASPECT_RANGE = (0.5, 2.0)
RMIN_RAISE_FACTOR = 1.5
DISTRIBUTED_NODES = 3


@dataclass(frozen=True)
class ValidatorOutcome:
    spec: ProblemSpec
    findings: tuple[Finding, ...]
    escalate: bool

    @property
    def clean(self) -> bool:
        return not self.findings


def _apply(spec: ProblemSpec, finding: Finding) -> ProblemSpec:
    return apply_changes(spec, list(finding.correction))


def _check_consistency(spec: ProblemSpec, query: str) -> list[Finding]:
    """Objective and constraint structure versus the query intent."""
    intent = extract_intent(query)
    findings = []
    if intent.objective is not None and spec.objective.kind != intent.objective:
        findings.append(
            Finding(
                code="query_mismatch",
                severity="escalate",
                path="objective.kind",
                message=(
                    f"query asks for a {intent.objective} objective but the "
                    f"formulation minimizes {spec.objective.kind}"
                ),
            )
        )
    if intent.volume_bound is not None:
        bound = spec.volume_bound()
        if bound is None:
            findings.append(
                Finding(
                    code="query_mismatch",
                    severity="escalate",
                    path="constraints",
                    message=(
                        f"query limits material to {intent.volume_bound:g} but "
                        "the formulation carries no volume constraint"
                    ),
                )
            )
        elif abs(bound - intent.volume_bound) > 1e-9:
            findings.append(
                Finding(
                    code="query_mismatch",
                    severity="auto_correctable",
                    path="constraints[0].bound",
                    message=(
                        f"volume bound {bound:g} disagrees with the query's "
                        f"{intent.volume_bound:g}"
                    ),
                    correction=(
                        FieldChange("constraints[0].bound", bound, intent.volume_bound),
                    ),
                )
            )
    return findings


def _check_bc(spec: ProblemSpec, query: str) -> list[Finding]:
    """Load positions versus the query, support/void overlap."""
    intent = extract_intent(query)
    findings = []
    if intent.benchmark is not None:
        reference = builtin_benchmark(intent.benchmark)
        tol = spec.geometry.element_size()
        for i, (load, ref) in enumerate(zip(spec.loads, reference.loads)):
            gap = math.hypot(
                load.location.x - ref.location.x, load.location.y - ref.location.y
            )
            if gap > tol:
                findings.append(
                    Finding(
                        code="bc_error",
                        severity="auto_correctable",
                        path=f"loads[{i}].location",
                        message=(
                            f"load sits at ({load.location.x:g}, "
                            f"{load.location.y:g}) but the query places it at "
                            f"({ref.location.x:g}, {ref.location.y:g})"
                        ),
                        correction=(
                            FieldChange(
                                f"loads[{i}].location",
                                {"x": load.location.x, "y": load.location.y},
                                {"x": ref.location.x, "y": ref.location.y},
                            ),
                        ),
                    )
                )
    for i, support in enumerate(spec.supports):
        seg = support.segment
        mid = ((seg.start.x + seg.end.x) / 2.0, (seg.start.y + seg.end.y) / 2.0)
        points = ((seg.start.x, seg.start.y), mid, (seg.end.x, seg.end.y))
        if all(spec.geometry.in_void(x, y) for x, y in points):
            findings.append(
                Finding(
                    code="bc_error",
                    severity="escalate",
                    path=f"supports[{i}]",
                    message="support edge lies entirely inside a void region",
                )
            )
    return findings


def _check_missing(spec: ProblemSpec, query: str) -> list[Finding]:
    """Numerical parameters the formulation left to defaults."""
    intent = extract_intent(query)
    if intent.embedded_spec is None:
        return []
    # re-read the embedded description to see which sections were omitted
    start, end = query.find("{"), query.rfind("}")
    raw = json.loads(query[start : end + 1])
    spec_dict = to_dict(spec)

    def value_at(path: str):
        node = spec_dict
        for part in path.replace("]", "").split("."):
            if "[" in part:
                key, idx = part.split("[")
                node = node[key][int(idx)]
            else:
                node = node[part]
        return node

    return [
        Finding(
            code="missing_param",
            severity="auto_correctable",
            path=path,
            message=f"{path} was not specified; filled with standard practice",
            correction=(FieldChange(path, None, value_at(path)),),
        )
        for path in defaulted_paths(raw)
    ]


def _check_aspect(spec: ProblemSpec) -> list[Finding]:
    ratio = spec.geometry.aspect_ratio()
    low, high = ASPECT_RANGE
    if low <= ratio <= high:
        return []
    geometry = spec.geometry
    ny = max(1, round(geometry.nx * geometry.height / geometry.width))
    return [
        Finding(
            code="aspect_ratio",
            severity="auto_correctable",
            path="geometry.ny",
            message=(
                f"element aspect ratio dx/dy = {ratio:.3g} lies outside "
                f"[{low:g}, {high:g}]; re-meshing to square elements"
            ),
            correction=(FieldChange("geometry.ny", geometry.ny, ny),),
        )
    ]


def _check_filter(spec: ProblemSpec) -> list[Finding]:
    size = spec.geometry.element_size()
    r_min = spec.regularization.r_min
    if r_min > size:
        return []
    raised = RMIN_RAISE_FACTOR * size
    return [
        Finding(
            code="filter_vs_mesh",
            severity="auto_correctable",
            path="regularization.r_min",
            message=(
                f"filter radius {r_min:g} does not exceed the element size "
                f"{size:g}; the filter would act as identity and admit "
                f"checkerboards"
            ),
            correction=(FieldChange("regularization.r_min", r_min, raised),),
        )
    ]


def _check_point_load(spec: ProblemSpec) -> list[Finding]:
    findings = []
    for i, load in enumerate(spec.loads):
        if load.distribution.kind == "nodal":
            findings.append(
                Finding(
                    code="point_load_singularity",
                    severity="auto_correctable",
                    path=f"loads[{i}].distribution",
                    message=(
                        "a single-node load concentrates stress artificially; "
                        f"spreading it over {DISTRIBUTED_NODES} nodes"
                    ),
                    correction=(
                        FieldChange(
                            f"loads[{i}].distribution",
                            {"kind": "nodal", "n": load.distribution.n},
                            {
                                "kind": "distributed_over_n_nodes",
                                "n": DISTRIBUTED_NODES,
                            },
                        ),
                    ),
                )
            )
    return findings


def _strictly_in_void(spec: ProblemSpec, x: float, y: float) -> bool:
    # a point on a void boundary still touches material, so only the
    # open interior counts as unreachable
    return any(
        r.x_min < x < r.x_max and r.y_min < y < r.y_max
        for r in spec.geometry.void_regions
    )


def _check_void(spec: ProblemSpec) -> list[Finding]:
    findings = []
    for i, load in enumerate(spec.loads):
        if _strictly_in_void(spec, load.location.x, load.location.y):
            findings.append(
                Finding(
                    code="load_in_void",
                    severity="escalate",
                    path=f"loads[{i}].location",
                    message=(
                        f"load at ({load.location.x:g}, {load.location.y:g}) "
                        "lies inside a void region; relocating load or void "
                        "needs a reformulation"
                    ),
                )
            )
    return findings


def validator_check(
    spec: ProblemSpec,
    query: str,
    memory: SessionMemory,
    disabled: frozenset[str] = frozenset(),
) -> ValidatorOutcome:
    """Run the checklist, applying corrections as they are found."""
    unknown = disabled - set(CHECK_NAMES)
    if unknown:
        raise ValueError(f"unknown validator checks disabled: {sorted(unknown)}")

    findings: list[Finding] = []
    escalate = False

    checks = (
        ("consistency", lambda s: _check_consistency(s, query)),
        ("bc", lambda s: _check_bc(s, query)),
        ("missing", lambda s: _check_missing(s, query)),
        ("aspect", _check_aspect),
        ("filter", _check_filter),
        ("point_load", _check_point_load),
        ("void", _check_void),
    )
    corrected = False
    for name, check in checks:
        if name in disabled:
            continue
        for finding in check(spec):
            findings.append(finding)
            if finding.code == "missing_param":
                # documents a default already filled in; nothing to change
                continue
            if finding.severity == "auto_correctable" and finding.correction:
                spec = _apply(spec, finding)
                corrected = True
            elif finding.severity == "escalate":
                escalate = True

    if corrected and not escalate:
        spec = with_provenance(spec, "validator_corrected")
    return ValidatorOutcome(spec=spec, findings=tuple(findings), escalate=escalate)
