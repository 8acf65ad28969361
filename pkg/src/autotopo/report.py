"""Session report: human-readable summary of an accepted result.

Three sections in fixed order — what was solved (formulation), how the
run was set up (configuration), and how the result was judged
(critique) — rendered as markdown with the density and convergence
images linked by their workspace-relative names.
"""

from __future__ import annotations

from dataclasses import dataclass

from .agents.memory import SessionMemory
from .errors import WrongStateError
from .plan import RunPlan, plan_to_dict
from .problem import ProblemSpec

LANGUAGES = ("en",)

_OBJECTIVE_PROSE = {
    "compliance": "minimize the compliance $C = f^T u$",
    "pnorm_stress": (
        "minimize the p-norm aggregate of the relaxed von Mises stress "
        r"$\left(\sum_e \sigma_{vm,e}^P\right)^{1/P}$"
    ),
}

_CONSTRAINT_PROSE = {
    "volume_fraction": r"$V(\bar\rho)/V_0 \le {bound:g}$",
    "pnorm_stress_limit": r"p-norm stress $\le {bound:g}$",
}


@dataclass(frozen=True)
class Report:
    formulation: str
    configuration: str
    critique: str
    language: str = "en"

    def markdown(self) -> str:
        return (
            "# Optimization report\n\n"
            f"## Formulation\n\n{self.formulation}\n\n"
            f"## Configuration\n\n{self.configuration}\n\n"
            f"## Critique\n\n{self.critique}\n"
        )


def _formulation_section(memory: SessionMemory, spec: ProblemSpec) -> str:
    lines = []
    objective = _OBJECTIVE_PROSE.get(spec.objective.kind, spec.objective.kind)
    constraints = ", ".join(
        _CONSTRAINT_PROSE.get(c.kind, c.kind).format(bound=c.bound)
        for c in spec.constraints
    )
    geom = spec.geometry
    lines.append(
        f"The task is to {objective} over a {geom.width:g} x {geom.height:g} "
        f"domain meshed with {geom.nx} x {geom.ny} bilinear elements, "
        f"subject to {constraints}."
    )
    if geom.void_regions:
        voids = "; ".join(
            f"[{r.x_min:g}, {r.x_max:g}] x [{r.y_min:g}, {r.y_max:g}]"
            for r in geom.void_regions
        )
        lines.append(f"The domain excludes void regions at {voids}.")
    for support in spec.supports:
        seg = support.segment
        lines.append(
            f"The edge from ({seg.start.x:g}, {seg.start.y:g}) to "
            f"({seg.end.x:g}, {seg.end.y:g}) is fixed in "
            + ("both directions" if support.fixed == "both" else f"{support.fixed}")
            + "."
        )
    for load in spec.loads:
        spread = (
            "a single node"
            if load.distribution.kind == "nodal"
            else f"{load.distribution.n} adjacent nodes"
        )
        lines.append(
            f"A force of ({load.force.x:g}, {load.force.y:g}) acts at "
            f"({load.location.x:g}, {load.location.y:g}), spread over {spread}."
        )

    lines.append("")
    n_specs = len(memory.spec_versions)
    if n_specs == 1:
        lines.append("The formulation was accepted as first written.")
    else:
        lines.append(
            f"The formulation went through {n_specs} versions before this one."
        )
        corrections = [
            f for f in memory.findings if f.severity == "auto_correctable"
        ]
        if corrections:
            fixed = ", ".join(sorted({f.code for f in corrections}))
            lines.append(f"The validator corrected: {fixed}.")
        if memory.directives:
            applied = ", ".join(
                f"{d.action} (to {d.target})" for d in memory.directives
            )
            lines.append(f"Refinement directives applied: {applied}.")
    return "\n".join(lines)


def _configuration_section(plan: RunPlan) -> str:
    params = plan_to_dict(plan)["params"]
    schedule = ", ".join(
        rf"$\beta={b:g}$ from iteration {i}" for i, b in params["beta_schedule"]
    )
    rows = [
        ("optimizer", params["method"]),
        ("penalization $p$", f"{params['simp']['penal']:g}"),
        ("filter radius $r_{min}$", f"{params['r_min']:g}"),
        ("projection threshold $\\eta$", f"{params['eta']:g}"),
        ("move limit", f"{params['move_limit']:g}"),
        ("max iterations", str(params["max_iterations"])),
        ("change tolerance", f"{params['change_tolerance']:g}"),
        ("objective window", str(params["objective_window"])),
        ("volume tolerance", f"{params['volume_tolerance']:g}"),
    ]
    if "stress" in params:
        rows.append(("stress p-norm $P$", f"{params['stress']['pnorm_exponent']:g}"))
        rows.append(
            ("stress relaxation $q$", f"{params['stress']['relaxation_exponent']:g}")
        )
    table = "\n".join(f"| {name} | {value} |" for name, value in rows)
    return (
        "| parameter | value |\n|---|---|\n"
        + table
        + f"\n\nThe projection sharpens in steps: {schedule}."
    )


def _critique_section(memory: SessionMemory) -> str:
    verdict = memory.latest_verdict
    artifacts = memory.artifacts[-1]
    result = artifacts.result
    metrics = verdict.metrics

    lines = []
    for criterion in verdict.criteria:
        mark = "pass" if criterion.passed else "fail"
        lines.append(f"- **{criterion.name}** — {mark}: {criterion.detail}")
    lines.append("")
    final = result.history[-1].objective if result.history else float("nan")
    lines.append(
        f"The run terminated with `{result.termination}` after "
        f"{result.iterations} iterations at an objective of {final:.6g}. "
        f"Non-discreteness $M_{{nd}} = {metrics.discreteness:.4f}$, "
        f"checkerboard score {metrics.checkerboard:.4f}, load "
        + (
            "connected to the supports."
            if metrics.connected
            else "not connected to the supports."
        )
    )
    lines.append("")
    lines.append(f"![Final density]({artifacts.density_image_path})")
    lines.append("")
    lines.append(f"![Convergence history]({artifacts.convergence_plot_path})")
    return "\n".join(lines)


def generate_report(memory: SessionMemory, language: str = "en") -> Report:
    if language not in LANGUAGES:
        raise ValueError(f"unsupported report language: {language!r}")
    if not memory.verdicts or not memory.latest_verdict.accepted:
        raise WrongStateError("no accepted result to report on yet")
    spec = memory.latest_spec
    plan = memory.plans[-1]
    return Report(
        formulation=_formulation_section(memory, spec),
        configuration=_configuration_section(plan),
        critique=_critique_section(memory),
        language=language,
    )
