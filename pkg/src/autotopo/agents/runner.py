"""Runner: executes a run plan through the in-process kernel.

Produces the artifact set the critic inspects: the density image, the
convergence plot, the iteration history CSV and a run log.  Kernel
failures are folded into the artifacts (the result carries the error
code) and never propagate past this boundary; only workspace I/O errors
may escape.
"""

from __future__ import annotations

from typing import Literal

from ..plan import RunPlan
from ..runloop import OptimizationResult, run_optimization, history_csv
from ..viz import save_convergence_png, save_density_png
from ..workspace import SessionWorkspace
from .memory import RunArtifacts


def _injected_failure_result(plan: RunPlan, code: str) -> OptimizationResult:
    """A kernel result standing in for a run that died with ``code``.

    Used by the fault-injection switches; carries the initial field so
    downstream consumers always have something renderable.
    """
    from ..fem import build_mesh
    from ..regularization import RegularizationChain, build_filter, continuation_step

    import numpy as np

    params = plan.params
    mesh = build_mesh(plan.spec.geometry)
    chain = RegularizationChain(build_filter(mesh, params.r_min), params.eta)
    volfrac = params.volume_bound()
    rho = np.where(mesh.active, volfrac if volfrac is not None else 0.5, 0.0)
    fld = chain.forward(rho, continuation_step(params.beta_schedule, 1))
    return OptimizationResult(
        termination="solver_failure",
        iterations=0,
        field=fld,
        history=[],
        solution=None,
        mesh=mesh,
        bcs=None,
        scale={},
        log_lines=[f"injected failure: {code}"],
        error_code=code,
        error_message=f"injected failure: {code}",
    )


def runner_execute(
    plan: RunPlan,
    workspace: SessionWorkspace,
    version: int,
    seed: int = 0,
    timing: Literal["wall", "none"] = "none",
    forced_failure: str | None = None,
) -> RunArtifacts:
    """Run the kernel and materialize every artifact for run ``version``."""
    if forced_failure is not None:
        result = _injected_failure_result(plan, forced_failure)
    else:
        result = run_optimization(plan, seed=seed, timing=timing)

    history_name = workspace.history_name(version)
    workspace.write_text(
        history_name, history_csv(result.history, len(plan.params.constraints))
    )

    density_name = workspace.density_name(version)
    save_density_png(result.mesh, result.field.rho_bar, workspace.root / density_name)

    convergence_name = workspace.convergence_name(version)
    labels = tuple(c.kind for c in plan.params.constraints)
    save_convergence_png(result.history, workspace.root / convergence_name, labels)

    log = result.log_text()
    return RunArtifacts(
        result=result,
        density_image_path=density_name,
        convergence_plot_path=convergence_name,
        history_path=history_name,
        run_log=log,
    )
