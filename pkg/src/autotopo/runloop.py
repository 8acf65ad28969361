"""The optimization loop tying mesh, regularization, adjoints and updates.

One call to :func:`run_optimization` executes a full continuation run for
a resolved plan and returns the final design, iteration history and
termination status.  Solver and update failures are folded into the
result instead of propagating, so a driving pipeline can inspect and
react to them.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import SolverFailure, UpdateFailure
from .fem import BoundaryConditions, StructuredMesh, assemble_and_solve, build_mesh, resolve_bcs
from .fem import FemSolution
from .mma import MMAState, mma_update
from .oc import oc_update
from .plan import ResolvedParams, RunPlan
from .regularization import (
    DensityField,
    RegularizationChain,
    build_filter,
    continuation_step,
)
from .sensitivity import (
    compliance_gradient,
    stress_pnorm_gradient,
    stress_pnorm_value,
    volume_gradient,
    volume_value,
)

OBJECTIVE_WINDOW_RTOL = 1e-4
FEASIBILITY_TOL = 1e-3

Termination = Literal[
    "converged_change_tol",
    "converged_objective_window",
    "max_iterations",
    "solver_failure",
]

# every code a solver_failure result can carry in ``error_code``
ERROR_CODES = (
    "singular_system",
    "solver_no_convergence",
    "nan_objective",
    "oc_bisection_failure",
    "oc_degenerate_gradient",
    "oc_needs_volume",
    "mma_degenerate_gradient",
)


@dataclass(frozen=True)
class HistoryRow:
    iteration: int
    objective: float
    constraints: tuple[float, ...]
    change: float
    beta: float
    ms: int


@dataclass
class OptimizationResult:
    termination: str
    iterations: int
    field: DensityField
    history: list[HistoryRow]
    solution: FemSolution | None
    mesh: StructuredMesh
    bcs: BoundaryConditions | None
    scale: dict[str, float]
    log_lines: list[str] = field(default_factory=list)
    error_code: str | None = None
    error_message: str | None = None

    @property
    def objective_values(self) -> list[float]:
        return [row.objective for row in self.history]

    def log_text(self) -> str:
        return "\n".join(self.log_lines) + "\n"


def history_csv(history: list[HistoryRow], n_constraints: int) -> str:
    cols = ["iteration", "objective"]
    cols += [f"constraint_{i}" for i in range(n_constraints)]
    cols += ["change", "beta", "ms"]
    lines = [",".join(cols)]
    for row in history:
        cells = [str(row.iteration), repr(row.objective)]
        cells += [repr(c) for c in row.constraints]
        cells += [repr(row.change), repr(row.beta), str(row.ms)]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


class _ConstraintSet:
    """Evaluates the plan's inequality constraints in normalized g <= 0 form."""

    def __init__(self, params: ResolvedParams, mesh: StructuredMesh):
        self.params = params
        self.mesh = mesh
        self.stress_ref: float | None = None

    def evaluate(
        self,
        chain: RegularizationChain,
        fld: DensityField,
        beta: float,
        system,
        solution,
    ) -> tuple[list[float], list[float], list[np.ndarray]]:
        """Returns raw values, normalized values g, and normalized gradients."""
        raw: list[float] = []
        norm: list[float] = []
        grads: list[np.ndarray] = []
        for c in self.params.constraints:
            if c.kind == "volume_fraction":
                value = volume_value(self.mesh, fld.rho_bar)
                grad = volume_gradient(self.mesh, chain, fld, beta)
                raw.append(value)
                norm.append(value / c.bound - 1.0)
                grads.append(grad / c.bound)
            elif c.kind == "pnorm_stress_limit":
                value = stress_pnorm_value(self.mesh, self.params.stress, fld.rho_bar, solution)
                if self.stress_ref is None:
                    self.stress_ref = max(value, 1e-12)
                limit = c.bound * self.stress_ref
                adjoint = stress_pnorm_gradient(
                    self.mesh,
                    self.params.simp,
                    self.params.stress,
                    system,
                    solution,
                    chain,
                    fld,
                    beta,
                )
                raw.append(value)
                norm.append(value / limit - 1.0)
                grads.append(adjoint.gradient / limit)
            else:
                raise UpdateFailure("unknown_constraint", f"cannot evaluate {c.kind!r}")
        return raw, norm, grads

    @staticmethod
    def feasible(norm: list[float]) -> bool:
        return all(g <= FEASIBILITY_TOL for g in norm)


def run_optimization(
    plan: RunPlan, seed: int = 0, timing: Literal["wall", "none"] = "wall"
) -> OptimizationResult:
    """Execute a plan to termination.

    ``seed`` is recorded for provenance; the loop itself is deterministic.
    ``timing="none"`` zeroes the per-iteration wall-time column so reruns
    are byte-identical.
    """
    params = plan.params
    mesh = build_mesh(plan.spec.geometry)
    chain = RegularizationChain(build_filter(mesh, params.r_min), params.eta)
    constraints = _ConstraintSet(params, mesh)

    volfrac = params.volume_bound()
    rho = np.where(mesh.active, volfrac if volfrac is not None else 0.5, 0.0)
    active = mesh.active
    n_active = mesh.n_active
    final_beta = params.beta_schedule[-1][1]

    log: list[str] = [
        f"method={params.method} seed={seed} elements={mesh.n_elements} "
        f"active={n_active} dofs={mesh.n_dof}",
        f"r_min={params.r_min:g} eta={params.eta:g} "
        f"beta_schedule={list(params.beta_schedule)}",
    ]
    history: list[HistoryRow] = []
    scale: dict[str, float] = {}
    mma_state = MMAState()
    xmin = np.zeros(n_active)
    xmax = np.ones(n_active)

    termination: str = "max_iterations"
    error_code: str | None = None
    error_message: str | None = None
    fld = chain.forward(rho, continuation_step(params.beta_schedule, 1))
    solution = None
    bcs = None

    iteration = 0
    try:
        bcs = resolve_bcs(mesh, plan.spec.supports, plan.spec.loads)
        for iteration in range(1, params.max_iterations + 1):
            tic = time.perf_counter()
            beta = continuation_step(params.beta_schedule, iteration)
            fld = chain.forward(rho, beta)
            system, solution = assemble_and_solve(mesh, params.simp, fld.rho_bar, bcs)

            if params.objective_kind == "compliance":
                objective = solution.compliance
                adjoint = compliance_gradient(
                    mesh, params.simp, solution, chain, fld, beta
                )
            else:
                objective = stress_pnorm_value(mesh, params.stress, fld.rho_bar, solution)
                adjoint = stress_pnorm_gradient(
                    mesh, params.simp, params.stress, system, solution, chain, fld, beta
                )
            if not np.isfinite(objective):
                raise SolverFailure("nan_objective", "objective is not finite")

            if iteration == 1:
                scale["objective"] = max(abs(objective), 1e-12)
                log.append(f"objective_scale={scale['objective']!r}")

            raw_cons, norm_cons, grad_cons = constraints.evaluate(
                chain, fld, beta, system, solution
            )

            df0 = adjoint.gradient[active] / scale["objective"]
            if params.method == "oc":
                if volfrac is None:
                    raise UpdateFailure(
                        "oc_needs_volume", "OC requires a volume constraint"
                    )

                def projected_volume(cand: np.ndarray) -> float:
                    full = np.zeros(mesh.n_elements)
                    full[active] = cand
                    return volume_value(mesh, chain.forward(full, beta).rho_bar)

                dvol = volume_gradient(mesh, chain, fld, beta)[active]
                new_active, _ = oc_update(
                    rho[active],
                    df0,
                    dvol,
                    params.move_limit,
                    volfrac,
                    projected_volume,
                    volume_tol=params.volume_tolerance,
                )
            else:
                new_active = mma_update(
                    mma_state,
                    rho[active],
                    df0,
                    np.array(norm_cons),
                    np.vstack([g[active] for g in grad_cons]),
                    xmin,
                    xmax,
                    params.move_limit,
                )

            change = float(np.max(np.abs(new_active - rho[active])))
            rho = np.zeros(mesh.n_elements)
            rho[active] = new_active

            ms = int(round((time.perf_counter() - tic) * 1000)) if timing == "wall" else 0
            history.append(
                HistoryRow(
                    iteration=iteration,
                    objective=float(objective),
                    constraints=tuple(float(v) for v in raw_cons),
                    change=change,
                    beta=float(beta),
                    ms=ms,
                )
            )
            log.append(
                f"it={iteration:4d} obj={objective:.6e} "
                f"cons={','.join(f'{v:.4f}' for v in raw_cons)} "
                f"change={change:.4f} beta={beta:g}"
            )

            # design change termination only counts once beta is final
            if beta == final_beta and change < params.change_tolerance:
                termination = "converged_change_tol"
                break
            window = params.objective_window
            if len(history) >= window:
                tail = history[-window:]
                # windows straddling a beta jump see an objective
                # discontinuity; only same-beta windows count
                if all(r.beta == beta for r in tail) and constraints.feasible(norm_cons):
                    drift = abs(tail[-1].objective - tail[0].objective)
                    if drift / max(abs(tail[-1].objective), 1e-30) < OBJECTIVE_WINDOW_RTOL:
                        termination = "converged_objective_window"
                        break
    except (SolverFailure, UpdateFailure) as err:
        termination = "solver_failure"
        error_code = err.code
        error_message = err.message
        log.append(f"failure: {err.code}: {err.message}")

    final_field = chain.forward(rho, continuation_step(params.beta_schedule, max(iteration, 1)))
    log.append(f"termination={termination} iterations={len(history)}")

    return OptimizationResult(
        termination=termination,
        iterations=len(history),
        field=final_field,
        history=history,
        solution=solution,
        mesh=mesh,
        bcs=bcs,
        scale=scale,
        log_lines=log,
        error_code=error_code,
        error_message=error_message,
    )
