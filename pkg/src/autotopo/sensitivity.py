"""Objective, constraint and adjoint sensitivity evaluations.

Every gradient returned here is with respect to the raw design variables
rho: the derivative with respect to the projected field is chained through
the projection derivative and the filter transpose before it leaves this
module.  Compliance is self-adjoint (psi = -u); the stress aggregate
solves one extra adjoint system, reusing the forward factorization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .errors import SolverFailure
from .fem import (
    FemSolution,
    GlobalSystem,
    StructuredMesh,
    _b_matrix,
    elasticity_matrix,
    element_stiffness,
)
from .problem import SimpParams, StressParams
from .regularization import DensityField, RegularizationChain

# von Mises quadratic form on (sx, sy, txy)
_VM_FORM = np.array([[1.0, -0.5, 0.0], [-0.5, 1.0, 0.0], [0.0, 0.0, 3.0]])

# clamp applied to rho_bar inside the relaxation term of the stress
# gradient only; the value itself uses the raw density
_STRESS_RHO_FLOOR = 1e-4

FD_STEP = 1e-6


@dataclass(frozen=True)
class AdjointSolution:
    """Adjoint state and the resulting design gradient."""

    psi: np.ndarray
    gradient: np.ndarray


def _denergy_drho(simp: SimpParams, rho_bar: np.ndarray) -> np.ndarray:
    """dE/d rho_bar of the modified SIMP interpolation."""
    return simp.penal * np.clip(rho_bar, 0.0, 1.0) ** (simp.penal - 1.0) * (
        simp.e0 - simp.emin
    )


def compliance_value(solution: FemSolution) -> float:
    return solution.compliance


def compliance_gradient(
    mesh: StructuredMesh,
    simp: SimpParams,
    solution: FemSolution,
    chain: RegularizationChain,
    field: DensityField,
    beta: float,
) -> AdjointSolution:
    """Self-adjoint compliance gradient, chained back to raw densities."""
    grad_bar = np.zeros(mesh.n_elements)
    grad_bar[mesh.active] = (
        -_denergy_drho(simp, field.rho_bar[mesh.active])
        * solution.element_energy[mesh.active]
    )
    return AdjointSolution(
        psi=-solution.u, gradient=chain.backward(grad_bar, field, beta)
    )


def volume_value(mesh: StructuredMesh, rho_bar: np.ndarray) -> float:
    """Mean projected density over active elements."""
    return float(rho_bar[mesh.active].sum() / mesh.n_active)


def volume_gradient(
    mesh: StructuredMesh,
    chain: RegularizationChain,
    field: DensityField,
    beta: float,
) -> np.ndarray:
    grad_bar = np.where(mesh.active, 1.0 / mesh.n_active, 0.0)
    return chain.backward(grad_bar, field, beta)


def stress_pnorm_value(
    mesh: StructuredMesh,
    stress: StressParams,
    rho_bar: np.ndarray,
    solution: FemSolution,
) -> float:
    """p-norm aggregate of density-relaxed von Mises stress.

    phi = (sum_active (rho_bar^q * vm)^P)^(1/P); the relaxation discounts
    stress carried by low-density material so boundary elements cannot
    dominate the aggregate.
    """
    q = stress.relaxation_exponent
    p = stress.pnorm_exponent
    relaxed = rho_bar[mesh.active] ** q * solution.von_mises[mesh.active]
    value = float(np.sum(relaxed**p) ** (1.0 / p))
    if not np.isfinite(value):
        raise SolverFailure("nan_objective", "stress aggregate is not finite")
    return value


def stress_pnorm_gradient(
    mesh: StructuredMesh,
    simp: SimpParams,
    stress: StressParams,
    system: GlobalSystem,
    solution: FemSolution,
    chain: RegularizationChain,
    field: DensityField,
    beta: float,
) -> AdjointSolution:
    """Adjoint stress gradient: explicit relaxation term + K-variation term."""
    q = stress.relaxation_exponent
    p = stress.pnorm_exponent
    active = mesh.active
    rho = field.rho_bar[active]
    vm = np.maximum(solution.von_mises[active], 1e-30)

    relaxed = rho**q * vm
    value = np.sum(relaxed**p) ** (1.0 / p)
    if value <= 0.0:
        return AdjointSolution(
            psi=np.zeros(mesh.n_dof), gradient=np.zeros(mesh.n_elements)
        )
    # dphi/dt_e for t_e the relaxed element stress
    dphi_dt = value ** (1.0 - p) * relaxed ** (p - 1.0)

    # explicit part: t_e depends on rho_bar through the relaxation factor
    rho_clamped = np.maximum(rho, _STRESS_RHO_FLOOR)
    grad_bar = np.zeros(mesh.n_elements)
    grad_bar[active] = dphi_dt * q * rho_clamped ** (q - 1.0) * vm

    # implicit part: t_e depends on u through the centroid stress
    d0 = elasticity_matrix(simp.nu, simp.e0)
    b0 = _b_matrix(0.0, 0.0, mesh.dx, mesh.dy)
    dvm_dsigma = solution.stress[active] @ _VM_FORM / vm[:, None]
    # d vm_e / d u_e = B^T D^T (V sigma / vm)
    dvm_due = dvm_dsigma @ (d0 @ b0)
    weights = dphi_dt * rho**q
    dphi_du = np.zeros(mesh.n_dof)
    np.add.at(dphi_du, mesh.edof[active].ravel(), (weights[:, None] * dvm_due).ravel())

    rhs = -dphi_du[system.free_dofs]
    psi_free = system.solve_free(rhs)
    psi = system.expand(psi_free)

    ke = element_stiffness(simp.nu, mesh.dx, mesh.dy)
    psi_e = psi[mesh.edof[active]]
    u_e = solution.u[mesh.edof[active]]
    k_variation = np.einsum("ei,ij,ej->e", psi_e, ke, u_e)
    grad_bar[active] += _denergy_drho(simp, rho) * k_variation

    return AdjointSolution(psi=psi, gradient=chain.backward(grad_bar, field, beta))


@dataclass(frozen=True)
class GradientCheckRow:
    index: int
    analytic: float
    numeric: float
    abs_error: float
    rel_error: float


@dataclass(frozen=True)
class GradientCheck:
    rows: tuple[GradientCheckRow, ...]
    max_rel_error: float


def finite_difference_check(
    value_fn: Callable[[np.ndarray], float],
    gradient: np.ndarray,
    x: np.ndarray,
    indices: Iterable[int],
    step: float = FD_STEP,
) -> GradientCheck:
    """Compare an analytic gradient against central differences.

    Errors are scaled by the largest numeric gradient magnitude over the
    checked indices, so entries near zero do not produce spurious blowups
    while genuinely wrong components still register.
    """
    rows = []
    for index in indices:
        xp = x.copy()
        xm = x.copy()
        xp[index] += step
        xm[index] -= step
        numeric = (value_fn(xp) - value_fn(xm)) / (2.0 * step)
        analytic = float(gradient[index])
        rows.append((index, analytic, numeric, abs(analytic - numeric)))

    scale = max((abs(r[2]) for r in rows), default=0.0)
    scale = max(scale, 1e-30)
    table = tuple(
        GradientCheckRow(
            index=i,
            analytic=a,
            numeric=n,
            abs_error=err,
            rel_error=err / scale,
        )
        for i, a, n, err in rows
    )
    max_rel = max((r.rel_error for r in table), default=0.0)
    return GradientCheck(rows=table, max_rel_error=max_rel)
