"""Shared construction helpers for the test suite."""

from __future__ import annotations

import numpy as np

from autotopo.fem import (
    BoundaryConditions,
    StructuredMesh,
    assemble_and_solve,
    build_mesh,
    resolve_bcs,
)
from autotopo.problem import (
    ConstraintSpec,
    DomainGeometry,
    LoadRegion,
    ObjectiveSpec,
    OptimizerParams,
    Point,
    ProblemSpec,
    Rect,
    RegularizationParams,
    Segment,
    SimpParams,
    StressParams,
    SupportRegion,
)
from autotopo.regularization import RegularizationChain, build_filter
from autotopo.sensitivity import stress_pnorm_value, volume_value


def cantilever_spec(
    nx: int = 4,
    ny: int = 2,
    width: float = 2.0,
    height: float = 1.0,
    volfrac: float = 0.4,
    r_min: float | None = None,
    max_iterations: int = 300,
    method: str = "oc",
) -> ProblemSpec:
    geometry = DomainGeometry("rectangle", width, height, nx, ny)
    return ProblemSpec(
        geometry=geometry,
        supports=(SupportRegion(Segment(Point(0.0, 0.0), Point(0.0, height)), "both"),),
        loads=(LoadRegion(Point(width, height / 2.0), Point(0.0, -1.0)),),
        objective=ObjectiveSpec("compliance"),
        constraints=(ConstraintSpec("volume_fraction", volfrac),),
        regularization=RegularizationParams(r_min=r_min or 1.5 * geometry.element_size()),
        optimizer=OptimizerParams(method=method, max_iterations=max_iterations),
    )


def l_bracket_spec(
    n: int = 6,
    volfrac: float = 0.4,
    r_min: float | None = None,
    max_iterations: int = 300,
) -> ProblemSpec:
    geometry = DomainGeometry(
        "l_bracket", 1.0, 1.0, n, n, void_regions=(Rect(0.4, 0.4, 1.0, 1.0),)
    )
    return ProblemSpec(
        geometry=geometry,
        supports=(SupportRegion(Segment(Point(0.0, 1.0), Point(0.4, 1.0)), "both"),),
        loads=(LoadRegion(Point(1.0, 0.4), Point(0.0, -1.0)),),
        objective=ObjectiveSpec("pnorm_stress"),
        constraints=(ConstraintSpec("volume_fraction", volfrac),),
        regularization=RegularizationParams(r_min=r_min or 1.5 * geometry.element_size()),
        stress=StressParams(),
        optimizer=OptimizerParams(method="mma", max_iterations=max_iterations),
    )


def chain_for(mesh: StructuredMesh, r_min: float, eta: float = 0.5) -> RegularizationChain:
    return RegularizationChain(build_filter(mesh, r_min), eta)


def compliance_fn(mesh, simp, chain, bcs, beta):
    def fn(rho: np.ndarray) -> float:
        field = chain.forward(rho, beta)
        _, sol = assemble_and_solve(mesh, simp, field.rho_bar, bcs)
        return sol.compliance

    return fn


def stress_fn(mesh, simp, stress, chain, bcs, beta):
    def fn(rho: np.ndarray) -> float:
        field = chain.forward(rho, beta)
        _, sol = assemble_and_solve(mesh, simp, field.rho_bar, bcs)
        return stress_pnorm_value(mesh, stress, field.rho_bar, sol)

    return fn


def volume_fn(mesh, chain, beta):
    def fn(rho: np.ndarray) -> float:
        return volume_value(mesh, chain.forward(rho, beta).rho_bar)

    return fn


def solve_spec(spec: ProblemSpec, rho_bar: np.ndarray):
    mesh = build_mesh(spec.geometry)
    bcs = resolve_bcs(mesh, spec.supports, spec.loads)
    return assemble_and_solve(mesh, spec.simp, rho_bar, bcs)


def uniaxial_patch_bcs(mesh: StructuredMesh, traction: float = 1.0) -> BoundaryConditions:
    """Left edge on x rollers, bottom-left pinned in y, uniform tension right.

    Consistent nodal loads for a constant traction on bilinear edges: half
    weight on the corner nodes.
    """
    nx, ny = mesh.nx, mesh.ny
    fixed = [2 * mesh.node_id(0, iy) for iy in range(ny + 1)]
    fixed.append(2 * mesh.node_id(0, 0) + 1)

    load = np.zeros(mesh.n_dof)
    total = traction * mesh.geometry.height
    for iy in range(ny + 1):
        weight = 0.5 if iy in (0, ny) else 1.0
        load[2 * mesh.node_id(nx, iy)] = weight * total / ny
    return BoundaryConditions(
        fixed_dofs=np.array(sorted(fixed), dtype=np.int64),
        load=load,
        load_nodes=np.array([mesh.node_id(nx, iy) for iy in range(ny + 1)]),
        support_nodes=np.array([mesh.node_id(0, iy) for iy in range(ny + 1)]),
    )
