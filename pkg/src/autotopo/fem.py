"""Plane-stress finite element kernel on structured quad meshes.

Mesh layout for a ``nx = 3`` by ``ny = 2`` grid (node ids at the grid
points, element ids in the cells, origin bottom-left, y pointing up)::

    8 ---- 9 ---- 10 ---- 11
    |  3   |  4   |   5   |
    4 ---- 5 ---- 6 ----- 7
    |  0   |  1   |   2   |
    0 ---- 1 ---- 2 ----- 3

Node ``(ix, iy)`` has id ``iy * (nx + 1) + ix`` and dofs ``2 * id``
(x displacement) and ``2 * id + 1`` (y displacement), so dof numbering is
row-major and deterministic.  Elements are bilinear quads with 2x2 Gauss
quadrature, unit thickness, plane stress.  Elements whose centroid falls
in a void region stay in the mesh at minimal stiffness so every density
vector has one entry per element.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DegenerateDomainError, SolverFailure
from .problem import DomainGeometry, LoadRegion, SimpParams, SupportRegion

_GAUSS = 1.0 / np.sqrt(3.0)
_CG_RTOL = 1e-8
_CG_MAXITER = 10_000
_RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class StructuredMesh:
    """Structured quad mesh over a rectangle with void-aware element mask."""

    geometry: DomainGeometry
    nx: int
    ny: int
    dx: float
    dy: float
    n_nodes: int
    n_dof: int
    n_elements: int
    edof: np.ndarray          # (ne, 8) element dof indices, ccw from lower-left
    centroids: np.ndarray     # (ne, 2)
    node_coords: np.ndarray   # (nn, 2)
    active: np.ndarray        # (ne,) bool, False inside voids

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    def node_id(self, ix: int, iy: int) -> int:
        return iy * (self.nx + 1) + ix

    def element_id(self, ex: int, ey: int) -> int:
        return ey * self.nx + ex


def build_mesh(geometry: DomainGeometry) -> StructuredMesh:
    nx, ny = geometry.nx, geometry.ny
    dx, dy = geometry.dx, geometry.dy
    n_nodes = (nx + 1) * (ny + 1)
    n_elements = nx * ny

    ex, ey = np.meshgrid(np.arange(nx), np.arange(ny))
    ex = ex.ravel()
    ey = ey.ravel()
    n1 = ey * (nx + 1) + ex
    n2 = n1 + 1
    n3 = n2 + (nx + 1)
    n4 = n1 + (nx + 1)
    edof = np.column_stack(
        [2 * n1, 2 * n1 + 1, 2 * n2, 2 * n2 + 1, 2 * n3, 2 * n3 + 1, 2 * n4, 2 * n4 + 1]
    ).astype(np.int64)

    centroids = np.column_stack([(ex + 0.5) * dx, (ey + 0.5) * dy])
    active = np.ones(n_elements, dtype=bool)
    for rect in geometry.void_regions:
        inside = (
            (centroids[:, 0] >= rect.x_min)
            & (centroids[:, 0] <= rect.x_max)
            & (centroids[:, 1] >= rect.y_min)
            & (centroids[:, 1] <= rect.y_max)
        )
        active &= ~inside
    if not active.any():
        raise DegenerateDomainError("void regions cover every element")

    iy, ix = np.divmod(np.arange(n_nodes), nx + 1)
    node_coords = np.column_stack([ix * dx, iy * dy])

    return StructuredMesh(
        geometry=geometry,
        nx=nx,
        ny=ny,
        dx=dx,
        dy=dy,
        n_nodes=n_nodes,
        n_dof=2 * n_nodes,
        n_elements=n_elements,
        edof=edof,
        centroids=centroids,
        node_coords=node_coords,
        active=active,
    )


def _b_matrix(xi: float, eta: float, dx: float, dy: float) -> np.ndarray:
    """Strain-displacement matrix of a dx-by-dy rectangle at (xi, eta)."""
    dn_dxi = 0.25 * np.array([-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)])
    dn_deta = 0.25 * np.array([-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)])
    dn_dx = dn_dxi * 2.0 / dx
    dn_dy = dn_deta * 2.0 / dy
    b = np.zeros((3, 8))
    b[0, 0::2] = dn_dx
    b[1, 1::2] = dn_dy
    b[2, 0::2] = dn_dy
    b[2, 1::2] = dn_dx
    return b


def elasticity_matrix(nu: float, e: float = 1.0) -> np.ndarray:
    """Plane-stress constitutive matrix."""
    return e / (1.0 - nu**2) * np.array(
        [[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, (1.0 - nu) / 2.0]]
    )


def element_stiffness(nu: float, dx: float, dy: float) -> np.ndarray:
    """Unit-modulus 8x8 stiffness of a dx-by-dy bilinear quad (2x2 Gauss)."""
    d = elasticity_matrix(nu)
    det_j = dx * dy / 4.0
    ke = np.zeros((8, 8))
    for xi in (-_GAUSS, _GAUSS):
        for eta in (-_GAUSS, _GAUSS):
            b = _b_matrix(xi, eta, dx, dy)
            ke += b.T @ d @ b * det_j
    return 0.5 * (ke + ke.T)


@dataclass(frozen=True)
class BoundaryConditions:
    """Supports and loads resolved to mesh dofs."""

    fixed_dofs: np.ndarray    # sorted unique dof indices
    load: np.ndarray          # (ndof,) consistent nodal force vector
    load_nodes: np.ndarray    # nodes carrying nonzero applied force
    support_nodes: np.ndarray


def _segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(points - a, axis=1)
    t = np.clip((points - a) @ ab / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(points - proj, axis=1)


def _boundary_nodes(mesh: StructuredMesh) -> np.ndarray:
    """Nodes touching at least one active element but fewer than four."""
    counts = np.zeros(mesh.n_nodes, dtype=np.int64)
    nodes = mesh.edof[mesh.active][:, 0::2] // 2
    np.add.at(counts, nodes.ravel(), 1)
    return np.flatnonzero((counts >= 1) & (counts < 4))


def _nearest_active_node(mesh: StructuredMesh, x: float, y: float) -> int:
    counts = np.zeros(mesh.n_nodes, dtype=np.int64)
    nodes = mesh.edof[mesh.active][:, 0::2] // 2
    np.add.at(counts, nodes.ravel(), 1)
    candidates = np.flatnonzero(counts >= 1)
    d = np.linalg.norm(mesh.node_coords[candidates] - np.array([x, y]), axis=1)
    order = np.lexsort((candidates, d))
    return int(candidates[order[0]])


def _load_nodes(mesh: StructuredMesh, load: LoadRegion) -> np.ndarray:
    """Nodes that receive the load, spread along the containing edge.

    Distributed loads prefer the boundary grid line perpendicular to the
    dominant force component (pressure-like), fall back to the other line,
    and finally to the nearest boundary nodes overall.
    """
    anchor = _nearest_active_node(mesh, load.location.x, load.location.y)
    gap = float(
        np.hypot(*(mesh.node_coords[anchor] - (load.location.x, load.location.y)))
    )
    if gap > np.hypot(mesh.dx, mesh.dy):
        # more than an element away from any active material: the load
        # would rest on void-stiffness elements and the system cannot
        # carry it
        raise SolverFailure(
            "singular_system",
            f"load at ({load.location.x:g}, {load.location.y:g}) lies "
            f"{gap:.3g} away from active material",
        )
    if load.distribution.kind == "nodal":
        return np.array([anchor])

    n = load.distribution.n
    boundary = _boundary_nodes(mesh)
    coords = mesh.node_coords[boundary]
    ax, ay = mesh.node_coords[anchor]

    spread_y_first = abs(load.force.y) >= abs(load.force.x)
    # spreading along x keeps y fixed and vice versa
    attempts = ["x", "y"] if spread_y_first else ["y", "x"]
    for axis in attempts:
        if axis == "x":
            on_line = np.abs(coords[:, 1] - ay) < 0.5 * mesh.dy
            along = np.abs(coords[:, 0] - ax)
            window = 1.5 * n * mesh.dx
        else:
            on_line = np.abs(coords[:, 0] - ax) < 0.5 * mesh.dx
            along = np.abs(coords[:, 1] - ay)
            window = 1.5 * n * mesh.dy
        cand = boundary[on_line & (along <= window)]
        if len(cand) >= n:
            dist = np.linalg.norm(mesh.node_coords[cand] - np.array([ax, ay]), axis=1)
            order = np.lexsort((cand, dist))
            return np.sort(cand[order[:n]])

    dist = np.linalg.norm(coords - np.array([ax, ay]), axis=1)
    order = np.lexsort((boundary, dist))
    return np.sort(boundary[order[: min(n, len(boundary))]])


def resolve_bcs(
    mesh: StructuredMesh,
    supports: tuple[SupportRegion, ...],
    loads: tuple[LoadRegion, ...],
) -> BoundaryConditions:
    tol = 1e-7 * max(mesh.geometry.width, mesh.geometry.height)
    fixed: list[int] = []
    support_nodes: list[int] = []
    for sup in supports:
        a = np.array([sup.segment.start.x, sup.segment.start.y])
        b = np.array([sup.segment.end.x, sup.segment.end.y])
        d = _segment_distance(mesh.node_coords, a, b)
        nodes = np.flatnonzero(d <= tol)
        if len(nodes) == 0:
            # degenerate or off-grid support: snap to the nearest node
            nodes = np.array([int(np.argmin(d))])
        support_nodes.extend(nodes.tolist())
        for node in nodes:
            if sup.fixed in ("x", "both"):
                fixed.append(2 * node)
            if sup.fixed in ("y", "both"):
                fixed.append(2 * node + 1)

    force = np.zeros(mesh.n_dof)
    load_nodes: list[int] = []
    for load in loads:
        nodes = _load_nodes(mesh, load)
        load_nodes.extend(nodes.tolist())
        share = 1.0 / len(nodes)
        for node in nodes:
            force[2 * node] += load.force.x * share
            force[2 * node + 1] += load.force.y * share

    return BoundaryConditions(
        fixed_dofs=np.unique(np.array(fixed, dtype=np.int64)),
        load=force,
        load_nodes=np.unique(np.array(load_nodes, dtype=np.int64)),
        support_nodes=np.unique(np.array(support_nodes, dtype=np.int64)),
    )


def simp_modulus(simp: SimpParams, rho_bar: np.ndarray, active: np.ndarray) -> np.ndarray:
    """Modified SIMP: E = emin + rho^penal (e0 - emin); voids stay at emin."""
    e = simp.emin + np.clip(rho_bar, 0.0, 1.0) ** simp.penal * (simp.e0 - simp.emin)
    e = np.where(active, e, simp.emin)
    return e


def _canonical_triplets(
    mesh: StructuredMesh, scale: np.ndarray, ke: np.ndarray, order: np.ndarray | None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-element triplets sorted by (row, col, element) for exact sums.

    The element-id tie-break makes the summation order independent of the
    order in which elements are visited, so permuting ``order`` cannot
    change the assembled matrix even in the last ulp.
    """
    elems = np.arange(mesh.n_elements) if order is None else np.asarray(order)
    edof = mesh.edof[elems]
    rows = np.repeat(edof, 8, axis=1).ravel()
    cols = np.tile(edof, (1, 8)).ravel()
    vals = (scale[elems, None, None] * ke[None, :, :]).ravel()
    eids = np.repeat(elems, 64)
    perm = np.lexsort((eids, cols, rows))
    return rows[perm], cols[perm], vals[perm]


def assemble_global(
    mesh: StructuredMesh,
    simp: SimpParams,
    rho_bar: np.ndarray,
    order: np.ndarray | None = None,
) -> sp.csr_matrix:
    """Assemble the global stiffness matrix (no boundary conditions)."""
    ke = element_stiffness(simp.nu, mesh.dx, mesh.dy)
    scale = simp_modulus(simp, rho_bar, mesh.active)
    rows, cols, vals = _canonical_triplets(mesh, scale, ke, order)
    key = rows * mesh.n_dof + cols
    first = np.flatnonzero(np.r_[True, np.diff(key) != 0])
    sums = np.add.reduceat(vals, first)
    return sp.csr_matrix(
        (sums, (rows[first], cols[first])), shape=(mesh.n_dof, mesh.n_dof)
    )


@dataclass
class GlobalSystem:
    """Assembled and constrained linear system K u = F.

    ``stiffness`` is reduced to free dofs; the residual contract is
    ``K u_free - F_free = 0``.  A direct factorization is kept for reuse by
    adjoint solves.
    """

    stiffness: sp.csr_matrix
    load: np.ndarray
    fixed_dofs: np.ndarray
    free_dofs: np.ndarray
    diagnostics: dict[str, Any] = field(default_factory=dict)
    _factor: Any = None

    def solve_free(self, rhs_free: np.ndarray) -> np.ndarray:
        """Solve K x = rhs over free dofs, reusing the stored factorization."""
        if not np.any(rhs_free):
            return np.zeros_like(rhs_free)
        if self._factor is not None:
            return self._factor(rhs_free)
        return _iterative_solve(self.stiffness, rhs_free)

    def expand(self, values_free: np.ndarray) -> np.ndarray:
        full = np.zeros(len(self.free_dofs) + len(self.fixed_dofs))
        full[self.free_dofs] = values_free
        return full


@dataclass(frozen=True)
class FemSolution:
    """Displacements plus the per-element quantities the rest needs."""

    u: np.ndarray                 # (ndof,)
    compliance: float
    element_energy: np.ndarray    # (ne,) u_e^T k0 u_e on unit modulus
    stress: np.ndarray            # (ne, 3) centroid (sx, sy, txy) on solid E0
    von_mises: np.ndarray         # (ne,)
    diagnostics: dict[str, Any]


def _iterative_solve(k: sp.csr_matrix, rhs: np.ndarray) -> np.ndarray:
    diag = k.diagonal()
    if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
        raise SolverFailure("singular_system", "non-positive diagonal in stiffness")
    m = spla.LinearOperator(k.shape, matvec=lambda v: v / diag)
    u, info = spla.cg(k, rhs, rtol=_CG_RTOL, maxiter=_CG_MAXITER, M=m)
    if info != 0:
        raise SolverFailure(
            "solver_no_convergence",
            f"conjugate gradient stalled after {_CG_MAXITER} iterations (info={info})",
        )
    return u


def solve_system(
    mesh: StructuredMesh,
    simp: SimpParams,
    rho_bar: np.ndarray,
    bcs: BoundaryConditions,
) -> GlobalSystem:
    """Assemble, constrain and factorize; direct solve with a CG fallback."""
    if len(bcs.fixed_dofs) == 0:
        raise SolverFailure(
            "singular_system", "no supports resolved; the structure floats"
        )
    k_full = assemble_global(mesh, simp, rho_bar)
    free = np.setdiff1d(np.arange(mesh.n_dof), bcs.fixed_dofs, assume_unique=False)
    k_free = k_full[free][:, free].tocsc()

    system = GlobalSystem(
        stiffness=k_free.tocsr(),
        load=bcs.load,
        fixed_dofs=bcs.fixed_dofs,
        free_dofs=free,
    )
    rhs = bcs.load[free]
    norm_rhs = float(np.linalg.norm(rhs))
    if norm_rhs == 0.0:
        system.diagnostics = {"method": "trivial", "residual": 0.0}
        system._factor = None
        return system

    u_free = None
    method = "direct"
    try:
        # symmetric-pattern ordering: markedly cheaper fills than the
        # unsymmetric default on these K = K^T systems
        lu = spla.splu(k_free, permc_spec="MMD_AT_PLUS_A")
        candidate = lu.solve(rhs)
        residual = float(np.linalg.norm(k_free @ candidate - rhs) / norm_rhs)
        if np.all(np.isfinite(candidate)) and residual <= _RESIDUAL_TOL:
            u_free = candidate
            system._factor = lu.solve
        else:
            method = "cg"
    except RuntimeError:
        method = "cg"

    if u_free is None:
        u_free = _iterative_solve(k_free.tocsr(), rhs)
        residual = float(np.linalg.norm(k_free @ u_free - rhs) / norm_rhs)
        if residual > 1e-6:
            raise SolverFailure(
                "solver_no_convergence", f"fallback residual {residual:.3e} too large"
            )

    system.diagnostics = {"method": method, "residual": residual}
    system.diagnostics["u_free"] = u_free
    return system


def assemble_and_solve(
    mesh: StructuredMesh,
    simp: SimpParams,
    rho_bar: np.ndarray,
    bcs: BoundaryConditions,
) -> tuple[GlobalSystem, FemSolution]:
    system = solve_system(mesh, simp, rho_bar, bcs)
    if "u_free" in system.diagnostics:
        u_free = system.diagnostics.pop("u_free")
        u = system.expand(u_free)
    else:
        u = np.zeros(mesh.n_dof)

    if not np.all(np.isfinite(u)):
        raise SolverFailure("nan_objective", "displacement field is not finite")

    compliance = float(bcs.load @ u)
    ue = u[mesh.edof]
    ke = element_stiffness(simp.nu, mesh.dx, mesh.dy)
    energy = np.einsum("ei,ij,ej->e", ue, ke, ue)

    d0 = elasticity_matrix(simp.nu, simp.e0)
    b0 = _b_matrix(0.0, 0.0, mesh.dx, mesh.dy)
    stress = ue @ (d0 @ b0).T
    sx, sy, txy = stress[:, 0], stress[:, 1], stress[:, 2]
    von_mises = np.sqrt(np.maximum(sx**2 + sy**2 - sx * sy + 3.0 * txy**2, 0.0))

    solution = FemSolution(
        u=u,
        compliance=compliance,
        element_energy=energy,
        stress=stress,
        von_mises=von_mises,
        diagnostics=dict(system.diagnostics),
    )
    return system, solution
