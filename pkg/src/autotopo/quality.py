"""Design quality metrics for projected density fields.

All metrics operate on the projected (physical) densities laid out on the
structured mesh; void elements are excluded everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import BoundaryConditions, StructuredMesh

GRAYNESS_LIMIT = 0.15
CHECKERBOARD_LIMIT = 0.02
_CHECKER_THRESHOLD = 0.5
_CONNECT_THRESHOLD = 0.3


def grayness(mesh: StructuredMesh, rho_bar: np.ndarray) -> float:
    """Non-discreteness measure: mean of 4*rho*(1-rho) over active elements.

    0 for a fully black/white design, 1 for uniform 0.5 gray.
    """
    rho = rho_bar[mesh.active]
    return float(np.sum(4.0 * rho * (1.0 - rho)) / mesh.n_active)


def _density_grid(mesh: StructuredMesh, rho_bar: np.ndarray) -> np.ndarray:
    """Densities as an (ny, nx) grid with NaN in void elements."""
    grid = rho_bar.reshape(mesh.ny, mesh.nx).astype(float).copy()
    grid[~mesh.active.reshape(mesh.ny, mesh.nx)] = np.nan
    return grid


def checkerboard_score(mesh: StructuredMesh, rho_bar: np.ndarray) -> float:
    """Fraction of interior vertices in a 2x2 diagonal-alternating pattern.

    A vertex counts when its four surrounding elements, thresholded at
    0.5, form either solid/void diagonal arrangement.  Vertices touching
    void (inactive) elements are not eligible.
    """
    grid = _density_grid(mesh, rho_bar)
    if mesh.nx < 2 or mesh.ny < 2:
        return 0.0
    quad = np.stack(
        [grid[:-1, :-1], grid[:-1, 1:], grid[1:, :-1], grid[1:, 1:]]
    )  # (4, ny-1, nx-1): sw, se, nw, ne around each interior vertex
    eligible = np.all(np.isfinite(quad), axis=0)
    if not np.any(eligible):
        return 0.0
    solid = quad >= _CHECKER_THRESHOLD
    sw, se, nw, ne = solid
    pattern = (sw & ne & ~se & ~nw) | (se & nw & ~sw & ~ne)
    return float(np.sum(pattern & eligible) / np.sum(eligible))


def _flood(solid: np.ndarray, seeds: list[tuple[int, int]]) -> np.ndarray:
    """4-connected reachability over a boolean grid from seed cells."""
    ny, nx = solid.shape
    reached = np.zeros_like(solid)
    stack = [s for s in seeds if 0 <= s[0] < ny and 0 <= s[1] < nx and solid[s]]
    for s in stack:
        reached[s] = True
    while stack:
        iy, ix = stack.pop()
        for jy, jx in ((iy - 1, ix), (iy + 1, ix), (iy, ix - 1), (iy, ix + 1)):
            if 0 <= jy < ny and 0 <= jx < nx and solid[jy, jx] and not reached[jy, jx]:
                reached[jy, jx] = True
                stack.append((jy, jx))
    return reached


def _node_cells(mesh: StructuredMesh, node: int) -> list[tuple[int, int]]:
    """Grid indices of the up-to-four elements sharing a node."""
    iy, ix = divmod(node, mesh.nx + 1)
    return [
        (ey, ex)
        for ey in (iy - 1, iy)
        for ex in (ix - 1, ix)
        if 0 <= ey < mesh.ny and 0 <= ex < mesh.nx
    ]


@dataclass(frozen=True)
class ConnectivityReport:
    connected: bool
    load_cells: int
    support_cells: int


def connectivity_check(
    mesh: StructuredMesh,
    rho_bar: np.ndarray,
    bcs: BoundaryConditions,
    threshold: float = _CONNECT_THRESHOLD,
) -> ConnectivityReport:
    """Whether solid material joins every load node to some support node.

    Solid means projected density >= ``threshold``; adjacency is
    4-connected.
    """
    grid = _density_grid(mesh, rho_bar)
    solid = np.nan_to_num(grid, nan=0.0) >= threshold

    support_cells: set[tuple[int, int]] = set()
    for node in bcs.support_nodes:
        support_cells.update(c for c in _node_cells(mesh, node) if solid[c])

    reached = _flood(solid, sorted(support_cells))
    connected = True
    load_cells = 0
    for node in bcs.load_nodes:
        cells = [c for c in _node_cells(mesh, node) if solid[c]]
        load_cells += len(cells)
        if not cells or not any(reached[c] for c in cells):
            connected = False
    if not bcs.load_nodes.size or not support_cells:
        connected = False
    return ConnectivityReport(
        connected=connected,
        load_cells=load_cells,
        support_cells=len(support_cells),
    )
