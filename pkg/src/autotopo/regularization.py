"""Density filtering and Heaviside projection.

The design chain is rho -> rho_tilde (hat-weight density filter) ->
rho_bar (smoothed tanh projection).  Gradients always travel the same
chain backwards: multiply by the projection derivative, then by the
filter transpose.  Inactive (void) elements map to themselves through the
filter and stay at zero through the projection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fem import StructuredMesh

STEEPENED_BETA_CAP = 128.0
_DEFAULT_SPACING = 50


@dataclass(frozen=True)
class FilterOperator:
    """Row-normalized hat-weight filter W with identity rows on voids."""

    matrix: sp.csr_matrix
    r_min: float

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return self.matrix @ rho

    def apply_transpose(self, grad: np.ndarray) -> np.ndarray:
        return self.matrix.T @ grad


def build_filter(mesh: StructuredMesh, r_min: float) -> FilterOperator:
    """Hat weights w = max(0, r_min - dist) between active centroids.

    Weights only depend on the centroid offset on a structured grid, so
    the matrix is built per offset instead of per element pair.
    """
    if r_min <= 0.0:
        raise ValueError("r_min must be positive")
    nx, ny = mesh.nx, mesh.ny
    mx = int(np.floor(r_min / mesh.dx))
    my = int(np.floor(r_min / mesh.dy))

    ex, ey = np.meshgrid(np.arange(nx), np.arange(ny))
    ex = ex.ravel()
    ey = ey.ravel()

    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    for ox in range(-mx, mx + 1):
        for oy in range(-my, my + 1):
            w = r_min - float(np.hypot(ox * mesh.dx, oy * mesh.dy))
            if w <= 0.0:
                continue
            valid = (
                (ex + ox >= 0) & (ex + ox < nx) & (ey + oy >= 0) & (ey + oy < ny)
            )
            src = ey[valid] * nx + ex[valid]
            dst = (ey[valid] + oy) * nx + (ex[valid] + ox)
            both_active = mesh.active[src] & mesh.active[dst]
            rows.append(src[both_active])
            cols.append(dst[both_active])
            vals.append(np.full(int(both_active.sum()), w))

    inactive = np.flatnonzero(~mesh.active)
    rows.append(inactive)
    cols.append(inactive)
    vals.append(np.ones(len(inactive)))

    matrix = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(mesh.n_elements, mesh.n_elements),
    ).tocsr()
    row_sums = np.asarray(matrix.sum(axis=1)).ravel()
    inv = sp.diags(1.0 / row_sums)
    return FilterOperator(matrix=(inv @ matrix).tocsr(), r_min=r_min)


def identity_filter(mesh: StructuredMesh) -> FilterOperator:
    """No-op filter used by the ablation runs."""
    return FilterOperator(matrix=sp.identity(mesh.n_elements, format="csr"), r_min=0.0)


def heaviside_project(rho_tilde: np.ndarray, beta: float, eta: float) -> np.ndarray:
    """Smoothed Heaviside pushing filtered densities toward 0/1.

    Exactly fixes 0 and 1 for every beta and tends to the identity as
    beta -> 0.
    """
    denom = np.tanh(beta * eta) + np.tanh(beta * (1.0 - eta))
    return (np.tanh(beta * eta) + np.tanh(beta * (rho_tilde - eta))) / denom


def projection_derivative(rho_tilde: np.ndarray, beta: float, eta: float) -> np.ndarray:
    """d rho_bar / d rho_tilde of :func:`heaviside_project`."""
    denom = np.tanh(beta * eta) + np.tanh(beta * (1.0 - eta))
    with np.errstate(over="ignore"):
        sech2 = 1.0 / np.cosh(beta * (rho_tilde - eta)) ** 2
    return beta * sech2 / denom


def continuation_step(
    schedule: tuple[tuple[int, float], ...], iteration: int
) -> float:
    """Beta active at ``iteration`` on a piecewise-constant schedule."""
    if iteration < 0:
        raise ValueError("iteration must be non-negative")
    beta = schedule[0][1]
    for start, value in schedule:
        if iteration >= start:
            beta = value
        else:
            break
    return beta


def steepen_schedule(
    schedule: tuple[tuple[int, float], ...], cap: float = STEEPENED_BETA_CAP
) -> tuple[tuple[int, float], ...]:
    """Halve the breakpoint spacing and continue doubling up to ``cap``.

    Used by the refinement path that reacts to designs left gray by a
    continuation that grew too gently.
    """
    if len(schedule) >= 2:
        spacing = min(b[0] - a[0] for a, b in zip(schedule, schedule[1:]))
    else:
        spacing = _DEFAULT_SPACING
    spacing = max(1, spacing // 2)

    beta = schedule[0][1]
    out = [(0, min(beta, cap))]
    iteration = 0
    while out[-1][1] < cap:
        iteration += spacing
        beta = min(beta * 2.0, cap)
        out.append((iteration, beta))
    return tuple(out)


@dataclass(frozen=True)
class DensityField:
    """Raw design variables with their filtered and projected companions."""

    rho: np.ndarray
    rho_tilde: np.ndarray
    rho_bar: np.ndarray


class RegularizationChain:
    """Bundles filter + projection so callers cannot skip one of the two."""

    def __init__(self, filter_op: FilterOperator, eta: float):
        self.filter = filter_op
        self.eta = eta

    def forward(self, rho: np.ndarray, beta: float) -> DensityField:
        rho_tilde = self.filter.apply(rho)
        rho_bar = heaviside_project(rho_tilde, beta, self.eta)
        return DensityField(rho=rho, rho_tilde=rho_tilde, rho_bar=rho_bar)

    def backward(
        self, grad_rho_bar: np.ndarray, field: DensityField, beta: float
    ) -> np.ndarray:
        """Chain d/d rho_bar back to d/d rho."""
        inner = grad_rho_bar * projection_derivative(field.rho_tilde, beta, self.eta)
        return self.filter.apply_transpose(inner)
