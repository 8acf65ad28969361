"""Rendering of density fields and convergence histories to PNG files.

All rendering is non-interactive (Agg) and deterministic: fixed figure
sizes, fixed dpi, no timestamps in metadata.  Densities follow the
usual grayscale convention, 0 -> white, 1 -> black; void elements
render white.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .fem import StructuredMesh  # noqa: E402
from .runloop import HistoryRow  # noqa: E402

_DPI = 100


def save_density_png(mesh: StructuredMesh, rho_bar: np.ndarray, path: str | Path):
    """Write the projected density field as a grayscale PNG."""
    grid = rho_bar.reshape(mesh.ny, mesh.nx)
    plt.imsave(
        str(path),
        grid,
        cmap="Greys",
        vmin=0.0,
        vmax=1.0,
        origin="lower",
        dpi=_DPI,
    )


def save_convergence_png(
    history: list[HistoryRow], path: str | Path, constraint_labels: tuple[str, ...] = ()
):
    """Objective and constraint trajectories over iterations."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0), dpi=_DPI)
    iterations = [row.iteration for row in history]
    ax.plot(iterations, [row.objective for row in history], color="black", label="objective")
    ax.set_xlabel("iteration")
    ax.set_ylabel("objective")

    n_constraints = len(history[0].constraints) if history else 0
    if n_constraints:
        twin = ax.twinx()
        for k in range(n_constraints):
            label = (
                constraint_labels[k] if k < len(constraint_labels) else f"constraint {k}"
            )
            twin.plot(
                iterations,
                [row.constraints[k] for row in history],
                linestyle="--",
                label=label,
            )
        twin.set_ylabel("constraint value")
        lines, labels = ax.get_legend_handles_labels()
        tlines, tlabels = twin.get_legend_handles_labels()
        ax.legend(lines + tlines, labels + tlabels, loc="upper right", fontsize=8)
    elif history:
        ax.legend(loc="upper right", fontsize=8)

    # mark continuation jumps so objective discontinuities read as such
    for prev, row in zip(history, history[1:]):
        if row.beta != prev.beta:
            ax.axvline(row.iteration, color="gray", linewidth=0.6, alpha=0.5)

    fig.tight_layout()
    fig.savefig(str(path))
    plt.close(fig)
