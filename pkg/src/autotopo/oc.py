"""Optimality-criteria design update with a projected-volume bisection.

The multiplicative update x * sqrt(-df / (lambda * dv)) is clamped by the
move limit and the [0, 1] box; lambda is bisected until the volume of the
*projected* candidate hits the bound, so every iterate satisfies the
volume constraint at the current beta.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import UpdateFailure

VOLUME_TOL = 1e-4
_LAMBDA_SEED = 1e-9
_LAMBDA_CAP = 1e14
_MAX_BISECTIONS = 256


def oc_update(
    rho: np.ndarray,
    dobj: np.ndarray,
    dvol: np.ndarray,
    move: float,
    volfrac: float,
    projected_volume: Callable[[np.ndarray], float],
    volume_tol: float = VOLUME_TOL,
) -> tuple[np.ndarray, float]:
    """One OC step over the active design variables.

    ``projected_volume`` maps a candidate raw density vector to the volume
    fraction of its filtered + projected companion.
    """
    if not (np.all(np.isfinite(dobj)) and np.all(np.isfinite(dvol))):
        raise UpdateFailure("oc_degenerate_gradient", "non-finite gradients")
    # compliance-type gradients are non-positive; clip stray positives
    dc = np.minimum(dobj, 0.0)
    dv = np.maximum(dvol, 1e-30)

    def candidate(lam: float) -> np.ndarray:
        # the floor keeps the ratio finite for lam -> 0, where the step
        # saturates at the upper move limit anyway
        step = rho * np.sqrt(-dc / (max(lam, 1e-30) * dv))
        lower = np.maximum(rho - move, 0.0)
        upper = np.minimum(rho + move, 1.0)
        return np.clip(step, lower, upper)

    lo = 0.0
    hi = _LAMBDA_SEED
    while projected_volume(candidate(hi)) > volfrac:
        hi *= 10.0
        if hi > _LAMBDA_CAP:
            raise UpdateFailure(
                "oc_bisection_failure",
                "no multiplier brackets the volume bound (degenerate gradients)",
            )
    if projected_volume(candidate(lo)) < volfrac - volume_tol:
        raise UpdateFailure(
            "oc_bisection_failure",
            "volume bound unreachable even with all moves upward",
        )

    lam = hi
    new_rho = candidate(lam)
    for _ in range(_MAX_BISECTIONS):
        lam = 0.5 * (lo + hi)
        new_rho = candidate(lam)
        vol = projected_volume(new_rho)
        if abs(vol - volfrac) <= volume_tol:
            return new_rho, lam
        if vol > volfrac:
            lo = lam
        else:
            hi = lam
    raise UpdateFailure(
        "oc_bisection_failure", "bisection failed to settle the volume bound"
    )
