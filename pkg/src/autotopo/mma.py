"""Method of moving asymptotes with a dual-bisection subproblem solver.

Standard separable MMA approximation: asymptotes start at +/- 0.5 of the
variable range and adapt with the usual oscillation rule (shrink 0.7,
grow 1.2).  The convex subproblem is solved through its dual; for each
multiplier the one-dimensional dual condition is bisected, and multiple
constraints are handled by cyclic sweeps.  Multipliers are capped so an
infeasible subproblem yields the least-infeasible primal point instead of
diverging, mirroring the role of elastic variables.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UpdateFailure

ASY_INIT = 0.5
ASY_SHRINK = 0.7
ASY_GROW = 1.2
_ALBEFA = 0.1
_RAA0 = 1e-5
_LAMBDA_CAP = 1e9
_BISECTIONS = 80
_SWEEPS = 64


@dataclass
class MMAState:
    """Carries asymptotes and the two previous iterates between updates."""

    low: np.ndarray | None = None
    upp: np.ndarray | None = None
    x_prev: np.ndarray | None = None
    x_prev2: np.ndarray | None = None
    iteration: int = 0
    lam: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _update_asymptotes(
    state: MMAState, x: np.ndarray, xmin: np.ndarray, xmax: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    span = np.maximum(xmax - xmin, 1e-5)
    if state.iteration <= 2 or state.x_prev is None or state.x_prev2 is None:
        low = x - ASY_INIT * span
        upp = x + ASY_INIT * span
    else:
        osc = (x - state.x_prev) * (state.x_prev - state.x_prev2)
        factor = np.ones_like(x)
        factor[osc < 0.0] = ASY_SHRINK
        factor[osc > 0.0] = ASY_GROW
        low = x - factor * (state.x_prev - state.low)
        upp = x + factor * (state.upp - state.x_prev)
    low = np.clip(low, x - 10.0 * span, x - 0.01 * span)
    upp = np.clip(upp, x + 0.01 * span, x + 10.0 * span)
    return low, upp


def mma_update(
    state: MMAState,
    x: np.ndarray,
    df0: np.ndarray,
    fval: np.ndarray,
    dfdx: np.ndarray,
    xmin: np.ndarray,
    xmax: np.ndarray,
    move: float,
) -> np.ndarray:
    """One MMA step; ``fval``/``dfdx`` hold the inequality constraints g <= 0."""
    if not (
        np.all(np.isfinite(df0))
        and np.all(np.isfinite(fval))
        and np.all(np.isfinite(dfdx))
    ):
        raise UpdateFailure("mma_degenerate_gradient", "non-finite subproblem data")

    state.iteration += 1
    m = len(fval)
    span = np.maximum(xmax - xmin, 1e-5)
    low, upp = _update_asymptotes(state, x, xmin, xmax)

    alfa = np.maximum.reduce([xmin, low + _ALBEFA * (x - low), x - move * span])
    beta = np.minimum.reduce([xmax, upp - _ALBEFA * (upp - x), x + move * span])
    alfa = np.minimum(alfa, x)  # keep the current point inside the box
    beta = np.maximum(beta, x)

    ux = upp - x
    xl = x - low
    xmami_inv = 1.0 / span

    def split(grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        plus = np.maximum(grad, 0.0)
        minus = np.maximum(-grad, 0.0)
        extra = 0.001 * (plus + minus) + _RAA0 * xmami_inv
        return (plus + extra) * ux**2, (minus + extra) * xl**2

    p0, q0 = split(df0)
    p = np.zeros((m, len(x)))
    q = np.zeros((m, len(x)))
    for i in range(m):
        p[i], q[i] = split(dfdx[i])
    b = p @ (1.0 / ux) + q @ (1.0 / xl) - fval

    def primal(lam: np.ndarray) -> np.ndarray:
        plam = p0 + lam @ p
        qlam = q0 + lam @ q
        sp = np.sqrt(plam)
        sq = np.sqrt(qlam)
        xs = (low * sp + upp * sq) / (sp + sq)
        return np.clip(xs, alfa, beta)

    def residual(lam: np.ndarray, i: int) -> float:
        xs = primal(lam)
        return float(p[i] @ (1.0 / (upp - xs)) + q[i] @ (1.0 / (xs - low)) - b[i])

    lam = np.zeros(m)
    if len(state.lam) == m:
        lam = state.lam.copy()
    for _ in range(_SWEEPS):
        previous = lam.copy()
        for i in range(m):
            lam[i] = 0.0
            if residual(lam, i) <= 0.0:
                continue
            hi = 1.0
            while residual(_with(lam, i, hi), i) > 0.0:
                hi *= 2.0
                if hi > _LAMBDA_CAP:
                    break
            hi = min(hi, _LAMBDA_CAP)
            lo = 0.0
            for _ in range(_BISECTIONS):
                mid = 0.5 * (lo + hi)
                if residual(_with(lam, i, mid), i) > 0.0:
                    lo = mid
                else:
                    hi = mid
            lam[i] = hi
        if m <= 1 or np.max(np.abs(lam - previous)) <= 1e-12 * (1.0 + np.max(lam)):
            break

    state.lam = lam
    x_new = primal(lam)
    state.x_prev2 = state.x_prev
    state.x_prev = x.copy()
    state.low = low
    state.upp = upp
    return x_new


def _with(lam: np.ndarray, i: int, value: float) -> np.ndarray:
    out = lam.copy()
    out[i] = value
    return out
