"""Fault injection for exercising the correction loops.

A fault plan corrupts the first formulation (misplaced loads, a wrong
constraint, a filter radius below the mesh size, a flat projection
schedule) or makes the runner fail with chosen error codes.  Spec
corruptions apply once — the corrected formulation that comes back
through a refinement loop is left alone, so a session either heals or
aborts on its own merits.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from ..problem import (
    ConstraintSpec,
    LoadRegion,
    Point,
    ProblemSpec,
)

SHRUNK_R_MIN_FACTOR = 0.4
FLAT_BETA = ((0, 1.0),)
WRONG_CONSTRAINT = ConstraintSpec(kind="pnorm_stress_limit", bound=2.0)


@dataclass
class FaultPlan:
    misplace_load: bool = False
    load_into_void: bool = False
    wrong_constraint: bool = False
    shrink_r_min: bool = False
    gentle_beta: bool = False
    kernel_failures: tuple[str, ...] = ()
    disabled_checks: frozenset[str] = frozenset()
    _spec_corrupted: bool = field(default=False, init=False, repr=False)
    _kernel_cursor: int = field(default=0, init=False, repr=False)

    def next_kernel_failure(self) -> str | None:
        if self._kernel_cursor >= len(self.kernel_failures):
            return None
        code = self.kernel_failures[self._kernel_cursor]
        self._kernel_cursor += 1
        return code

    def describe(self) -> list[str]:
        active = []
        if self.misplace_load:
            active.append("misplaced load")
        if self.load_into_void:
            active.append("load inside a void")
        if self.wrong_constraint:
            active.append("wrong constraint kind")
        if self.shrink_r_min:
            active.append("filter radius below element size")
        if self.gentle_beta:
            active.append("flat projection schedule")
        for code in self.kernel_failures:
            active.append(f"forced kernel failure: {code}")
        return active


def _moved_load(load: LoadRegion, location: Point) -> LoadRegion:
    return dataclasses.replace(load, location=location)


def corrupt_spec(spec: ProblemSpec, plan: FaultPlan) -> ProblemSpec:
    """Apply the plan's one-shot spec corruptions (first formulation only)."""
    if plan._spec_corrupted:
        return spec
    plan._spec_corrupted = True

    if plan.misplace_load:
        load = spec.loads[0]
        wrong = Point(load.location.x / 2, load.location.y)
        spec = dataclasses.replace(
            spec, loads=(_moved_load(load, wrong),) + spec.loads[1:]
        )
    if plan.load_into_void:
        if not spec.geometry.void_regions:
            raise ValueError("load_into_void needs a geometry with a void region")
        void = spec.geometry.void_regions[0]
        center = Point(
            (void.x_min + void.x_max) / 2, (void.y_min + void.y_max) / 2
        )
        load = spec.loads[0]
        spec = dataclasses.replace(
            spec, loads=(_moved_load(load, center),) + spec.loads[1:]
        )
    if plan.wrong_constraint:
        spec = dataclasses.replace(spec, constraints=(WRONG_CONSTRAINT,))
    if plan.shrink_r_min:
        shrunk = SHRUNK_R_MIN_FACTOR * spec.geometry.element_size()
        spec = dataclasses.replace(
            spec,
            regularization=dataclasses.replace(spec.regularization, r_min=shrunk),
        )
    if plan.gentle_beta:
        spec = dataclasses.replace(
            spec,
            regularization=dataclasses.replace(
                spec.regularization, beta_schedule=FLAT_BETA
            ),
        )
    return spec
