"""Typed problem model for density-based topology optimization.

A :class:`ProblemSpec` captures everything a run needs: geometry and mesh
resolution, boundary conditions, the objective, constraints, and the
numerical parameters of the interpolation / regularization / optimizer
stack.  Specs are immutable; agents produce corrected copies instead of
mutating in place, which keeps the session audit trail meaningful.

The JSON wire format mirrors the dataclass layout one-to-one so that
``parse_problem_file(serialize_problem(spec))`` round-trips exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Literal

from .errors import ProblemFormatError

GEOMETRY_KINDS = ("rectangle", "l_bracket")
OBJECTIVE_KINDS = ("compliance", "pnorm_stress")
# Only volume_fraction may appear in user-facing problem files.  The
# stress-limit kind exists so that a misformulated constraint can still be
# represented, executed and then caught downstream; the parser rejects it.
USER_CONSTRAINT_KINDS = ("volume_fraction",)
CONSTRAINT_KINDS = ("volume_fraction", "pnorm_stress_limit")
PROVENANCES = ("user", "scientist", "validator_corrected")

# Heaviside continuation: beta = 1 until iteration 50, doubled every 50
# iterations, capped at 64.
DEFAULT_BETA_SCHEDULE: tuple[tuple[int, float], ...] = (
    (0, 1.0),
    (50, 2.0),
    (100, 4.0),
    (150, 8.0),
    (200, 16.0),
    (250, 32.0),
    (300, 64.0),
)

# Filter radius applied when a problem file omits it, as a multiple of the
# larger element edge.
DEFAULT_RMIN_FACTOR = 2.0

_BENCHMARK_NAMES = ("cantilever", "mbb_mid_right", "l_bracket_stress")


@dataclass(frozen=True)
class Point:
    x: float
    y: float


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle, used for void regions."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ProblemFormatError("", "rectangle must have positive extent")

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


@dataclass(frozen=True)
class Segment:
    start: Point
    end: Point


@dataclass(frozen=True)
class DomainGeometry:
    """Rectangular design domain with optional rectangular voids.

    ``kind == "l_bracket"`` is a rectangle with exactly one void anchored
    to the upper-right corner; elements whose centroid falls in a void are
    inactive (kept in the mesh at minimal stiffness, excluded from design).
    """

    kind: Literal["rectangle", "l_bracket"]
    width: float
    height: float
    nx: int
    ny: int
    void_regions: tuple[Rect, ...] = ()

    def __post_init__(self):
        if self.kind not in GEOMETRY_KINDS:
            raise ProblemFormatError("geometry.kind", f"unknown kind {self.kind!r}")
        if self.width <= 0 or self.height <= 0:
            raise ProblemFormatError("geometry", "width and height must be positive")
        if self.nx < 1 or self.ny < 1:
            raise ProblemFormatError("geometry", "nx and ny must be at least 1")
        for i, rect in enumerate(self.void_regions):
            inside = (
                0.0 <= rect.x_min
                and rect.x_max <= self.width
                and 0.0 <= rect.y_min
                and rect.y_max <= self.height
            )
            if not inside:
                raise ProblemFormatError(
                    f"geometry.void_regions[{i}]", "void must lie inside the domain"
                )
        if self.kind == "l_bracket":
            if len(self.void_regions) != 1:
                raise ProblemFormatError(
                    "geometry.void_regions",
                    "l_bracket requires exactly one void region",
                )
            rect = self.void_regions[0]
            anchored = (
                math.isclose(rect.x_max, self.width)
                and math.isclose(rect.y_max, self.height)
                and rect.x_min > 0.0
                and rect.y_min > 0.0
            )
            if not anchored:
                raise ProblemFormatError(
                    "geometry.void_regions[0]",
                    "l_bracket void must fill the upper-right corner",
                )

    @property
    def dx(self) -> float:
        return self.width / self.nx

    @property
    def dy(self) -> float:
        return self.height / self.ny

    def element_size(self) -> float:
        return max(self.dx, self.dy)

    def aspect_ratio(self) -> float:
        """Element edge ratio dx/dy; well-shaped meshes keep it in [0.5, 2]."""
        return self.dx / self.dy

    def in_void(self, x: float, y: float) -> bool:
        return any(rect.contains(x, y) for rect in self.void_regions)


@dataclass(frozen=True)
class SupportRegion:
    """Fixed displacement components along an axis-aligned edge segment."""

    segment: Segment
    fixed: Literal["x", "y", "both"]

    def __post_init__(self):
        if self.fixed not in ("x", "y", "both"):
            raise ProblemFormatError("supports", f"unknown fixed spec {self.fixed!r}")


@dataclass(frozen=True)
class LoadDistribution:
    kind: Literal["nodal", "distributed_over_n_nodes"]
    n: int = 3

    def __post_init__(self):
        if self.kind not in ("nodal", "distributed_over_n_nodes"):
            raise ProblemFormatError("loads", f"unknown distribution {self.kind!r}")
        if self.kind == "distributed_over_n_nodes" and self.n < 1:
            raise ProblemFormatError("loads", "distribution width must be >= 1")


DEFAULT_DISTRIBUTION = LoadDistribution("distributed_over_n_nodes", 3)


@dataclass(frozen=True)
class LoadRegion:
    location: Point
    force: Point
    distribution: LoadDistribution = DEFAULT_DISTRIBUTION

    def __post_init__(self):
        if not (math.isfinite(self.force.x) and math.isfinite(self.force.y)):
            raise ProblemFormatError("loads", "force components must be finite")


@dataclass(frozen=True)
class ObjectiveSpec:
    kind: Literal["compliance", "pnorm_stress"]

    def __post_init__(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise ProblemFormatError("objective.kind", f"unknown objective {self.kind!r}")


@dataclass(frozen=True)
class ConstraintSpec:
    """Inequality constraint.

    ``volume_fraction``: mean projected density over active elements must
    not exceed ``bound``.  ``pnorm_stress_limit`` keeps the aggregated
    relaxed stress below ``bound`` times its iteration-0 value; it is not a
    user-facing option.
    """

    kind: str
    bound: float

    def __post_init__(self):
        if self.kind not in CONSTRAINT_KINDS:
            raise ProblemFormatError("constraints", f"unknown constraint {self.kind!r}")
        if self.kind == "volume_fraction" and not 0.0 < self.bound < 1.0:
            raise ProblemFormatError(
                "constraints", "volume fraction bound must lie in (0, 1)"
            )
        if self.kind == "pnorm_stress_limit" and self.bound <= 0.0:
            raise ProblemFormatError("constraints", "stress bound must be positive")


@dataclass(frozen=True)
class SimpParams:
    """Modified SIMP interpolation E = emin + rho^penal * (e0 - emin)."""

    penal: float = 3.0
    e0: float = 1.0
    emin: float = 1e-9
    nu: float = 0.3

    def __post_init__(self):
        if self.penal < 1.0:
            raise ProblemFormatError("simp.penal", "penalization must be >= 1")
        if not 0.0 <= self.emin < self.e0:
            raise ProblemFormatError("simp", "need 0 <= emin < e0")
        if not 0.0 < self.nu < 0.5:
            raise ProblemFormatError("simp.nu", "Poisson ratio must lie in (0, 0.5)")


@dataclass(frozen=True)
class RegularizationParams:
    """Density filter radius plus tanh projection threshold and schedule.

    ``beta_schedule`` is a piecewise-constant continuation: breakpoints of
    (first iteration, beta), iteration 0 first, betas strictly increasing.
    """

    r_min: float
    eta: float = 0.5
    beta_schedule: tuple[tuple[int, float], ...] = DEFAULT_BETA_SCHEDULE

    def __post_init__(self):
        if self.r_min <= 0.0:
            raise ProblemFormatError("regularization.r_min", "radius must be positive")
        if not 0.0 < self.eta < 1.0:
            raise ProblemFormatError("regularization.eta", "threshold must lie in (0, 1)")
        sched = tuple((int(it), float(b)) for it, b in self.beta_schedule)
        if not sched:
            raise ProblemFormatError("regularization.beta_schedule", "schedule is empty")
        if sched[0][0] != 0:
            raise ProblemFormatError(
                "regularization.beta_schedule", "first breakpoint must be iteration 0"
            )
        iters = [it for it, _ in sched]
        betas = [b for _, b in sched]
        if any(b <= 0 for b in betas):
            raise ProblemFormatError("regularization.beta_schedule", "betas must be positive")
        if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
            raise ProblemFormatError(
                "regularization.beta_schedule", "betas must be strictly increasing"
            )
        if any(i2 <= i1 for i1, i2 in zip(iters, iters[1:])):
            raise ProblemFormatError(
                "regularization.beta_schedule", "iterations must be strictly increasing"
            )
        object.__setattr__(self, "beta_schedule", sched)

    @property
    def final_beta(self) -> float:
        return self.beta_schedule[-1][1]


@dataclass(frozen=True)
class StressParams:
    """p-norm aggregation of relaxed von Mises stress."""

    pnorm_exponent: float = 8.0
    relaxation_exponent: float = 0.5

    def __post_init__(self):
        if self.pnorm_exponent < 1.0:
            raise ProblemFormatError("stress.pnorm_exponent", "exponent must be >= 1")
        if not 0.0 < self.relaxation_exponent <= 1.0:
            raise ProblemFormatError(
                "stress.relaxation_exponent", "relaxation exponent must lie in (0, 1]"
            )


@dataclass(frozen=True)
class OptimizerParams:
    method: Literal["oc", "mma"] = "oc"
    move_limit: float = 0.2
    max_iterations: int = 300
    change_tolerance: float = 0.01
    objective_window: int = 10

    def __post_init__(self):
        if self.method not in ("oc", "mma"):
            raise ProblemFormatError("optimizer.method", f"unknown method {self.method!r}")
        if not 0.0 < self.move_limit <= 0.5:
            raise ProblemFormatError("optimizer.move_limit", "move limit must lie in (0, 0.5]")
        if self.max_iterations < 1:
            raise ProblemFormatError("optimizer.max_iterations", "must be >= 1")
        if self.change_tolerance <= 0.0:
            raise ProblemFormatError("optimizer.change_tolerance", "must be positive")
        if self.objective_window < 1:
            raise ProblemFormatError("optimizer.objective_window", "must be >= 1")


@dataclass(frozen=True)
class ProblemSpec:
    """Complete, immutable description of one optimization problem."""

    geometry: DomainGeometry
    supports: tuple[SupportRegion, ...]
    loads: tuple[LoadRegion, ...]
    objective: ObjectiveSpec
    constraints: tuple[ConstraintSpec, ...]
    simp: SimpParams = SimpParams()
    regularization: RegularizationParams | None = None
    stress: StressParams | None = None
    optimizer: OptimizerParams = OptimizerParams()
    provenance: str = "user"
    num_inequality: int = field(init=False, default=0)
    num_equality: int = field(init=False, default=1)

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ProblemFormatError("provenance", f"unknown provenance {self.provenance!r}")
        if not self.supports:
            raise ProblemFormatError("supports", "at least one support is required")
        if not self.loads:
            raise ProblemFormatError("loads", "at least one load is required")
        if self.objective.kind == "compliance" and not self.constraints:
            raise ProblemFormatError(
                "constraints", "compliance minimization needs at least one constraint"
            )
        if self.objective.kind == "pnorm_stress" and self.stress is None:
            raise ProblemFormatError("stress", "pnorm_stress objective needs stress params")
        if self.objective.kind == "compliance" and self.stress is not None:
            raise ProblemFormatError("stress", "stress params only apply to pnorm_stress")
        if self.regularization is None:
            r_min = DEFAULT_RMIN_FACTOR * self.geometry.element_size()
            object.__setattr__(self, "regularization", RegularizationParams(r_min=r_min))
        for name, pt in self._boundary_points():
            inside = (
                -1e-12 <= pt.x <= self.geometry.width + 1e-12
                and -1e-12 <= pt.y <= self.geometry.height + 1e-12
            )
            if not inside:
                raise ProblemFormatError(name, "position lies outside the domain")
        object.__setattr__(self, "num_inequality", len(self.constraints))
        object.__setattr__(self, "num_equality", 1)

    def _boundary_points(self) -> Iterable[tuple[str, Point]]:
        for i, sup in enumerate(self.supports):
            yield f"supports[{i}].start", sup.segment.start
            yield f"supports[{i}].end", sup.segment.end
        for i, load in enumerate(self.loads):
            yield f"loads[{i}].location", load.location

    def volume_bound(self) -> float | None:
        for c in self.constraints:
            if c.kind == "volume_fraction":
                return c.bound
        return None


@dataclass(frozen=True)
class FieldChange:
    """One difference between two specs: dotted path, old value, new value."""

    path: str
    old: Any
    new: Any


# ---------------------------------------------------------------------------
# serialization


def _point_dict(p: Point) -> dict:
    return {"x": p.x, "y": p.y}


def to_dict(spec: ProblemSpec) -> dict:
    out: dict[str, Any] = {
        "geometry": {
            "kind": spec.geometry.kind,
            "width": spec.geometry.width,
            "height": spec.geometry.height,
            "nx": spec.geometry.nx,
            "ny": spec.geometry.ny,
            "void_regions": [
                {"x_min": r.x_min, "y_min": r.y_min, "x_max": r.x_max, "y_max": r.y_max}
                for r in spec.geometry.void_regions
            ],
        },
        "supports": [
            {
                "start": _point_dict(s.segment.start),
                "end": _point_dict(s.segment.end),
                "fixed": s.fixed,
            }
            for s in spec.supports
        ],
        "loads": [
            {
                "location": _point_dict(l.location),
                "force": _point_dict(l.force),
                "distribution": {"kind": l.distribution.kind, "n": l.distribution.n},
            }
            for l in spec.loads
        ],
        "objective": {"kind": spec.objective.kind},
        "constraints": [{"kind": c.kind, "bound": c.bound} for c in spec.constraints],
        "simp": {
            "penal": spec.simp.penal,
            "e0": spec.simp.e0,
            "emin": spec.simp.emin,
            "nu": spec.simp.nu,
        },
        "regularization": {
            "r_min": spec.regularization.r_min,
            "eta": spec.regularization.eta,
            "beta_schedule": [[it, b] for it, b in spec.regularization.beta_schedule],
        },
        "optimizer": {
            "method": spec.optimizer.method,
            "move_limit": spec.optimizer.move_limit,
            "max_iterations": spec.optimizer.max_iterations,
            "change_tolerance": spec.optimizer.change_tolerance,
            "objective_window": spec.optimizer.objective_window,
        },
        "num_inequality": spec.num_inequality,
        "num_equality": spec.num_equality,
        "provenance": spec.provenance,
    }
    if spec.stress is not None:
        out["stress"] = {
            "pnorm_exponent": spec.stress.pnorm_exponent,
            "relaxation_exponent": spec.stress.relaxation_exponent,
        }
    return out


def serialize_problem(spec: ProblemSpec) -> str:
    return json.dumps(to_dict(spec), indent=2) + "\n"


# ---------------------------------------------------------------------------
# parsing


def _expect_mapping(value: Any, path: str) -> dict:
    if not isinstance(value, dict):
        raise ProblemFormatError(path, "expected an object")
    return value


def _expect_list(value: Any, path: str) -> list:
    if not isinstance(value, list):
        raise ProblemFormatError(path, "expected a list")
    return value


def _get(d: dict, key: str, path: str) -> Any:
    if key not in d:
        raise ProblemFormatError(f"{path}.{key}" if path else key, "missing field")
    return d[key]


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ProblemFormatError(path, "expected a number")
    if not math.isfinite(value):
        raise ProblemFormatError(path, "must be finite")
    return float(value)


def _integer(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ProblemFormatError(path, "expected an integer")
    return value


def _string(value: Any, path: str) -> str:
    if not isinstance(value, str):
        raise ProblemFormatError(path, "expected a string")
    return value


def _known_keys(d: dict, allowed: tuple[str, ...], path: str) -> None:
    extra = sorted(set(d) - set(allowed))
    if extra:
        where = f"{path}.{extra[0]}" if path else extra[0]
        raise ProblemFormatError(where, "unknown field")


def _parse_point(value: Any, path: str) -> Point:
    d = _expect_mapping(value, path)
    _known_keys(d, ("x", "y"), path)
    return Point(_number(_get(d, "x", path), f"{path}.x"), _number(_get(d, "y", path), f"{path}.y"))


def _parse_geometry(value: Any) -> DomainGeometry:
    d = _expect_mapping(value, "geometry")
    _known_keys(d, ("kind", "width", "height", "nx", "ny", "void_regions"), "geometry")
    voids = []
    for i, rv in enumerate(_expect_list(d.get("void_regions", []), "geometry.void_regions")):
        rd = _expect_mapping(rv, f"geometry.void_regions[{i}]")
        p = f"geometry.void_regions[{i}]"
        _known_keys(rd, ("x_min", "y_min", "x_max", "y_max"), p)
        try:
            voids.append(
                Rect(
                    _number(_get(rd, "x_min", p), f"{p}.x_min"),
                    _number(_get(rd, "y_min", p), f"{p}.y_min"),
                    _number(_get(rd, "x_max", p), f"{p}.x_max"),
                    _number(_get(rd, "y_max", p), f"{p}.y_max"),
                )
            )
        except ProblemFormatError as err:
            if err.path:
                raise
            raise ProblemFormatError(p, err.message) from None
    return DomainGeometry(
        kind=_string(_get(d, "kind", "geometry"), "geometry.kind"),
        width=_number(_get(d, "width", "geometry"), "geometry.width"),
        height=_number(_get(d, "height", "geometry"), "geometry.height"),
        nx=_integer(_get(d, "nx", "geometry"), "geometry.nx"),
        ny=_integer(_get(d, "ny", "geometry"), "geometry.ny"),
        void_regions=tuple(voids),
    )


def _parse_supports(value: Any) -> tuple[SupportRegion, ...]:
    out = []
    for i, sv in enumerate(_expect_list(value, "supports")):
        d = _expect_mapping(sv, f"supports[{i}]")
        p = f"supports[{i}]"
        _known_keys(d, ("start", "end", "fixed"), p)
        out.append(
            SupportRegion(
                segment=Segment(
                    _parse_point(_get(d, "start", p), f"{p}.start"),
                    _parse_point(_get(d, "end", p), f"{p}.end"),
                ),
                fixed=_string(_get(d, "fixed", p), f"{p}.fixed"),
            )
        )
    return tuple(out)


def _parse_distribution(value: Any, path: str) -> LoadDistribution:
    if value is None:
        return DEFAULT_DISTRIBUTION
    if isinstance(value, str):
        if value == "nodal":
            return LoadDistribution("nodal")
        raise ProblemFormatError(path, f"unknown distribution {value!r}")
    d = _expect_mapping(value, path)
    _known_keys(d, ("kind", "n"), path)
    kind = _string(_get(d, "kind", path), f"{path}.kind")
    if kind == "nodal":
        return LoadDistribution("nodal")
    n = _integer(d.get("n", 3), f"{path}.n")
    return LoadDistribution(kind, n)


def _parse_loads(value: Any) -> tuple[LoadRegion, ...]:
    out = []
    for i, lv in enumerate(_expect_list(value, "loads")):
        d = _expect_mapping(lv, f"loads[{i}]")
        p = f"loads[{i}]"
        _known_keys(d, ("location", "force", "distribution"), p)
        out.append(
            LoadRegion(
                location=_parse_point(_get(d, "location", p), f"{p}.location"),
                force=_parse_point(_get(d, "force", p), f"{p}.force"),
                distribution=_parse_distribution(d.get("distribution"), f"{p}.distribution"),
            )
        )
    return tuple(out)


def _parse_constraints(value: Any, user_facing: bool) -> tuple[ConstraintSpec, ...]:
    out = []
    for i, cv in enumerate(_expect_list(value, "constraints")):
        d = _expect_mapping(cv, f"constraints[{i}]")
        p = f"constraints[{i}]"
        _known_keys(d, ("kind", "bound"), p)
        kind = _string(_get(d, "kind", p), f"{p}.kind")
        if user_facing and kind not in USER_CONSTRAINT_KINDS:
            raise ProblemFormatError(f"{p}.kind", f"unknown constraint kind {kind!r}")
        out.append(ConstraintSpec(kind=kind, bound=_number(_get(d, "bound", p), f"{p}.bound")))
    return tuple(out)


_TOP_LEVEL_KEYS = (
    "geometry",
    "supports",
    "loads",
    "objective",
    "constraints",
    "simp",
    "regularization",
    "stress",
    "optimizer",
    "provenance",
    "num_inequality",
    "num_equality",
)


def from_dict(raw: dict, *, user_facing: bool = True) -> ProblemSpec:
    """Build a spec from its dict form, applying defaults for omitted parts."""
    d = _expect_mapping(raw, "")
    _known_keys(d, _TOP_LEVEL_KEYS, "")
    geometry = _parse_geometry(_get(d, "geometry", ""))

    simp = SimpParams()
    if "simp" in d:
        sd = _expect_mapping(d["simp"], "simp")
        _known_keys(sd, ("penal", "e0", "emin", "nu"), "simp")
        simp = SimpParams(
            penal=_number(sd.get("penal", simp.penal), "simp.penal"),
            e0=_number(sd.get("e0", simp.e0), "simp.e0"),
            emin=_number(sd.get("emin", simp.emin), "simp.emin"),
            nu=_number(sd.get("nu", simp.nu), "simp.nu"),
        )

    regularization = None
    if "regularization" in d:
        rd = _expect_mapping(d["regularization"], "regularization")
        _known_keys(rd, ("r_min", "eta", "beta_schedule"), "regularization")
        schedule = DEFAULT_BETA_SCHEDULE
        if "beta_schedule" in rd:
            pairs = []
            for i, pair in enumerate(_expect_list(rd["beta_schedule"], "regularization.beta_schedule")):
                pl = _expect_list(pair, f"regularization.beta_schedule[{i}]")
                if len(pl) != 2:
                    raise ProblemFormatError(
                        f"regularization.beta_schedule[{i}]", "expected [iteration, beta]"
                    )
                pairs.append(
                    (
                        _integer(pl[0], f"regularization.beta_schedule[{i}][0]"),
                        _number(pl[1], f"regularization.beta_schedule[{i}][1]"),
                    )
                )
            schedule = tuple(pairs)
        r_min = rd.get("r_min")
        if r_min is None:
            r_min = DEFAULT_RMIN_FACTOR * geometry.element_size()
        regularization = RegularizationParams(
            r_min=_number(r_min, "regularization.r_min"),
            eta=_number(rd.get("eta", 0.5), "regularization.eta"),
            beta_schedule=schedule,
        )

    stress = None
    if "stress" in d:
        sd = _expect_mapping(d["stress"], "stress")
        _known_keys(sd, ("pnorm_exponent", "relaxation_exponent"), "stress")
        stress = StressParams(
            pnorm_exponent=_number(sd.get("pnorm_exponent", 8.0), "stress.pnorm_exponent"),
            relaxation_exponent=_number(
                sd.get("relaxation_exponent", 0.5), "stress.relaxation_exponent"
            ),
        )

    od_obj = _expect_mapping(_get(d, "objective", ""), "objective")
    _known_keys(od_obj, ("kind",), "objective")
    objective = ObjectiveSpec(kind=_string(_get(od_obj, "kind", "objective"), "objective.kind"))
    if objective.kind == "pnorm_stress" and stress is None:
        stress = StressParams()

    optimizer = OptimizerParams(method="mma" if objective.kind == "pnorm_stress" else "oc")
    if "optimizer" in d:
        od = _expect_mapping(d["optimizer"], "optimizer")
        _known_keys(
            od,
            ("method", "move_limit", "max_iterations", "change_tolerance", "objective_window"),
            "optimizer",
        )
        optimizer = OptimizerParams(
            method=_string(od.get("method", optimizer.method), "optimizer.method"),
            move_limit=_number(od.get("move_limit", optimizer.move_limit), "optimizer.move_limit"),
            max_iterations=_integer(
                od.get("max_iterations", optimizer.max_iterations), "optimizer.max_iterations"
            ),
            change_tolerance=_number(
                od.get("change_tolerance", optimizer.change_tolerance),
                "optimizer.change_tolerance",
            ),
            objective_window=_integer(
                od.get("objective_window", optimizer.objective_window),
                "optimizer.objective_window",
            ),
        )

    spec = ProblemSpec(
        geometry=geometry,
        supports=_parse_supports(_get(d, "supports", "")),
        loads=_parse_loads(_get(d, "loads", "")),
        objective=objective,
        constraints=_parse_constraints(_get(d, "constraints", ""), user_facing),
        simp=simp,
        regularization=regularization,
        stress=stress,
        optimizer=optimizer,
        provenance=_string(d.get("provenance", "user"), "provenance"),
    )
    if "num_inequality" in d and _integer(d["num_inequality"], "num_inequality") != spec.num_inequality:
        raise ProblemFormatError("num_inequality", "does not match the constraint list")
    if "num_equality" in d and _integer(d["num_equality"], "num_equality") != spec.num_equality:
        raise ProblemFormatError("num_equality", "must be 1 (the state equation)")
    return spec


def parse_problem_file(text: str) -> ProblemSpec:
    """Parse a JSON problem description; errors carry the offending path."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ProblemFormatError("", f"invalid JSON: {err}") from None
    return from_dict(raw)


def defaulted_paths(raw: dict) -> list[str]:
    """Paths that :func:`from_dict` would fill with defaults.

    Used by the validator to report omitted numerical parameters.
    """
    out = []
    if "simp" not in raw:
        out.append("simp")
    if "regularization" not in raw:
        out.append("regularization")
    elif isinstance(raw.get("regularization"), dict) and "r_min" not in raw["regularization"]:
        out.append("regularization.r_min")
    if "optimizer" not in raw:
        out.append("optimizer")
    if isinstance(raw.get("objective"), dict) and raw["objective"].get("kind") == "pnorm_stress":
        if "stress" not in raw:
            out.append("stress")
    if isinstance(raw.get("loads"), list):
        for i, load in enumerate(raw["loads"]):
            if isinstance(load, dict) and "distribution" not in load:
                out.append(f"loads[{i}].distribution")
    return out


# ---------------------------------------------------------------------------
# diffing


def _flatten(value: Any, path: str, out: dict[str, Any]):
    if isinstance(value, dict):
        for key, sub in value.items():
            _flatten(sub, f"{path}.{key}" if path else key, out)
    elif isinstance(value, list):
        out[path] = value
    else:
        out[path] = value


def _diff_value(path: str, a: Any, b: Any, out: list[FieldChange]):
    if isinstance(a, dict) and isinstance(b, dict):
        for key in sorted(set(a) | set(b)):
            sub = f"{path}.{key}" if path else key
            if key not in a:
                out.append(FieldChange(sub, None, b[key]))
            elif key not in b:
                out.append(FieldChange(sub, a[key], None))
            else:
                _diff_value(sub, a[key], b[key], out)
    elif isinstance(a, list) and isinstance(b, list):
        if len(a) != len(b):
            out.append(FieldChange(path, a, b))
        else:
            for i, (av, bv) in enumerate(zip(a, b)):
                _diff_value(f"{path}[{i}]", av, bv, out)
    elif a != b:
        out.append(FieldChange(path, a, b))


def spec_diff(a: ProblemSpec, b: ProblemSpec) -> list[FieldChange]:
    """Minimal field-level difference between two specs.

    List-length changes collapse to a single change on the list path, so a
    user adding one void region reads as one change on
    ``geometry.void_regions``.
    """
    changes: list[FieldChange] = []
    _diff_value("", to_dict(a), to_dict(b), changes)
    return changes


def _set_path(d: dict, path: str, value: Any):
    tokens: list[Any] = []
    for part in path.split("."):
        while "[" in part:
            head, rest = part.split("[", 1)
            idx, part = rest.split("]", 1)
            if head:
                tokens.append(head)
            tokens.append(int(idx))
        if part:
            tokens.append(part)
    target: Any = d
    for tok in tokens[:-1]:
        target = target[tok]
    last = tokens[-1]
    if value is None and isinstance(target, dict) and last in target:
        del target[last]
    else:
        target[last] = value


def apply_changes(spec: ProblemSpec, changes: list[FieldChange]) -> ProblemSpec:
    """Apply a diff produced by :func:`spec_diff`; diff(a, b) applied to a gives b."""
    d = to_dict(spec)
    for change in changes:
        _set_path(d, change.path, change.new)
    return from_dict(d, user_facing=False)


# ---------------------------------------------------------------------------
# built-in benchmarks


def benchmark_names() -> tuple[str, ...]:
    return _BENCHMARK_NAMES


def builtin_benchmark(name: str) -> ProblemSpec:
    """Canonical benchmark specs used by the deterministic personas."""
    if name == "cantilever":
        # 2:1 cantilever: left edge clamped, unit downward tip load at
        # mid-height of the right edge.
        width, height, nx, ny = 2.0, 1.0, 120, 40
        return ProblemSpec(
            geometry=DomainGeometry("rectangle", width, height, nx, ny),
            supports=(
                SupportRegion(Segment(Point(0.0, 0.0), Point(0.0, height)), "both"),
            ),
            loads=(
                LoadRegion(Point(width, height / 2.0), Point(0.0, -1.0)),
            ),
            objective=ObjectiveSpec("compliance"),
            constraints=(ConstraintSpec("volume_fraction", 0.4),),
            regularization=RegularizationParams(r_min=0.04),
            optimizer=OptimizerParams(method="oc"),
            provenance="user",
        )
    if name == "mbb_mid_right":
        # Half-domain MBB variant: symmetry rollers on the left edge, the
        # bottom-left corner held in y, load at the right-edge midpoint.
        width, height, nx, ny = 3.0, 1.0, 120, 40
        return ProblemSpec(
            geometry=DomainGeometry("rectangle", width, height, nx, ny),
            supports=(
                SupportRegion(Segment(Point(0.0, 0.0), Point(0.0, height)), "x"),
                SupportRegion(Segment(Point(0.0, 0.0), Point(0.0, 0.0)), "y"),
            ),
            loads=(
                LoadRegion(Point(width, height / 2.0), Point(0.0, -1.0)),
            ),
            objective=ObjectiveSpec("compliance"),
            constraints=(ConstraintSpec("volume_fraction", 0.5),),
            regularization=RegularizationParams(r_min=0.05),
            optimizer=OptimizerParams(method="oc"),
            provenance="user",
        )
    if name == "l_bracket_stress":
        # Unit-square L-bracket: upper-right quadrant void, vertical arm
        # clamped along the top edge, downward load at the tip of the
        # horizontal arm.
        width = height = 1.0
        return ProblemSpec(
            geometry=DomainGeometry(
                "l_bracket",
                width,
                height,
                100,
                100,
                void_regions=(Rect(0.4, 0.4, 1.0, 1.0),),
            ),
            supports=(
                SupportRegion(Segment(Point(0.0, height), Point(0.4, height)), "both"),
            ),
            loads=(
                LoadRegion(Point(1.0, 0.4), Point(0.0, -1.0)),
            ),
            objective=ObjectiveSpec("pnorm_stress"),
            constraints=(ConstraintSpec("volume_fraction", 0.4),),
            regularization=RegularizationParams(r_min=0.025),
            stress=StressParams(),
            optimizer=OptimizerParams(method="mma"),
            provenance="user",
        )
    raise ProblemFormatError("benchmark", f"unknown benchmark {name!r}")


def with_provenance(spec: ProblemSpec, provenance: str) -> ProblemSpec:
    return replace(spec, provenance=provenance)
