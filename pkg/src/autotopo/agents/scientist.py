"""Scientist: turns a user query into a structured problem specification.

Deterministic mode recognizes built-in benchmark names and embedded JSON
problem descriptions, applies refinement directives to the latest spec
version, and handles free-text feedback through a small keyword rules
set.  LLM/mock mode renders the five-section prompt (with the stress
context document appended when stress keywords appear) and parses the
structured reply.
"""

from __future__ import annotations

from dataclasses import replace

from ..errors import ProblemFormatError
from ..gateway import (
    ConditionalContext,
    PersonaHandle,
    PromptTemplate,
    complete_structured,
    render_prompt,
)
from ..problem import (
    ConstraintSpec,
    DomainGeometry,
    Point,
    ProblemSpec,
    Rect,
    builtin_benchmark,
    with_provenance,
)
from .intent import STRESS_KEYWORDS, QueryIntent, extract_intent
from .memory import RefinementDirective, SessionMemory

STRESS_CONTEXT = ConditionalContext(
    name="stress_design",
    triggers=STRESS_KEYWORDS,
    document=(
        "Stress-driven formulations need two regularizations: relax the "
        "stress of low-density elements with a power of the density "
        "(exponent 0.5) so voids cannot dominate, and aggregate the "
        "element von Mises stresses with a p-norm (exponent 8) so the "
        "objective stays differentiable.  Re-entrant corners concentrate "
        "stress; expect the optimizer to round them."
    ),
)

SCIENTIST_TEMPLATE = PromptTemplate(
    name="scientist",
    role=(
        "You are a structural optimization scientist.  You translate "
        "design requirements written in natural language into a complete "
        "topology optimization problem."
    ),
    instructions=(
        "Read the user query and produce a problem specification: design "
        "domain and mesh, supports, loads, objective, constraints, and "
        "the interpolation/regularization/optimizer parameters.  Fill "
        "unstated numerical parameters with standard practice and keep "
        "the formulation minimal."
    ),
    rules=(
        "- The objective is either compliance or p-norm aggregated "
        "stress; constraints bound the volume fraction.\n"
        "- Loads and supports must lie on the domain boundary or inside "
        "it; nothing may sit inside a void region.\n"
        "- Do not invent requirements the query does not state."
    ),
    output_format=(
        "Reply with a single JSON object matching the problem "
        "specification schema: keys geometry, supports, loads, "
        "objective, constraints, and optional simp, regularization, "
        "stress, optimizer sections."
    ),
    input_slots=("user_query",),
    trigger_slot="user_query",
    conditional_contexts=(STRESS_CONTEXT,),
)


def _note_once(memory: SessionMemory, note: str):
    if note not in memory.notes:
        memory.note(note)


def _hole_rect(geometry: DomainGeometry) -> Rect:
    """A centered hole, one fifth of the domain in each direction."""
    cx, cy = geometry.width / 2.0, geometry.height / 2.0
    hw, hh = geometry.width / 10.0, geometry.height / 10.0
    return Rect(cx - hw, cy - hh, cx + hw, cy + hh)


def _add_hole(spec: ProblemSpec) -> ProblemSpec:
    geometry = spec.geometry
    hole = _hole_rect(geometry)
    # an L-bracket's corner void is a structural cutout, not a hole; once
    # the user adds interior holes the domain is a plain rectangle with
    # several voids
    kind = "rectangle" if geometry.kind == "l_bracket" else geometry.kind
    new_geometry = DomainGeometry(
        kind=kind,
        width=geometry.width,
        height=geometry.height,
        nx=geometry.nx,
        ny=geometry.ny,
        void_regions=geometry.void_regions + (hole,),
    )
    return replace(spec, geometry=new_geometry)


def _relocated_load(spec: ProblemSpec, index: int) -> ProblemSpec:
    """Move an in-void load to the nearest material point outside the void."""
    load = spec.loads[index]
    x, y = load.location.x, load.location.y
    geometry = spec.geometry
    step = geometry.element_size()
    best: tuple[float, float, float] | None = None
    for rect in geometry.void_regions:
        if not rect.contains(x, y):
            continue
        candidates = (
            (x - rect.x_min, rect.x_min - step, y),
            (rect.x_max - x, rect.x_max + step, y),
            (y - rect.y_min, x, rect.y_min - step),
            (rect.y_max - y, x, rect.y_max + step),
        )
        for distance, cx, cy in candidates:
            inside = 0.0 <= cx <= geometry.width and 0.0 <= cy <= geometry.height
            if inside and not geometry.in_void(cx, cy):
                if best is None or distance < best[0]:
                    best = (distance, cx, cy)
    if best is None:
        raise ProblemFormatError(
            f"loads[{index}].location",
            "no material point near the load; the void must be moved instead",
        )
    loads = list(spec.loads)
    loads[index] = replace(load, location=Point(best[1], best[2]))
    return replace(spec, loads=tuple(loads))


def _apply_directive(
    spec: ProblemSpec, directive: RefinementDirective, intent: QueryIntent
) -> ProblemSpec:
    if directive.action == "change_constraint":
        # the query asked for a material budget; replace whatever
        # constraint slipped in with that volume bound
        bound = intent.volume_bound if intent.volume_bound is not None else 0.4
        stress = spec.stress if spec.objective.kind == "pnorm_stress" else None
        return replace(
            spec, constraints=(ConstraintSpec("volume_fraction", bound),), stress=stress
        )
    if directive.action == "fix_bc":
        if intent.benchmark is not None:
            reference = builtin_benchmark(intent.benchmark)
            return replace(spec, supports=reference.supports, loads=reference.loads)
        for i, load in enumerate(spec.loads):
            if spec.geometry.in_void(load.location.x, load.location.y):
                spec = _relocated_load(spec, i)
        return spec
    # reformulate: re-derive from the query when it names a benchmark,
    # otherwise repair the current formulation in place
    if intent.benchmark is not None:
        return builtin_benchmark(intent.benchmark)
    for i, load in enumerate(spec.loads):
        if spec.geometry.in_void(load.location.x, load.location.y):
            spec = _relocated_load(spec, i)
    return spec


def scientist_formulate(
    query: str,
    memory: SessionMemory,
    persona: PersonaHandle,
    directive: RefinementDirective | None = None,
    feedback: str | None = None,
) -> ProblemSpec:
    """Produce the next problem spec version (not yet recorded in memory)."""
    if not query.strip():
        raise ProblemFormatError("query", "query must not be empty")
    intent = extract_intent(query)
    if intent.stress_context:
        _note_once(memory, "context:stress_design")

    if persona.mode != "deterministic":
        effective = query
        if feedback:
            effective = f"{query}\n\nLatest user feedback: {feedback}"
        if directive is not None:
            effective = (
                f"{effective}\n\nRefinement directive: {directive.action} "
                f"({directive.rationale})"
            )
        messages = render_prompt(
            persona.template or SCIENTIST_TEMPLATE, {"user_query": effective}
        )[:2]
        spec, re_asks = complete_structured(persona, messages, "problem_spec")
        if re_asks:
            memory.note("scientist:re_ask")
        return with_provenance(spec, "scientist")

    if feedback is not None:
        if not memory.spec_versions:
            raise ProblemFormatError(
                "feedback", "no earlier formulation to revise yet"
            )
        base = memory.latest_spec
        lowered = feedback.lower()
        if "hole" in lowered or "void" in lowered or "cutout" in lowered:
            return with_provenance(_add_hole(base), "scientist")
        raise ProblemFormatError(
            "feedback",
            "deterministic personas only understand hole/void feedback",
        )

    if directive is not None:
        spec = _apply_directive(memory.latest_spec, directive, intent)
        return with_provenance(spec, "scientist")

    if intent.embedded_spec is not None:
        return with_provenance(intent.embedded_spec, "scientist")
    if intent.benchmark is not None:
        return with_provenance(builtin_benchmark(intent.benchmark), "scientist")
    raise ProblemFormatError(
        "query",
        "deterministic personas need a benchmark name or an embedded "
        "problem JSON in the query",
    )
