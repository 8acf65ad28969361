"""Deterministic query-intent extraction.

Keyword and benchmark matching only: free-form natural language beyond
the patterns here requires an LLM persona.  The same extraction backs
the deterministic scientist (formulation), the validator (consistency
checks) and the critic (formulation-consistency criterion), so all
three agree on what the user asked for.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from ..problem import ProblemSpec, benchmark_names, builtin_benchmark, from_dict

STRESS_KEYWORDS = ("stress", "von mises", "l-shaped", "l shaped")

# canonical natural-language phrasings of the built-in benchmarks; the
# CLI issues these when invoked with --benchmark
BENCHMARK_QUERIES = {
    "cantilever": (
        "Design the stiffest cantilever beam on a 2x1 domain: left edge "
        "fully clamped, unit downward load at the middle of the right "
        "edge, using at most 40% material."
    ),
    "mbb_mid_right": (
        "Design the stiffest half-MBB beam on a 3x1 domain: symmetry "
        "rollers on the left edge, bottom-left corner pinned, unit "
        "downward load at the middle of the right edge, using at most "
        "50% material."
    ),
    "l_bracket_stress": (
        "Minimize the peak von Mises stress of an L-shaped bracket "
        "clamped along the top edge of the vertical arm, with a unit "
        "downward load at the upper-right end of the horizontal arm, "
        "using at most 40% material."
    ),
}

_BENCHMARK_PATTERNS = (
    ("cantilever", ("cantilever",)),
    ("mbb_mid_right", ("mbb",)),
    ("l_bracket_stress", ("l-shaped", "l shaped", "l-bracket", "l bracket")),
)


@dataclass(frozen=True)
class QueryIntent:
    """What the deterministic rules can read off a user query."""

    benchmark: str | None
    objective: str | None  # "compliance" | "pnorm_stress"
    volume_bound: float | None
    stress_context: bool
    embedded_spec: ProblemSpec | None
    wants_hole: bool


def _embedded_spec(query: str) -> ProblemSpec | None:
    """Parse a problem description embedded as a JSON object in the query."""
    start = query.find("{")
    end = query.rfind("}")
    if start < 0 or end <= start:
        return None
    try:
        raw = json.loads(query[start : end + 1])
    except json.JSONDecodeError:
        return None
    if not isinstance(raw, dict) or "geometry" not in raw:
        return None
    return from_dict(raw, user_facing=True)


def _volume_bound(text: str) -> float | None:
    match = re.search(r"(\d+(?:\.\d+)?)\s*%", text)
    if match:
        value = float(match.group(1)) / 100.0
        return value if 0.0 < value < 1.0 else None
    match = re.search(r"volume fraction (?:of )?(0?\.\d+)", text)
    if match:
        return float(match.group(1))
    return None


def extract_intent(query: str) -> QueryIntent:
    lowered = query.lower()
    prose = lowered[: lowered.find("{")] if "{" in lowered else lowered

    benchmark = None
    for name, needles in _BENCHMARK_PATTERNS:
        if any(n in prose for n in needles) or name in prose:
            benchmark = name
            break

    objective: str | None = None
    if re.search(r"minimi[sz]e.*stress|stress minimi[sz]ation", prose):
        objective = "pnorm_stress"
    elif "stiff" in prose or "compliance" in prose:
        objective = "compliance"
    elif benchmark is not None:
        objective = builtin_benchmark(benchmark).objective.kind

    return QueryIntent(
        benchmark=benchmark,
        objective=objective,
        volume_bound=_volume_bound(prose),
        stress_context=any(k in lowered for k in STRESS_KEYWORDS),
        embedded_spec=_embedded_spec(query),
        wants_hole="hole" in lowered or "void" in prose,
    )


def benchmark_query(name: str) -> str:
    if name not in benchmark_names():
        raise KeyError(f"unknown benchmark {name!r}")
    return BENCHMARK_QUERIES[name]
