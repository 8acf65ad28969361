"""Chat-completion gateway and persona handles for the agent roles.

Every agent that may consult a language model does so through a
:class:`PersonaHandle`.  Three modes exist:

``deterministic``
    The agent uses its built-in rules and never calls the gateway.
``mock``
    Scripted replies are replayed strictly in order; running past the
    end of the transcript is an error.  Used by tests and replays.
``llm``
    One chat-completions HTTP request per call, temperature pinned to 0,
    with a small retry policy.

Prompts are rendered from a fixed five-section template (Role, Inputs,
Instructions, Rules, Output format).  Structured replies re-enter the
pipeline only through :func:`parse_structured`; a caller may re-ask once
after a parse failure via :func:`complete_structured`.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Literal

from .errors import (
    GatewayError,
    MissingSlotError,
    ProblemFormatError,
    SchemaParseError,
    TranscriptExhausted,
    TransportError,
)

_RETRY_ATTEMPTS = 3
_RETRY_BASE_DELAY = 0.5

ENDPOINT_ENV = "AUTOTOPO_LLM_ENDPOINT"
API_KEY_ENV = "AUTOTOPO_LLM_API_KEY"

# default model identifiers per role; opaque strings passed through to the
# endpoint, overridable via AUTOTOPO_MODEL_<ROLE>
DEFAULT_MODELS = {
    "scientist": "reasoning-large",
    "validator": "general-small",
    "planner": "general-small",
    "reviewer": "general-small",
    "critic": "reasoning-large",
}


@dataclass(frozen=True)
class ChatMessage:
    role: Literal["system", "user", "assistant"]
    content: str


@dataclass(frozen=True)
class ConditionalContext:
    """A document appended to the prompt when a trigger keyword appears.

    Trigger matching is case-insensitive and runs against the designated
    trigger slot of the template.
    """

    name: str
    triggers: tuple[str, ...]
    document: str

    def triggered_by(self, text: str) -> bool:
        lowered = text.lower()
        return any(t.lower() in lowered for t in self.triggers)


@dataclass(frozen=True)
class PromptTemplate:
    """Five-section system prompt with named input slots.

    The rendered system message always contains the sections Role,
    Inputs, Instructions, Rules and Output format in that order; the user
    message carries the slot values.  Conditional context documents are
    appended after the fixed sections when triggered.
    """

    name: str
    role: str
    instructions: str
    rules: str
    output_format: str
    input_slots: tuple[str, ...]
    trigger_slot: str = "user_query"
    conditional_contexts: tuple[ConditionalContext, ...] = ()


def render_prompt(
    template: PromptTemplate, inputs: dict[str, str]
) -> tuple[ChatMessage, ChatMessage, tuple[str, ...]]:
    """Render ``template`` into a (system, user) message pair.

    Returns the pair plus the names of the conditional contexts that
    fired.  Pure function of its arguments.
    """
    for slot in template.input_slots:
        if slot not in inputs:
            raise MissingSlotError(f"prompt {template.name!r} is missing slot {slot!r}")

    trigger_text = inputs.get(template.trigger_slot, "")
    active = tuple(
        ctx.name
        for ctx in template.conditional_contexts
        if ctx.triggered_by(trigger_text)
    )

    sections = [
        f"# Role\n{template.role}",
        "# Inputs\n" + "\n".join(f"- {slot}" for slot in template.input_slots),
        f"# Instructions\n{template.instructions}",
        f"# Rules\n{template.rules}",
        f"# Output format\n{template.output_format}",
    ]
    for ctx in template.conditional_contexts:
        if ctx.name in active:
            sections.append(f"# Context: {ctx.name}\n{ctx.document}")
    system = ChatMessage("system", "\n\n".join(sections))

    user = ChatMessage(
        "user",
        "\n\n".join(f"{slot}:\n{inputs[slot]}" for slot in template.input_slots),
    )
    return system, user, active


@dataclass(frozen=True)
class PersonaConfig:
    """LLM persona settings; temperature is pinned to 0 by construction."""

    model: str
    max_output_tokens: int = 4096
    schema: str = "report"

    @property
    def temperature(self) -> float:
        return 0.0


Transport = Callable[[dict], str]


@dataclass
class PersonaHandle:
    """One agent's channel to a language model (or its stand-in)."""

    mode: Literal["deterministic", "llm", "mock"]
    template: PromptTemplate | None = None
    config: PersonaConfig | None = None
    transcript: tuple[str, ...] = ()
    transport: Transport | None = None
    _cursor: int = 0
    calls: list[dict] = field(default_factory=list)

    def exhausted(self) -> bool:
        return self.mode == "mock" and self._cursor >= len(self.transcript)


def deterministic_persona() -> PersonaHandle:
    return PersonaHandle(mode="deterministic")


def mock_persona(
    transcript: list[str] | tuple[str, ...], template: PromptTemplate | None = None
) -> PersonaHandle:
    return PersonaHandle(mode="mock", template=template, transcript=tuple(transcript))


def llm_persona(
    config: PersonaConfig,
    template: PromptTemplate | None = None,
    transport: Transport | None = None,
) -> PersonaHandle:
    return PersonaHandle(mode="llm", template=template, config=config, transport=transport)


def _http_transport(payload: dict) -> str:
    """Single chat-completions request against the configured endpoint."""
    import httpx

    endpoint = os.environ.get(ENDPOINT_ENV)
    if not endpoint:
        raise TransportError(f"no completion endpoint configured ({ENDPOINT_ENV})")
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(API_KEY_ENV)
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    try:
        response = httpx.post(endpoint, json=payload, headers=headers, timeout=120.0)
        response.raise_for_status()
        body = response.json()
        return body["choices"][0]["message"]["content"]
    except httpx.HTTPError as err:
        raise TransportError(f"completion request failed: {err}") from err
    except (KeyError, IndexError, ValueError) as err:
        raise TransportError(f"malformed completion response: {err}") from err


def complete(
    handle: PersonaHandle,
    messages: tuple[ChatMessage, ...],
    sleep: Callable[[float], None] = time.sleep,
) -> str:
    """Return the model reply for ``messages`` under ``handle``'s mode."""
    if handle.mode == "deterministic":
        raise GatewayError("deterministic personas never call the gateway")

    if handle.mode == "mock":
        if handle._cursor >= len(handle.transcript):
            raise TranscriptExhausted(
                f"mock transcript exhausted after {handle._cursor} replies"
            )
        reply = handle.transcript[handle._cursor]
        handle._cursor += 1
        handle.calls.append({"messages": len(messages), "retries": 0})
        return reply

    config = handle.config
    if config is None:
        raise GatewayError("llm persona has no configuration")
    payload = {
        "model": config.model,
        "temperature": config.temperature,
        "max_tokens": config.max_output_tokens,
        "messages": [{"role": m.role, "content": m.content} for m in messages],
    }
    transport = handle.transport or _http_transport
    last_error: TransportError | None = None
    for attempt in range(_RETRY_ATTEMPTS):
        try:
            reply = transport(payload)
            handle.calls.append({"messages": len(messages), "retries": attempt})
            return reply
        except TransportError as err:
            last_error = err
            if attempt < _RETRY_ATTEMPTS - 1:
                sleep(_RETRY_BASE_DELAY * 2**attempt)
    assert last_error is not None
    raise last_error


# ---------------------------------------------------------------------------
# structured-output parsing

SCHEMA_NAMES = ("problem_spec", "findings", "verdict", "directive", "report")


def _load_json(text: str) -> Any:
    # tolerate a fenced code block around the JSON body
    body = text.strip()
    if body.startswith("```"):
        lines = body.splitlines()
        body = "\n".join(lines[1:-1] if lines[-1].startswith("```") else lines[1:])
    try:
        return json.loads(body)
    except json.JSONDecodeError as err:
        raise SchemaParseError("", f"reply is not valid JSON: {err}") from err


def parse_structured(text: str, schema: str) -> Any:
    """Parse a raw model reply against a registered output schema."""
    if schema == "report":
        if not text.strip():
            raise SchemaParseError("", "report text is empty")
        return text

    if schema == "problem_spec":
        from .problem import from_dict

        raw = _load_json(text)
        if not isinstance(raw, dict):
            raise SchemaParseError("", "problem spec must be a JSON object")
        try:
            return from_dict(raw, user_facing=False)
        except ProblemFormatError as err:
            raise SchemaParseError(err.path, err.message) from err

    if schema == "findings":
        from .agents.memory import finding_from_dict

        raw = _load_json(text)
        if not isinstance(raw, list):
            raise SchemaParseError("", "findings must be a JSON list")
        return [finding_from_dict(item, f"[{i}]") for i, item in enumerate(raw)]

    if schema == "verdict":
        from .agents.memory import verdict_from_dict

        return verdict_from_dict(_load_json(text))

    if schema == "directive":
        from .agents.memory import directive_from_dict

        return directive_from_dict(_load_json(text))

    raise GatewayError(f"unknown output schema {schema!r}; known: {SCHEMA_NAMES}")


def complete_structured(
    handle: PersonaHandle,
    messages: tuple[ChatMessage, ...],
    schema: str,
    sleep: Callable[[float], None] = time.sleep,
) -> tuple[Any, int]:
    """Complete and parse, with a single re-ask on schema failure.

    Returns ``(value, re_asks)`` where ``re_asks`` is 0 or 1.  A second
    parse failure is final.
    """
    text = complete(handle, messages, sleep=sleep)
    try:
        return parse_structured(text, schema), 0
    except SchemaParseError as err:
        retry_messages = messages + (
            ChatMessage("assistant", text),
            ChatMessage(
                "user",
                f"The reply failed schema validation ({err}). "
                "Answer again, following the output format exactly.",
            ),
        )
        text = complete(handle, retry_messages, sleep=sleep)
        return parse_structured(text, schema), 1


def default_persona_config(agent: str) -> PersonaConfig:
    """Per-role model assignment, overridable from the environment."""
    model = os.environ.get(
        f"AUTOTOPO_MODEL_{agent.upper()}", DEFAULT_MODELS.get(agent, "general-small")
    )
    return PersonaConfig(model=model)
