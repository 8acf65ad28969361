"""Prompt rendering, persona modes and structured-output parsing."""

from __future__ import annotations

import json

import pytest

from autotopo.errors import (
    GatewayError,
    MissingSlotError,
    SchemaParseError,
    TranscriptExhausted,
    TransportError,
)
from autotopo.gateway import (
    ChatMessage,
    ConditionalContext,
    PersonaConfig,
    PromptTemplate,
    complete,
    complete_structured,
    default_persona_config,
    deterministic_persona,
    llm_persona,
    mock_persona,
    parse_structured,
    render_prompt,
)
from autotopo.problem import ProblemSpec, builtin_benchmark, serialize_problem


def template(**kwargs) -> PromptTemplate:
    defaults = dict(
        name="demo",
        role="You classify rocks.",
        instructions="Look at the rock.",
        rules="- Be brief.",
        output_format="One word.",
        input_slots=("user_query",),
    )
    defaults.update(kwargs)
    return PromptTemplate(**defaults)


class TestRenderPrompt:
    def test_system_message_has_five_sections_in_order(self):
        system, _, _ = render_prompt(template(), {"user_query": "granite?"})
        positions = [
            system.content.index(header)
            for header in (
                "# Role",
                "# Inputs",
                "# Instructions",
                "# Rules",
                "# Output format",
            )
        ]
        assert positions == sorted(positions)
        assert "You classify rocks." in system.content
        assert "- user_query" in system.content

    def test_user_message_carries_slot_values(self):
        tpl = template(input_slots=("user_query", "context"))
        _, user, _ = render_prompt(tpl, {"user_query": "a", "context": "b"})
        assert user.role == "user"
        assert "user_query:\na" in user.content
        assert "context:\nb" in user.content

    def test_missing_slot_is_named_in_the_error(self):
        with pytest.raises(MissingSlotError, match="user_query"):
            render_prompt(template(), {})

    def test_extra_inputs_are_ignored(self):
        _, user, _ = render_prompt(
            template(), {"user_query": "x", "unused": "y"}
        )
        assert "unused" not in user.content

    def test_context_appends_document_when_triggered(self):
        ctx = ConditionalContext("igneous", ("basalt", "magma"), "Basalt is fine-grained.")
        tpl = template(conditional_contexts=(ctx,))
        system, _, active = render_prompt(tpl, {"user_query": "is MAGMA rock?"})
        assert active == ("igneous",)
        assert "# Context: igneous" in system.content
        assert system.content.index("# Output format") < system.content.index(
            "# Context: igneous"
        )

    def test_context_stays_out_without_trigger(self):
        ctx = ConditionalContext("igneous", ("basalt",), "doc")
        system, _, active = render_prompt(
            template(conditional_contexts=(ctx,)), {"user_query": "granite?"}
        )
        assert active == ()
        assert "# Context" not in system.content

    def test_rendering_is_a_pure_function(self):
        inputs = {"user_query": "q"}
        assert render_prompt(template(), inputs) == render_prompt(template(), inputs)


class TestPersonas:
    def test_temperature_is_pinned_to_zero(self):
        assert PersonaConfig(model="m").temperature == 0.0

    def test_deterministic_persona_never_calls_the_gateway(self):
        with pytest.raises(GatewayError):
            complete(deterministic_persona(), (ChatMessage("user", "hi"),))

    def test_mock_replays_in_order_then_exhausts(self):
        handle = mock_persona(["one", "two"])
        messages = (ChatMessage("user", "x"),)
        assert complete(handle, messages) == "one"
        assert complete(handle, messages) == "two"
        with pytest.raises(TranscriptExhausted):
            complete(handle, messages)

    def test_llm_posts_model_temperature_and_messages(self):
        seen = {}

        def transport(payload):
            seen.update(payload)
            return "ok"

        handle = llm_persona(PersonaConfig(model="m-1"), transport=transport)
        reply = complete(
            handle, (ChatMessage("system", "s"), ChatMessage("user", "u"))
        )
        assert reply == "ok"
        assert seen["model"] == "m-1"
        assert seen["temperature"] == 0.0
        assert seen["messages"] == [
            {"role": "system", "content": "s"},
            {"role": "user", "content": "u"},
        ]

    def test_llm_retries_twice_with_exponential_backoff(self):
        attempts = []
        delays = []

        def flaky(payload):
            attempts.append(1)
            if len(attempts) < 3:
                raise TransportError("boom")
            return "finally"

        handle = llm_persona(PersonaConfig(model="m"), transport=flaky)
        reply = complete(handle, (ChatMessage("user", "u"),), sleep=delays.append)
        assert reply == "finally"
        assert len(attempts) == 3
        assert delays == [0.5, 1.0]
        assert handle.calls[-1]["retries"] == 2

    def test_llm_gives_up_after_three_attempts(self):
        attempts = []

        def broken(payload):
            attempts.append(1)
            raise TransportError("down")

        handle = llm_persona(PersonaConfig(model="m"), transport=broken)
        with pytest.raises(TransportError):
            complete(handle, (ChatMessage("user", "u"),), sleep=lambda _: None)
        assert len(attempts) == 3

    def test_default_models_per_role_and_env_override(self, monkeypatch):
        assert default_persona_config("scientist").model == "reasoning-large"
        assert default_persona_config("validator").model == "general-small"
        monkeypatch.setenv("AUTOTOPO_MODEL_SCIENTIST", "my-model")
        assert default_persona_config("scientist").model == "my-model"


class TestParseStructured:
    def test_problem_spec_round_trips(self):
        spec = builtin_benchmark("cantilever")
        parsed = parse_structured(serialize_problem(spec), "problem_spec")
        assert isinstance(parsed, ProblemSpec)
        assert parsed.geometry.nx == spec.geometry.nx
        assert parsed.loads == spec.loads

    def test_fenced_code_block_is_tolerated(self):
        text = "```json\n" + serialize_problem(builtin_benchmark("cantilever")) + "```"
        assert isinstance(parse_structured(text, "problem_spec"), ProblemSpec)

    def test_invalid_json_raises_schema_error(self):
        with pytest.raises(SchemaParseError):
            parse_structured("not json at all", "problem_spec")

    def test_wrong_shape_raises_schema_error(self):
        with pytest.raises(SchemaParseError):
            parse_structured(json.dumps({"geometry": "nope"}), "problem_spec")

    def test_report_passes_text_through_and_rejects_empty(self):
        assert parse_structured("all good", "report") == "all good"
        with pytest.raises(SchemaParseError):
            parse_structured("   ", "report")

    def test_findings_parse_as_a_list(self):
        raw = json.dumps(
            [
                {
                    "code": "bc_error",
                    "severity": "escalate",
                    "path": "supports[0]",
                    "message": "bad edge",
                }
            ]
        )
        findings = parse_structured(raw, "findings")
        assert len(findings) == 1
        assert findings[0].code == "bc_error"

    def test_unknown_schema_is_refused(self):
        with pytest.raises(GatewayError, match="unknown output schema"):
            parse_structured("{}", "poems")


class TestCompleteStructured:
    def test_clean_first_reply_needs_no_re_ask(self):
        handle = mock_persona([serialize_problem(builtin_benchmark("cantilever"))])
        spec, re_asks = complete_structured(
            handle, (ChatMessage("user", "go"),), "problem_spec"
        )
        assert re_asks == 0
        assert isinstance(spec, ProblemSpec)

    def test_single_re_ask_carries_the_parse_error_back(self):
        handle = mock_persona(
            ["garbage", serialize_problem(builtin_benchmark("cantilever"))]
        )
        spec, re_asks = complete_structured(
            handle, (ChatMessage("user", "go"),), "problem_spec"
        )
        assert re_asks == 1
        # the retry request grew by the failed reply and the complaint
        assert handle.calls[0]["messages"] == 1
        assert handle.calls[1]["messages"] == 3

    def test_second_failure_is_final(self):
        handle = mock_persona(["junk", "more junk"])
        with pytest.raises(SchemaParseError):
            complete_structured(handle, (ChatMessage("user", "go"),), "problem_spec")
