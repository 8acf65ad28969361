"""Session memory records, the event log and the workspace layout."""

from __future__ import annotations

import json
import threading

import pytest

from autotopo.agents.memory import (
    RUBRIC,
    AgentEvent,
    CriterionResult,
    Finding,
    RefinementDirective,
    SessionMemory,
    Verdict,
    VerdictMetrics,
    directive_from_dict,
    verdict_from_dict,
)
from autotopo.plan import make_plan
from autotopo.problem import FieldChange, builtin_benchmark
from autotopo.workspace import SessionWorkspace, logical_timestamp


def metrics() -> VerdictMetrics:
    return VerdictMetrics(0.05, 0.0, True, "converged_change_tol", 80)


def verdict_with(failing: set[str]) -> Verdict:
    criteria = tuple(
        CriterionResult(name, name not in failing, f"{name} detail")
        for name in RUBRIC
    )
    order = [name for name in RUBRIC if name in failing]
    return Verdict(
        criteria=criteria,
        metrics=metrics(),
        accepted=not failing,
        first_failed=order[0] if order else None,
    )


class TestFinding:
    def test_rejects_unknown_code_and_severity(self):
        with pytest.raises(ValueError):
            Finding("typo_code", "escalate", "p", "m")
        with pytest.raises(ValueError):
            Finding("bc_error", "warn", "p", "m")

    def test_auto_correctable_requires_a_correction(self):
        with pytest.raises(ValueError, match="correction"):
            Finding("bc_error", "auto_correctable", "p", "m")
        ok = Finding(
            "bc_error",
            "auto_correctable",
            "loads[0].location",
            "m",
            correction=(FieldChange("loads[0].location", 1, 2),),
        )
        assert ok.to_dict()["correction"][0]["new"] == 2


class TestVerdict:
    def test_criteria_must_cover_rubric_in_order(self):
        criteria = tuple(
            CriterionResult(name, True, "") for name in reversed(RUBRIC)
        )
        with pytest.raises(ValueError, match="rubric"):
            Verdict(criteria, metrics(), True, None)

    def test_accepted_must_match_all_pass(self):
        criteria = tuple(CriterionResult(name, True, "") for name in RUBRIC)
        with pytest.raises(ValueError):
            Verdict(criteria, metrics(), False, None)

    def test_first_failed_is_the_earliest_failure(self):
        v = verdict_with({"convergence", "design_quality"})
        assert v.first_failed == "convergence"
        with pytest.raises(ValueError, match="first_failed"):
            Verdict(v.criteria, v.metrics, False, "design_quality")

    def test_round_trip_through_dict(self):
        v = verdict_with({"design_quality"})
        assert verdict_from_dict(v.to_dict()) == v


class TestDirective:
    def test_actions_are_routed_to_allowed_targets_only(self):
        with pytest.raises(ValueError, match="cannot target"):
            RefinementDirective("runner", "reformulate", "r", "verdict:0")
        with pytest.raises(ValueError, match="cannot target"):
            RefinementDirective("scientist", "increase_r_min", "r", "verdict:0", factor=1.5)

    def test_increase_r_min_needs_a_growth_factor(self):
        with pytest.raises(ValueError, match="factor"):
            RefinementDirective("planner", "increase_r_min", "r", "verdict:0")
        with pytest.raises(ValueError, match="factor"):
            RefinementDirective(
                "planner", "increase_r_min", "r", "verdict:0", factor=0.9
            )

    def test_adjust_optimizer_needs_parameter_and_value(self):
        with pytest.raises(ValueError, match="parameter"):
            RefinementDirective("planner", "adjust_optimizer", "r", "verdict:0")

    def test_round_trip_through_dict(self):
        d = RefinementDirective(
            "runner",
            "retry_with",
            "relax",
            "diagnosis:0",
            overrides=(("move_limit", 0.1),),
        )
        assert directive_from_dict(d.to_dict()) == d


class TestSessionMemory:
    def test_appends_count_and_record(self):
        memory = SessionMemory("q")
        spec = builtin_benchmark("cantilever")
        assert memory.add_spec(spec) == 1
        assert memory.add_spec(spec) == 2
        assert memory.add_plan(make_plan(spec)) == 1
        assert memory.latest_spec is spec

    def test_latest_spec_requires_a_formulation(self):
        with pytest.raises(LookupError):
            SessionMemory("q").latest_spec

    def test_directive_source_must_name_an_existing_record(self):
        memory = SessionMemory("q")
        directive = RefinementDirective("scientist", "reformulate", "r", "verdict:0")
        with pytest.raises(ValueError, match="existing record"):
            memory.add_directive(directive)
        memory.add_verdict(verdict_with({"formulation_consistency"}))
        assert memory.add_directive(directive) == 0

    def test_counters_bump_and_reject_unknown_names(self):
        memory = SessionMemory("q")
        assert memory.bump("validator_loops") == 1
        assert memory.bump("validator_loops") == 2
        with pytest.raises(KeyError):
            memory.bump("coffee_breaks")

    def test_transcript_is_stable_and_canonical(self):
        def build():
            memory = SessionMemory("q")
            memory.add_spec(builtin_benchmark("mbb_mid_right"))
            memory.add_verdict(verdict_with(set()))
            memory.note("context:stress_design")
            return memory

        assert build().transcript() == build().transcript()
        # canonical form: keys sorted, parseable
        assert json.loads(build().transcript())["user_query"] == "q"


class TestEventLog:
    def test_seq_is_dense_and_timestamps_are_logical(self, tmp_path):
        ws = SessionWorkspace(tmp_path)
        ws.events.emit("scientist", "formulated", {"version": 1})
        ws.events.emit("planner", "planned", {"version": 1})
        lines = (tmp_path / "events.ndjson").read_text().splitlines()
        rows = [json.loads(line) for line in lines]
        assert [r["seq"] for r in rows] == [1, 2]
        assert rows[0]["timestamp"] == logical_timestamp(1)
        assert rows[1]["timestamp"] == "2000-01-01T00:00:02Z"

    def test_unknown_event_kind_is_rejected(self, tmp_path):
        ws = SessionWorkspace(tmp_path)
        with pytest.raises(ValueError, match="kind"):
            ws.events.emit("critic", "pondered", {})

    def test_since_filters_by_seq(self, tmp_path):
        ws = SessionWorkspace(tmp_path)
        for i in range(5):
            ws.events.emit("runner", "run_started", {"run": i})
        assert [e.seq for e in ws.events.since(3)] == [4, 5]
        assert ws.events.last_seq == 5

    def test_subscribers_see_events_as_they_happen(self, tmp_path):
        ws = SessionWorkspace(tmp_path)
        seen: list[AgentEvent] = []
        ws.events.subscribe(seen.append)
        ws.events.emit("critic", "accepted", {})
        ws.events.unsubscribe(seen.append)
        ws.events.emit("critic", "aborted", {"reason": "x"})
        assert [e.kind for e in seen] == ["accepted"]

    def test_concurrent_emitters_never_conflict_on_seq(self, tmp_path):
        ws = SessionWorkspace(tmp_path)

        def spam():
            for _ in range(50):
                ws.events.emit("runner", "run_started", {})

        threads = [threading.Thread(target=spam) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        seqs = [e.seq for e in ws.events.since(0)]
        assert seqs == list(range(1, 201))


class TestWorkspace:
    def test_versioned_artifact_names(self, tmp_path):
        ws = SessionWorkspace(tmp_path)
        assert ws.spec_name(2) == "spec_v2.json"
        assert ws.plan_name(1) == "plan_v1.json"
        assert ws.history_name(3) == "history_v3.csv"
        assert ws.density_name(1) == "density_v1.png"
        assert ws.convergence_name(1) == "convergence_v1.png"

    def test_write_spec_and_plan_round_trip_as_json(self, tmp_path):
        ws = SessionWorkspace(tmp_path)
        spec = builtin_benchmark("cantilever")
        ws.write_spec(1, spec)
        ws.write_plan(1, make_plan(spec))
        raw = json.loads((tmp_path / "spec_v1.json").read_text())
        assert raw["geometry"]["nx"] == spec.geometry.nx
        raw = json.loads((tmp_path / "plan_v1.json").read_text())
        assert raw["params"]["method"] == "oc"

    def test_artifact_path_rejects_names_outside_the_layout(self, tmp_path):
        ws = SessionWorkspace(tmp_path)
        (tmp_path / "secrets.txt").write_text("x")
        with pytest.raises(KeyError):
            ws.artifact_path("secrets.txt")
        with pytest.raises(KeyError):
            ws.artifact_path("../spec_v1.json")
        with pytest.raises(FileNotFoundError):
            ws.artifact_path("density_v1.png")

    def test_artifact_names_lists_only_layout_files(self, tmp_path):
        ws = SessionWorkspace(tmp_path)
        ws.write_text("report.md", "# r")
        ws.write_spec(1, builtin_benchmark("cantilever"))
        (tmp_path / "junk.log").write_text("x")
        names = ws.artifact_names()
        assert "report.md" in names and "spec_v1.json" in names
        assert "junk.log" not in names
