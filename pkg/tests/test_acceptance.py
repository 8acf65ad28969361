"""End-to-end acceptance suite.

Each test is one headline guarantee of the system, checked at its stated
tolerance: adjoint gradients against central differences, kernel
correctness against closed forms, clean benchmark convergence, filter
ablation, recovery from every injected fault, reliability across seeds,
byte determinism, and the feedback loop.  Run with ``-v`` to see one
pass/fail line per guarantee.
"""

from __future__ import annotations

import numpy as np
import pytest

from _builders import (
    cantilever_spec,
    chain_for,
    compliance_fn,
    l_bracket_spec,
    stress_fn,
    uniaxial_patch_bcs,
)
from autotopo.agents.faults import FaultPlan
from autotopo.agents.intent import benchmark_query
from autotopo.agents.pipeline import PipelinePolicy, build_personas, run_pipeline
from autotopo.fem import (
    assemble_and_solve,
    build_mesh,
    element_stiffness,
    resolve_bcs,
)
from autotopo.plan import make_plan
from autotopo.problem import DomainGeometry, SimpParams, builtin_benchmark
from autotopo.problem import serialize_problem, spec_diff
from autotopo.quality import checkerboard_score
from autotopo.runloop import run_optimization
from autotopo.sensitivity import (
    compliance_gradient,
    finite_difference_check,
    stress_pnorm_gradient,
)
from autotopo.workspace import SessionWorkspace

BETA = 2.0


def run_session(root, query, seed=0, fault_plan=None, personas=None):
    workspace = SessionWorkspace(root)
    outcome = run_pipeline(
        query,
        workspace,
        policy=PipelinePolicy(seed=seed, fault_plan=fault_plan),
        personas=personas,
    )
    return workspace, outcome


def test_adjoint_gradients_match_central_differences():
    # compliance on the 4x2 cantilever, ten random elements at rho = 0.5
    spec = cantilever_spec(nx=4, ny=2)
    mesh = build_mesh(spec.geometry)
    bcs = resolve_bcs(mesh, spec.supports, spec.loads)
    chain = chain_for(mesh, spec.regularization.r_min)
    rho = np.full(mesh.n_elements, 0.5)
    field = chain.forward(rho, BETA)
    _, sol = assemble_and_solve(mesh, spec.simp, field.rho_bar, bcs)
    adjoint = compliance_gradient(mesh, spec.simp, sol, chain, field, BETA)
    picks = np.random.default_rng(11).integers(0, mesh.n_elements, 10)
    check = finite_difference_check(
        compliance_fn(mesh, spec.simp, chain, bcs, BETA), adjoint.gradient, rho, picks
    )
    assert check.max_rel_error <= 1e-5

    # stress aggregate on the 6x6 L-bracket over every active element
    spec = l_bracket_spec(n=6)
    mesh = build_mesh(spec.geometry)
    bcs = resolve_bcs(mesh, spec.supports, spec.loads)
    chain = chain_for(mesh, spec.regularization.r_min)
    rho = np.where(mesh.active, 0.5, 0.0)
    field = chain.forward(rho, BETA)
    system, sol = assemble_and_solve(mesh, spec.simp, field.rho_bar, bcs)
    adjoint = stress_pnorm_gradient(
        mesh, spec.simp, spec.stress, system, sol, chain, field, BETA
    )
    check = finite_difference_check(
        stress_fn(mesh, spec.simp, spec.stress, chain, bcs, BETA),
        adjoint.gradient,
        rho,
        np.flatnonzero(mesh.active),
    )
    assert check.max_rel_error <= 1e-4


def _quadrature_stiffness(nu: float, dx: float, dy: float) -> np.ndarray:
    """Independent 2x2 Gauss evaluation of the plane-stress quad."""
    points, weights = np.polynomial.legendre.leggauss(2)
    d = np.array([[1, nu, 0], [nu, 1, 0], [0, 0, (1 - nu) / 2]]) / (1 - nu**2)
    ke = np.zeros((8, 8))
    for xi, wx in zip(points, weights):
        for eta, wy in zip(points, weights):
            dn = (
                np.array(
                    [
                        [-(1 - eta), (1 - eta), (1 + eta), -(1 + eta)],
                        [-(1 - xi), -(1 + xi), (1 + xi), (1 - xi)],
                    ]
                )
                / 4.0
            )
            b = np.zeros((3, 8))
            b[0, 0::2] = dn[0] * 2 / dx
            b[1, 1::2] = dn[1] * 2 / dy
            b[2, 0::2] = dn[1] * 2 / dy
            b[2, 1::2] = dn[0] * 2 / dx
            ke += wx * wy * (b.T @ d @ b) * (dx * dy / 4.0)
    return ke


def test_element_stiffness_and_patch_solution_match_closed_forms():
    nu = 0.3
    for dx, dy in ((1.0, 1.0), (0.5, 1.25)):
        gap = np.max(
            np.abs(element_stiffness(nu, dx, dy) - _quadrature_stiffness(nu, dx, dy))
        )
        assert gap <= 1e-10, f"stiffness differs by {gap:.2e} on {dx}x{dy}"

    # one element under unit uniaxial tension: u_x = x, u_y = -nu * y
    mesh = build_mesh(DomainGeometry("rectangle", 1.0, 1.0, 1, 1))
    _, sol = assemble_and_solve(mesh, SimpParams(), np.ones(1), uniaxial_patch_bcs(mesh))
    expected_ux = mesh.node_coords[:, 0]
    expected_uy = -nu * mesh.node_coords[:, 1]
    scale = np.max(np.abs(expected_ux))
    assert np.max(np.abs(sol.u[0::2] - expected_ux)) <= 1e-8 * scale
    assert np.max(np.abs(sol.u[1::2] - expected_uy)) <= 1e-8 * scale


def test_cantilever_session_accepts_without_refinement_rounds(tmp_path):
    _, outcome = run_session(tmp_path, benchmark_query("cantilever"))
    assert outcome.status == "accepted"
    memory = outcome.memory
    assert memory.counters["system_refinements"] == 0

    result = outcome.artifacts.result
    assert result.termination.startswith("converged")
    assert result.iterations <= 300
    bound = memory.latest_spec.volume_bound()
    assert abs(result.history[-1].constraints[0] - bound) <= 1e-3

    metrics = outcome.verdict.metrics
    assert metrics.discreteness <= 0.15
    assert metrics.checkerboard <= 0.02
    assert metrics.connected is True


def test_density_filter_suppresses_checkerboards(tmp_path):
    spec = cantilever_spec(nx=60, ny=20)
    element = spec.geometry.element_size()
    unfiltered = run_optimization(
        make_plan(spec, {"r_min": 0.4 * element}), seed=0, timing="none"
    )
    filtered = run_optimization(make_plan(spec), seed=0, timing="none")
    raw = checkerboard_score(unfiltered.mesh, unfiltered.field.rho_bar)
    smooth = checkerboard_score(filtered.mesh, filtered.field.rho_bar)
    assert raw > 0.0, "the identity filter should admit checkerboards"
    assert raw >= 5.0 * smooth


def test_injected_faults_are_recovered_within_the_refinement_budget(tmp_path):
    reference_x = builtin_benchmark("l_bracket_stress").loads[0].location.x

    def misplaced_load_checks(outcome, events):
        assert any(e.kind == "corrected" for e in events)
        assert outcome.memory.latest_spec.loads[0].location.x == pytest.approx(
            reference_x
        )

    def escalation_checks(outcome, events):
        assert any(e.kind == "escalated" for e in events)

    def kernel_retry_checks(outcome, events):
        codes = [e.payload["error_code"] for e in events if e.kind == "diagnosed"]
        assert codes == ["nan_objective", "solver_no_convergence"]
        assert sum(1 for e in events if e.kind == "run_finished") == 3

    def constraint_checks(outcome, events):
        actions = [e.payload["action"] for e in events if e.kind == "directive"]
        assert "change_constraint" in actions
        assert outcome.memory.latest_spec.volume_bound() == pytest.approx(0.4)

    def filter_checks(outcome, events):
        actions = [e.payload["action"] for e in events if e.kind == "directive"]
        assert "increase_r_min" in actions
        assert outcome.verdict.metrics.checkerboard <= 0.02

    def continuation_checks(outcome, events):
        actions = [e.payload["action"] for e in events if e.kind == "directive"]
        assert "steepen_beta_schedule" in actions
        assert outcome.verdict.metrics.discreteness < 0.15

    cases = (
        (
            "misplaced load",
            "l_bracket_stress",
            FaultPlan(misplace_load=True),
            misplaced_load_checks,
        ),
        (
            "load inside a void",
            "l_bracket_stress",
            FaultPlan(load_into_void=True, disabled_checks=frozenset({"bc"})),
            escalation_checks,
        ),
        (
            "repeated kernel failures",
            "cantilever",
            FaultPlan(kernel_failures=("nan_objective", "solver_no_convergence")),
            kernel_retry_checks,
        ),
        (
            "wrong constraint kind",
            "cantilever",
            FaultPlan(wrong_constraint=True, disabled_checks=frozenset({"consistency"})),
            constraint_checks,
        ),
        (
            "undersized filter radius",
            "mbb_mid_right",
            FaultPlan(shrink_r_min=True, disabled_checks=frozenset({"filter"})),
            filter_checks,
        ),
        (
            "flat projection continuation",
            "cantilever",
            FaultPlan(gentle_beta=True),
            continuation_checks,
        ),
    )
    for i, (label, benchmark, fault_plan, extra_checks) in enumerate(cases):
        workspace, outcome = run_session(
            tmp_path / f"case{i}", benchmark_query(benchmark), fault_plan=fault_plan
        )
        assert outcome.status == "accepted", f"{label}: {outcome.reason}"
        refinements = outcome.memory.counters["system_refinements"]
        assert refinements <= 12, f"{label}: {refinements} refinement rounds"
        extra_checks(outcome, workspace.events.since(0))


def test_sessions_accept_reliably_across_seeds_and_personas(tmp_path):
    for name in ("cantilever", "mbb_mid_right", "l_bracket_stress"):
        for seed in range(10):
            _, outcome = run_session(
                tmp_path / f"{name}_{seed}", benchmark_query(name), seed=seed
            )
            assert outcome.status == "accepted", (
                f"{name} with seed {seed}: {outcome.reason}"
            )

    # a scripted transcript replays to byte-identical memory
    query = benchmark_query("cantilever")
    _, plain = run_session(tmp_path / "plain", query)
    transcript = (serialize_problem(builtin_benchmark("cantilever")),)
    _, scripted = run_session(
        tmp_path / "scripted", query, personas=build_personas("mock", transcript)
    )
    assert scripted.status == "accepted"
    assert scripted.memory.transcript() == plain.memory.transcript()


def test_event_log_is_byte_deterministic(tmp_path):
    query = benchmark_query("cantilever")
    ws_a, _ = run_session(tmp_path / "a", query, seed=3)
    ws_b, _ = run_session(tmp_path / "b", query, seed=3)
    log_a = (ws_a.root / "events.ndjson").read_bytes()
    log_b = (ws_b.root / "events.ndjson").read_bytes()
    assert log_a == log_b


def test_hole_feedback_revises_the_spec_and_reaccepts(tmp_path):
    query = benchmark_query("cantilever")
    workspace = SessionWorkspace(tmp_path)
    first = run_pipeline(query, workspace)
    assert first.status == "accepted"
    accepted_spec = first.memory.latest_spec
    version_count = len(first.memory.spec_versions)

    second = run_pipeline(
        query, workspace, memory=first.memory, feedback="please add a hole"
    )
    assert second.status == "accepted"
    revised = second.memory.spec_versions[version_count]
    changes = spec_diff(accepted_spec, revised)
    assert [c.path for c in changes] == ["geometry.void_regions"]
    assert len(revised.geometry.void_regions) == (
        len(accepted_spec.geometry.void_regions) + 1
    )
