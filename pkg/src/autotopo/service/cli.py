"""Command line front end: run one design session in-process.

Exit codes: 0 when the session ends accepted, 2 when it aborts, 1 for
usage errors.  Fault switches corrupt the first formulation or force
kernel failures so the correction loops can be watched end to end.
"""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
from pathlib import Path

from ..agents.faults import FaultPlan
from ..agents.intent import benchmark_query
from ..agents.memory import EVENT_KINDS
from ..agents.pipeline import PipelinePolicy, build_personas, run_pipeline
from ..agents.validator import CHECK_NAMES
from ..problem import benchmark_names
from ..runloop import ERROR_CODES
from ..workspace import SessionWorkspace

INJECT_KINDS = (
    "load-position",
    "load-in-void",
    "kernel-failure",
    "wrong-constraint",
    "small-rmin",
    "gentle-beta",
)

_DEFAULT_KERNEL_FAILURE = "nan_objective"


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; this front end reserves 2 for
    aborted sessions, so usage failures exit 1 instead."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="autotopo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one design session", parents=[])
    source = run.add_mutually_exclusive_group(required=True)
    source.add_argument(
        "--benchmark", choices=benchmark_names(), help="built-in benchmark query"
    )
    source.add_argument(
        "--problem",
        type=Path,
        help="file whose contents are the design query (may embed problem JSON)",
    )
    run.add_argument("--out", type=Path, help="session workspace directory")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument(
        "--personas",
        choices=("deterministic", "mock", "llm"),
        default="deterministic",
    )
    run.add_argument(
        "--transcript",
        type=Path,
        help="JSON array of canned scientist replies (mock personas)",
    )
    run.add_argument("--timing", choices=("none", "wall"), default="none")
    run.add_argument(
        "--inject",
        action="append",
        default=[],
        metavar="FAULT",
        help=f"inject a fault: {', '.join(INJECT_KINDS)}; "
        "kernel-failure takes an optional :code suffix",
    )
    run.add_argument(
        "--disable-check",
        action="append",
        default=[],
        choices=CHECK_NAMES,
        help="skip a validator check",
    )
    run.add_argument(
        "--quiet", action="store_true", help="do not print the event stream"
    )

    serve = sub.add_parser("serve", help="start the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--workdir", type=Path, help="base directory for sessions")
    return parser


def _fault_plan(parser: _Parser, args) -> FaultPlan | None:
    injections = list(args.inject)
    disabled = frozenset(args.disable_check)
    if not injections and not disabled:
        return None
    flags = {}
    failures: list[str] = []
    for item in injections:
        kind, _, code = item.partition(":")
        if kind not in INJECT_KINDS:
            parser.error(
                f"unknown fault {item!r} (choose from {', '.join(INJECT_KINDS)})"
            )
        if kind == "kernel-failure":
            code = code or _DEFAULT_KERNEL_FAILURE
            if code not in ERROR_CODES:
                parser.error(
                    f"unknown kernel failure code {code!r} "
                    f"(choose from {', '.join(ERROR_CODES)})"
                )
            failures.append(code)
        elif code:
            parser.error(f"fault {kind!r} takes no :code suffix")
        else:
            flags[kind.replace("-", "_")] = True
    return FaultPlan(
        misplace_load=flags.get("load_position", False),
        load_into_void=flags.get("load_in_void", False),
        wrong_constraint=flags.get("wrong_constraint", False),
        shrink_r_min=flags.get("small_rmin", False),
        gentle_beta=flags.get("gentle_beta", False),
        kernel_failures=tuple(failures),
        disabled_checks=disabled,
    )


def _summary(event) -> str:
    p = event.payload
    kind = event.kind
    if kind == "formulated":
        return f"spec v{p['version']} ({p['provenance']}), objective {p['objective']}"
    if kind == "finding":
        return f"{p['code']} [{p['severity']}] at {p['path']}"
    if kind == "corrected":
        return f"spec v{p['version']} fixes finding {p['finding']}"
    if kind == "escalated":
        return f"finding {p['finding']} sent back to the scientist"
    if kind == "planned":
        params = p["params"]
        return (
            f"plan v{p['version']}: {params['method']}, "
            f"r_min {params['r_min']:g}, move {params['move_limit']:g}"
        )
    if kind == "run_started":
        return f"run {p['run']} on plan v{p['plan']}"
    if kind == "run_finished":
        tail = f"error {p['error_code']}" if p["error_code"] else (
            f"objective {p['final_objective']:.6g}"
            if p["final_objective"] is not None
            else "no objective"
        )
        return f"run {p['run']}: {p['termination']} after {p['iterations']} iterations, {tail}"
    if kind == "diagnosed":
        return f"{p['error_code']} -> {p['directive']['action']}"
    if kind == "verdict":
        return (
            "all criteria passed"
            if p["accepted"]
            else f"rejected at {p['first_failed']}"
        )
    if kind == "directive":
        return f"{p['target']}/{p['action']}: {p['rationale'][:70]}"
    if kind == "accepted":
        return f"objective {p['objective']:.6g} after {p['iterations']} iterations"
    if kind == "aborted":
        return p["reason"]
    return json.dumps(p, sort_keys=True)


def _run(parser: _Parser, args) -> int:
    if args.problem is not None:
        if not args.problem.is_file():
            parser.error(f"problem file not found: {args.problem}")
        query = args.problem.read_text(encoding="utf-8")
    else:
        query = benchmark_query(args.benchmark)

    transcript: tuple[str, ...] = ()
    if args.personas == "mock":
        if args.transcript is None:
            parser.error("--personas mock requires --transcript")
        if not args.transcript.is_file():
            parser.error(f"transcript file not found: {args.transcript}")
        raw = json.loads(args.transcript.read_text(encoding="utf-8"))
        if not isinstance(raw, list) or not all(isinstance(x, str) for x in raw):
            parser.error("transcript must be a JSON array of strings")
        transcript = tuple(raw)
    elif args.transcript is not None:
        parser.error("--transcript only makes sense with --personas mock")

    out = args.out or Path(tempfile.mkdtemp(prefix="autotopo_"))
    workspace = SessionWorkspace(out)
    print(f"workspace: {workspace.root}")

    if not args.quiet:
        width = max(len(k) for k in EVENT_KINDS)

        def echo(event):
            print(
                f"[{event.seq:3d}] {event.agent:<9s} "
                f"{event.kind:<{width}s} {_summary(event)}"
            )

        workspace.events.subscribe(echo)

    outcome = run_pipeline(
        query,
        workspace,
        policy=PipelinePolicy(
            seed=args.seed, timing=args.timing, fault_plan=_fault_plan(parser, args)
        ),
        personas=build_personas(args.personas, transcript),
    )
    print(f"session {outcome.status}: {outcome.reason}")
    return 0 if outcome.status == "accepted" else 2


def _serve(args) -> int:
    import uvicorn

    from .app import create_app

    uvicorn.run(create_app(args.workdir), host=args.host, port=args.port)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command == "serve":
        return _serve(args)
    return _run(parser, args)


if __name__ == "__main__":
    sys.exit(main())
