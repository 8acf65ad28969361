"""Per-session workspace layout and the append-only event log.

Each session owns one directory holding versioned artifacts
(``spec_v*.json``, ``plan_v*.json``, ``history_v*.csv``,
``density_v*.png``, ``convergence_v*.png``), the event stream
(``events.ndjson``) and the final ``report.md``.  All recorded paths are
workspace-relative so transcripts compare equal across machines.

Event timestamps come from a logical clock (a fixed epoch advanced one
second per event) so identical runs produce identical bytes.
"""

from __future__ import annotations

import json
import re
import threading
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Callable

from .agents.memory import AgentEvent
from .plan import RunPlan, plan_to_dict
from .problem import ProblemSpec, to_dict

_EPOCH = datetime(2000, 1, 1, tzinfo=timezone.utc)
_ARTIFACT_NAME = re.compile(
    r"^(spec_v\d+\.json|plan_v\d+\.json|history_v\d+\.csv|density_v\d+\.png"
    r"|convergence_v\d+\.png|events\.ndjson|report\.md)$"
)


def logical_timestamp(seq: int) -> str:
    return (_EPOCH + timedelta(seconds=seq)).strftime("%Y-%m-%dT%H:%M:%SZ")


class EventLog:
    """Append-only ndjson event stream with live subscribers."""

    def __init__(self, path: Path):
        self.path = path
        self._events: list[AgentEvent] = []
        self._subscribers: list[Callable[[AgentEvent], None]] = []
        self._lock = threading.Lock()

    def emit(self, agent: str, kind: str, payload: dict) -> AgentEvent:
        with self._lock:
            seq = len(self._events) + 1
            event = AgentEvent(
                seq=seq,
                timestamp=logical_timestamp(seq),
                agent=agent,
                kind=kind,
                payload=payload,
            )
            self._events.append(event)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(event.to_dict(), sort_keys=True) + "\n")
            subscribers = list(self._subscribers)
        for callback in subscribers:
            callback(event)
        return event

    def since(self, seq: int) -> list[AgentEvent]:
        with self._lock:
            return [e for e in self._events if e.seq > seq]

    def subscribe(self, callback: Callable[[AgentEvent], None]):
        with self._lock:
            self._subscribers.append(callback)

    def unsubscribe(self, callback: Callable[[AgentEvent], None]):
        with self._lock:
            if callback in self._subscribers:
                self._subscribers.remove(callback)

    @property
    def last_seq(self) -> int:
        with self._lock:
            return len(self._events)


class SessionWorkspace:
    """Owns the file layout of one session directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.events = EventLog(self.root / "events.ndjson")

    # -- naming --------------------------------------------------------

    @staticmethod
    def spec_name(version: int) -> str:
        return f"spec_v{version}.json"

    @staticmethod
    def plan_name(version: int) -> str:
        return f"plan_v{version}.json"

    @staticmethod
    def history_name(version: int) -> str:
        return f"history_v{version}.csv"

    @staticmethod
    def density_name(version: int) -> str:
        return f"density_v{version}.png"

    @staticmethod
    def convergence_name(version: int) -> str:
        return f"convergence_v{version}.png"

    # -- writes --------------------------------------------------------

    def write_spec(self, version: int, spec: ProblemSpec) -> str:
        name = self.spec_name(version)
        (self.root / name).write_text(
            json.dumps(to_dict(spec), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        return name

    def write_plan(self, version: int, plan: RunPlan) -> str:
        name = self.plan_name(version)
        (self.root / name).write_text(
            json.dumps(plan_to_dict(plan), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        return name

    def write_text(self, name: str, text: str) -> str:
        (self.root / name).write_text(text, encoding="utf-8")
        return name

    # -- reads ---------------------------------------------------------

    def artifact_names(self) -> list[str]:
        return sorted(
            p.name for p in self.root.iterdir() if _ARTIFACT_NAME.match(p.name)
        )

    def artifact_path(self, name: str) -> Path:
        """Resolve an artifact by name; rejects anything outside the layout."""
        if not _ARTIFACT_NAME.match(name):
            raise KeyError(f"unknown artifact name {name!r}")
        path = self.root / name
        if not path.is_file():
            raise FileNotFoundError(name)
        return path
