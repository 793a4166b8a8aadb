"""Trace events and the line-oriented trace file format.

One JSON object per line.  The first line is the header
(``{"kind":"header",...}``); every later line is an event with at least
``step``, ``kind`` and ``subject`` (an agent id or ``env``).  Events are
ordered by (step, subject, kind) and, within that, by emission order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, Iterable

INJECT = "inject"
TRANSFER = "transfer"
FIRE = "fire"
STALL = "stall"
DONE = "done"
BELIEF = "belief"
ERROR = "error"
RECONFIG = "reconfig"

KINDS = (INJECT, TRANSFER, FIRE, STALL, DONE, BELIEF, ERROR, RECONFIG)


@dataclass(frozen=True)
class TraceEvent:
    step: int
    kind: str
    subject: str
    data: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"step": self.step, "kind": self.kind, "subject": self.subject, **self.data}


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def ordered(events: Iterable[TraceEvent]) -> list[TraceEvent]:
    indexed = list(enumerate(events))
    indexed.sort(key=lambda p: (p[1].step, p[1].subject, p[1].kind, p[0]))
    return [e for _, e in indexed]


def format_trace(events: Iterable[TraceEvent], header: dict | None = None) -> str:
    lines = []
    if header is not None:
        lines.append(dumps({"kind": "header", **header}))
    lines.extend(dumps(e.to_dict()) for e in ordered(events))
    return "\n".join(lines) + "\n"


def write_trace(fp: IO[str], events: Iterable[TraceEvent], header: dict | None = None) -> None:
    fp.write(format_trace(events, header))


def read_trace(fp: IO[str]) -> tuple[dict | None, list[TraceEvent]]:
    header = None
    events = []
    for line in fp:
        line = line.strip()
        if not line:
            continue
        obj = json.loads(line)
        if obj.get("kind") == "header":
            header = obj
            continue
        step, kind, subject = obj.pop("step"), obj.pop("kind"), obj.pop("subject")
        events.append(TraceEvent(step, kind, subject, obj))
    return header, events
