"""Engine step outcomes shared by the flow/llm/kb/ensemble engines and driver."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any


class _Waiting:
    def __repr__(self):
        return "WAIT"


WAIT = _Waiting()


@dataclass
class Returned:
    status: str  # "success" | "error"
    message: str = ""


@dataclass
class InvokeAgent:
    callee: str
    bindings: tuple[tuple[str, Any], ...] = ()  # already-resolved values


@dataclass
class Handoff:
    target: str
    had_text: bool  # a visible reply accompanied the marker
