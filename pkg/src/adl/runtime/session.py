"""Session state: activation stack, argument store, transcript, trace, metrics.

A session is confined to one logical worker; all operations on it are
serialized by the caller.  The program and provider handles are shared
read-only across sessions.
"""

from __future__ import annotations

import copy
import json
import time
import uuid
from dataclasses import dataclass, field
from typing import Any, Optional

from ..errors import SessionError
from ..model import AgentDef, Program
from ..providers import ChatRequest, ChatResponse, Message, Provider
from ..toolbridge import ToolHost

STRATEGIES = ("merging", "first_success", "best_of_n", "proactive", "autonomous")


@dataclass
class SessionConfig:
    """Runtime knobs that are not part of the program itself."""

    pre_turn_agents: tuple[str, ...] = ()  # guardrails checked before each turn
    agent_providers: dict[str, Provider] = field(default_factory=dict)
    kb_synthesis: bool = True  # let KB agents synthesize answers via the provider
    kb_fetch_urls: bool = False
    window: int = 12  # transcript entries shown to LLM agents
    base_dir: str = "."  # resolution root for KB source files


@dataclass
class TraceEvent:
    seq: int
    turn: int
    kind: str
    payload: dict

    def to_json(self) -> str:
        return json.dumps(
            {"seq": self.seq, "turn": self.turn, "kind": self.kind, "payload": self.payload},
            default=str,
        )


@dataclass
class TurnMetrics:
    turn: int
    token_cost: int
    latency_ms: int  # wall clock, user input to final bot message
    provider_calls: int
    modeled_latency_ms: int  # sum of per-call latencies, parallel groups as max


@dataclass
class TurnResult:
    bot_messages: list[str]
    terminated: bool
    status: Optional[str] = None


@dataclass
class StateSnapshot:
    active_agent: Optional[str]
    args: dict
    transcript: list
    last_turn_metrics: Optional[TurnMetrics]


@dataclass
class Activation:
    """One entry on the agent stack.

    invoked_by records who pushed it: "entry" (session start), "call" (flow
    Call step), "ensemble" (strategy-managed child, popped after responding),
    or "fallback" (transient fallback responder).
    """

    agent: str
    kind: str  # kb | llm | flow | ensemble
    invoked_by: str
    frames: list = field(default_factory=list)  # flow cursor: [block, index] pairs
    tries: dict = field(default_factory=dict)  # Next-site id -> remaining jumps
    init_done: bool = False
    active_child: Optional[str] = None  # ensembles: last/current responder
    merged_prefix: Optional[list] = None  # messages prepended under merging
    merged_guard: Optional[str] = None  # guardrail name merged into this call


class Session:
    def __init__(
        self,
        program: Program,
        provider: Optional[Provider] = None,
        tool_host: Optional[ToolHost] = None,
        strategy: str = "proactive",
        config: Optional[SessionConfig] = None,
        session_id: Optional[str] = None,
    ):
        if strategy not in STRATEGIES:
            raise SessionError("E_STRATEGY_UNKNOWN", f"unknown strategy {strategy!r}")
        self.id = session_id or uuid.uuid4().hex
        self.program = program
        self.provider = provider
        self.tool_host = tool_host
        self.strategy = strategy
        self.config = config or SessionConfig()
        self.stack: list[Activation] = []
        self.args: dict[str, dict[str, Any]] = {}
        self.links: dict[tuple[str, str], set[tuple[str, str]]] = {}
        self.transcript: list[tuple[str, str]] = []
        self.trace: list[TraceEvent] = []
        self.turn_metrics: list[TurnMetrics] = []
        self.turn_index = -1
        self.terminated = False
        self.status: Optional[str] = None
        # per-turn scratch
        self.halt_turn = False
        self.fallback_depth = 0
        self.parallel_group: Optional[str] = None
        self.candidate_of: Optional[str] = None  # set while running a strategy candidate
        self._seq = 0
        self._turn_started: float = 0.0
        self._turn_latencies: list[tuple[Optional[str], int]] = []
        self._kb_indexes: dict[str, Any] = {}
        self._label_paths: dict[str, dict] = {}

    # --- trace & transcript ---------------------------------------------

    def emit(self, kind: str, /, **payload) -> TraceEvent:
        self._seq += 1
        event = TraceEvent(seq=self._seq, turn=max(self.turn_index, 0), kind=kind, payload=payload)
        self.trace.append(event)
        return event

    def bot(self, text: str, agent: str) -> None:
        self.transcript.append(("bot", text))
        payload = {"agent": agent, "text": text}
        if self.candidate_of:
            payload["candidate"] = self.candidate_of
        self.emit("bot_message", **payload)

    def last_user_text(self) -> str:
        for role, text in reversed(self.transcript):
            if role == "user":
                return text
        return ""

    # --- argument store ---------------------------------------------------

    def get_arg(self, owner: str, arg: str) -> Any:
        return self.args.get(owner, {}).get(arg)

    def set_arg(self, owner: str, arg: str, value: Any) -> None:
        # writes propagate over ref links in both directions
        targets = {(owner, arg)}
        queue = [(owner, arg)]
        while queue:
            key = queue.pop()
            for linked in self.links.get(key, ()):
                if linked not in targets:
                    targets.add(linked)
                    queue.append(linked)
        for o, a in sorted(targets):
            self.args.setdefault(o, {})[a] = value
        self.emit("arg_set", owner=owner, arg=arg, value=value, linked=len(targets) - 1)

    def link_args(self, a: tuple[str, str], b: tuple[str, str]) -> None:
        self.links.setdefault(a, set()).add(b)
        self.links.setdefault(b, set()).add(a)

    # --- provider access ---------------------------------------------------

    def llm(
        self,
        agent: str,
        purpose: str,
        messages: list[Message],
        tools: tuple[dict, ...] = (),
    ) -> ChatResponse:
        if self.provider is None and agent not in self.config.agent_providers:
            raise SessionError("E_NO_PROVIDER", "no LLM provider configured for this session")
        provider = self.config.agent_providers.get(agent, self.provider)
        response = provider.chat_complete(ChatRequest(messages=tuple(messages), tools=tools))
        payload = {
            "agent": agent,
            "purpose": purpose,
            "prompt_tokens": response.prompt_tokens,
            "completion_tokens": response.completion_tokens,
            "latency_ms": response.latency_ms,
        }
        if self.parallel_group:
            payload["parallel_group"] = self.parallel_group
        if self.candidate_of:
            payload["candidate"] = self.candidate_of
        self.emit("llm_call", **payload)
        self._turn_latencies.append((self.parallel_group, response.latency_ms))
        return response

    # --- turn bookkeeping ---------------------------------------------------

    def begin_turn(self) -> None:
        self.turn_index += 1
        self.halt_turn = False
        self.fallback_depth = 0
        self._turn_started = time.monotonic()
        self._turn_latencies = []

    def end_turn(self) -> TurnMetrics:
        turn_events = [e for e in self.trace if e.turn == self.turn_index and e.kind == "llm_call"]
        groups: dict[str, int] = {}
        serial = 0
        for group, latency in self._turn_latencies:
            if group:
                groups[group] = max(groups.get(group, 0), latency)
            else:
                serial += latency
        metrics = TurnMetrics(
            turn=self.turn_index,
            token_cost=sum(e.payload["prompt_tokens"] for e in turn_events),
            latency_ms=int((time.monotonic() - self._turn_started) * 1000),
            provider_calls=len(turn_events),
            modeled_latency_ms=serial + sum(groups.values()),
        )
        self.turn_metrics.append(metrics)
        return metrics

    def count_turn_tokens(self, turn: int) -> int:
        for m in self.turn_metrics:
            if m.turn == turn:
                return m.token_cost
        raise SessionError("E_NO_TURN", f"no metrics recorded for turn {turn}")

    # --- inspection -----------------------------------------------------------

    @property
    def active_agent(self) -> Optional[str]:
        return self.stack[-1].agent if self.stack else None

    def get_state(self) -> StateSnapshot:
        return StateSnapshot(
            active_agent=self.active_agent,
            args=copy.deepcopy(self.args),
            transcript=list(self.transcript),
            last_turn_metrics=self.turn_metrics[-1] if self.turn_metrics else None,
        )

    def dump_trace(self) -> str:
        return "\n".join(event.to_json() for event in self.trace)

    def agent_def(self, name: str) -> AgentDef:
        found = self.program.agent(name)
        assert found is not None, f"agent {name!r} vanished from a validated program"
        return found
