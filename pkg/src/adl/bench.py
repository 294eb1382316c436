"""Benchmark harness: runs a scripted intent-shift dialogue under each
orchestration strategy and reports per-turn token cost, provider calls, and
latency (modeled and wall-clock)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import yaml

from .errors import AdlError
from .model import Program
from .providers import Provider
from .runtime import SessionConfig, create_session, post_user_message
from .runtime.session import STRATEGIES
from .toolbridge import ToolHost


@dataclass(frozen=True)
class ScriptTurn:
    text: str
    expected_route: Optional[str] = None


@dataclass(frozen=True)
class DialogueScript:
    turns: tuple[ScriptTurn, ...]
    repetitions: int = 5

    def __post_init__(self):
        assert self.turns, "a dialogue script needs at least one turn"

    @classmethod
    def from_file(cls, path: str) -> "DialogueScript":
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh) or {}
        if isinstance(doc, list):
            doc = {"turns": doc}
        turns = []
        for entry in doc.get("turns", []):
            if isinstance(entry, str):
                turns.append(ScriptTurn(text=entry))
            else:
                turns.append(
                    ScriptTurn(text=str(entry["text"]), expected_route=entry.get("expected_route"))
                )
        return cls(turns=tuple(turns), repetitions=int(doc.get("repetitions", 5)))


@dataclass
class BenchRow:
    strategy: str
    repetition: int
    turn: int
    token_cost: int
    provider_calls: int
    latency_ms: int
    modeled_latency_ms: int


@dataclass
class StrategyAggregate:
    strategy: str
    mean_token_cost: float
    mean_provider_calls: float
    mean_latency_ms: float
    mean_modeled_latency_ms: float


@dataclass
class BenchReport:
    aggregates: list[StrategyAggregate] = field(default_factory=list)
    rows: list[BenchRow] = field(default_factory=list)
    trace_dumps: dict[str, str] = field(default_factory=dict)  # strategy -> first-rep dump

    def aggregate(self, strategy: str) -> StrategyAggregate:
        for a in self.aggregates:
            if a.strategy == strategy:
                return a
        raise KeyError(strategy)


def _current_route(session) -> Optional[str]:
    for act in reversed(session.stack):
        if act.kind == "ensemble":
            return act.active_child
    return None


def run_benchmark(
    program: Program,
    script: DialogueScript,
    strategies: list[str],
    provider: Provider,
    tool_host: Optional[ToolHost] = None,
    config: Optional[SessionConfig] = None,
) -> BenchReport:
    if not strategies:
        raise AdlError("E_FORMAT", "no strategies requested")
    for strategy in strategies:
        if strategy not in STRATEGIES:
            raise AdlError("E_FORMAT", f"unknown strategy {strategy!r}")
    report = BenchReport()
    for strategy in strategies:
        for rep in range(script.repetitions):
            session = create_session(
                program,
                strategy=strategy,
                provider=provider,
                tool_host=tool_host,
                config=config,
            )
            for turn_index, turn in enumerate(script.turns, start=1):
                post_user_message(session, turn.text)
                if turn.expected_route is not None:
                    route = _current_route(session)
                    if route != turn.expected_route:
                        raise AdlError(
                            "E_ROUTE_MISMATCH",
                            f"{strategy} rep {rep} turn {turn_index}: expected "
                            f"{turn.expected_route!r}, got {route!r}",
                        )
                metrics = session.turn_metrics[-1]
                report.rows.append(
                    BenchRow(
                        strategy=strategy,
                        repetition=rep,
                        turn=turn_index,
                        token_cost=metrics.token_cost,
                        provider_calls=metrics.provider_calls,
                        latency_ms=metrics.latency_ms,
                        modeled_latency_ms=metrics.modeled_latency_ms,
                    )
                )
            if rep == 0:
                report.trace_dumps[strategy] = session.dump_trace()
        rows = [r for r in report.rows if r.strategy == strategy]
        n = len(rows)
        report.aggregates.append(
            StrategyAggregate(
                strategy=strategy,
                mean_token_cost=sum(r.token_cost for r in rows) / n,
                mean_provider_calls=sum(r.provider_calls for r in rows) / n,
                mean_latency_ms=sum(r.latency_ms for r in rows) / n,
                mean_modeled_latency_ms=sum(r.modeled_latency_ms for r in rows) / n,
            )
        )
    return report


def render_report(report: BenchReport, fmt: str = "table") -> str:
    if fmt == "json":
        return json.dumps(
            {
                "aggregates": [vars(a) for a in report.aggregates],
                "rows": [vars(r) for r in report.rows],
            },
            indent=2,
        )
    if fmt != "table":
        raise AdlError("E_FORMAT", f"unknown report format {fmt!r}")
    header = f"{'Method':<16}{'TokenCost':>10}  {'Latency':>8}  {'Wall':>6}  {'Calls':>6}"
    lines = [header, "-" * len(header)]
    for a in report.aggregates:
        lines.append(
            f"{a.strategy:<16}{a.mean_token_cost:>10.1f}  "
            f"{a.mean_modeled_latency_ms:>8.1f}  {a.mean_latency_ms:>6.1f}  "
            f"{a.mean_provider_calls:>6.2f}"
        )
    return "\n".join(lines)
