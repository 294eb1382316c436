"""Static analysis over a validated program: the agent call graph, cycle
(infinite-loop) detection, lints, and an optional LLM-assisted debug report."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

import networkx as nx

from .model import (
    AgentDef,
    Call,
    Condition,
    Diagnostic,
    EnsembleBody,
    FlowBody,
    KbBody,
    LlmBody,
    Next,
    Program,
    Step,
)
from .parser import validate_program
from .providers import Message, Provider

MAX_CYCLES = 1000

DEBUG_QUESTION = (
    "Is there any infinite loop in the logic of this chatbot? "
    'If so, please point it out. Otherwise, simply reply "No."'
)


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    provenance: str  # flow_call | prompt_mention | contains | fallback
    bounded: bool = False


@dataclass(frozen=True)
class Cycle:
    nodes: tuple[str, ...]
    bounded: bool
    provenance: tuple[str, ...]


@dataclass
class CallGraph:
    nodes: tuple[str, ...]
    edges: tuple[Edge, ...]
    truncated: bool = False

    def edge_between(self, src: str, dst: str) -> Optional[Edge]:
        for e in self.edges:
            if e.src == src and e.dst == dst:
                return e
        return None


def _iter_blocks(steps: tuple[Step, ...]):
    yield steps
    for step in steps:
        if isinstance(step, Condition):
            for branch in step.branches:
                yield from _iter_blocks(branch.body)
            if step.else_body:
                yield from _iter_blocks(step.else_body)


def _flow_call_edges(agent: AgentDef, agent_names: set[str]) -> list[Edge]:
    body = agent.body
    assert isinstance(body, FlowBody)
    edges = []
    blocks = [body.steps] + [steps for _, steps in body.subflows]
    for root in blocks:
        for block in _iter_blocks(root):
            for i, step in enumerate(block):
                if isinstance(step, Call) and step.callee in agent_names:
                    # a call immediately guarded by a bounded jump back is a
                    # bounded detour, not an unbounded re-entry
                    bounded = any(
                        isinstance(later, Next) and later.tries is not None
                        for later in block[i + 1 :]
                    )
                    edges.append(Edge(agent.name, step.callee, "flow_call", bounded))
    return edges


def build_call_graph(program: Program) -> CallGraph:
    """Edges from flow Call steps, ensemble contains, fallback agent names, and
    whole-token agent-name mentions in LLM prompts (case-sensitive)."""
    names = set(program.agent_names)
    edges: list[Edge] = []
    for agent in program.agents:
        if isinstance(agent.body, FlowBody):
            edges.extend(_flow_call_edges(agent, names))
        elif isinstance(agent.body, EnsembleBody):
            for spec in agent.body.contains:
                if spec.agent_name in names:
                    edges.append(Edge(agent.name, spec.agent_name, "contains"))
        elif isinstance(agent.body, LlmBody):
            for other in sorted(names):
                if other == agent.name:
                    continue
                if re.search(rf"(?<![\w]){re.escape(other)}(?![\w])", agent.body.prompt):
                    edges.append(Edge(agent.name, other, "prompt_mention"))
        if agent.header.fallback and agent.header.fallback in names:
            edges.append(Edge(agent.name, agent.header.fallback, "fallback"))
    # deterministic and declaration-order-insensitive ordering
    unique = sorted(set(edges), key=lambda e: (e.src, e.dst, e.provenance))
    return CallGraph(nodes=tuple(sorted(names)), edges=tuple(unique))


def detect_cycles(graph: CallGraph) -> list[Cycle]:
    """Every elementary cycle, flagged bounded iff all of its edges are bounded.
    Enumeration is capped; the graph is marked truncated past the cap."""
    g = nx.DiGraph()
    g.add_nodes_from(graph.nodes)
    for edge in graph.edges:
        g.add_edge(edge.src, edge.dst)
    cycles: list[Cycle] = []
    for count, nodes in enumerate(nx.simple_cycles(g)):
        if count >= MAX_CYCLES:
            graph.truncated = True
            break
        # rotate to the smallest node so reporting is independent of traversal
        pivot = nodes.index(min(nodes))
        ordered = tuple(nodes[pivot:] + nodes[:pivot])
        ring = list(ordered) + [ordered[0]]
        cycle_edges = [graph.edge_between(a, b) for a, b in zip(ring, ring[1:])]
        cycles.append(
            Cycle(
                nodes=ordered,
                bounded=all(e is not None and e.bounded for e in cycle_edges),
                provenance=tuple(e.provenance if e else "unknown" for e in cycle_edges),
            )
        )
    cycles.sort(key=lambda c: (len(c.nodes), c.nodes))
    return cycles


def _reachable_from_main(program: Program, graph: CallGraph) -> set[str]:
    seen = {"main"}
    frontier = ["main"]
    while frontier:
        node = frontier.pop()
        for edge in graph.edges:
            if edge.src == node and edge.dst not in seen:
                seen.add(edge.dst)
                frontier.append(edge.dst)
    return seen


def lint_program(program: Program, tool_host=None) -> list[Diagnostic]:
    """validate_program plus graph-level lints."""
    diagnostics = list(validate_program(program))
    graph = build_call_graph(program)
    reachable = _reachable_from_main(program, graph)
    for agent in program.agents:
        if agent.name not in reachable:
            diagnostics.append(
                Diagnostic(
                    "warning",
                    "W_UNREACHABLE_AGENT",
                    f"agent {agent.name!r} is never reachable from main",
                    agent.loc,
                )
            )
        if isinstance(agent.body, LlmBody) and tool_host is not None:
            advertised = {s.name for s in tool_host.schemas()}
            for fn in agent.body.uses:
                if fn not in advertised:
                    diagnostics.append(
                        Diagnostic(
                            "warning",
                            "W_UNKNOWN_TOOL",
                            f"agent {agent.name!r} uses {fn!r} but the tool host does not serve it",
                            agent.loc,
                        )
                    )
    kb_names = {a.name for a in program.agents if isinstance(a.body, KbBody)}
    for agent in program.agents:
        if not isinstance(agent.body, FlowBody):
            continue
        blocks = [agent.body.steps] + [s for _, s in agent.body.subflows]
        for root in blocks:
            for block in _iter_blocks(root):
                for step in block:
                    if isinstance(step, Call) and step.callee in kb_names and step.arg_bindings:
                        diagnostics.append(
                            Diagnostic(
                                "warning",
                                "W_KB_CALL_ARGS",
                                f"KB agent {step.callee!r} takes no arguments; bindings ignored",
                                step.loc,
                            )
                        )
    return diagnostics


@dataclass
class DebugReport:
    model_text: str
    cycles: list[Cycle]
    agree: bool

    def render(self) -> str:
        static = (
            "\n".join("  " + " -> ".join(c.nodes + (c.nodes[0],)) for c in self.cycles)
            or "  (none)"
        )
        lines = [
            "Static cycle detection:",
            static,
            "Model report:",
            "  " + self.model_text.replace("\n", "\n  "),
            "Agreement: " + ("YES" if self.agree else "MISMATCH"),
        ]
        return "\n".join(lines)


def llm_debug_report(program_source: str, provider: Provider, program: Program) -> DebugReport:
    """Ask the model the fixed infinite-loop question about the program source
    and place its answer next to the static finding."""
    from .providers import ChatRequest

    response = provider.chat_complete(
        ChatRequest(
            messages=(Message("user", program_source + "\n\n" + DEBUG_QUESTION),)
        )
    )
    cycles = detect_cycles(build_call_graph(program))
    unbounded = [c for c in cycles if not c.bounded]
    model_says_no = bool(re.match(r"\s*[\"']?no[.\"']?\s*$", response.content, re.IGNORECASE))
    agree = model_says_no == (not unbounded)
    return DebugReport(model_text=response.content, cycles=cycles, agree=agree)


def graph_to_json(graph: CallGraph, cycles: list[Cycle]) -> dict:
    return {
        "nodes": list(graph.nodes),
        "edges": [
            {"from": e.src, "to": e.dst, "provenance": e.provenance, "bounded": e.bounded}
            for e in graph.edges
        ],
        "cycles": [
            {"nodes": list(c.nodes), "bounded": c.bounded, "provenance": list(c.provenance)}
            for c in cycles
        ],
        "truncated": graph.truncated,
    }
