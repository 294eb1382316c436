"""Ensemble-agent orchestration: agent selection, guardrails, argument
synchronization, and the five strategies (merging, first_success, best_of_n,
proactive, autonomous)."""

from __future__ import annotations

import copy
import re
from dataclasses import dataclass, field
from typing import Optional

from ..errors import AdlError
from ..model import AgentDef, EnsembleBody, InvokeSpec
from ..providers import Message
from . import templates
from .conditions import parse_yes_no
from .flow import exec_simple_steps
from .outcomes import WAIT
from .session import Activation, Session


def guard_names(session: Session, ensemble: AgentDef) -> tuple[str, ...]:
    """Guardrails: explicit runtime config first, else the load-time heuristic
    (name or description mentions "guardrail")."""
    body = ensemble.body
    assert isinstance(body, EnsembleBody)
    contained = [spec.agent_name for spec in body.contains]
    configured = [n for n in session.config.pre_turn_agents if n in contained]
    if session.config.pre_turn_agents:
        return tuple(configured)
    found = []
    for name in contained:
        agent = session.agent_def(name)
        if "guardrail" in name.lower() or "guardrail" in agent.header.description.lower():
            found.append(name)
    return tuple(found)


def _candidates(session: Session, ensemble: AgentDef) -> list[InvokeSpec]:
    guards = set(guard_names(session, ensemble))
    body = ensemble.body
    assert isinstance(body, EnsembleBody)
    return [spec for spec in body.contains if spec.agent_name not in guards]


# --- guardrails --------------------------------------------------------------


def guardrail_messages(session: Session, guard: AgentDef) -> list[Message]:
    sections = [templates.GUARDRAIL_SYSTEM]
    if guard.header.description:
        sections.append(guard.header.description)
    if guard.kind == "llm":
        sections.append(guard.body.prompt)
    return [
        Message("system", "\n".join(sections)),
        Message("user", templates.render_transcript(session.transcript, limit=6)),
    ]


def run_guardrail(session: Session, guard: AgentDef) -> bool:
    """Standalone verdict call; returns True when the input may be handled."""
    response = session.llm(guard.name, "guardrail", guardrail_messages(session, guard))
    blocked = "BLOCK" in response.content.upper()
    session.emit(
        "guardrail_verdict", agent=guard.name, verdict="BLOCK" if blocked else "PASS", merged=False
    )
    if blocked:
        session.bot(templates.GUARDRAIL_REFUSAL, guard.name)
    return not blocked


# --- argument sync and child invocation ---------------------------------------


def sync_ensemble_args(session: Session, ensemble_name: str, spec: InvokeSpec) -> None:
    """Non-ref mappings copy ensemble→inner at invocation; ref mappings install
    a live two-way link (writes on either side update both)."""
    for inner_arg, by_ref, ensemble_arg in spec.arg_map:
        if by_ref:
            session.link_args((spec.agent_name, inner_arg), (ensemble_name, ensemble_arg))
        session.set_arg(spec.agent_name, inner_arg, session.get_arg(ensemble_name, ensemble_arg))


def invoke_child(
    session: Session,
    ensemble: AgentDef,
    spec: InvokeSpec,
    merged_prefix: Optional[list] = None,
    merged_guard: Optional[str] = None,
) -> Activation:
    from . import driver  # local import: driver depends on this module

    sync_ensemble_args(session, ensemble.name, spec)
    return driver.push(
        session,
        spec.agent_name,
        invoked_by="ensemble",
        merged_prefix=merged_prefix,
        merged_guard=merged_guard,
    )


def run_child_turn(
    session: Session,
    ensemble: AgentDef,
    spec: InvokeSpec,
    merged_prefix: Optional[list] = None,
    merged_guard: Optional[str] = None,
) -> None:
    """Invoke one contained agent and drive it for this turn.  Transient
    children (llm/kb) pop before this returns; flow children may stay waiting."""
    from . import driver

    floor = len(session.stack)
    invoke_child(session, ensemble, spec, merged_prefix=merged_prefix, merged_guard=merged_guard)
    driver.drive(session, floor, [None], trap=False)


# --- selection -----------------------------------------------------------------


def _listing(session: Session, specs: list[InvokeSpec]) -> str:
    return templates.agent_listing(
        [(s.agent_name, session.agent_def(s.agent_name).header.description) for s in specs]
    )


def select_agent(session: Session, ensemble: AgentDef, specs: list[InvokeSpec]) -> InvokeSpec:
    """Proactive selection: one provider call, reply parsed to an agent name."""
    body = ensemble.body
    assert isinstance(body, EnsembleBody)
    system = templates.SELECTOR_SYSTEM + "\n" + _listing(session, specs)
    if body.policy_prompt:
        system += "\nPolicy: " + body.policy_prompt
    response = session.llm(
        ensemble.name,
        "selector",
        [Message("system", system), Message("user", session.last_user_text())],
    )
    content = response.content.strip()
    for spec in specs:
        if content == spec.agent_name:
            return spec
    for spec in specs:
        if re.search(rf"\b{re.escape(spec.agent_name)}\b", content):
            return spec
    raise AdlError("E_SELECT", f"selector reply names no contained agent: {content!r}")


# --- candidate snapshot machinery (first_success / best_of_n) --------------------


@dataclass
class _Capture:
    args: dict
    links: dict
    transcript_slice: list = field(default_factory=list)
    stack_segment: list = field(default_factory=list)

    @property
    def bot_replies(self) -> list[str]:
        return [text for role, text in self.transcript_slice if role == "bot"]


def _mark(session: Session) -> tuple:
    return (
        copy.deepcopy(session.args),
        {k: set(v) for k, v in session.links.items()},
        len(session.transcript),
        len(session.stack),
    )


def _capture_and_rollback(session: Session, mark: tuple) -> _Capture:
    args_before, links_before, t_len, s_len = mark
    capture = _Capture(
        args=session.args,
        links=session.links,
        transcript_slice=session.transcript[t_len:],
        stack_segment=session.stack[s_len:],
    )
    session.args = copy.deepcopy(args_before)
    session.links = {k: set(v) for k, v in links_before.items()}
    del session.transcript[t_len:]
    del session.stack[s_len:]
    return capture


def _commit(session: Session, capture: _Capture) -> None:
    session.args = capture.args
    session.links = capture.links
    session.transcript.extend(capture.transcript_slice)
    session.stack.extend(capture.stack_segment)


def _run_candidate(session: Session, ensemble: AgentDef, spec: InvokeSpec) -> Optional[_Capture]:
    """Execute one candidate from the shared pre-turn state; always rolls the
    session back and returns the captured result (None when it failed)."""
    mark = _mark(session)
    session.candidate_of = spec.agent_name
    failed = False
    try:
        run_child_turn(session, ensemble, spec)
    except AdlError as exc:
        session.emit("warning", code="W_CANDIDATE_FAILED", agent=spec.agent_name, detail=str(exc))
        failed = True
    finally:
        session.candidate_of = None
    capture = _capture_and_rollback(session, mark)
    return None if failed else capture


# --- strategies -------------------------------------------------------------------


def _judge_satisfactory(session: Session, ensemble: AgentDef, replies: list[str]) -> bool:
    user_text = (
        templates.render_transcript(session.transcript, limit=12)
        + "\nCandidate response: "
        + "\n".join(replies)
    )
    response = session.llm(
        ensemble.name,
        "judge_satisfactory",
        [Message("system", templates.JUDGE_SATISFACTORY_SYSTEM), Message("user", user_text)],
    )
    verdict = parse_yes_no(response.content)
    if verdict is None:
        session.emit(
            "warning", code="E_UNPARSEABLE", detail=f"judge reply {response.content!r}"
        )
        return False
    return verdict


def _run_proactive(session, act, ensemble, specs, guards, holder):
    spec = specs[0] if len(specs) == 1 else select_agent(session, ensemble, specs)
    holder[0] = None
    act.active_child = spec.agent_name
    run_child_turn(session, ensemble, spec)


def _run_merging(session, act, ensemble, specs, guards, holder):
    spec = specs[0] if len(specs) == 1 else select_agent(session, ensemble, specs)
    holder[0] = None
    act.active_child = spec.agent_name
    child = session.agent_def(spec.agent_name)
    if guards and child.kind == "llm":
        guard = session.agent_def(guards[0])
        run_child_turn(
            session,
            ensemble,
            spec,
            merged_prefix=guardrail_messages(session, guard),
            merged_guard=guard.name,
        )
        return
    # a non-LLM responder cannot absorb the guardrail: check separately
    for name in guards:
        if not run_guardrail(session, session.agent_def(name)):
            return
    run_child_turn(session, ensemble, spec)


def _run_first_success(session, act, ensemble, specs, guards, holder):
    holder[0] = None
    for spec in specs:
        capture = _run_candidate(session, ensemble, spec)
        if capture is None:
            continue
        if _judge_satisfactory(session, ensemble, capture.bot_replies):
            act.active_child = spec.agent_name
            _commit(session, capture)
            return
    raise AdlError("E_NO_WINNER", "no contained agent produced a satisfactory response")


def _run_best_of_n(session, act, ensemble, specs, guards, holder):
    holder[0] = None
    group = f"best_of_n:turn{session.turn_index}"
    results: list[tuple[InvokeSpec, _Capture]] = []
    for spec in specs:
        session.parallel_group = group
        try:
            capture = _run_candidate(session, ensemble, spec)
        finally:
            session.parallel_group = None
        if capture is not None:
            results.append((spec, capture))
    if not results:
        raise AdlError("E_NO_WINNER", "every contained agent failed")
    if len(results) == 1:
        winner = results[0]
    else:
        numbered = "\n".join(
            f"{i + 1}. {' / '.join(c.bot_replies) or '(no reply)'}"
            for i, (_, c) in enumerate(results)
        )
        user_text = (
            templates.render_transcript(session.transcript, limit=12)
            + "\nCandidates:\n"
            + numbered
        )
        response = session.llm(
            ensemble.name,
            "judge_best",
            [Message("system", templates.JUDGE_BEST_SYSTEM), Message("user", user_text)],
        )
        match = re.search(r"\d+", response.content)
        index = int(match.group()) - 1 if match else -1
        if not (0 <= index < len(results)):
            session.emit(
                "warning", code="E_UNPARSEABLE", detail=f"judge reply {response.content!r}"
            )
            index = 0
        winner = results[index]
    act.active_child = winner[0].agent_name
    _commit(session, winner[1])


def _run_autonomous(session, act, ensemble, specs, guards, holder):
    """No selector call: the previously active agent keeps the conversation and
    may hand off via a marker; with no active agent yet, the first contained
    agent starts."""
    by_name = {spec.agent_name: spec for spec in specs}
    spec = by_name.get(act.active_child) or specs[0]
    holder[0] = None
    act.active_child = spec.agent_name
    run_child_turn(session, ensemble, spec)


_STRATEGY_FNS = {
    "proactive": _run_proactive,
    "merging": _run_merging,
    "first_success": _run_first_success,
    "best_of_n": _run_best_of_n,
    "autonomous": _run_autonomous,
}


def orchestrate_turn(session: Session, act: Activation, ensemble: AgentDef, holder: list) -> object:
    body = ensemble.body
    assert isinstance(body, EnsembleBody)
    if not act.init_done:
        act.init_done = True
        if body.init_steps:
            exec_simple_steps(session, ensemble.name, body.init_steps)
    if holder[0] is None:
        return WAIT  # this turn's input was already consumed downstream
    specs = _candidates(session, ensemble)
    if not specs:
        raise AdlError("E_NO_AGENTS", f"ensemble {ensemble.name!r} contains only guardrails")
    guards = guard_names(session, ensemble)
    _STRATEGY_FNS[session.strategy](session, act, ensemble, specs, list(guards), holder)
    return WAIT
