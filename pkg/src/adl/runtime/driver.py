"""The turn loop: activation stack driving, fallback cascade, session API."""

from __future__ import annotations

import os
from typing import Optional

from ..errors import AdlError, SessionError
from ..model import Program
from ..providers import Message, Provider
from ..toolbridge import ToolHost
from . import ensemble, flow, llm_kb, templates
from .outcomes import WAIT, Handoff, InvokeAgent, Returned
from .session import (
    STRATEGIES,
    Activation,
    Session,
    SessionConfig,
    TurnResult,
)

FALLBACK_DEPTH_CAP = 3


def push(
    session: Session,
    name: str,
    invoked_by: str,
    bindings: tuple = (),
    merged_prefix: Optional[list] = None,
    merged_guard: Optional[str] = None,
) -> Activation:
    agent = session.agent_def(name)
    namespace = session.args.setdefault(name, {})
    for declared in agent.header.args:
        namespace.setdefault(declared, None)
    invoker = session.stack[-1].agent if session.stack else None
    for arg, value in bindings:
        session.set_arg(name, arg, value)
    act = Activation(
        agent=name,
        kind=agent.kind,
        invoked_by=invoked_by,
        merged_prefix=merged_prefix,
        merged_guard=merged_guard,
    )
    session.stack.append(act)
    session.emit("agent_invoked", agent=name, kind=agent.kind, by=invoker)
    return act


def _dispatch(session: Session, act: Activation, holder: list) -> object:
    agent = session.agent_def(act.agent)
    if act.kind == "flow":
        return flow.advance(session, act, agent, holder)
    if act.kind == "llm":
        return llm_kb.run_llm_turn(session, act, agent)
    if act.kind == "kb":
        return llm_kb.kb_turn(session, act, agent)
    if act.kind == "ensemble":
        return ensemble.orchestrate_turn(session, act, agent, holder)
    raise AdlError("E_BAD_AGENT", f"unknown agent kind {act.kind!r}")


def _finish(session: Session, act: Activation, outcome: Returned) -> None:
    """Pop a returned activation: surface its message, keep its status readable,
    and trigger any exit policy."""
    if outcome.message:
        session.bot(outcome.message, act.agent)
    session.emit(
        "agent_returned", agent=act.agent, status=outcome.status, message=outcome.message
    )
    assert session.stack and session.stack[-1] is act, "unbalanced activation stack"
    session.stack.pop()
    session.set_arg(act.agent, "status", outcome.status)
    agent = session.agent_def(act.agent)
    if agent.header.exit:
        session.emit("exit_triggered", agent=act.agent, policy=agent.header.exit)
        if session.program.agent(agent.header.exit) is not None and session.stack:
            push(session, agent.header.exit, invoked_by="exit")
    if not session.stack:
        session.terminated = True
        session.status = outcome.status


def drive(session: Session, floor: int, holder: list, trap: bool = True) -> None:
    """Run the stack above `floor` until everything waits, returns, or the
    turn halts.  With trap=True engine errors feed the fallback cascade;
    with trap=False they propagate to the caller (candidate execution)."""
    while not session.terminated and not session.halt_turn and len(session.stack) > floor:
        act = session.stack[-1]
        try:
            outcome = _dispatch(session, act, holder)
        except AdlError as error:
            if not trap:
                raise
            if not _handle_failure(session, error, failing=act):
                return
            continue
        if outcome is WAIT:
            return
        if isinstance(outcome, Returned):
            _finish(session, act, outcome)
            if (
                outcome.status == "error"
                and act.invoked_by == "ensemble"
                and session.stack
                and session.stack[-1].kind == "ensemble"
            ):
                # a failing strategy-managed child engages the ensemble fallback
                error = AdlError(
                    "E_CHILD_ERROR", f"agent {act.agent!r} returned error: {outcome.message}"
                )
                if not trap:
                    raise error
                if not _handle_failure(session, error, failing=None, policy_owner=act.agent):
                    return
            continue
        if isinstance(outcome, InvokeAgent):
            push(session, outcome.callee, invoked_by="call", bindings=outcome.bindings)
            continue
        if isinstance(outcome, Handoff):
            _finish(session, act, Returned("success", ""))
            if not _apply_handoff(session, act, outcome):
                error = AdlError(
                    "E_BAD_HANDOFF",
                    f"agent {act.agent!r} handed off to unavailable agent {outcome.target!r}",
                )
                if not trap:
                    raise error
                if not _handle_failure(session, error, failing=None):
                    return
            continue
        raise AssertionError(f"engine produced unknown outcome {outcome!r}")


def _apply_handoff(session: Session, act: Activation, outcome: Handoff) -> bool:
    """A handoff marker names the successor.  Valid only under an ensemble that
    contains the target; the successor responds immediately when the handoff
    reply carried no visible text."""
    if not session.stack or session.stack[-1].kind != "ensemble":
        session.emit(
            "warning",
            code="W_HANDOFF_OUTSIDE_ENSEMBLE",
            agent=act.agent,
            target=outcome.target,
        )
        return True  # treated as a plain deactivation
    parent_act = session.stack[-1]
    parent = session.agent_def(parent_act.agent)
    guards = ensemble.guard_names(session, parent)
    specs = {
        spec.agent_name: spec
        for spec in parent.body.contains
        if spec.agent_name not in guards
    }
    if outcome.target not in specs:
        return False
    session.emit("handoff", source=act.agent, target=outcome.target)
    parent_act.active_child = outcome.target
    if not outcome.had_text:
        ensemble.invoke_child(session, parent, specs[outcome.target])
    return True


def _handle_failure(
    session: Session,
    error: AdlError,
    failing: Optional[Activation],
    policy_owner: Optional[str] = None,
) -> bool:
    """One step of the fallback cascade.  Returns True when a fallback agent
    was pushed (the drive loop should continue); False when the turn is over
    (a policy message or the built-in apology was emitted).  `policy_owner`
    names an already-popped agent whose own fallback policy applies first."""
    active = session.active_agent or "main"
    session.emit(
        "fallback_triggered", code=error.code, message=error.message, agent=active
    )
    if failing is not None and session.stack and session.stack[-1] is failing:
        if failing.invoked_by in llm_kb.TRANSIENT:
            session.emit(
                "agent_returned", agent=failing.agent, status="error", message=error.message
            )
            session.stack.pop()
    session.fallback_depth += 1
    if session.fallback_depth > FALLBACK_DEPTH_CAP:
        session.bot(templates.BUILTIN_APOLOGY, active)
        session.halt_turn = True
        return False
    policy = None
    owner = active
    if policy_owner and session.agent_def(policy_owner).header.fallback:
        policy, owner = session.agent_def(policy_owner).header.fallback, policy_owner
    else:
        for act in reversed(session.stack):
            candidate = session.agent_def(act.agent).header.fallback
            if candidate:
                policy, owner = candidate, act.agent
                break
    if policy is None:
        session.bot(templates.BUILTIN_APOLOGY, active)
        session.halt_turn = True
        return False
    if session.program.agent(policy) is not None:
        push(session, policy, invoked_by="fallback")
        return True
    try:
        response = session.llm(
            owner,
            "fallback_policy",
            [
                Message("system", templates.FALLBACK_POLICY_SYSTEM.format(policy=policy)),
                Message("user", templates.render_transcript(session.transcript, limit=6)),
            ],
        )
    except AdlError as second:
        return _handle_failure(session, second, failing=None)
    session.bot(response.content, owner)
    session.halt_turn = True
    return False


def _pre_turn_guardrails(session: Session) -> bool:
    """Run configured guardrails before the active agent sees the input.
    Merging absorbs the check into the responder's own call when the ensemble
    itself is about to respond; candidate-set strategies judge instead."""
    if session.strategy in ("first_success", "best_of_n"):
        return True
    for act in session.stack:
        if act.kind != "ensemble":
            continue
        if session.strategy == "merging" and act is session.stack[-1]:
            continue
        agent = session.agent_def(act.agent)
        for name in ensemble.guard_names(session, agent):
            if not ensemble.run_guardrail(session, session.agent_def(name)):
                return False
    return True


# --- public session API ------------------------------------------------------------


def create_session(
    program: Program,
    strategy: str = "proactive",
    provider: Optional[Provider] = None,
    tool_host: Optional[ToolHost] = None,
    config: Optional[SessionConfig] = None,
    session_id: Optional[str] = None,
) -> Session:
    """Activate `main` and run the entry chain up to the first user-wait."""
    if strategy not in STRATEGIES:
        raise SessionError("E_STRATEGY_UNKNOWN", f"unknown strategy {strategy!r}")
    if config is None:
        config = SessionConfig(base_dir=os.path.dirname(program.filename) or ".")
    session = Session(
        program,
        provider=provider,
        tool_host=tool_host,
        strategy=strategy,
        config=config,
        session_id=session_id,
    )
    session.begin_turn()  # turn 0: initialization
    push(session, program.main.name, invoked_by="entry")
    drive(session, 0, [None])
    session.end_turn()
    return session


def post_user_message(session: Session, text: str) -> TurnResult:
    if session.terminated:
        raise SessionError("E_TERMINATED", "session already terminated")
    session.begin_turn()
    session.transcript.append(("user", text))
    session.emit("user_message", text=text)
    mark = len(session.transcript)
    if _pre_turn_guardrails(session):
        drive(session, 0, [text])
    session.end_turn()
    return TurnResult(
        bot_messages=[t for role, t in session.transcript[mark:] if role == "bot"],
        terminated=session.terminated,
        status=session.status,
    )
