"""Flow-agent execution: step sequencing, branching, labeled jumps with
bounded tries, subflows, calls, interpolation, and returns."""

from __future__ import annotations

import re
from typing import Any, Optional, Union

from ..errors import AdlError, ToolError
from ..model import (
    AgentDef,
    ArgPath,
    Bot,
    Call,
    Condition,
    FlowBody,
    Label,
    NaturalLanguage,
    Next,
    Return,
    Set,
    Step,
    User,
    resolve_arg_path,
)
from ..providers import Message
from ..toolbridge import ToolResult
from .conditions import EvalContext, eval_expression, eval_nl_condition, select_nl_branch
from .outcomes import WAIT, InvokeAgent, Returned
from .session import Activation, Session

_INTERP = re.compile(r"\$\{([^}]*)\}")


def render_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "True" if value else "False"
    if isinstance(value, (list, tuple)):
        return ", ".join(render_value(v) for v in value)
    return str(value)


def interpolate(template: str, session: Session, current_agent: str) -> str:
    """Replace each `${arg_path}` with the rendered value; `$` without `{`
    is left untouched; unresolvable paths render empty with a warning."""

    def replace(match: re.Match) -> str:
        raw = match.group(1).strip()
        parts = raw.split(".", 1)
        if len(parts) == 2 and parts[0] and parts[1]:
            owner, arg = parts
        else:
            owner, arg = current_agent, raw
        if not arg or arg not in session.args.get(owner, {}):
            if session.get_arg(owner, arg) is None:
                session.emit("warning", code="W_UNSET_INTERPOLATION", path=raw, agent=current_agent)
                return ""
        return render_value(session.get_arg(owner, arg))

    return _INTERP.sub(replace, template)


def resolve_value(session: Session, current_agent: str, value: Union[Any, ArgPath]) -> Any:
    if isinstance(value, ArgPath):
        owner, arg = resolve_arg_path(value, current_agent)
        return session.get_arg(owner, arg)
    if isinstance(value, tuple):
        return list(value)
    return value


def call_function(session: Session, caller: str, name: str, args: dict) -> ToolResult:
    """Invoke a custom function synchronously through the tool bridge.

    Tool-level failures never raise: they surface as a readable
    `<fn>.status == "error"` that flows can branch on."""
    host = session.tool_host
    if host is None:
        result = ToolResult(status="error", status_message=f"no tool host serves {name!r}")
    else:
        try:
            result = host.invoke(name, args)
        except ToolError as exc:
            result = ToolResult(status="error", status_message=exc.message)
    session.emit(
        "tool_call",
        caller=caller,
        function=name,
        args=args,
        status=result.status,
        notes=result.caller_notes,
    )
    for text in result.bot_messages:
        session.bot(text, caller)
    for arg_name, value in result.as_arg_updates().items():
        session.set_arg(name, arg_name, value)
    return result


# --- label / subflow target resolution ---------------------------------------


def _find_label(steps: tuple[Step, ...], name: str) -> Optional[list[tuple[tuple, int]]]:
    for i, step in enumerate(steps):
        if isinstance(step, Label) and step.name == name:
            return [(steps, i)]
        if isinstance(step, Condition):
            for branch in step.branches:
                sub = _find_label(branch.body, name)
                if sub:
                    return [(steps, i)] + sub
            if step.else_body:
                sub = _find_label(step.else_body, name)
                if sub:
                    return [(steps, i)] + sub
    return None


def _target_paths(session: Session, agent: AgentDef) -> dict[str, list]:
    """Per-flow map of Next target -> frame path; subflow names map to their
    step list, labels to the path of blocks leading to the label."""
    cached = session._label_paths.get(agent.name)
    if cached is not None:
        return cached
    body = agent.body
    assert isinstance(body, FlowBody)
    paths: dict[str, list] = {}
    blocks: list[tuple[Optional[str], tuple[Step, ...]]] = [(None, body.steps)]
    blocks += [(name, steps) for name, steps in body.subflows]
    for sub_name, steps in blocks:
        if sub_name is not None:
            paths[sub_name] = [(steps, 0)]
    for _, steps in blocks:
        stack = [steps]
        while stack:
            block = stack.pop()
            for i, step in enumerate(block):
                if isinstance(step, Label) and step.name not in paths:
                    found = None
                    for _, root in blocks:
                        found = _find_label(root, step.name)
                        if found:
                            break
                    if found:
                        paths[step.name] = found
                if isinstance(step, Condition):
                    stack.extend(branch.body for branch in step.branches)
                    if step.else_body:
                        stack.append(step.else_body)
    session._label_paths[agent.name] = paths
    return paths


def _frames_for(path: list[tuple[tuple, int]], is_subflow_entry: bool) -> list:
    if is_subflow_entry:
        block, idx = path[0]
        return [[block, idx]]
    frames = [[block, idx + 1] for block, idx in path[:-1]]
    block, idx = path[-1]
    frames.append([block, idx])  # the Label step itself is a no-op
    return frames


# --- step execution -----------------------------------------------------------


def _ctx(session: Session, agent_name: str) -> EvalContext:
    return EvalContext(args=session.args, transcript=session.transcript, current_agent=agent_name)


def _eval_branches(session: Session, agent: AgentDef, step: Condition) -> Optional[tuple[Step, ...]]:
    """Pick the first matching branch body (or else body, or None).

    Consecutive natural-language branches are resolved with a single provider
    call that returns the first matching index."""

    def llm(purpose: str, messages: list[Message]) -> str:
        return session.llm(agent.name, purpose, messages).content

    ctx = _ctx(session, agent.name)
    branches = step.branches
    i = 0
    while i < len(branches):
        condition = branches[i].condition
        if isinstance(condition, NaturalLanguage):
            texts = []
            j = i
            while j < len(branches) and isinstance(branches[j].condition, NaturalLanguage):
                texts.append(branches[j].condition.text)
                j += 1
            if len(texts) == 1:
                matched, warning = eval_nl_condition(texts[0], ctx, llm)
                if warning:
                    session.emit("warning", code="E_UNPARSEABLE", detail=warning, agent=agent.name)
                if matched:
                    return branches[i].body
            else:
                index, warning = select_nl_branch(texts, ctx, llm)
                if warning:
                    session.emit("warning", code="E_UNPARSEABLE", detail=warning, agent=agent.name)
                if index is not None:
                    return branches[i + index].body
            i = j
        else:
            if eval_expression(condition, ctx):
                return branches[i].body
            i += 1
    return step.else_body


def advance(session: Session, act: Activation, agent: AgentDef, holder: list) -> object:
    """Run the flow until it waits for user input, returns, or invokes an agent.

    `holder` is the single-consumption cell for this turn's user input:
    holder[0] is the pending text or None once consumed."""
    body = agent.body
    assert isinstance(body, FlowBody)
    if not act.init_done:
        act.init_done = True
        act.frames = [[body.steps, 0]]
    while True:
        if session.halt_turn:
            return WAIT
        if not act.frames:
            return Returned("success", "")
        block, idx = act.frames[-1]
        if idx >= len(block):
            act.frames.pop()
            continue
        step = block[idx]
        if isinstance(step, User):
            if holder[0] is None:
                return WAIT
            holder[0] = None
            act.frames[-1][1] = idx + 1
            continue
        if isinstance(step, Bot):
            session.bot(interpolate(step.template, session, agent.name), agent.name)
            act.frames[-1][1] = idx + 1
            continue
        if isinstance(step, Set):
            for target, value in step.assignments:
                owner, arg = resolve_arg_path(target, agent.name)
                session.set_arg(owner, arg, resolve_value(session, agent.name, value))
            act.frames[-1][1] = idx + 1
            continue
        if isinstance(step, Label):
            act.frames[-1][1] = idx + 1
            continue
        if isinstance(step, Next):
            if step.tries is not None:
                remaining = act.tries.setdefault(id(step), step.tries)
                if remaining <= 0:
                    act.frames[-1][1] = idx + 1  # bound exhausted: fall through
                    continue
                act.tries[id(step)] = remaining - 1
            paths = _target_paths(session, agent)
            path = paths.get(step.target)
            if path is None:
                raise AdlError("E_UNDEF_TARGET", f"next target {step.target!r} not found at runtime")
            is_subflow = body.subflow(step.target) is not None
            act.frames = _frames_for(path, is_subflow)
            continue
        if isinstance(step, Call):
            bindings = {
                name: resolve_value(session, agent.name, value)
                for name, value in step.arg_bindings
            }
            act.frames[-1][1] = idx + 1
            if session.program.agent(step.callee) is not None:
                return InvokeAgent(step.callee, tuple(bindings.items()))
            call_function(session, agent.name, step.callee, bindings)
            continue
        if isinstance(step, Condition):
            chosen = _eval_branches(session, agent, step)
            act.frames[-1][1] = idx + 1
            if chosen:
                act.frames.append([chosen, 0])
            continue
        if isinstance(step, Return):
            return Returned(step.status, interpolate(step.message, session, agent.name))
        raise AdlError("E_BAD_STEP", f"unknown step kind {type(step).__name__}")


def exec_simple_steps(session: Session, agent_name: str, steps: tuple[Step, ...]) -> None:
    """Initialization blocks of LLM/ensemble agents: bot, set, and function
    calls only — no user waits, jumps, or agent invocations."""
    for step in steps:
        if isinstance(step, Bot):
            session.bot(interpolate(step.template, session, agent_name), agent_name)
        elif isinstance(step, Set):
            for target, value in step.assignments:
                owner, arg = resolve_arg_path(target, agent_name)
                session.set_arg(owner, arg, resolve_value(session, agent_name, value))
        elif isinstance(step, Call):
            if session.program.agent(step.callee) is not None:
                raise AdlError(
                    "E_INIT_STEP", f"init steps may not invoke agents ({step.callee!r})"
                )
            bindings = {
                name: resolve_value(session, agent_name, value)
                for name, value in step.arg_bindings
            }
            call_function(session, agent_name, step.callee, bindings)
        else:
            raise AdlError(
                "E_INIT_STEP", f"step kind {type(step).__name__} not allowed in init blocks"
            )
