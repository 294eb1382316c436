"""Flow engine: interpolation, jumps, bounded retries, subflows, returns."""

from __future__ import annotations

import pytest

from adl.errors import AdlError
from adl.parser import load_program
from adl.providers import ScriptedProvider, ScriptedRule
from adl.runtime import Session, create_session, interpolate, post_user_message
from adl.runtime.flow import exec_simple_steps, render_value

from conftest import load_corpus


def make_program(text: str):
    result = load_program(text, "inline.yaml")
    assert result.program is not None, [d.render() for d in result.diagnostics]
    return result.program


def test_render_value():
    assert render_value(None) == ""
    assert render_value(True) == "True"
    assert render_value(False) == "False"
    assert render_value(["a", "b"]) == "a, b"
    assert render_value(3.5) == "3.5"


def test_interpolate(bookstore):
    session = Session(bookstore)
    session.args = {"order": {"books": "Dune"}, "triage": {"date": "2025-01-15"}}
    assert interpolate("Books: ${books}.", session, "order") == "Books: Dune."
    assert interpolate("On ${triage.date}.", session, "order") == "On 2025-01-15."
    assert interpolate("Cost: $10", session, "order") == "Cost: $10"
    # unresolvable paths render empty and leave a trace warning
    assert interpolate("Got ${nothing}!", session, "order") == "Got !"
    warnings = [e for e in session.trace if e.kind == "warning"]
    assert warnings and warnings[-1].payload["code"] == "W_UNSET_INTERPOLATION"


SIMPLE_LOOP = """
main:
  type: flow agent
  steps:
    - label: top
    - bot: "ping"
    - user
    - next: top
      tries: 2
    - bot: "done"
    - return: success, Finished.
"""


def test_bounded_retries_then_fall_through():
    program = make_program(SIMPLE_LOOP)
    session = create_session(program)
    replies = []
    for _ in range(3):
        result = post_user_message(session, "again")
        replies.append(result.bot_messages)
        if result.terminated:
            break
    # two jumps re-greet; the third attempt falls through and returns
    assert replies[0] == ["ping"]
    assert replies[1] == ["ping"]
    assert replies[2] == ["done", "Finished."]
    assert session.terminated and session.status == "success"


SUBFLOW = """
main:
  type: flow agent
  args:
    - mood
  steps:
    - bot: "hello"
    - user
    - set:
        mood: "so happy"
    - next: wrap_up
  wrap_up:
    - bot: "mood is ${mood}"
    - return: success, Bye.
"""


def test_subflow_jump_and_set():
    program = make_program(SUBFLOW)
    session = create_session(program)
    result = post_user_message(session, "hi")
    assert result.bot_messages == ["mood is so happy", "Bye."]
    assert result.terminated


CALL_FUNCTION = """
main:
  type: flow agent
  steps:
    - call: lookup
      args:
        key: item
    - if: lookup.status == success
      then:
        - bot: "found ${lookup.value}"
      else:
        - bot: "missing"
    - return: success,
"""


def test_function_call_without_host_degrades_to_error():
    program = make_program(CALL_FUNCTION)
    session = create_session(program)
    assert session.terminated
    assert [t for r, t in session.transcript if r == "bot"] == ["missing"]
    tool_events = [e for e in session.trace if e.kind == "tool_call"]
    assert tool_events and tool_events[0].payload["status"] == "error"


def test_function_call_with_local_host(bookstore_tool_host):
    program = make_program(CALL_FUNCTION)

    def lookup(key=""):
        return [{"arg": "value", "value": 41}]

    bookstore_tool_host.register("lookup", lookup)
    session = create_session(program, tool_host=bookstore_tool_host)
    assert [t for r, t in session.transcript if r == "bot"] == ["found 41"]


NL_SINGLE = """
main:
  type: flow agent
  steps:
    - bot: "hi"
    - user
    - if: the user wants to quit
      then:
        - return: success, Bye.
      else:
        - bot: "continuing"
    - return: success,
"""


def test_single_nl_branch_uses_yes_no():
    provider = ScriptedProvider([ScriptedRule(when="Answer Yes or No", respond="Yes")])
    program = make_program(NL_SINGLE)
    session = create_session(program, provider=provider)
    result = post_user_message(session, "quit please")
    assert result.bot_messages == ["Bye."]
    calls = [e for e in session.trace if e.kind == "llm_call"]
    assert [c.payload["purpose"] for c in calls] == ["nl_condition"]


def test_init_steps_reject_waits():
    program = load_corpus("bookstore.yaml")
    session = Session(program)
    from adl.model import User

    with pytest.raises(AdlError) as excinfo:
        exec_simple_steps(session, "triage", (User(),))
    assert excinfo.value.code == "E_INIT_STEP"


def test_return_message_is_interpolated():
    text = SUBFLOW.replace("return: success, Bye.", "return: success, Bye ${mood}.")
    program = make_program(text)
    session = create_session(program)
    result = post_user_message(session, "hi")
    assert result.bot_messages[-1] == "Bye so happy."
