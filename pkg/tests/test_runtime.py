"""Session mechanics: argument links, trace discipline, metrics, determinism."""

from __future__ import annotations

import re

import pytest

from adl.errors import SessionError
from adl.providers import ScriptedProvider
from adl.runtime import Session, create_session, post_user_message

from conftest import (
    GOLDEN_DIALOGUE,
    fixture_path,
    load_corpus,
    make_bookstore_tool_host,
    run_dialogue,
)


def provider():
    return ScriptedProvider.from_file(fixture_path("bookstore_full_rules.yaml"))


def test_two_runs_are_identical_modulo_wall_clock():
    program = load_corpus("bookstore.yaml")
    dumps = []
    for _ in range(2):
        _, session = run_dialogue(
            program, provider(), make_bookstore_tool_host(), GOLDEN_DIALOGUE
        )
        dumps.append(re.sub(r'"latency_ms": \d+', "", session.dump_trace()))
    assert dumps[0] == dumps[1]


def test_ref_links_propagate_both_ways(banking):
    session = Session(banking)
    session.link_args(("block_card", "username"), ("meta", "username"))
    session.set_arg("meta", "username", "Mary Brown")
    assert session.get_arg("block_card", "username") == "Mary Brown"
    session.set_arg("block_card", "username", "John Doe")
    assert session.get_arg("meta", "username") == "John Doe"


def test_namespace_isolation(bookstore):
    session = Session(bookstore)
    session.set_arg("order", "books", "Dune")
    session.set_arg("book_recommendation", "genre", "fantasy")
    assert session.get_arg("order", "genre") is None
    assert session.get_arg("book_recommendation", "books") is None


def test_stack_events_are_balanced():
    program = load_corpus("bookstore.yaml")
    _, session = run_dialogue(program, provider(), make_bookstore_tool_host(), GOLDEN_DIALOGUE)
    invoked = sum(1 for e in session.trace if e.kind == "agent_invoked")
    returned = sum(1 for e in session.trace if e.kind == "agent_returned")
    assert invoked == returned + len(session.stack)
    assert [a.agent for a in session.stack] == ["main", "triage"]


def test_metrics_match_trace():
    program = load_corpus("bookstore.yaml")
    _, session = run_dialogue(program, provider(), make_bookstore_tool_host(), GOLDEN_DIALOGUE)
    for metrics in session.turn_metrics:
        calls = [
            e
            for e in session.trace
            if e.turn == metrics.turn and e.kind == "llm_call"
        ]
        assert metrics.provider_calls == len(calls)
        assert metrics.token_cost == sum(e.payload["prompt_tokens"] for e in calls)


def test_posting_after_termination_is_rejected():
    from adl.parser import load_program

    program = load_program(
        "main:\n  type: flow agent\n  steps:\n    - return: success, Bye.\n", "t.yaml"
    ).program
    session = create_session(program)
    assert session.terminated
    with pytest.raises(SessionError) as excinfo:
        post_user_message(session, "hello?")
    assert excinfo.value.code == "E_TERMINATED"


def test_state_snapshot_is_detached():
    program = load_corpus("bookstore.yaml")
    session = create_session(
        program, provider=provider(), tool_host=make_bookstore_tool_host()
    )
    snapshot = session.get_state()
    snapshot.args.setdefault("order", {})["books"] = "tampered"
    assert session.get_arg("order", "books") != "tampered"
    assert snapshot.active_agent == "triage"


def test_turn_result_contains_only_new_bot_messages():
    program = load_corpus("bookstore.yaml")
    session = create_session(
        program, provider=provider(), tool_host=make_bookstore_tool_host()
    )
    first = post_user_message(session, GOLDEN_DIALOGUE[0])
    assert first.bot_messages == [
        "I'll place the order for you.",
        "You have selected these books so far: . Would you like to add anything else to your order?",
    ]
    second = post_user_message(session, GOLDEN_DIALOGUE[1])
    assert "I'll place the order for you." not in second.bot_messages
