"""Parsing and validation: corpus structure, condition grammar, properties."""

from __future__ import annotations

import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adl.model import (
    And,
    ArgPath,
    Bot,
    Call,
    Compare,
    Condition,
    FlowBody,
    Label,
    NaturalLanguage,
    Next,
    Or,
    RegexMatch,
    Return,
    Set,
    User,
)
from adl.parser import BadRegexError, load_program, load_program_file, parse_condition

from conftest import corpus_path, load_corpus


def test_bookstore_structure(bookstore):
    assert bookstore.agent_names == (
        "main",
        "triage",
        "store_policy_kb",
        "book_recommendation",
        "order",
    )
    assert [a.kind for a in bookstore.agents] == ["flow", "ensemble", "kb", "llm", "flow"]
    order = bookstore.agent("order")
    assert order.header.args == ("books", "order_status")
    assert order.header.fallback and "fallback message" in order.header.fallback
    body = order.body
    assert isinstance(body, FlowBody)
    steps = body.steps
    assert isinstance(steps[0], Bot)
    assert steps[1] == Label(name="confirm_books")
    assert isinstance(steps[3], User)
    cond = steps[4]
    assert isinstance(cond, Condition)
    assert len(cond.branches) == 2
    assert all(isinstance(b.condition, NaturalLanguage) for b in cond.branches)
    assert cond.else_body is not None
    # the else body jumps back with a bounded retry
    bounded = [s for s in cond.else_body if isinstance(s, Next)]
    assert bounded and bounded[0].tries == 3
    sub = body.subflow("start_ordering_operation")
    assert sub is not None and isinstance(sub[0], Call)
    inner = sub[1]
    assert isinstance(inner, Condition)
    assert inner.branches[0].condition == Compare(
        path=ArgPath("status", "place_order"), op="eq", rhs=True
    )
    assert isinstance(inner.branches[0].body[0], Return)
    assert bookstore.tool_files == ("bookstore_tools",)


def test_banking_structure(banking):
    assert len(banking.agents) == 10
    meta = banking.agent("meta")
    assert meta.kind == "ensemble"
    assert len(meta.body.contains) == 7
    refs = {
        (spec.agent_name, inner, by_ref, outer)
        for spec in meta.body.contains
        for inner, by_ref, outer in spec.arg_map
    }
    assert ("transfer_money", "username", True, "username") in refs


def test_parse_is_a_fixed_point(bookstore):
    again = load_program_file(corpus_path("bookstore.yaml")).program
    assert again == bookstore


def test_condition_precedence():
    expr = parse_condition("a.x == 1 and a.y == 2 or a.z == 3")
    assert isinstance(expr, Or)
    assert isinstance(expr.left, And)
    assert expr.right == Compare(path=ArgPath("z", "a"), op="eq", rhs=3)


def test_condition_atoms():
    assert parse_condition("place_order.status == True") == Compare(
        path=ArgPath("status", "place_order"), op="eq", rhs=True
    )
    assert parse_condition("x != None") == Compare(path=ArgPath("x"), op="neq", rhs=None)
    expr = parse_condition('re.match("[A-Z][a-z]+, [0-9]+", user.name)')
    assert expr == RegexMatch(pattern="[A-Z][a-z]+, [0-9]+", path=ArgPath("name", "user"))


def test_condition_free_text_is_natural_language():
    expr = parse_condition('the user claims "I want a book"')
    assert expr == NaturalLanguage(text='the user claims "I want a book"')
    # a malformed atom poisons the whole expression into natural language
    expr = parse_condition("x == 1 and please be nice")
    assert isinstance(expr, NaturalLanguage)


def test_condition_bad_regex_raises():
    with pytest.raises(BadRegexError):
        parse_condition('re.match("([unclosed", x)')


def test_quoted_keywords_do_not_split():
    expr = parse_condition('a.x == "salt and pepper"')
    assert expr == Compare(path=ArgPath("x", "a"), op="eq", rhs="salt and pepper")


@settings(max_examples=60, deadline=None)
@given(st.text(min_size=1, max_size=60))
def test_free_text_never_crashes(text):
    if "re.match(" in text:
        return  # regex atoms may raise BadRegexError by contract
    expr = parse_condition(text)
    assert expr is not None


def test_label_deletion_breaks_references():
    with open(corpus_path("bookstore.yaml"), encoding="utf-8") as fh:
        source = fh.read()
    lines = source.splitlines(keepends=True)
    for i, line in enumerate(lines):
        if not re.match(r"\s*- label:", line):
            continue
        label = line.split(":", 1)[1].strip()
        mutated = "".join(lines[:i] + lines[i + 1 :])
        result = load_program(mutated, "mutated.yaml")
        referenced = re.search(rf"next:\s*{label}\b", source)
        if referenced:
            codes = [d.code for d in result.diagnostics if d.severity == "error"]
            assert "E_UNDEF_TARGET" in codes
        else:
            assert result.program is not None


def test_duplicate_agent_key_is_flagged():
    source = "main:\n  type: flow agent\n  steps:\n    - bot: hi\nmain:\n  type: flow agent\n  steps:\n    - bot: again\n"
    result = load_program(source, "dup.yaml")
    assert any(d.code == "E_DUP_KEY" for d in result.diagnostics) or result.program is None


def test_set_step_parses_paths():
    program = load_corpus("bookstore.yaml")
    triage = program.agent("triage")
    init = triage.body.init_steps
    sets = [s for s in init if isinstance(s, Set)]
    assert sets[0].assignments == ((ArgPath("date"), ArgPath("today", "get_date")),)
