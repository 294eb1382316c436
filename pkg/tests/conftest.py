"""Shared fixtures: corpus programs, scripted providers, and a local tool host
implementing the bookstore's custom functions."""

from __future__ import annotations

import os

import pytest

from adl.parser import load_program_file
from adl.providers import ScriptedProvider
from adl.toolbridge import LocalToolHost, ToolParam

HERE = os.path.dirname(__file__)
ROOT = os.path.dirname(HERE)
CORPUS = os.path.join(ROOT, "corpus")
FIXTURES = os.path.join(HERE, "fixtures")


def corpus_path(name: str) -> str:
    return os.path.join(CORPUS, name)


def fixture_path(name: str) -> str:
    return os.path.join(FIXTURES, name)


def load_corpus(name: str):
    result = load_program_file(corpus_path(name))
    assert result.program is not None, [d.render() for d in result.diagnostics]
    return result.program


@pytest.fixture
def bookstore():
    return load_corpus("bookstore.yaml")


@pytest.fixture
def banking():
    return load_corpus("banking.yaml")


@pytest.fixture
def bench_program():
    return load_corpus("bench_bookstore.yaml")


@pytest.fixture
def bookstore_provider():
    return ScriptedProvider.from_file(fixture_path("bookstore_full_rules.yaml"))


@pytest.fixture
def bench_provider():
    return ScriptedProvider.from_file(corpus_path("bench_rules.yaml"))


def make_bookstore_tool_host() -> LocalToolHost:
    host = LocalToolHost()

    def get_date():
        return [{"arg": "today", "value": "2025-01-15"}]

    def query_book_genre(book: str = ""):
        return [{"arg": "genre", "value": "fantasy"}]

    def find_bestsellers(genre: str = ""):
        return [{"arg": "book_info", "value": "Dune"}]

    def place_order(ordered_book=None, date=None):
        return [
            {"status": "success", "msg": "order accepted"},
            {"arg": "status", "value": True},
        ]

    host.register("get_date", get_date, "Returns today's date")
    host.register(
        "query_book_genre",
        query_book_genre,
        "Looks up the genre of a book",
        (ToolParam("book", "str", required=False, default=""),),
    )
    host.register(
        "find_bestsellers",
        find_bestsellers,
        "Finds bestsellers for a genre",
        (ToolParam("genre", "str", required=False, default=""),),
    )
    host.register(
        "place_order",
        place_order,
        "Places the order",
        (
            ToolParam("ordered_book", "str", required=False),
            ToolParam("date", "str", required=False),
        ),
    )
    return host


@pytest.fixture
def bookstore_tool_host():
    return make_bookstore_tool_host()


GOLDEN_DIALOGUE = [
    "Actually, I'd like to place an order for a book instead.",
    "Do you have other types of books?",
    "What is your return policy?",
    "Can you gift wrap it?",
    "Do you ship internationally?",
    "What payment methods do you accept?",
    "Actually, I'd like to place an order for a book instead.",
    "I don't have anything else I want to buy.",
]


def run_dialogue(program, provider, tool_host, turns, strategy="proactive"):
    """Run a scripted dialogue and return the rendered transcript text."""
    from adl.runtime import create_session, post_user_message

    session = create_session(program, strategy=strategy, provider=provider, tool_host=tool_host)
    for text in turns:
        post_user_message(session, text)
    lines = [f"{'User' if role == 'user' else 'Bot'}: {text}" for role, text in session.transcript]
    return "\n".join(lines) + "\n", session
