"""Provider layer: token accounting, rule matching, HTTP client behavior."""

from __future__ import annotations

import json

import httpx
import pytest

from adl.errors import ProviderError
from adl.providers import (
    ChatRequest,
    HttpProvider,
    Message,
    ScriptedProvider,
    ScriptedRule,
    count_request_tokens,
    count_tokens,
    make_provider,
)

from conftest import fixture_path


def test_count_tokens_is_byte_based():
    assert count_tokens("") == 1  # floor of one token
    assert count_tokens("abcd") == 1
    assert count_tokens("abcde") == 2
    assert count_tokens("x" * 400) == 100
    # multibyte characters count by encoded size, not length
    assert count_tokens("é" * 4) == 2  # 8 utf-8 bytes
    assert count_tokens("😀") == 1  # 4 bytes


def test_request_tokens_are_additive_per_message():
    a = Message("system", "x" * 6)  # 2 tokens
    b = Message("user", "y" * 6)  # 2 tokens
    both = ChatRequest(messages=(a, b))
    assert count_request_tokens(both) == 4
    # concatenating two requests costs exactly the sum of the parts
    assert count_request_tokens(ChatRequest(messages=(a,))) + count_request_tokens(
        ChatRequest(messages=(b,))
    ) == count_request_tokens(both)


def req(text, tools=()):
    return ChatRequest(messages=(Message("user", text),), tools=tuple(tools))


def test_scripted_rules_first_match_wins():
    provider = ScriptedProvider(
        [
            ScriptedRule(when="alpha", respond="first"),
            ScriptedRule(when="alp", respond="second"),
        ]
    )
    assert provider.chat_complete(req("say alpha")).content == "first"
    assert provider.chat_complete(req("say alp")).content == "second"
    assert provider.chat_complete(req("nothing")).content == "OK"  # default


def test_scripted_rules_accept_regex():
    provider = ScriptedProvider([ScriptedRule(when=r"order \d+ copies", respond="counted")])
    assert provider.chat_complete(req("order 12 copies")).content == "counted"
    assert provider.chat_complete(req("order copies")).content == "OK"


def test_tool_rule_skipped_when_tool_not_offered():
    provider = ScriptedProvider(
        [
            ScriptedRule(when="lookup", tool_call={"name": "search", "arguments": {"q": 1}}),
            ScriptedRule(when="lookup", respond="plain answer"),
        ]
    )
    offered = [{"name": "search", "parameters": {}}]
    with_tool = provider.chat_complete(req("please lookup", tools=offered))
    assert with_tool.tool_calls and with_tool.tool_calls[0].function == "search"
    assert json.loads(with_tool.tool_calls[0].arguments) == {"q": 1}
    without = provider.chat_complete(req("please lookup"))
    assert not without.tool_calls and without.content == "plain answer"


def test_scripted_latency_and_usage():
    provider = ScriptedProvider([ScriptedRule(when="hi", respond="hello!", latency_ms=25)])
    response = provider.chat_complete(req("hi"))
    assert response.latency_ms == 25
    assert response.prompt_tokens == count_tokens("hi")
    assert response.completion_tokens == count_tokens("hello!")


def _http_provider(handler):
    return HttpProvider(
        base_url="https://llm.example/v1",
        api_key="sk-test",
        transport=httpx.MockTransport(handler),
    )


def test_http_provider_round_trip():
    seen = {}

    def handler(request: httpx.Request) -> httpx.Response:
        seen["url"] = str(request.url)
        seen["auth"] = request.headers.get("authorization")
        seen["payload"] = json.loads(request.content)
        return httpx.Response(
            200,
            json={
                "choices": [{"message": {"content": "pong"}}],
                "usage": {"prompt_tokens": 11, "completion_tokens": 3},
            },
        )

    provider = _http_provider(handler)
    tools = [{"name": "search", "parameters": {"type": "object", "properties": {}}}]
    response = provider.chat_complete(req("ping", tools=tools))
    assert response.content == "pong"
    assert response.prompt_tokens == 11 and response.completion_tokens == 3
    assert seen["url"] == "https://llm.example/v1/chat/completions"
    assert seen["auth"] == "Bearer sk-test"
    assert seen["payload"]["messages"] == [{"role": "user", "content": "ping"}]
    assert seen["payload"]["tools"] == [{"type": "function", "function": tools[0]}]


def test_http_provider_parses_tool_calls():
    def handler(request):
        return httpx.Response(
            200,
            json={
                "choices": [
                    {
                        "message": {
                            "content": None,
                            "tool_calls": [
                                {
                                    "function": {
                                        "name": "search",
                                        "arguments": '{"q": "books"}',
                                    }
                                }
                            ],
                        }
                    }
                ]
            },
        )

    response = _http_provider(handler).chat_complete(req("find books"))
    assert response.content == ""
    assert response.tool_calls[0].function == "search"
    assert json.loads(response.tool_calls[0].arguments) == {"q": "books"}


def test_http_provider_non_200_is_an_error():
    def handler(request):
        return httpx.Response(503, json={"error": "overloaded"})

    with pytest.raises(ProviderError) as excinfo:
        _http_provider(handler).chat_complete(req("hello"))
    assert excinfo.value.code == "E_HTTP"
    assert excinfo.value.extra["status"] == 503


def test_http_provider_requires_base_url(monkeypatch):
    monkeypatch.delenv("ADL_LLM_BASE_URL", raising=False)
    with pytest.raises(ProviderError) as excinfo:
        HttpProvider()
    assert excinfo.value.code == "E_CONFIG"


def test_make_provider():
    provider = make_provider("scripted:" + fixture_path("bookstore_rules.yaml"))
    assert isinstance(provider, ScriptedProvider)
    with pytest.raises(ProviderError):
        make_provider("mystery")


def test_rules_file_default_override(tmp_path):
    path = tmp_path / "rules.yaml"
    path.write_text(
        "rules:\n  - when: hi\n    respond: hello\ndefault:\n  respond: fallback text\n"
    )
    provider = ScriptedProvider.from_file(str(path))
    assert provider.chat_complete(req("hi")).content == "hello"
    assert provider.chat_complete(req("???")).content == "fallback text"
