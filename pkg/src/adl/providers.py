"""LLM access layer: chat-completion interface, an OpenAI-compatible HTTP
client, and a deterministic scripted provider for tests and benchmarks.

Token accounting is deliberately tokenizer-free: ``count_tokens`` is the
documented byte/4 approximation, applied per message and summed, so prompt
costs are exactly additive when requests are concatenated.
"""

from __future__ import annotations

import math
import os
import re
import time
from dataclasses import dataclass, field
from typing import Any, Optional

import yaml

from .errors import ProviderError


@dataclass(frozen=True)
class Message:
    role: str  # system | user | assistant | tool
    content: str


ROLES = ("system", "user", "assistant", "tool")


@dataclass(frozen=True)
class ToolCall:
    function: str
    arguments: str  # JSON text


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[Message, ...]
    tools: tuple[dict, ...] = ()  # tool schemas in OpenAI function format
    temperature: float = 0.0

    def __post_init__(self):
        assert self.messages, "a chat request needs at least one message"
        for m in self.messages:
            assert m.role in ROLES, f"bad role {m.role!r}"


@dataclass(frozen=True)
class ChatResponse:
    content: str
    tool_calls: tuple[ToolCall, ...] = ()
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency_ms: int = 0


def count_tokens(text: str) -> int:
    """Deterministic token approximation: max(1, ceil(utf8_bytes / 4))."""
    return max(1, math.ceil(len(text.encode("utf-8")) / 4))


def count_request_tokens(request: ChatRequest) -> int:
    """Prompt-token accounting for the scripted backend: per-message sum."""
    return sum(count_tokens(m.content) for m in request.messages)


class Provider:
    """Interface: anything with chat_complete(request) -> ChatResponse."""

    name = "provider"

    def chat_complete(self, request: ChatRequest) -> ChatResponse:
        raise NotImplementedError


@dataclass
class ScriptedRule:
    when: str  # substring (or regex) matched against the rendered request
    respond: Optional[str] = None
    tool_call: Optional[dict] = None  # {"name": ..., "arguments": {...} | str}
    latency_ms: int = 0

    def matches(self, haystack: str) -> bool:
        if self.when in haystack:
            return True
        try:
            return re.search(self.when, haystack, re.DOTALL) is not None
        except re.error:
            return False


class ScriptedProvider(Provider):
    """Deterministic rule-based provider.

    Rules are tried in order against the full rendered request text (all
    message contents joined by newlines); the first matching rule wins.
    A default response always exists.  Rules that would call a tool the
    request did not offer are skipped, preserving the schema invariant.
    """

    name = "scripted"

    def __init__(self, rules: list[ScriptedRule], default: Optional[ScriptedRule] = None):
        self.rules = rules
        self.default = default or ScriptedRule(when="", respond="OK")

    @classmethod
    def from_file(cls, path: str) -> "ScriptedProvider":
        with open(path, encoding="utf-8") as fh:
            doc = yaml.safe_load(fh) or {}
        if isinstance(doc, list):
            doc = {"rules": doc}
        rules = [cls._rule(entry) for entry in doc.get("rules", [])]
        default = cls._rule(doc["default"]) if "default" in doc else None
        return cls(rules, default)

    @staticmethod
    def _rule(entry: dict) -> ScriptedRule:
        return ScriptedRule(
            when=str(entry.get("when", "")),
            respond=entry.get("respond"),
            tool_call=entry.get("tool_call"),
            latency_ms=int(entry.get("latency_ms", 0)),
        )

    def chat_complete(self, request: ChatRequest) -> ChatResponse:
        haystack = "\n".join(m.content for m in request.messages)
        offered = {t.get("name") or t.get("function", {}).get("name") for t in request.tools}
        chosen = self.default
        for rule in self.rules:
            if not rule.matches(haystack):
                continue
            if rule.tool_call and rule.tool_call.get("name") not in offered:
                continue
            chosen = rule
            break
        tool_calls: tuple[ToolCall, ...] = ()
        content = chosen.respond or ""
        if chosen.tool_call:
            import json

            args = chosen.tool_call.get("arguments", {})
            if not isinstance(args, str):
                args = json.dumps(args, sort_keys=True)
            tool_calls = (ToolCall(function=chosen.tool_call["name"], arguments=args),)
            content = chosen.respond or ""
        return ChatResponse(
            content=content,
            tool_calls=tool_calls,
            prompt_tokens=count_request_tokens(request),
            completion_tokens=count_tokens(content) if content else 0,
            latency_ms=chosen.latency_ms,
        )


class HttpProvider(Provider):
    """OpenAI-compatible chat-completions client over HTTPS.

    Base URL and key come from ADL_LLM_BASE_URL / ADL_LLM_API_KEY unless
    given explicitly.  One retry on timeout, no other backoff.
    """

    name = "http"

    def __init__(
        self,
        base_url: Optional[str] = None,
        api_key: Optional[str] = None,
        model: str = "gpt-4o-mini",
        timeout_s: float = 30.0,
        transport: Any = None,
    ):
        import httpx

        self.base_url = (base_url or os.environ.get("ADL_LLM_BASE_URL", "")).rstrip("/")
        if not self.base_url:
            raise ProviderError("E_CONFIG", "no LLM base URL configured (ADL_LLM_BASE_URL)")
        self.api_key = api_key or os.environ.get("ADL_LLM_API_KEY", "")
        self.model = model
        self.timeout_s = timeout_s
        self._client = httpx.Client(timeout=timeout_s, transport=transport)

    def chat_complete(self, request: ChatRequest) -> ChatResponse:
        import httpx

        payload: dict = {
            "model": self.model,
            "temperature": request.temperature,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
        }
        if request.tools:
            payload["tools"] = [
                {"type": "function", "function": t} for t in request.tools
            ]
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        url = f"{self.base_url}/chat/completions"
        started = time.monotonic()
        for attempt in (0, 1):
            try:
                response = self._client.post(url, json=payload, headers=headers)
                break
            except httpx.TimeoutException:
                if attempt:
                    raise ProviderError("E_TIMEOUT", f"LLM request timed out after {self.timeout_s}s")
        if response.status_code != 200:
            raise ProviderError("E_HTTP", f"LLM backend returned HTTP {response.status_code}", status=response.status_code)
        body = response.json()
        choice = body["choices"][0]["message"]
        usage = body.get("usage", {})
        tool_calls = tuple(
            ToolCall(function=tc["function"]["name"], arguments=tc["function"].get("arguments", "{}"))
            for tc in choice.get("tool_calls") or []
        )
        return ChatResponse(
            content=choice.get("content") or "",
            tool_calls=tool_calls,
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
            latency_ms=int((time.monotonic() - started) * 1000),
        )


def make_provider(spec: str) -> Provider:
    """Build a provider from a CLI-style spec: `scripted:<path>` or `openai`."""
    if spec.startswith("scripted:"):
        return ScriptedProvider.from_file(spec.split(":", 1)[1])
    if spec in ("openai", "http"):
        return HttpProvider()
    raise ProviderError("E_CONFIG", f"unknown provider spec {spec!r}")
