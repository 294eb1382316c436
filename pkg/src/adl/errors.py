"""Runtime error types shared across the package."""

from __future__ import annotations


class AdlError(Exception):
    """Base error carrying a short machine-readable code."""

    def __init__(self, code: str, message: str, **extra):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message
        self.extra = extra


class ProviderError(AdlError):
    """LLM backend failures (E_HTTP, E_TIMEOUT, E_CONFIG, E_PROVIDER)."""


class ToolError(AdlError):
    """Tool host failures (E_SPAWN, E_HANDSHAKE, E_TOOL_TIMEOUT, E_TOOL_PROTOCOL)."""


class SessionError(AdlError):
    """Session-level misuse (E_TERMINATED, E_STRATEGY_UNKNOWN, E_NO_TURN)."""
