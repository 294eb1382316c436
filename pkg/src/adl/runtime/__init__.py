"""Conversation runtime: sessions, the turn loop, and the agent engines."""

from .conditions import EvalContext, eval_expression, eval_nl_condition, select_nl_branch
from .driver import create_session, post_user_message
from .flow import interpolate
from .llm_kb import KbIndex, ingest_sources
from .session import (
    STRATEGIES,
    Activation,
    Session,
    SessionConfig,
    StateSnapshot,
    TraceEvent,
    TurnMetrics,
    TurnResult,
)

__all__ = [
    "STRATEGIES",
    "Activation",
    "EvalContext",
    "KbIndex",
    "Session",
    "SessionConfig",
    "StateSnapshot",
    "TraceEvent",
    "TurnMetrics",
    "TurnResult",
    "create_session",
    "eval_expression",
    "eval_nl_condition",
    "ingest_sources",
    "interpolate",
    "post_user_message",
    "select_nl_branch",
]
