"""Condition evaluation: structural expressions locally, natural-language
conditions through the LLM provider with a fixed judging template."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Union

from ..errors import AdlError
from ..model import And, Compare, ConditionExpr, NaturalLanguage, Or, RegexMatch, resolve_arg_path
from ..providers import Message
from . import templates


@dataclass
class EvalContext:
    args: dict[str, dict[str, Any]]
    transcript: list[tuple[str, str]] = field(default_factory=list)
    current_agent: str = "main"

    def lookup(self, path) -> Any:
        owner, arg = resolve_arg_path(path, self.current_agent)
        return self.args.get(owner, {}).get(arg)


def _normalize(value: Any) -> Any:
    """Scalar normalization for equality: numbers numerically, booleans
    case-insensitively from "True"/"False", everything else as strings."""
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        s = value.strip()
        if s.lower() == "true":
            return True
        if s.lower() == "false":
            return False
        try:
            return float(s)
        except ValueError:
            return s
    return value


def eval_expression(expr: ConditionExpr, ctx: EvalContext) -> bool:
    """Total and pure over structural expressions; never consults the provider.
    Missing arg paths evaluate as None."""
    if isinstance(expr, Compare):
        value = ctx.lookup(expr.path)
        if expr.rhs is None:
            result = value is None
        elif value is None:
            result = False
        else:
            result = _normalize(value) == _normalize(expr.rhs)
        return result if expr.op == "eq" else not result
    if isinstance(expr, RegexMatch):
        value = ctx.lookup(expr.path)
        text = "" if value is None else str(value)
        return re.match(expr.pattern, text) is not None
    if isinstance(expr, And):
        return eval_expression(expr.left, ctx) and eval_expression(expr.right, ctx)
    if isinstance(expr, Or):
        return eval_expression(expr.left, ctx) or eval_expression(expr.right, ctx)
    raise AdlError("E_NL_IN_EXPR", "natural-language condition reached the structural evaluator")


# LlmFn: (purpose, messages) -> response content
LlmFn = Callable[[str, list[Message]], str]


def eval_nl_condition(text: str, ctx: EvalContext, llm: LlmFn) -> tuple[bool, Optional[str]]:
    """Judge one natural-language condition with a single provider call.

    Returns (verdict, warning): the reply is parsed leniently — the first
    yes/true or no/false token decides; neither token present means false
    plus an E_UNPARSEABLE warning for the caller to trace.
    """
    user_text = templates.render_transcript(ctx.transcript, limit=6) + "\nCondition: " + text
    content = llm(
        "nl_condition",
        [Message("system", templates.NL_CONDITION_SYSTEM), Message("user", user_text)],
    )
    verdict = parse_yes_no(content)
    if verdict is None:
        return False, f"E_UNPARSEABLE: no yes/no in condition reply {content!r}"
    return verdict, None


def parse_yes_no(content: str) -> Optional[bool]:
    match = re.search(r"\b(yes|true|no|false)\b", content, re.IGNORECASE)
    if match is None:
        return None
    return match.group(1).lower() in ("yes", "true")


def select_nl_branch(texts: list[str], ctx: EvalContext, llm: LlmFn) -> tuple[Optional[int], Optional[str]]:
    """Resolve a run of consecutive natural-language branches with one call.

    Returns (zero-based index or None for no match, warning)."""
    numbered = "\n".join(f"{i + 1}. {t}" for i, t in enumerate(texts))
    user_text = (
        templates.render_transcript(ctx.transcript, limit=6)
        + "\nConditions:\n"
        + numbered
    )
    content = llm(
        "nl_branch",
        [Message("system", templates.NL_BRANCH_SYSTEM), Message("user", user_text)],
    )
    if re.search(r"\bnone\b", content, re.IGNORECASE):
        return None, None
    match = re.search(r"\d+", content)
    if match:
        index = int(match.group()) - 1
        if 0 <= index < len(texts):
            return index, None
    return None, f"E_UNPARSEABLE: no branch number in routing reply {content!r}"


def eval_condition(
    expr: ConditionExpr, ctx: EvalContext, llm: Optional[LlmFn]
) -> tuple[bool, Optional[str]]:
    """Dispatch between structural and natural-language evaluation."""
    if isinstance(expr, NaturalLanguage):
        if llm is None:
            raise AdlError("E_NO_PROVIDER", "natural-language condition needs an LLM provider")
        return eval_nl_condition(expr.text, ctx, llm)
    return eval_expression(expr, ctx), None
