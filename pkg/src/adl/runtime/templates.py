"""Fixed prompt templates, referenced by id.

Every provider-facing string the runtime generates lives here, so scripted
tests can match on stable markers and the judge/selector prompts never
drift between runs.
"""

from __future__ import annotations

# Natural-language condition judging (id: nl_condition)
NL_CONDITION_SYSTEM = "You judge a condition against a conversation. Answer Yes or No only."

# Multi-branch routing for consecutive natural-language branches (id: nl_branch)
NL_BRANCH_SYSTEM = (
    "You route a conversation. Given numbered conditions, reply with the number "
    "of the first condition satisfied by the latest user message, or the word none."
)

# Agent selection (id: selector); kept deliberately small: the token cost of
# selection should stay below the autonomous handoff overhead.
SELECTOR_SYSTEM = "Pick the agent for the user's message. Reply with the agent name only."

# First-success judging (id: judge_satisfactory)
JUDGE_SATISFACTORY_SYSTEM = (
    "You judge whether a candidate response satisfies the user's request. Answer Yes or No only."
)

# Best-of-N judging (id: judge_best)
JUDGE_BEST_SYSTEM = (
    "You compare candidate responses to the user's request. "
    "Reply with the number of the best candidate only."
)

# Guardrail verdict (id: guardrail)
GUARDRAIL_SYSTEM = (
    "You are a guardrail. Decide whether the user's message should be handled. "
    "Reply PASS to allow it or BLOCK to refuse it."
)

# Marker vocabulary understood in LLM agent replies
SET_MARKER = "<<set {name}={value}>>"
DEACTIVATE_MARKER = "<<deactivate>>"
HANDOFF_MARKER = "<<handoff {name}>>"

ARG_INSTRUCTIONS = (
    "Track these arguments: {args}. Whenever you learn a value, include the marker "
    "<<set name=value>> in your reply; markers are stripped before the user sees the text."
)

DEACTIVATE_INSTRUCTIONS = (
    "When your task is complete or you cannot help further, include the marker "
    "<<deactivate>> in your reply to hand control back."
)

# Autonomous handoff block appended to the active agent's system prompt.  It is
# intentionally more verbose than the selector prompt: autonomy trades the
# selector call for extra prompt tokens on every turn.
HANDOFF_INSTRUCTIONS = (
    "You may hand the conversation over to another agent whenever the user's request "
    "falls outside your own scope. These are the agents available for a handoff, with "
    "a short description of what each one handles:\n{agents}\n"
    "To hand the conversation over, include the marker <<handoff agent_name>> in your "
    "reply, using the exact agent name from the list above. Only hand off when the "
    "request clearly belongs to another agent; otherwise continue handling it yourself."
)

# One-shot execution of a natural-language fallback policy (id: fallback_policy)
FALLBACK_POLICY_SYSTEM = (
    "Follow this fallback policy for the conversation below. Reply with the message "
    "to show the user.\nPolicy: {policy}"
)

# KB grounded synthesis (id: kb_synthesis)
KB_SYNTHESIS_SYSTEM = (
    "Answer the user's question using only the reference passages below. "
    "If they do not contain the answer, say you do not know.\n{passages}"
)

BUILTIN_APOLOGY = "I'm sorry, something went wrong on our side. Please try again later."
GUARDRAIL_REFUSAL = "Sorry, I can't help with that request."


def render_transcript(turns: list[tuple[str, str]], limit: int = 6) -> str:
    lines = []
    for role, text in turns[-limit:]:
        speaker = "User" if role == "user" else "Bot"
        lines.append(f"{speaker}: {text}")
    return "\n".join(lines)


def agent_listing(agents: list[tuple[str, str]]) -> str:
    return "\n".join(f"- {name}: {description}" for name, description in agents)
