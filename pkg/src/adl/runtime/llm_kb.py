"""LLM-agent execution (prompt assembly, arg-extraction markers, tool loop,
deactivation/handoff) and KB-agent execution (FAQ match, BM25 retrieval,
grounded synthesis)."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import re
from dataclasses import dataclass, field
from typing import Optional

import yaml

from ..errors import AdlError
from ..model import AgentDef, KbBody, LlmBody
from ..providers import Message
from . import templates
from .flow import call_function, exec_simple_steps
from .outcomes import WAIT, Handoff, Returned
from .session import Activation, Session

MAX_TOOL_CALLS = 8

_SET_MARKER = re.compile(r"<<set\s+([A-Za-z_][\w.]*)\s*=\s*(.*?)\s*>>")
_HANDOFF_MARKER = re.compile(r"<<handoff\s+([A-Za-z_]\w*)\s*>>")
_ANY_MARKER = re.compile(r"<<[^<>]*>>")
_VERDICT_LINE = re.compile(r"\s*GUARDRAIL:\s*(PASS|BLOCK)[^\n]*\n?", re.IGNORECASE)

# transient activations respond once per turn and then hand control back
TRANSIENT = ("ensemble", "fallback", "exit")


# --- plan assembly -------------------------------------------------------------


def conversation_window(session: Session) -> list[Message]:
    window = session.transcript[-session.config.window :]
    return [Message("user" if role == "user" else "assistant", text) for role, text in window]


def offered_tools(session: Session, body: LlmBody) -> tuple[dict, ...]:
    """Tool schemas offered to the model: exactly the `uses` list — functions
    the host does not advertise get a minimal name-only schema."""
    tools = []
    for name in body.uses:
        schema = session.tool_host.schema(name) if session.tool_host else None
        if schema is not None:
            tools.append(schema.to_openai())
        else:
            tools.append(
                {
                    "name": name,
                    "description": "",
                    "parameters": {"type": "object", "properties": {}, "required": []},
                }
            )
    return tuple(tools)


def build_llm_plan(
    session: Session, agent: AgentDef, handoff_listing: Optional[str] = None
) -> tuple[list[Message], tuple[dict, ...]]:
    body = agent.body
    assert isinstance(body, LlmBody)
    sections = []
    if agent.header.description:
        sections.append(agent.header.description)
    sections.append(body.prompt)
    if agent.header.args:
        sections.append(templates.ARG_INSTRUCTIONS.format(args=", ".join(agent.header.args)))
    sections.append(templates.DEACTIVATE_INSTRUCTIONS)
    if handoff_listing:
        sections.append(templates.HANDOFF_INSTRUCTIONS.format(agents=handoff_listing))
    messages = [Message("system", "\n\n".join(sections))]
    messages.extend(conversation_window(session))
    return messages, offered_tools(session, body)


def _handoff_listing(session: Session, act: Activation) -> Optional[str]:
    """Under the autonomous strategy, an ensemble-run agent carries the verbose
    handoff block listing its sibling agents."""
    if session.strategy != "autonomous" or act.invoked_by != "ensemble":
        return None
    if len(session.stack) < 2 or session.stack[-2].kind != "ensemble":
        return None
    from .ensemble import guard_names  # local import to avoid a module cycle

    parent = session.agent_def(session.stack[-2].agent)
    guards = guard_names(session, parent)
    entries = [
        (spec.agent_name, session.agent_def(spec.agent_name).header.description)
        for spec in parent.body.contains
        if spec.agent_name != act.agent and spec.agent_name not in guards
    ]
    return templates.agent_listing(entries) if entries else None


# --- turn execution ------------------------------------------------------------


def run_llm_turn(session: Session, act: Activation, agent: AgentDef) -> object:
    """One response cycle: provider/tool loop, marker processing, outcome."""
    body = agent.body
    assert isinstance(body, LlmBody)
    if not act.init_done:
        act.init_done = True
        if body.init_steps:
            exec_simple_steps(session, agent.name, body.init_steps)

    merged_prefix: list[Message] = list(getattr(act, "merged_prefix", None) or [])
    merged_guard: Optional[str] = getattr(act, "merged_guard", None)
    plan_messages, tools = build_llm_plan(session, agent, _handoff_listing(session, act))
    messages = merged_prefix + plan_messages
    purpose = "merged" if merged_guard else "agent"

    tool_events = 0
    while True:
        response = session.llm(agent.name, purpose, messages, tools)
        if not response.tool_calls:
            break
        for tc in response.tool_calls:
            if tool_events >= MAX_TOOL_CALLS:
                raise AdlError(
                    "E_TOOL_LOOP", f"agent {agent.name!r} exceeded {MAX_TOOL_CALLS} tool calls"
                )
            tool_events += 1
            try:
                args = json.loads(tc.arguments) if tc.arguments else {}
                if not isinstance(args, dict):
                    args = {}
            except json.JSONDecodeError:
                args = {}
            messages.append(Message("assistant", f"<<call {tc.function} {tc.arguments}>>"))
            result = call_function(session, agent.name, tc.function, args)
            messages.append(
                Message(
                    "tool",
                    json.dumps(
                        {
                            "function": tc.function,
                            "status": result.status,
                            "msg": result.status_message,
                            "notes": result.caller_notes,
                            "args": {n: v for n, v in result.arg_updates},
                        },
                        sort_keys=True,
                        default=str,
                    ),
                )
            )

    content = response.content
    if merged_guard:
        match = _VERDICT_LINE.match(content)
        verdict = "PASS"
        if match:
            verdict = match.group(1).upper()
            content = content[match.end() :]
        session.emit("guardrail_verdict", agent=merged_guard, verdict=verdict, merged=True)
        if verdict == "BLOCK":
            session.bot(templates.GUARDRAIL_REFUSAL, merged_guard)
            return Returned("success", "")

    for name, raw_value in _SET_MARKER.findall(content):
        try:
            value = yaml.safe_load(raw_value) if raw_value else None
        except yaml.YAMLError:
            value = raw_value
        if "." in name:
            owner, arg = name.split(".", 1)
        else:
            owner, arg = agent.name, name
        session.set_arg(owner, arg, value)

    deactivated = templates.DEACTIVATE_MARKER in content
    handoff_match = _HANDOFF_MARKER.search(content)
    text = _ANY_MARKER.sub("", content)
    text = "\n".join(
        re.sub(r"[ \t]+", " ", line).strip() for line in text.splitlines()
    ).strip()
    if text:
        session.bot(text, agent.name)

    if act.invoked_by == "ensemble" and len(session.stack) >= 2:
        parent = session.stack[-2]
        if parent.kind == "ensemble":
            parent.active_child = None if deactivated else agent.name
    if handoff_match:
        return Handoff(handoff_match.group(1), had_text=bool(text))
    if act.invoked_by in TRANSIENT:
        return Returned("success", "")
    if deactivated:
        return Returned("success", "")
    return WAIT


# --- KB agents -------------------------------------------------------------------

CHUNK_SIZE = 1200
CHUNK_OVERLAP = 200
BM25_K1 = 1.2
BM25_B = 0.75


def normalize_faq(text: str) -> str:
    collapsed = re.sub(r"\s+", " ", text.strip().lower())
    return collapsed.rstrip(".!?,;:")


def tokenize(text: str) -> list[str]:
    return re.findall(r"[a-z0-9]+", text.lower())


def chunk_text(text: str) -> list[str]:
    if len(text) <= CHUNK_SIZE:
        return [text] if text else []
    chunks = []
    start = 0
    while True:
        chunks.append(text[start : start + CHUNK_SIZE])
        if start + CHUNK_SIZE >= len(text):
            break
        start += CHUNK_SIZE - CHUNK_OVERLAP
    return chunks


@dataclass
class Chunk:
    source: str
    text: str
    tokens: list[str] = field(default_factory=list)


@dataclass
class KbIndex:
    chunks: list[Chunk] = field(default_factory=list)
    warnings: list[tuple[str, str]] = field(default_factory=list)  # (code, detail)

    def __post_init__(self):
        self._rebuild()

    def _rebuild(self) -> None:
        for chunk in self.chunks:
            if not chunk.tokens:
                chunk.tokens = tokenize(chunk.text)
        self._df: dict[str, int] = {}
        for chunk in self.chunks:
            for term in set(chunk.tokens):
                self._df[term] = self._df.get(term, 0) + 1
        lengths = [len(c.tokens) for c in self.chunks]
        self._avgdl = (sum(lengths) / len(lengths)) if lengths else 0.0

    def score(self, query_terms: list[str], chunk: Chunk) -> float:
        n = len(self.chunks)
        total = 0.0
        dl = len(chunk.tokens)
        for term in query_terms:
            tf = chunk.tokens.count(term)
            if tf == 0:
                continue
            df = self._df.get(term, 0)
            idf = math.log((n - df + 0.5) / (df + 0.5) + 1.0)
            denom = tf + BM25_K1 * (1 - BM25_B + BM25_B * dl / self._avgdl) if self._avgdl else tf
            total += idf * tf * (BM25_K1 + 1) / denom
        return total

    def search(self, query: str, k: int = 3) -> list[tuple[float, Chunk]]:
        terms = tokenize(query)
        scored = [(self.score(terms, c), i, c) for i, c in enumerate(self.chunks)]
        positive = [(s, c) for s, i, c in sorted(scored, key=lambda t: (-t[0], t[1])) if s > 0]
        return positive[:k]


def _is_url(source: str) -> bool:
    return source.startswith(("http://", "https://", "www."))


def _read_source(path: str, source: str) -> tuple[Optional[str], Optional[tuple[str, str]]]:
    """Returns (text, warning). PDF/DOC content is accepted only through a
    pre-extracted sidecar text file with the same basename."""
    ext = os.path.splitext(path)[1].lower()
    if ext in (".pdf", ".doc", ".docx"):
        sidecar = os.path.splitext(path)[0] + ".txt"
        if os.path.exists(sidecar):
            with open(sidecar, encoding="utf-8") as fh:
                return fh.read(), None
        return None, ("W_SOURCE_SKIPPED", f"{source}: no .txt sidecar for {ext} source")
    if not os.path.exists(path):
        return None, ("E_SOURCE_MISSING", f"{source}: file not found")
    if ext == ".csv":
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            return "", None
        header = rows[0]
        lines = ["; ".join(f"{h}={v}" for h, v in zip(header, row)) for row in rows[1:]]
        return "\n".join(lines), None
    with open(path, encoding="utf-8") as fh:
        return fh.read(), None


def ingest_sources(
    sources: tuple[str, ...],
    base_dir: str = ".",
    strict: bool = True,
    fetch_urls: bool = False,
) -> KbIndex:
    """Build the retrieval index. With strict=True, a missing file raises
    E_SOURCE_MISSING; otherwise it becomes an index warning."""
    chunks: list[Chunk] = []
    warnings: list[tuple[str, str]] = []
    for source in sources:
        if _is_url(source):
            if not fetch_urls:
                warnings.append(("W_SOURCE_SKIPPED", f"{source}: URL fetch disabled"))
                continue
            import httpx

            text = httpx.get(source if "://" in source else f"https://{source}").text
        else:
            text, warning = _read_source(os.path.join(base_dir, source), source)
            if warning:
                if strict and warning[0] == "E_SOURCE_MISSING":
                    raise AdlError(warning[0], warning[1])
                warnings.append(warning)
                continue
        for piece in chunk_text(text):
            chunks.append(Chunk(source=source, text=piece))
    return KbIndex(chunks=chunks, warnings=warnings)


def get_kb_index(session: Session, agent: AgentDef) -> KbIndex:
    index = session._kb_indexes.get(agent.name)
    if index is None:
        body = agent.body
        assert isinstance(body, KbBody)
        index = ingest_sources(
            body.sources,
            base_dir=session.config.base_dir,
            strict=False,
            fetch_urls=session.config.kb_fetch_urls,
        )
        for code, detail in index.warnings:
            session.emit("warning", code=code, detail=detail, agent=agent.name)
        session._kb_indexes[agent.name] = index
    return index


def kb_turn(session: Session, act: Activation, agent: AgentDef) -> Returned:
    """Answer the latest user message: FAQ match first, then retrieval."""
    body = agent.body
    assert isinstance(body, KbBody)
    if not body.sources and not body.faq:
        return Returned("error", "E_EMPTY_KB: agent has no sources and no faq entries")
    query = session.last_user_text()
    normalized = normalize_faq(query)
    for q, a in body.faq:
        if normalize_faq(q) == normalized:
            session.bot(a, agent.name)
            return Returned("success", "")
    index = get_kb_index(session, agent)
    top = index.search(query, k=3)
    if not top:
        return Returned("error", "no matching passages")
    if session.config.kb_synthesis and session.provider is not None:
        passages = "\n".join(
            f"[{i + 1}] ({chunk.source}) {chunk.text}" for i, (_, chunk) in enumerate(top)
        )
        response = session.llm(
            agent.name,
            "kb_synthesis",
            [
                Message("system", templates.KB_SYNTHESIS_SYSTEM.format(passages=passages)),
                Message("user", query),
            ],
        )
        session.bot(response.content, agent.name)
    else:
        _, best = top[0]
        session.bot(f"From {best.source}: {best.text}", agent.name)
    return Returned("success", "")
