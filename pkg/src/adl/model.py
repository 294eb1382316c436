"""Abstract syntax and shared data model for ADL programs.

Everything here is immutable after construction (frozen dataclasses) so a
parsed program can be shared freely across concurrent sessions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

# (file, line, column); 1-based line/column.
Location = tuple[str, int, int]

Literal = Union[str, int, float, bool, None, tuple]


@dataclass(frozen=True)
class ArgPath:
    """Reference to an argument namespace: `owner.arg` or bare `arg`."""

    arg: str
    owner: Optional[str] = None

    def render(self) -> str:
        return f"{self.owner}.{self.arg}" if self.owner else self.arg


def resolve_arg_path(path: ArgPath, current_agent: str) -> tuple[str, str]:
    """Resolve a possibly-bare arg path to a fully qualified (owner, arg).

    Bare paths default to the current agent; qualified paths pass through.
    Existence of the argument is checked at read time, not here.
    """
    return (path.owner or current_agent, path.arg)


# --- Condition expressions -------------------------------------------------


@dataclass(frozen=True)
class NaturalLanguage:
    text: str


@dataclass(frozen=True)
class Compare:
    path: ArgPath
    op: str  # "eq" | "neq"
    rhs: Literal  # None means the None-marker


@dataclass(frozen=True)
class RegexMatch:
    pattern: str
    path: ArgPath


@dataclass(frozen=True)
class And:
    left: "ConditionExpr"
    right: "ConditionExpr"


@dataclass(frozen=True)
class Or:
    left: "ConditionExpr"
    right: "ConditionExpr"


ConditionExpr = Union[NaturalLanguage, Compare, RegexMatch, And, Or]


# --- Steps ------------------------------------------------------------------


@dataclass(frozen=True)
class User:
    loc: Optional[Location] = field(default=None, compare=False)


@dataclass(frozen=True)
class Bot:
    template: str
    loc: Optional[Location] = field(default=None, compare=False)


@dataclass(frozen=True)
class Set:
    # target is always a path; value is a literal or another path
    assignments: tuple[tuple[ArgPath, Union[Literal, ArgPath]], ...]
    loc: Optional[Location] = field(default=None, compare=False)


@dataclass(frozen=True)
class Label:
    name: str
    loc: Optional[Location] = field(default=None, compare=False)


@dataclass(frozen=True)
class Next:
    target: str  # label or subflow name within the same flow
    tries: Optional[int] = None  # >= 1 when present
    loc: Optional[Location] = field(default=None, compare=False)


@dataclass(frozen=True)
class Call:
    callee: str  # agent or tool function name
    arg_bindings: tuple[tuple[str, Union[Literal, ArgPath]], ...] = ()
    loc: Optional[Location] = field(default=None, compare=False)


@dataclass(frozen=True)
class Branch:
    condition: ConditionExpr
    body: tuple["Step", ...]


@dataclass(frozen=True)
class Condition:
    branches: tuple[Branch, ...]  # >= 1
    else_body: Optional[tuple["Step", ...]] = None
    loc: Optional[Location] = field(default=None, compare=False)


@dataclass(frozen=True)
class Return:
    status: str  # "success" | "error"
    message: str = ""
    loc: Optional[Location] = field(default=None, compare=False)


Step = Union[User, Bot, Set, Label, Next, Call, Condition, Return]

# All eight step kinds; kept in one place so exhaustiveness can be asserted.
STEP_KINDS: tuple[type, ...] = (User, Bot, Set, Label, Next, Call, Condition, Return)


# --- Agents -----------------------------------------------------------------


@dataclass(frozen=True)
class AgentHeader:
    description: str = ""
    args: tuple[str, ...] = ()
    fallback: Optional[str] = None  # agent name or natural-language policy
    exit: Optional[str] = None


@dataclass(frozen=True)
class KbBody:
    sources: tuple[str, ...] = ()
    faq: tuple[tuple[str, str], ...] = ()  # (q, a)


@dataclass(frozen=True)
class LlmBody:
    prompt: str
    uses: tuple[str, ...] = ()
    init_steps: tuple[Step, ...] = ()


@dataclass(frozen=True)
class FlowBody:
    steps: tuple[Step, ...]
    subflows: tuple[tuple[str, tuple[Step, ...]], ...] = ()

    def subflow(self, name: str) -> Optional[tuple[Step, ...]]:
        for sub, steps in self.subflows:
            if sub == name:
                return steps
        return None


@dataclass(frozen=True)
class InvokeSpec:
    agent_name: str
    # (inner arg, by_ref, ensemble arg)
    arg_map: tuple[tuple[str, bool, str], ...] = ()


@dataclass(frozen=True)
class EnsembleBody:
    contains: tuple[InvokeSpec, ...]
    policy_prompt: Optional[str] = None
    init_steps: tuple[Step, ...] = ()


AgentBody = Union[KbBody, LlmBody, FlowBody, EnsembleBody]


@dataclass(frozen=True)
class AgentDef:
    name: str
    header: AgentHeader
    body: AgentBody
    loc: Optional[Location] = field(default=None, compare=False)

    @property
    def kind(self) -> str:
        return {KbBody: "kb", LlmBody: "llm", FlowBody: "flow", EnsembleBody: "ensemble"}[
            type(self.body)
        ]


@dataclass(frozen=True)
class Program:
    agents: tuple[AgentDef, ...]  # declaration order preserved
    tool_files: tuple[str, ...] = ()
    filename: str = "<memory>"

    def agent(self, name: str) -> Optional[AgentDef]:
        for a in self.agents:
            if a.name == name:
                return a
        return None

    @property
    def agent_names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.agents)

    @property
    def main(self) -> AgentDef:
        found = self.agent("main")
        assert found is not None, "validated programs always contain main"
        return found


# --- Diagnostics ------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    code: str
    message: str
    location: Optional[Location] = None

    def render(self) -> str:
        if self.location:
            f, line, col = self.location
            return f"{f}:{line}:{col}: {self.severity}[{self.code}]: {self.message}"
        return f"{self.severity}[{self.code}]: {self.message}"


def errors_in(diagnostics: list[Diagnostic]) -> list[Diagnostic]:
    return [d for d in diagnostics if d.severity == "error"]
