"""Loading, parsing and validating ADL programs.

ADL source files are YAML documents.  Parsing happens over the composed YAML
node tree (not plain ``safe_load``) so diagnostics carry line/column
locations and duplicate keys can be detected instead of silently dropped.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any, Optional, Union

import yaml

from .model import (
    AgentDef,
    AgentHeader,
    And,
    ArgPath,
    Bot,
    Branch,
    Call,
    Compare,
    Condition,
    ConditionExpr,
    Diagnostic,
    EnsembleBody,
    FlowBody,
    InvokeSpec,
    KbBody,
    Label,
    Literal,
    LlmBody,
    Location,
    NaturalLanguage,
    Next,
    Or,
    Program,
    RegexMatch,
    Return,
    Set,
    Step,
    User,
    errors_in,
)

AGENT_TYPES = {
    "kb agent": "kb",
    "llm agent": "llm",
    "flow agent": "flow",
    "ensemble agent": "ensemble",
}

HEADER_FIELDS = {"type", "description", "args", "fallback", "exit"}
BODY_FIELDS = {
    "kb": {"sources", "faq"},
    "llm": {"prompt", "uses", "steps"},
    "flow": {"steps"},
    "ensemble": {"contains", "prompt", "steps"},
}

ARG_PATH_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)?$")
_RESERVED_WORDS = {"True", "False", "None", "true", "false", "null"}


@dataclass
class ParseResult:
    program: Optional[Program]
    diagnostics: list[Diagnostic]


class BadRegexError(ValueError):
    """A structurally valid re.match(...) condition whose pattern won't compile."""

    def __init__(self, pattern: str):
        super().__init__(f"regex does not compile: {pattern!r}")
        self.pattern = pattern


# --- YAML node tree with locations -------------------------------------------


class YamlMap(dict):
    loc: Optional[Location] = None
    key_locs: dict


class YamlList(list):
    loc: Optional[Location] = None
    item_locs: list


def _scalar_value(node: yaml.ScalarNode) -> Any:
    tag = node.tag
    v = node.value
    if tag.endswith(":null"):
        return None
    if tag.endswith(":bool"):
        return v.lower() in ("true", "yes", "on")
    if tag.endswith(":int"):
        return int(v)
    if tag.endswith(":float"):
        return float(v)
    return v


def _convert_node(node: yaml.Node, filename: str, dups: list) -> Any:
    if isinstance(node, yaml.ScalarNode):
        return _scalar_value(node)
    loc = (filename, node.start_mark.line + 1, node.start_mark.column + 1)
    if isinstance(node, yaml.SequenceNode):
        out = YamlList()
        out.loc = loc
        out.item_locs = []
        for child in node.value:
            out.append(_convert_node(child, filename, dups))
            out.item_locs.append(
                (filename, child.start_mark.line + 1, child.start_mark.column + 1)
            )
        return out
    if isinstance(node, yaml.MappingNode):
        out = YamlMap()
        out.loc = loc
        out.key_locs = {}
        for key_node, value_node in node.value:
            key = _scalar_value(key_node) if isinstance(key_node, yaml.ScalarNode) else str(key_node)
            key_loc = (filename, key_node.start_mark.line + 1, key_node.start_mark.column + 1)
            if key in out:
                dups.append((key, key_loc))
            out[key] = _convert_node(value_node, filename, dups)
            out.key_locs[key] = key_loc
        return out
    raise TypeError(f"unexpected YAML node: {node!r}")


def _loc_of(value: Any, fallback: Optional[Location] = None) -> Optional[Location]:
    return getattr(value, "loc", None) or fallback


# --- Condition expressions ----------------------------------------------------


def _split_top(text: str, word: str) -> list[str]:
    """Split on a keyword at paren/quote depth zero, keyword surrounded by spaces."""
    parts = []
    depth = 0
    quote = None
    i = 0
    start = 0
    needle = f" {word} "
    while i < len(text):
        ch = text[i]
        if quote:
            if ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
        elif ch == "(":
            depth += 1
        elif ch == ")":
            depth = max(0, depth - 1)
        elif depth == 0 and quote is None and text.startswith(needle, i):
            parts.append(text[start:i])
            i += len(needle)
            start = i
            continue
        i += 1
    parts.append(text[start:])
    return parts


def _parse_value(text: str) -> Literal:
    text = text.strip()
    if text == "None":
        return None
    if text in ("True", "true"):
        return True
    if text in ("False", "false"):
        return False
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
        return text[1:-1]
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def _parse_atom(text: str) -> Optional[ConditionExpr]:
    text = text.strip()
    m = re.fullmatch(r"re\.match\((.*)\)", text, re.DOTALL)
    if m:
        inner = m.group(1)
        # the path is after the last top-level comma; the regex may contain commas
        parts = _split_last_comma(inner)
        if parts is None:
            return None
        pattern, path_text = parts
        pattern = pattern.strip()
        if len(pattern) >= 2 and pattern[0] == pattern[-1] and pattern[0] in "'\"":
            pattern = pattern[1:-1]
        path_text = path_text.strip()
        if not ARG_PATH_RE.match(path_text):
            return None
        try:
            re.compile(pattern)
        except re.error:
            raise BadRegexError(pattern)
        return RegexMatch(pattern=pattern, path=_make_path(path_text))
    for op_text, op in (("==", "eq"), ("!=", "neq")):
        if op_text in text:
            lhs, rhs = text.split(op_text, 1)
            lhs = lhs.strip()
            if not ARG_PATH_RE.match(lhs) or lhs in _RESERVED_WORDS:
                return None
            rhs = rhs.strip()
            if not rhs:
                return None
            return Compare(path=_make_path(lhs), op=op, rhs=_parse_value(rhs))
    return None


def _split_last_comma(text: str) -> Optional[tuple[str, str]]:
    depth = 0
    quote = None
    last = -1
    for i, ch in enumerate(text):
        if quote:
            if ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
        elif ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            last = i
    if last < 0:
        return None
    return text[:last], text[last + 1 :]


def _make_path(text: str) -> ArgPath:
    if "." in text:
        owner, arg = text.split(".", 1)
        return ArgPath(arg=arg, owner=owner)
    return ArgPath(arg=text)


def parse_condition(text: str) -> ConditionExpr:
    """Parse a condition string into a structured expression.

    `and` binds tighter than `or`.  Any string that does not match the
    expression grammar as a whole falls back to NaturalLanguage; it never
    fails on free text.  Raises BadRegexError for a structurally valid
    re.match whose pattern does not compile.
    """
    or_parts = _split_top(text.strip(), "or")
    terms: list[ConditionExpr] = []
    for or_part in or_parts:
        and_parts = _split_top(or_part, "and")
        atoms: list[ConditionExpr] = []
        for and_part in and_parts:
            atom = _parse_atom(and_part)
            if atom is None:
                return NaturalLanguage(text=text.strip())
            atoms.append(atom)
        node = atoms[0]
        for nxt in atoms[1:]:
            node = And(left=node, right=nxt)
        terms.append(node)
    expr = terms[0]
    for nxt in terms[1:]:
        expr = Or(left=expr, right=nxt)
    return expr


# --- Step parsing --------------------------------------------------------------


class _Ctx:
    def __init__(self, filename: str):
        self.filename = filename
        self.diagnostics: list[Diagnostic] = []

    def error(self, code: str, message: str, loc: Optional[Location] = None):
        self.diagnostics.append(Diagnostic("error", code, message, loc))

    def warn(self, code: str, message: str, loc: Optional[Location] = None):
        self.diagnostics.append(Diagnostic("warning", code, message, loc))


def _classify_value(raw: Any, ctx: _Ctx, loc: Optional[Location]) -> Union[Literal, ArgPath]:
    """A bare identifier-ish string is an arg path; everything else a literal."""
    if isinstance(raw, str):
        if ARG_PATH_RE.match(raw) and raw not in _RESERVED_WORDS:
            return _make_path(raw)
        return raw
    if isinstance(raw, list):
        for item in raw:
            if isinstance(item, (dict, list)):
                ctx.error("E_BAD_STEP", "nested collections are not allowed as values", loc)
                return None
        return tuple(raw)
    if isinstance(raw, dict):
        ctx.error("E_BAD_STEP", "mapping values are not allowed here", loc)
        return None
    return raw


def _parse_bindings(raw: Any, ctx: _Ctx, loc: Optional[Location]) -> tuple:
    """args for call / set: mapping or list of single-pair mappings."""
    pairs = []
    if raw is None:
        return ()
    items: list[tuple[str, Any]]
    if isinstance(raw, dict):
        items = list(raw.items())
    elif isinstance(raw, list):
        items = []
        for entry in raw:
            if isinstance(entry, dict) and len(entry) == 1:
                items.append(next(iter(entry.items())))
            else:
                ctx.error("E_BAD_STEP", f"malformed binding entry: {entry!r}", loc)
        # fallthrough with what we could salvage
    else:
        ctx.error("E_BAD_STEP", f"expected a mapping of bindings, got {raw!r}", loc)
        return ()
    for key, value in items:
        pairs.append((str(key), _classify_value(value, ctx, loc)))
    return tuple(pairs)


def _parse_step_item(item: Any, loc: Optional[Location], ctx: _Ctx) -> Optional[Step]:
    if isinstance(item, str):
        if item == "user":
            return User(loc=loc)
        ctx.error("E_BAD_STEP", f"unrecognized step {item!r}", loc)
        return None
    if not isinstance(item, dict):
        ctx.error("E_BAD_STEP", f"step must be a mapping or 'user', got {item!r}", loc)
        return None
    loc = _loc_of(item, loc)
    keys = set(item.keys())
    if "user" in keys:
        ctx.error("E_BAD_STEP", "'user' takes no value; write it as a bare list item", loc)
        return None
    if "bot" in keys:
        return Bot(template=str(item["bot"]), loc=loc)
    if "set" in keys:
        assignments = []
        for target, value in _parse_bindings(item["set"], ctx, loc):
            if not ARG_PATH_RE.match(target):
                ctx.error("E_BAD_STEP", f"invalid set target {target!r}", loc)
                continue
            assignments.append((_make_path(target), value))
        return Set(assignments=tuple(assignments), loc=loc)
    if "label" in keys:
        return Label(name=str(item["label"]), loc=loc)
    if "next" in keys:
        tries = item.get("tries")
        if tries is not None and (not isinstance(tries, int) or tries < 1):
            ctx.error("E_BAD_STEP", f"tries must be a positive integer, got {tries!r}", loc)
            tries = None
        return Next(target=str(item["next"]), tries=tries, loc=loc)
    if "call" in keys:
        return Call(
            callee=str(item["call"]),
            arg_bindings=_parse_bindings(item.get("args"), ctx, loc),
            loc=loc,
        )
    if "return" in keys:
        raw = str(item["return"])
        status, _, message = raw.partition(",")
        status = status.strip().strip("'\"")
        message = message.strip()
        if status not in ("success", "error"):
            ctx.error("E_BAD_STEP", f"return status must be success or error, got {status!r}", loc)
            return None
        return Return(status=status, message=message, loc=loc)
    if "if" in keys or "else if" in keys:
        # handled by _parse_steps; reaching here means a malformed chain
        ctx.error("E_BAD_STEP", "conditional chain out of place", loc)
        return None
    ctx.error("E_BAD_STEP", f"unrecognized step keys {sorted(keys)}", loc)
    return None


def _parse_condition_text(raw: Any, loc: Optional[Location], ctx: _Ctx) -> ConditionExpr:
    try:
        return parse_condition(str(raw))
    except BadRegexError as exc:
        ctx.error("E_BAD_REGEX", str(exc), loc)
        return NaturalLanguage(text=str(raw))


def _parse_steps(raw: Any, ctx: _Ctx, loc: Optional[Location] = None) -> tuple[Step, ...]:
    if raw is None:
        return ()
    if not isinstance(raw, list):
        ctx.error("E_BAD_STEP", f"expected a step list, got {raw!r}", _loc_of(raw, loc))
        return ()
    item_locs = getattr(raw, "item_locs", [None] * len(raw))
    steps: list[Step] = []
    i = 0
    while i < len(raw):
        item = raw[i]
        iloc = item_locs[i]
        if isinstance(item, dict) and "if" in item:
            branches = [
                Branch(
                    condition=_parse_condition_text(item["if"], _loc_of(item, iloc), ctx),
                    body=_parse_steps(item.get("then"), ctx, iloc),
                )
            ]
            else_body = _parse_steps(item["else"], ctx, iloc) if "else" in item else None
            cloc = _loc_of(item, iloc)
            i += 1
            # absorb following `else if` items into the same conditional
            while else_body is None and i < len(raw) and isinstance(raw[i], dict) and "else if" in raw[i]:
                elif_item = raw[i]
                eloc = _loc_of(elif_item, item_locs[i])
                branches.append(
                    Branch(
                        condition=_parse_condition_text(elif_item["else if"], eloc, ctx),
                        body=_parse_steps(elif_item.get("then"), ctx, item_locs[i]),
                    )
                )
                if "else" in elif_item:
                    else_body = _parse_steps(elif_item["else"], ctx, item_locs[i])
                i += 1
            steps.append(Condition(branches=tuple(branches), else_body=else_body, loc=cloc))
            continue
        if isinstance(item, dict) and "else if" in item:
            ctx.error("E_BAD_STEP", "'else if' without a preceding 'if'", _loc_of(item, iloc))
            i += 1
            continue
        step = _parse_step_item(item, iloc, ctx)
        if step is not None:
            steps.append(step)
        i += 1
    return tuple(steps)


# --- Agent parsing --------------------------------------------------------------


def _parse_header(raw: dict, name: str, ctx: _Ctx, loc: Optional[Location]) -> AgentHeader:
    description = raw.get("description", "")
    if not isinstance(description, str):
        description = str(description)
    if not description and name != "main":
        ctx.error("E_BAD_STEP", f"agent {name!r} is missing a description", loc)
    args_raw = raw.get("args") or []
    args: list[str] = []
    if isinstance(args_raw, list):
        for entry in args_raw:
            arg = str(entry)
            if arg in args:
                ctx.error("E_BAD_STEP", f"duplicate arg {arg!r} in agent {name!r}", loc)
            else:
                args.append(arg)
    else:
        ctx.error("E_BAD_STEP", f"args of agent {name!r} must be a list", loc)
    fallback = raw.get("fallback")
    exit_policy = raw.get("exit")
    return AgentHeader(
        description=description,
        args=tuple(args),
        fallback=str(fallback) if fallback is not None else None,
        exit=str(exit_policy) if exit_policy is not None else None,
    )


def _parse_contains(raw: Any, ctx: _Ctx, loc: Optional[Location]) -> tuple[InvokeSpec, ...]:
    specs: list[InvokeSpec] = []
    if not isinstance(raw, list):
        ctx.error("E_BAD_STEP", "contains must be a list of agents", loc)
        return ()
    for entry in raw:
        if isinstance(entry, str):
            specs.append(InvokeSpec(agent_name=entry))
            continue
        if isinstance(entry, dict) and len(entry) == 1:
            agent_name, spec_raw = next(iter(entry.items()))
            arg_map: list[tuple[str, bool, str]] = []
            if isinstance(spec_raw, dict):
                bindings = spec_raw.get("args") or {}
                if isinstance(bindings, list):
                    merged = {}
                    for b in bindings:
                        if isinstance(b, dict):
                            merged.update(b)
                    bindings = merged
                if isinstance(bindings, dict):
                    seen = set()
                    for inner, target in bindings.items():
                        inner = str(inner)
                        if inner in seen:
                            ctx.error("E_BAD_STEP", f"duplicate inner arg {inner!r} in contains", loc)
                            continue
                        seen.add(inner)
                        target = str(target)
                        by_ref = False
                        if target.startswith("ref "):
                            by_ref = True
                            target = target[4:].strip()
                        arg_map.append((inner, by_ref, target))
            elif spec_raw is not None:
                ctx.error("E_BAD_STEP", f"malformed contains entry for {agent_name!r}", loc)
            specs.append(InvokeSpec(agent_name=str(agent_name), arg_map=tuple(arg_map)))
            continue
        ctx.error("E_BAD_STEP", f"malformed contains entry: {entry!r}", loc)
    return specs and tuple(specs) or ()


def _parse_agent(name: str, raw: Any, ctx: _Ctx, loc: Optional[Location]) -> Optional[AgentDef]:
    if not isinstance(raw, dict):
        ctx.error("E_BAD_TYPE", f"agent {name!r} must be a mapping", loc)
        return None
    loc = _loc_of(raw, loc)
    agent_type = raw.get("type")
    if agent_type not in AGENT_TYPES:
        ctx.error(
            "E_BAD_TYPE",
            f"agent {name!r} has type {agent_type!r}; expected one of {sorted(AGENT_TYPES)}",
            loc,
        )
        return None
    kind = AGENT_TYPES[agent_type]
    header = _parse_header(raw, name, ctx, loc)
    known = HEADER_FIELDS | BODY_FIELDS[kind]

    if kind == "kb":
        if "steps" in raw or "contains" in raw:
            ctx.error("E_KB_NOT_ATOMIC", f"KB agent {name!r} cannot have steps or contain agents", loc)
            return None
        sources = tuple(str(s) for s in (raw.get("sources") or []))
        faq = []
        for entry in raw.get("faq") or []:
            if isinstance(entry, dict) and "q" in entry and "a" in entry:
                faq.append((str(entry["q"]), str(entry["a"])))
            else:
                ctx.error("E_BAD_STEP", f"faq entries need q and a fields, got {entry!r}", loc)
        body: Any = KbBody(sources=sources, faq=tuple(faq))
    elif kind == "llm":
        prompt = raw.get("prompt")
        if not isinstance(prompt, str) or not prompt.strip():
            ctx.error("E_BAD_STEP", f"LLM agent {name!r} requires a prompt", loc)
            return None
        uses = tuple(str(u) for u in (raw.get("uses") or []))
        body = LlmBody(prompt=prompt, uses=uses, init_steps=_parse_steps(raw.get("steps"), ctx, loc))
    elif kind == "flow":
        steps = _parse_steps(raw.get("steps"), ctx, loc)
        if not steps:
            ctx.error("E_BAD_STEP", f"flow agent {name!r} requires non-empty steps", loc)
            return None
        subflows = []
        for key, value in raw.items():
            if key in known:
                continue
            if isinstance(value, list):
                subflows.append((str(key), _parse_steps(value, ctx, loc)))
            else:
                ctx.warn("W_UNKNOWN_FIELD", f"unknown field {key!r} on flow agent {name!r}", loc)
        body = FlowBody(steps=steps, subflows=tuple(subflows))
    else:  # ensemble
        contains = _parse_contains(raw.get("contains"), ctx, loc)
        if not contains:
            ctx.error("E_BAD_STEP", f"ensemble agent {name!r} requires a non-empty contains list", loc)
            return None
        policy = raw.get("prompt")
        if policy is None:
            policy = raw.get("policy")
            known = known | {"policy"}
        body = EnsembleBody(
            contains=contains,
            policy_prompt=str(policy) if policy is not None else None,
            init_steps=_parse_steps(raw.get("steps"), ctx, loc),
        )

    if kind != "flow":
        for key in raw:
            if key not in known:
                ctx.warn("W_UNKNOWN_FIELD", f"unknown field {key!r} on agent {name!r}", loc)
    return AgentDef(name=name, header=header, body=body, loc=loc)


def parse_program(source_text: str, filename: str = "<memory>") -> ParseResult:
    """Parse an ADL YAML document into a Program.

    The returned program is present iff no error-severity diagnostics were
    produced.  Step lists preserve document order.
    """
    ctx = _Ctx(filename)
    dups: list = []
    try:
        node = yaml.compose(source_text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        loc = None
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            loc = (filename, mark.line + 1, mark.column + 1)
        ctx.error("E_YAML", f"malformed YAML document: {exc}", loc)
        return ParseResult(None, ctx.diagnostics)
    if node is None:
        ctx.error("E_NO_MAIN", "a valid ADL program must contain a main agent")
        return ParseResult(None, ctx.diagnostics)
    doc = _convert_node(node, filename, dups)
    if not isinstance(doc, dict):
        ctx.error("E_YAML", "top level of an ADL program must be a mapping", _loc_of(doc))
        return ParseResult(None, ctx.diagnostics)

    for key, loc in dups:
        if key in doc.key_locs and key != "tools":
            ctx.error("E_DUP_AGENT", f"duplicate top-level agent {key!r}", loc)
        else:
            ctx.warn("W_DUP_KEY", f"duplicate key {key!r}; last occurrence wins", loc)
    # nested duplicate keys also land in dups; only flag top-level names as agents
    top_keys = set(doc.key_locs)
    dups[:] = [(k, l) for (k, l) in dups if k not in top_keys]

    tool_files: tuple[str, ...] = ()
    agents: list[AgentDef] = []
    for name, raw in doc.items():
        name = str(name)
        loc = doc.key_locs.get(name)
        if name == "tools":
            entries = raw if isinstance(raw, list) else [raw]
            files = [str(e) for e in entries if e is not None and str(e)]
            if len(files) != len(entries):
                ctx.error("E_BAD_STEP", "tool file names must be non-empty", loc)
            tool_files = tuple(files)
            continue
        agent = _parse_agent(name, raw, ctx, loc)
        if agent is not None:
            agents.append(agent)

    if not any(a.name == "main" for a in agents):
        ctx.error("E_NO_MAIN", "a valid ADL program must contain a main agent")

    if errors_in(ctx.diagnostics):
        return ParseResult(None, ctx.diagnostics)
    return ParseResult(Program(agents=tuple(agents), tool_files=tool_files, filename=filename), ctx.diagnostics)


# --- Validation --------------------------------------------------------------


def _walk_steps(steps: tuple[Step, ...]):
    """Yield (step, containing block) depth-first, in document order."""
    for step in steps:
        yield step, steps
        if isinstance(step, Condition):
            for branch in step.branches:
                yield from _walk_steps(branch.body)
            if step.else_body:
                yield from _walk_steps(step.else_body)


def _flow_blocks(body: FlowBody):
    yield "steps", body.steps
    for name, steps in body.subflows:
        yield name, steps


def validate_program(program: Program) -> list[Diagnostic]:
    """Cross-reference checks over a parsed program; diagnostics are the output."""
    ctx = _Ctx(program.filename)
    names = set(program.agent_names)

    for agent in program.agents:
        body = agent.body
        if isinstance(body, FlowBody):
            subflow_names = {name for name, _ in body.subflows}
            labels: dict[str, Optional[Location]] = {}
            for _, steps in _flow_blocks(body):
                for step, _ in _walk_steps(steps):
                    if isinstance(step, Label):
                        if step.name in labels:
                            ctx.error("E_DUP_LABEL", f"duplicate label {step.name!r} in flow {agent.name!r}", step.loc)
                        elif step.name in subflow_names:
                            ctx.error(
                                "E_LABEL_SHADOWS_SUBFLOW",
                                f"label {step.name!r} shares a name with a subflow of flow {agent.name!r}",
                                step.loc,
                            )
                        else:
                            labels[step.name] = step.loc
            for _, steps in _flow_blocks(body):
                for step, block in _walk_steps(steps):
                    if isinstance(step, Next):
                        if step.target not in labels and step.target not in subflow_names:
                            ctx.error(
                                "E_UNDEF_TARGET",
                                f"next target {step.target!r} is neither a label nor a subflow of flow {agent.name!r}",
                                step.loc,
                            )
                for idx, step in enumerate(steps):
                    if isinstance(step, Return) or (isinstance(step, Next) and step.tries is None):
                        if idx + 1 < len(steps):
                            ctx.warn(
                                "W_UNREACHABLE",
                                f"step after an unconditional {'return' if isinstance(step, Return) else 'next'} in flow {agent.name!r}",
                                getattr(steps[idx + 1], "loc", None),
                            )
                        break
        elif isinstance(body, EnsembleBody):
            for spec in body.contains:
                if spec.agent_name not in names:
                    ctx.error(
                        "E_UNDEF_AGENT",
                        f"ensemble {agent.name!r} contains unknown agent {spec.agent_name!r}",
                        agent.loc,
                    )
                    continue
                inner = program.agent(spec.agent_name)
                for inner_arg, _, ensemble_arg in spec.arg_map:
                    if inner is not None and inner_arg not in inner.header.args:
                        ctx.error(
                            "E_UNDEF_ARG",
                            f"agent {spec.agent_name!r} declares no arg {inner_arg!r}",
                            agent.loc,
                        )
                    if ensemble_arg not in agent.header.args:
                        ctx.error(
                            "E_UNDEF_ARG",
                            f"ensemble {agent.name!r} declares no arg {ensemble_arg!r}",
                            agent.loc,
                        )
        elif isinstance(body, LlmBody):
            for fn in body.uses:
                if fn not in body.prompt:
                    ctx.warn(
                        "W_UNUSED_TOOL",
                        f"agent {agent.name!r} lists {fn!r} in uses but never mentions it in its prompt",
                        agent.loc,
                    )
    return ctx.diagnostics


def load_program(source_text: str, filename: str = "<memory>") -> ParseResult:
    """Parse then validate; the usual entry point for files on disk."""
    result = parse_program(source_text, filename)
    if result.program is None:
        return result
    diagnostics = result.diagnostics + validate_program(result.program)
    if errors_in(diagnostics):
        return ParseResult(None, diagnostics)
    return ParseResult(result.program, diagnostics)


def load_program_file(path: str) -> ParseResult:
    with open(path, encoding="utf-8") as fh:
        return load_program(fh.read(), path)


# --- Serialization ------------------------------------------------------------


def _render_value(value: Union[Literal, ArgPath]) -> Any:
    if isinstance(value, ArgPath):
        return value.render()
    if isinstance(value, tuple):
        return list(value)
    return value


def render_condition(expr: ConditionExpr) -> str:
    if isinstance(expr, NaturalLanguage):
        return expr.text
    if isinstance(expr, Compare):
        op = "==" if expr.op == "eq" else "!="
        rhs = expr.rhs
        if rhs is None:
            rhs_text = "None"
        elif isinstance(rhs, bool):
            rhs_text = "True" if rhs else "False"
        elif isinstance(rhs, str):
            # quoting keeps odd literals from confusing the expression splitter
            rhs_text = f"'{rhs}'" if (not rhs or " and " in rhs or " or " in rhs) else rhs
        else:
            rhs_text = repr(rhs)
        return f"{expr.path.render()} {op} {rhs_text}"
    if isinstance(expr, RegexMatch):
        return f"re.match('{expr.pattern}', {expr.path.render()})"
    if isinstance(expr, And):
        return f"{render_condition(expr.left)} and {render_condition(expr.right)}"
    if isinstance(expr, Or):
        return f"{render_condition(expr.left)} or {render_condition(expr.right)}"
    raise TypeError(expr)


def _serialize_steps(steps: tuple[Step, ...]) -> list:
    out: list = []
    for step in steps:
        if isinstance(step, User):
            out.append("user")
        elif isinstance(step, Bot):
            out.append({"bot": step.template})
        elif isinstance(step, Set):
            out.append({"set": {p.render(): _render_value(v) for p, v in step.assignments}})
        elif isinstance(step, Label):
            out.append({"label": step.name})
        elif isinstance(step, Next):
            item = {"next": step.target}
            if step.tries is not None:
                item["tries"] = step.tries
            out.append(item)
        elif isinstance(step, Call):
            item = {"call": step.callee}
            if step.arg_bindings:
                item["args"] = {k: _render_value(v) for k, v in step.arg_bindings}
            out.append(item)
        elif isinstance(step, Return):
            out.append({"return": f"{step.status}, {step.message}" if step.message else step.status})
        elif isinstance(step, Condition):
            first, *rest = step.branches
            out.append({"if": render_condition(first.condition), "then": _serialize_steps(first.body)})
            for i, branch in enumerate(rest):
                item = {"else if": render_condition(branch.condition), "then": _serialize_steps(branch.body)}
                if i == len(rest) - 1 and step.else_body is not None:
                    item["else"] = _serialize_steps(step.else_body)
                out.append(item)
            if not rest and step.else_body is not None:
                out[-1]["else"] = _serialize_steps(step.else_body)
        else:
            raise TypeError(step)
    return out


def serialize_program(program: Program) -> str:
    """Render a program back to ADL YAML; parse(serialize(parse(x))) == parse(x)."""
    doc: dict = {}
    for agent in program.agents:
        entry: dict = {"type": f"{agent.kind} agent"}
        if agent.header.description:
            entry["description"] = agent.header.description
        if agent.header.args:
            entry["args"] = list(agent.header.args)
        if agent.header.fallback is not None:
            entry["fallback"] = agent.header.fallback
        if agent.header.exit is not None:
            entry["exit"] = agent.header.exit
        body = agent.body
        if isinstance(body, KbBody):
            if body.sources:
                entry["sources"] = list(body.sources)
            if body.faq:
                entry["faq"] = [{"q": q, "a": a} for q, a in body.faq]
        elif isinstance(body, LlmBody):
            entry["prompt"] = body.prompt
            if body.uses:
                entry["uses"] = list(body.uses)
            if body.init_steps:
                entry["steps"] = _serialize_steps(body.init_steps)
        elif isinstance(body, FlowBody):
            entry["steps"] = _serialize_steps(body.steps)
            for name, steps in body.subflows:
                entry[name] = _serialize_steps(steps)
        elif isinstance(body, EnsembleBody):
            contains: list = []
            for spec in body.contains:
                if spec.arg_map:
                    contains.append(
                        {
                            spec.agent_name: {
                                "args": {
                                    inner: (f"ref {target}" if by_ref else target)
                                    for inner, by_ref, target in spec.arg_map
                                }
                            }
                        }
                    )
                else:
                    contains.append(spec.agent_name)
            entry["contains"] = contains
            if body.policy_prompt is not None:
                entry["prompt"] = body.policy_prompt
            if body.init_steps:
                entry["steps"] = _serialize_steps(body.init_steps)
        doc[agent.name] = entry
    if program.tool_files:
        doc["tools"] = list(program.tool_files)
    return yaml.safe_dump(doc, sort_keys=False, allow_unicode=True, width=100000)
