"""Bridge to external custom functions.

Tool hosts serve functions over newline-delimited JSON on their standard
streams.  Handshake: the host sends {"adl_tool_host":1,"schemas":[...]}.
Requests look like {"id":n,"call":name,"args":{...}} and responses like
{"id":n,"status":"success"|"error","msg":str,"bot":[...],"args":[{"name":...,
"value":...}],"notes":str}, one UTF-8 JSON object per line.
"""

from __future__ import annotations

import contextlib
import io
import json
import subprocess
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .errors import ToolError

HANDSHAKE_TIMEOUT_S = 5.0
INVOKE_TIMEOUT_S = 20.0


@dataclass(frozen=True)
class ToolParam:
    name: str
    type: str = "string"
    required: bool = True
    default: Any = None


@dataclass(frozen=True)
class ToolSchema:
    name: str
    description: str = ""
    parameters: tuple[ToolParam, ...] = ()

    def to_openai(self) -> dict:
        properties = {}
        required = []
        for p in self.parameters:
            properties[p.name] = {"type": _JSON_TYPES.get(p.type, "string")}
            if p.required:
                required.append(p.name)
        return {
            "name": self.name,
            "description": self.description,
            "parameters": {"type": "object", "properties": properties, "required": required},
        }


_JSON_TYPES = {
    "str": "string",
    "string": "string",
    "int": "integer",
    "integer": "integer",
    "float": "number",
    "number": "number",
    "bool": "boolean",
    "boolean": "boolean",
    "list": "array",
    "dict": "object",
}


@dataclass(frozen=True)
class ToolResult:
    status: str  # "success" | "error"
    status_message: str = ""
    bot_messages: tuple[str, ...] = ()
    arg_updates: tuple[tuple[str, Any], ...] = ()
    caller_notes: str = ""

    def as_arg_updates(self) -> dict[str, Any]:
        updates = {name: value for name, value in self.arg_updates}
        # the status is always readable so flows can branch on `<fn>.status`
        updates.setdefault("status", self.status)
        if self.status_message:
            updates.setdefault("msg", self.status_message)
        return updates


def derive_tool_schema(raw: dict) -> ToolSchema:
    """Normalize a host-advertised raw schema; raises ToolError on E_BAD_SCHEMA."""
    name = raw.get("name")
    if not name or not isinstance(name, str):
        raise ToolError("E_BAD_SCHEMA", f"tool schema without a name: {raw!r}")
    params = []
    seen = set()
    for p in raw.get("parameters", []):
        pname = p.get("name")
        if not pname:
            raise ToolError("E_BAD_SCHEMA", f"parameter without a name in tool {name!r}")
        if pname in seen:
            raise ToolError("E_BAD_SCHEMA", f"duplicate parameter {pname!r} in tool {name!r}")
        seen.add(pname)
        required = bool(p.get("required", "default" not in p))
        default = p.get("default")
        if required and default is not None:
            raise ToolError("E_BAD_SCHEMA", f"required parameter {pname!r} of {name!r} has a default")
        ptype = str(p.get("type", "string"))
        if ptype not in _JSON_TYPES:
            ptype = "string"  # unknown type tags default to string
        params.append(ToolParam(name=pname, type=ptype, required=required, default=default))
    return ToolSchema(name=name, description=str(raw.get("description", "")), parameters=tuple(params))


def parse_wire_response(obj: dict) -> ToolResult:
    status = obj.get("status")
    if status not in ("success", "error"):
        raise ToolError("E_TOOL_PROTOCOL", f"response with bad status: {obj!r}")
    return ToolResult(
        status=status,
        status_message=str(obj.get("msg", "")),
        bot_messages=tuple(str(b) for b in obj.get("bot", [])),
        arg_updates=tuple((str(u["name"]), u.get("value")) for u in obj.get("args", []) if "name" in u),
        caller_notes=str(obj.get("notes", "")),
    )


def encode_wire_response(result: ToolResult, request_id: int) -> dict:
    return {
        "id": request_id,
        "status": result.status,
        "msg": result.status_message,
        "bot": list(result.bot_messages),
        "args": [{"name": n, "value": v} for n, v in result.arg_updates],
        "notes": result.caller_notes,
    }


class ToolHost:
    """Interface shared by the subprocess host client and in-process hosts."""

    def schemas(self) -> tuple[ToolSchema, ...]:
        raise NotImplementedError

    def invoke(self, name: str, args: dict) -> ToolResult:
        raise NotImplementedError

    def schema(self, name: str) -> Optional[ToolSchema]:
        for s in self.schemas():
            if s.name == name:
                return s
        return None

    def check_args(self, name: str, args: dict) -> None:
        schema = self.schema(name)
        if schema is None:
            raise ToolError("E_UNKNOWN_CALLEE", f"tool host advertises no function {name!r}")
        missing = [p.name for p in schema.parameters if p.required and p.name not in args]
        if missing:
            raise ToolError("E_TOOL_PROTOCOL", f"missing required args for {name!r}: {missing}")

    def close(self) -> None:
        pass


class SubprocessToolHost(ToolHost):
    """Client for an out-of-process tool host speaking the wire protocol.

    One host process may serve many sessions; requests are multiplexed by id
    and out-of-order responses are matched back to their callers.
    """

    def __init__(self, command: list[str], handshake_timeout_s: float = HANDSHAKE_TIMEOUT_S):
        try:
            self._proc = subprocess.Popen(
                command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise ToolError("E_SPAWN", f"cannot start tool host {command!r}: {exc}")
        self._lock = threading.Lock()
        self._next_id = 1
        self._pending: dict[int, dict] = {}
        handshake = self._read_line(handshake_timeout_s, "E_HANDSHAKE")
        try:
            obj = json.loads(handshake)
        except json.JSONDecodeError:
            self.close()
            raise ToolError("E_HANDSHAKE", f"malformed handshake line: {handshake!r}")
        if obj.get("adl_tool_host") != 1 or "schemas" not in obj:
            self.close()
            raise ToolError("E_HANDSHAKE", f"unexpected handshake: {obj!r}")
        self._schemas = tuple(derive_tool_schema(raw) for raw in obj["schemas"])

    def _read_line(self, timeout_s: float, code: str) -> str:
        result: list[str] = []

        def reader():
            line = self._proc.stdout.readline()
            result.append(line)

        t = threading.Thread(target=reader, daemon=True)
        t.start()
        t.join(timeout_s)
        if not result or not result[0]:
            self.close()
            raise ToolError(code, f"tool host produced no line within {timeout_s}s")
        return result[0].strip()

    def schemas(self) -> tuple[ToolSchema, ...]:
        return self._schemas

    def invoke(self, name: str, args: dict, timeout_s: float = INVOKE_TIMEOUT_S) -> ToolResult:
        self.check_args(name, args)
        with self._lock:
            request_id = self._next_id
            self._next_id += 1
            request = json.dumps({"id": request_id, "call": name, "args": args})
            try:
                self._proc.stdin.write(request + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, ValueError) as exc:
                raise ToolError("E_TOOL_PROTOCOL", f"tool host pipe closed: {exc}")
            while request_id not in self._pending:
                line = self._read_line(timeout_s, "E_TOOL_TIMEOUT")
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError:
                    raise ToolError("E_TOOL_PROTOCOL", f"tool host sent a non-JSON line: {line!r}")
                if not isinstance(obj, dict) or "id" not in obj:
                    raise ToolError("E_TOOL_PROTOCOL", f"tool host sent a response without id: {obj!r}")
                self._pending[int(obj["id"])] = obj
            return parse_wire_response(self._pending.pop(request_id))

    def close(self) -> None:
        with contextlib.suppress(Exception):
            self._proc.stdin.close()
        with contextlib.suppress(Exception):
            self._proc.terminate()


@dataclass
class LocalToolHost(ToolHost):
    """In-process host for tests and the CLI demo: plain Python callables
    following the custom-function return convention (list of status / bot /
    arg items, a bare string, a dict, or None)."""

    functions: dict[str, Callable] = field(default_factory=dict)
    descriptions: dict[str, str] = field(default_factory=dict)

    def register(self, name: str, fn: Callable, description: str = "", params: tuple[ToolParam, ...] = ()):
        self.functions[name] = fn
        self.descriptions[name] = description
        self._params = getattr(self, "_params", {})
        self._params[name] = params

    def schemas(self) -> tuple[ToolSchema, ...]:
        return tuple(
            ToolSchema(
                name=name,
                description=self.descriptions.get(name, ""),
                parameters=getattr(self, "_params", {}).get(name, ()),
            )
            for name in self.functions
        )

    def invoke(self, name: str, args: dict) -> ToolResult:
        if name not in self.functions:
            raise ToolError("E_UNKNOWN_CALLEE", f"no local function {name!r}")
        buffer = io.StringIO()
        try:
            with contextlib.redirect_stdout(buffer):
                value = self.functions[name](**args)
        except Exception as exc:  # tool-level failure, not a session crash
            return ToolResult(status="error", status_message=str(exc), caller_notes=buffer.getvalue())
        return interpret_return_value(value, notes=buffer.getvalue())


def interpret_return_value(value: Any, notes: str = "") -> ToolResult:
    """Map the tolerated custom-function return shapes onto a ToolResult."""
    if value is None:
        return ToolResult(status="success", caller_notes=notes)
    if isinstance(value, str):
        return ToolResult(status="success", bot_messages=(value,), caller_notes=notes)
    if isinstance(value, dict):
        value = [value]
    if isinstance(value, (list, tuple)):
        status = "success"
        msg = ""
        bot: list[str] = []
        updates: list[tuple[str, Any]] = []
        for item in value:
            if not isinstance(item, dict):
                bot.append(str(item))
                continue
            if "status" in item:
                status = str(item["status"])
                msg = str(item.get("msg", ""))
            elif "bot" in item:
                bot.append(str(item["bot"]))
            elif "arg" in item:
                updates.append((str(item["arg"]), item.get("value")))
        if status not in ("success", "error"):
            status = "error"
        return ToolResult(
            status=status,
            status_message=msg,
            bot_messages=tuple(bot),
            arg_updates=tuple(updates),
            caller_notes=notes,
        )
    return ToolResult(status="success", bot_messages=(str(value),), caller_notes=notes)
