"""The request loop.

Wire protocol (one UTF-8 JSON object per line):
  handshake  {"adl_tool_host": 1, "schemas": [...]}
  request    {"id": n, "call": name, "args": {...}}
  response   {"id": n, "status": "success"|"error", "msg": str,
              "bot": [str...], "args": [{"name":..., "value":...}], "notes": str}

Anything the tool prints goes into the response's `notes`, never onto the
protocol stream.
"""

from __future__ import annotations

import contextlib
import io
import json
import sys
from types import ModuleType
from typing import Any

from .introspect import introspect_module


def _blank_response(request_id: Any) -> dict:
    return {"id": request_id, "status": "success", "msg": "", "bot": [], "args": [], "notes": ""}


def map_return_value(value: Any, response: dict) -> dict:
    """Fold the tolerated return shapes into a wire response.

    Accepted: None (success, empty), a bare string (one bot message), a dict
    (treated as a one-item list), or a list of {"status"/"msg"}, {"bot"} and
    {"arg"/"value"} items; stray non-dict items become bot messages.
    """
    if value is None:
        return response
    if isinstance(value, str):
        response["bot"].append(value)
        return response
    if isinstance(value, dict):
        value = [value]
    if isinstance(value, (list, tuple)):
        for item in value:
            if not isinstance(item, dict):
                response["bot"].append(str(item))
            elif "status" in item:
                response["status"] = str(item["status"])
                response["msg"] = str(item.get("msg", ""))
            elif "bot" in item:
                response["bot"].append(str(item["bot"]))
            elif "arg" in item:
                response["args"].append({"name": str(item["arg"]), "value": item.get("value")})
        if response["status"] not in ("success", "error"):
            response["status"] = "error"
        return response
    response["bot"].append(str(value))
    return response


def handle_request(module: ModuleType, functions: set[str], obj: dict) -> dict:
    response = _blank_response(obj.get("id"))
    name = obj.get("call")
    args = obj.get("args") or {}
    if name not in functions:
        response["status"] = "error"
        response["msg"] = f"unknown function {name!r}"
        return response
    buffer = io.StringIO()
    try:
        with contextlib.redirect_stdout(buffer):
            value = getattr(module, name)(**args)
    except Exception as exc:
        response["status"] = "error"
        response["msg"] = str(exc)
        response["notes"] = buffer.getvalue()
        return response
    response["notes"] = buffer.getvalue()
    return map_return_value(value, response)


def serve_stdio(module: ModuleType, stdin=None, stdout=None) -> None:
    """Handshake, then answer requests in arrival order until EOF."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    schemas, warnings = introspect_module(module)
    for warning in warnings:
        print(f"warning: {warning}", file=sys.stderr)
    stdout.write(json.dumps({"adl_tool_host": 1, "schemas": schemas}) + "\n")
    stdout.flush()
    functions = {s["name"] for s in schemas}
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            stdout.write(
                json.dumps(
                    {"id": None, "status": "error", "msg": "malformed request line",
                     "bot": [], "args": [], "notes": ""}
                )
                + "\n"
            )
            stdout.flush()
            continue
        response = handle_request(module, functions, obj)
        stdout.write(json.dumps(response) + "\n")
        stdout.flush()
