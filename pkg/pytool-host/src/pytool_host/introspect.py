"""Turn a tool-script module into raw tool schemas.

Every public top-level function defined in the module becomes one schema:
its docstring is the description and its signature yields the parameters,
with required/optional decided by the presence of a default value.
"""

from __future__ import annotations

import importlib
import importlib.util
import inspect
import os
import sys
from types import ModuleType
from typing import Any


class ImportFailure(Exception):
    """The tool script could not be imported (code: E_IMPORT)."""

    code = "E_IMPORT"


_TYPE_NAMES = {
    str: "string",
    int: "integer",
    float: "number",
    bool: "boolean",
    list: "array",
    dict: "object",
}


def load_module(path: str) -> ModuleType:
    """Import a tool script given as a file path or a dotted module name."""
    try:
        if path.endswith(".py") or os.sep in path:
            name = os.path.splitext(os.path.basename(path))[0]
            spec = importlib.util.spec_from_file_location(name, path)
            if spec is None or spec.loader is None:
                raise ImportFailure(f"E_IMPORT: cannot load module from {path!r}")
            module = importlib.util.module_from_spec(spec)
            sys.modules[name] = module
            spec.loader.exec_module(module)
            return module
        return importlib.import_module(path)
    except ImportFailure:
        raise
    except Exception as exc:
        raise ImportFailure(f"E_IMPORT: {path!r}: {exc}") from exc


def _param_entry(param: inspect.Parameter) -> dict[str, Any]:
    entry: dict[str, Any] = {"name": param.name}
    annotation = param.annotation
    if annotation is not inspect.Parameter.empty:
        entry["type"] = _TYPE_NAMES.get(annotation, getattr(annotation, "__name__", "string"))
    if param.default is inspect.Parameter.empty:
        entry["required"] = True
    else:
        entry["required"] = False
        entry["default"] = param.default
    return entry


def introspect_module(module: ModuleType) -> tuple[list[dict], list[str]]:
    """Returns (raw schemas, warnings) for the module's public functions."""
    schemas: list[dict] = []
    warnings: list[str] = []
    for name, fn in sorted(vars(module).items()):
        if name.startswith("_") or not inspect.isfunction(fn):
            continue
        if fn.__module__ != module.__name__:
            continue  # imported helpers are not served
        description = inspect.getdoc(fn) or ""
        if not description:
            warnings.append(f"function {name!r} has no docstring")
        parameters = []
        for param in inspect.signature(fn).parameters.values():
            if param.kind in (param.VAR_POSITIONAL, param.VAR_KEYWORD):
                continue  # open-ended signatures are not representable
            parameters.append(_param_entry(param))
        schemas.append({"name": name, "description": description, "parameters": parameters})
    return schemas, warnings
