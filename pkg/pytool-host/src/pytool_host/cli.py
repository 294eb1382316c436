"""Entry point: `pytool-host --module <path>` serves the module on stdio."""

from __future__ import annotations

import argparse
import sys
from typing import Optional

from .introspect import ImportFailure, load_module
from .serve import serve_stdio


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="pytool-host",
        description="Serve a Python module's functions over the tool wire protocol",
    )
    parser.add_argument("--module", required=True, help="file path or dotted module name")
    args = parser.parse_args(argv)
    try:
        module = load_module(args.module)
    except ImportFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    serve_stdio(module)
    return 0


if __name__ == "__main__":
    sys.exit(main())
