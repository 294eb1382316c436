"""Command-line entry points: validate | run | analyze | bench | serve.

Exit codes: 0 success, 1 program or runtime errors, 2 usage errors (argparse).
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys
from typing import Optional

from .analyzer import build_call_graph, detect_cycles, graph_to_json, llm_debug_report
from .bench import DialogueScript, render_report, run_benchmark
from .errors import AdlError
from .model import Program
from .parser import load_program_file
from .providers import Provider, make_provider
from .runtime import STRATEGIES, create_session, post_user_message
from .toolbridge import SubprocessToolHost


def _load_or_fail(path: str) -> tuple[Optional[Program], list, int]:
    """Returns (program, diagnostics, exit_code); program is None on errors."""
    try:
        result = load_program_file(path)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None, [], 1
    code = 0 if result.program is not None else 1
    return result.program, result.diagnostics, code


def _diag_dict(d) -> dict:
    return {
        "severity": d.severity,
        "code": d.code,
        "message": d.message,
        "loc": list(d.location) if d.location else None,
    }


def cmd_validate(args) -> int:
    program, diagnostics, code = _load_or_fail(args.file)
    for d in diagnostics:
        print(d.render(), file=sys.stderr if d.severity == "error" else sys.stdout)
    return code


def cmd_run(args) -> int:
    program, diagnostics, code = _load_or_fail(args.file)
    if program is None:
        for d in diagnostics:
            print(d.render(), file=sys.stderr)
        return code
    provider = make_provider(args.provider) if args.provider else None
    tool_host = SubprocessToolHost(shlex.split(args.tool_host)) if args.tool_host else None
    try:
        session = create_session(
            program, strategy=args.strategy, provider=provider, tool_host=tool_host
        )
        for role, text in session.transcript:
            if role == "bot":
                print(f"Bot: {text}")
        while not session.terminated:
            try:
                line = input("User: ")
            except EOFError:
                break
            if not line.strip():
                continue
            result = post_user_message(session, line)
            for text in result.bot_messages:
                print(f"Bot: {text}")
        return 0
    except AdlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        if tool_host is not None:
            tool_host.close()


def cmd_analyze(args) -> int:
    program, diagnostics, code = _load_or_fail(args.file)
    if program is None:
        if args.format == "json":
            print(json.dumps({"diagnostics": [_diag_dict(d) for d in diagnostics], "cycles": []}))
        else:
            for d in diagnostics:
                print(d.render(), file=sys.stderr)
        return code
    from .analyzer import lint_program

    diagnostics = lint_program(program)
    graph = build_call_graph(program)
    cycles = detect_cycles(graph)
    if args.format == "json":
        payload = {
            "diagnostics": [_diag_dict(d) for d in diagnostics],
            "cycles": [
                {"nodes": list(c.nodes), "bounded": c.bounded, "provenance": list(c.provenance)}
                for c in cycles
            ],
        }
        print(json.dumps(payload, indent=2))
    else:
        for d in diagnostics:
            print(d.render())
        if cycles:
            print("Cycles:")
            for c in cycles:
                ring = " -> ".join(c.nodes + (c.nodes[0],))
                level = "info" if c.bounded else "warning"
                print(f"  [{level}] {'bounded' if c.bounded else 'unbounded'} cycle: "
                      f"{ring} ({', '.join(c.provenance)})")
        else:
            print("No cycles detected.")
        if args.llm:
            if not args.provider:
                print("error: --llm requires --provider", file=sys.stderr)
                return 2
            provider = make_provider(args.provider)
            with open(args.file, encoding="utf-8") as fh:
                source = fh.read()
            report = llm_debug_report(source, provider, program)
            print(report.render())
    return 0


def cmd_bench(args) -> int:
    program, diagnostics, code = _load_or_fail(args.program)
    if program is None:
        for d in diagnostics:
            print(d.render(), file=sys.stderr)
        return code
    try:
        script = DialogueScript.from_file(args.script)
        if args.reps is not None:
            script = DialogueScript(turns=script.turns, repetitions=args.reps)
        if args.strategies == "all":
            strategies = list(STRATEGIES)
        else:
            strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
        provider = make_provider(args.provider)
        report = run_benchmark(program, script, strategies, provider)
        print(render_report(report, args.format))
        return 0
    except AdlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def cmd_serve(args) -> int:
    program, diagnostics, code = _load_or_fail(args.file)
    if program is None:
        for d in diagnostics:
            print(d.render(), file=sys.stderr)
        return code
    import uvicorn

    from .server import create_app

    provider = make_provider(args.provider) if args.provider else None
    app = create_app(
        program,
        provider=provider,
        default_strategy=args.strategy,
        static_dir=args.static_dir,
    )
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
        return 0
    except OSError as exc:
        print(f"error: E_BIND: {exc}", file=sys.stderr)
        return 1


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adl", description="Declarative multi-agent chatbots")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="parse and validate a program")
    p.add_argument("file")
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("run", help="interactive chat REPL")
    p.add_argument("file")
    p.add_argument("--provider", help="scripted:<path> or openai")
    p.add_argument("--strategy", default="proactive", choices=STRATEGIES)
    p.add_argument("--tool-host", help="command line of a tool-host subprocess")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("analyze", help="call graph, cycles, and lints")
    p.add_argument("file")
    p.add_argument("--llm", action="store_true", help="also ask the model about loops")
    p.add_argument("--format", default="text", choices=("text", "json"))
    p.add_argument("--provider", help="provider for --llm")
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("bench", help="benchmark orchestration strategies")
    p.add_argument("program")
    p.add_argument("--script", required=True, help="dialogue script YAML")
    p.add_argument("--strategies", default="all", help='"all" or a comma list')
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--format", default="table", choices=("table", "json"))
    p.add_argument("--provider", required=True, help="scripted:<path> or openai")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("serve", help="run the HTTP chat service")
    p.add_argument("file")
    p.add_argument("--provider", help="scripted:<path> or openai")
    p.add_argument("--strategy", default="proactive", choices=STRATEGIES)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--static-dir", default=None, help="directory of console assets to serve")
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_arg_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except AdlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
