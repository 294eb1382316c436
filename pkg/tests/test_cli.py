"""Command-line interface, exercised through real subprocess invocations."""

from __future__ import annotations

import json
import subprocess
import sys

from conftest import corpus_path, fixture_path

ADL = [sys.executable, "-m", "adl.cli"]


def run_cli(*args, stdin=""):
    return subprocess.run(
        ADL + list(args), input=stdin, capture_output=True, text=True, timeout=60
    )


def test_validate_ok():
    proc = run_cli("validate", corpus_path("bookstore.yaml"))
    assert proc.returncode == 0
    assert "error" not in proc.stderr.lower()


def test_validate_rejects_broken_program():
    proc = run_cli("validate", fixture_path("invalid/missing_main.yaml"))
    assert proc.returncode == 1
    assert "E_NO_MAIN" in proc.stderr


def test_usage_errors_exit_2():
    assert run_cli().returncode == 2
    assert run_cli("frobnicate").returncode == 2
    assert run_cli("bench", corpus_path("bookstore.yaml")).returncode == 2  # missing flags


def test_run_repl_transcript():
    proc = run_cli(
        "run",
        corpus_path("bench_bookstore.yaml"),
        "--provider",
        "scripted:" + corpus_path("bench_rules.yaml"),
        "--strategy",
        "merging",
        stdin="Can you recommend a good fantasy novel?\n",
    )
    assert proc.returncode == 0
    assert "Bot: I recommend The Name of the Wind" in proc.stdout


def test_analyze_text_reports_unbounded_cycle():
    proc = run_cli("analyze", corpus_path("banking.yaml"))
    assert proc.returncode == 0
    assert "Cycles:" in proc.stdout
    assert "[warning] unbounded cycle: add_payee -> transfer_money -> add_payee" in proc.stdout


def test_analyze_json():
    proc = run_cli("analyze", corpus_path("banking.yaml"), "--format", "json")
    assert proc.returncode == 0
    doc = json.loads(proc.stdout)
    assert set(doc) == {"diagnostics", "cycles"}
    assert any(set(c["nodes"]) == {"add_payee", "transfer_money"} for c in doc["cycles"])


def test_analyze_no_cycles():
    proc = run_cli("analyze", corpus_path("bookstore.yaml"))
    assert proc.returncode == 0
    assert "No cycles detected." in proc.stdout


def test_bench_table():
    proc = run_cli(
        "bench",
        corpus_path("bench_bookstore.yaml"),
        "--script",
        corpus_path("bench_script.yaml"),
        "--strategies",
        "merging,proactive",
        "--reps",
        "1",
        "--provider",
        "scripted:" + corpus_path("bench_rules.yaml"),
    )
    assert proc.returncode == 0
    header = proc.stdout.splitlines()[0]
    assert "Method" in header and "TokenCost" in header
    assert "merging" in proc.stdout and "proactive" in proc.stdout


def test_bench_json():
    proc = run_cli(
        "bench",
        corpus_path("bench_bookstore.yaml"),
        "--script",
        corpus_path("bench_script.yaml"),
        "--strategies",
        "autonomous",
        "--reps",
        "1",
        "--format",
        "json",
        "--provider",
        "scripted:" + corpus_path("bench_rules.yaml"),
    )
    assert proc.returncode == 0
    doc = json.loads(proc.stdout)
    assert doc["aggregates"][0]["strategy"] == "autonomous"
