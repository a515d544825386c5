"""Per-test runner for function+test corpus entries.

A corpus entry is a directory holding ``solution.py`` and ``test_solution.py``
whose ``test_*`` functions each exercise one behavior.  The runner executes
every selected test, reporting pass/fail per test id so callers can tell
apart "exactly one test fails" from broader breakage.

Two execution modes share the same result shape:

* as a subprocess (``python -m autosd.corpus_runner DIR [--test NAME]``),
  used when isolation matters (arbitrary mutants);
* in process via :func:`run_entry_tests`, used for the high-volume template
  baseline (thousands of candidate sources). In-process runs hang-proof
  themselves with ``SIGALRM``, so they must stay on the main thread.
"""
from __future__ import annotations

import argparse
import json
import signal
import sys
import types
from pathlib import Path

SOLUTION_FILE = "solution.py"
TEST_FILE = "test_solution.py"
DEFAULT_PER_TEST_TIMEOUT = 5


class _TestTimeout(Exception):
    pass


def _alarm_handler(signum, frame):
    raise _TestTimeout()


def discover_test_names(test_source: str) -> list[str]:
    import ast

    tree = ast.parse(test_source)
    return [
        node.name
        for node in tree.body
        if isinstance(node, ast.FunctionDef) and node.name.startswith("test_")
    ]


def run_entry_tests(
    entry_dir: Path | str | None = None,
    *,
    solution_source: str | None = None,
    test_source: str | None = None,
    only: str | None = None,
    per_test_timeout: int = DEFAULT_PER_TEST_TIMEOUT,
) -> dict:
    """Run the entry's tests and return ``{"status": ..., "results": {...}}``.

    Sources may be supplied directly to test a candidate mutant without
    touching the filesystem.  Result statuses per test: ``pass`` or ``fail``
    (with exception type and message); a top-level ``import_error`` status
    means the solution or test module did not even load.
    """
    if entry_dir is not None:
        entry_dir = Path(entry_dir)
        if solution_source is None:
            solution_source = (entry_dir / SOLUTION_FILE).read_text(encoding="utf-8")
        if test_source is None:
            test_source = (entry_dir / TEST_FILE).read_text(encoding="utf-8")
    assert solution_source is not None and test_source is not None

    use_alarm = hasattr(signal, "SIGALRM")
    old_handler = None
    if use_alarm:
        try:
            old_handler = signal.signal(signal.SIGALRM, _alarm_handler)
        except ValueError:  # not on the main thread
            use_alarm = False

    solution_module = types.ModuleType("solution")
    saved = sys.modules.get("solution")
    try:
        if use_alarm:
            signal.alarm(per_test_timeout)
        try:
            exec(compile(solution_source, SOLUTION_FILE, "exec"), solution_module.__dict__)
            sys.modules["solution"] = solution_module
            test_module = types.ModuleType("entry_tests")
            exec(compile(test_source, TEST_FILE, "exec"), test_module.__dict__)
        except _TestTimeout:
            return {"status": "import_error", "error": "import timed out"}
        except BaseException as exc:  # noqa: BLE001 - mutants can break anything
            return {"status": "import_error", "error": f"{exc.__class__.__name__}: {exc}"}
        finally:
            if use_alarm:
                signal.alarm(0)

        names = [
            name
            for name in discover_test_names(test_source)
            if only is None or name == only
        ]
        results: dict[str, dict] = {}
        for name in names:
            func = getattr(test_module, name, None)
            if func is None:
                results[name] = {"status": "fail", "type": "AttributeError", "message": "missing"}
                continue
            if use_alarm:
                signal.alarm(per_test_timeout)
            try:
                func()
                results[name] = {"status": "pass"}
            except _TestTimeout:
                results[name] = {"status": "fail", "type": "Timeout", "message": "test timed out"}
            except BaseException as exc:  # noqa: BLE001
                results[name] = {
                    "status": "fail",
                    "type": exc.__class__.__name__,
                    "message": str(exc),
                }
            finally:
                if use_alarm:
                    signal.alarm(0)
        return {"status": "ok", "results": results}
    finally:
        if saved is not None:
            sys.modules["solution"] = saved
        else:
            sys.modules.pop("solution", None)
        if use_alarm and old_handler is not None:
            signal.signal(signal.SIGALRM, old_handler)


def failing_tests(outcome: dict) -> list[str]:
    if outcome["status"] != "ok":
        return []
    return sorted(
        name for name, result in outcome["results"].items() if result["status"] != "pass"
    )


def run_entry_subprocess(
    entry_dir: Path, *, only: str | None = None, timeout: float = 60.0
) -> dict:
    """Same contract as :func:`run_entry_tests`, in a throwaway interpreter."""
    import subprocess

    argv = [sys.executable, "-m", "autosd.corpus_runner", str(entry_dir), "--json"]
    if only:
        argv += ["--test", only]
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout)
    except subprocess.TimeoutExpired:
        return {"status": "import_error", "error": "runner timed out"}
    try:
        return json.loads(proc.stdout.strip().splitlines()[-1])
    except (json.JSONDecodeError, IndexError):
        return {
            "status": "import_error",
            "error": f"runner produced no result (exit {proc.returncode})",
        }


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="run one corpus entry's tests")
    parser.add_argument("entry_dir")
    parser.add_argument("--test", default=None, help="run a single test function")
    parser.add_argument("--json", action="store_true", help="print the result document")
    parser.add_argument("--timeout", type=int, default=DEFAULT_PER_TEST_TIMEOUT)
    args = parser.parse_args(argv)
    outcome = run_entry_tests(args.entry_dir, only=args.test, per_test_timeout=args.timeout)
    if args.json:
        print(json.dumps(outcome, sort_keys=True))
    failed = failing_tests(outcome)
    if outcome["status"] != "ok" or failed:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
