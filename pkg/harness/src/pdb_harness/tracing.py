"""Breakpoint emulation through a trace hook.

The probed program runs inside this process under ``sys.settrace``: every
execution of the target line counts as a hit, the expression is evaluated in
the stopped frame's scope, and its ``repr`` is captured (first 100 hits).
An expression that raises is reported once as an eval error; the hit still
counts.  The deadline is checked from the hook, so runaway pure-Python loops
are interrupted.
"""
from __future__ import annotations

import runpy
import shlex
import sys
import time
from pathlib import Path

from .records import VALUE_COUNT_CAP, truncate_value

PYTHON_TOKENS = {"python", "python3", sys.executable}


class HarnessUsageError(Exception):
    """Invalid invocation; distinct from legitimate target-program outcomes."""


class _TraceTimeout(Exception):
    pass


class TestOutcome:
    def __init__(self, status: str, exception_type: str | None = None, exception_message: str | None = None):
        self.status = status
        self.exception_type = exception_type
        self.exception_message = exception_message


def parse_python_command(test_command: str) -> tuple[str, list[str]]:
    argv = shlex.split(test_command)
    if not argv or argv[0] not in PYTHON_TOKENS:
        raise HarnessUsageError(f"probe test commands must invoke python, got {test_command!r}")
    if len(argv) < 2:
        raise HarnessUsageError(f"nothing to run in {test_command!r}")
    if argv[1] == "-m":
        if len(argv) < 3:
            raise HarnessUsageError("missing module name")
        return "module", argv[2:]
    if argv[1] == "-c":
        if len(argv) < 3:
            raise HarnessUsageError("missing code string")
        return "code", argv[2:]
    return "file", argv[1:]


def is_reportable_exception(name: str) -> bool:
    return name.endswith(("Error", "Exception"))


class Breakpoint:
    def __init__(self, target: Path, line: int, expression: str, deadline: float):
        self.target = str(target)
        self.line = line
        self.expression = expression
        self.deadline = deadline
        self.hit_count = 0
        self.values: list[str] = []
        self.eval_error: str | None = None

    def __call__(self, frame, event, arg):
        if time.monotonic() > self.deadline:
            raise _TraceTimeout()
        if event == "line" and frame.f_lineno == self.line:
            filename = frame.f_code.co_filename
            if filename == self.target or _same_file(filename, self.target):
                self.hit_count += 1
                try:
                    value = eval(self.expression, frame.f_globals, frame.f_locals)  # noqa: S307
                    if len(self.values) < VALUE_COUNT_CAP:
                        self.values.append(truncate_value(repr(value)))
                except Exception as exc:  # noqa: BLE001 - reported as eval error
                    if self.eval_error is None:
                        self.eval_error = f"{exc.__class__.__name__}: {exc}"
        return self


def _same_file(a: str, b: str) -> bool:
    try:
        return Path(a).resolve() == Path(b).resolve()
    except OSError:
        return False


def run_traced(root: Path, test_command: str, tracer) -> TestOutcome:
    """Execute the command in-process under the tracer, from inside ``root``."""
    kind, argv = parse_python_command(test_command)
    sys.path.insert(0, str(root))
    sys.dont_write_bytecode = True
    try:
        sys.settrace(tracer)
        try:
            if kind == "file":
                script = Path(argv[0])
                if not script.is_absolute():
                    script = root / script
                sys.argv = [str(script), *argv[1:]]
                runpy.run_path(str(script), run_name="__main__")
            elif kind == "module":
                sys.argv = argv[:]
                runpy.run_module(argv[0], run_name="__main__", alter_sys=False)
            else:
                sys.argv = ["-c", *argv[1:]]
                exec(compile(argv[0], "<string>", "exec"), {"__name__": "__main__"})  # noqa: S102
        finally:
            sys.settrace(None)
    except _TraceTimeout:
        return TestOutcome("timeout")
    except SystemExit as exc:
        code = exc.code
        if code in (None, 0):
            return TestOutcome("pass")
        rc = code if isinstance(code, int) else 1
        return TestOutcome("fail", "TestFailure", f"exit code {rc}")
    except Exception as exc:  # noqa: BLE001 - the probed program's own failure
        name = exc.__class__.__name__
        if is_reportable_exception(name):
            return TestOutcome("fail", name, str(exc))
        return TestOutcome("fail", "TestFailure", "exit code 1")
    return TestOutcome("pass")


def probe(root: Path, file: str, line: int, expression: str, test_command: str, timeout: float):
    """Run the test command with a breakpoint installed; returns (bp, outcome)."""
    target = (root / file).resolve()
    breakpoint_ = Breakpoint(target, line, expression, time.monotonic() + timeout)
    outcome = run_traced(root, test_command, breakpoint_)
    return breakpoint_, outcome
