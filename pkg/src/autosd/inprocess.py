"""In-process execution adapter for Python targets.

Runs the target's test command inside the current interpreter under a trace
hook: breakpoints are line-event filters, the probe expression is evaluated
in the stopped frame's scope, and timeouts are enforced from the hook.  The
observable contract is identical to the external harness process (see
docs/adapter-protocol.md); the primary test suite and the default CLI path
use this adapter so no subprocess is required.

Supported test commands: ``python FILE [ARGS]``, ``python -m MODULE [ARGS]``
and ``python -c CODE``; the interpreter token is replaced by the running
interpreter.  Executions are serialized process-wide because the module cache
and ``sys.argv`` are global.
"""
from __future__ import annotations

import runpy
import shlex
import sys
import threading
import time
from pathlib import Path

from .errors import AdapterFailure
from .driver import ProbeResult, TestResult
from .observations import VALUE_COUNT_CAP, truncate_value

_EXEC_LOCK = threading.Lock()

_PYTHON_TOKENS = {"python", "python3", sys.executable}


class _TraceTimeout(Exception):
    pass


def is_reportable_exception(name: str) -> bool:
    """Exception class names the adapters report as ``<Type>: <message>``.

    Mirrors the harness's output-parsing rule: names ending in Error or
    Exception; anything else is normalized to a plain test failure.
    """
    return name.endswith(("Error", "Exception"))


def _parse_command(test_command: str) -> tuple[str, list[str]]:
    argv = shlex.split(test_command)
    if not argv or argv[0] not in _PYTHON_TOKENS:
        raise AdapterFailure(
            f"in-process adapter only runs python commands, got {test_command!r}"
        )
    if len(argv) < 2:
        raise AdapterFailure(f"nothing to run in {test_command!r}")
    if argv[1] == "-m":
        if len(argv) < 3:
            raise AdapterFailure(f"missing module name in {test_command!r}")
        return "module", argv[2:]
    if argv[1] == "-c":
        if len(argv) < 3:
            raise AdapterFailure(f"missing code string in {test_command!r}")
        return "code", argv[2:]
    return "file", argv[1:]


class _Breakpoint:
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
            code_file = frame.f_code.co_filename
            if code_file == self.target or _same_file(code_file, self.target):
                self.hit_count += 1
                try:
                    value = eval(self.expression, frame.f_globals, frame.f_locals)  # noqa: S307
                    rendered = truncate_value(repr(value))
                    if len(self.values) < VALUE_COUNT_CAP:
                        self.values.append(rendered)
                except Exception as exc:  # noqa: BLE001 - reported, hit still counted
                    if self.eval_error is None:
                        self.eval_error = f"{exc.__class__.__name__}: {exc}"
        return self

    def local_trace(self, frame, event, arg):
        return self(frame, event, arg)


class _Watchdog:
    """Timeout-only tracer used for plain test runs."""

    def __init__(self, deadline: float):
        self.deadline = deadline

    def __call__(self, frame, event, arg):
        if time.monotonic() > self.deadline:
            raise _TraceTimeout()
        return self


def _same_file(a: str, b: str) -> bool:
    try:
        return Path(a).resolve() == Path(b).resolve()
    except OSError:
        return False


def _execute(snapshot_root: Path, test_command: str, tracer) -> TestResult:
    """Run the command under the tracer; must be called with _EXEC_LOCK held."""
    import importlib

    kind, argv = _parse_command(test_command)
    root = str(Path(snapshot_root).resolve())
    saved_argv = sys.argv[:]
    saved_modules = set(sys.modules)
    saved_dwb = sys.dont_write_bytecode
    # Snapshots are edited in place between runs; stale bytecode caches would
    # mask those edits (and pollute the disposable tree).
    sys.dont_write_bytecode = True
    importlib.invalidate_caches()
    sys.path.insert(0, root)
    try:
        sys.settrace(tracer)
        try:
            if kind == "file":
                script = Path(argv[0])
                if not script.is_absolute():
                    script = Path(root) / script
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
        return TestResult(status="timeout")
    except SystemExit as exc:
        code = exc.code
        if code in (None, 0):
            return TestResult(status="pass")
        rc = code if isinstance(code, int) else 1
        return TestResult(status="fail", exception_type="TestFailure", exception_message=f"exit code {rc}")
    except Exception as exc:  # noqa: BLE001 - the target program's failure
        name = exc.__class__.__name__
        if is_reportable_exception(name):
            return TestResult(status="fail", exception_type=name, exception_message=str(exc))
        return TestResult(status="fail", exception_type="TestFailure", exception_message="exit code 1")
    finally:
        sys.argv = saved_argv
        sys.dont_write_bytecode = saved_dwb
        try:
            sys.path.remove(root)
        except ValueError:
            pass
        for name in set(sys.modules) - saved_modules:
            del sys.modules[name]
    return TestResult(status="pass")


class InProcessAdapter:
    """ExecutionAdapter that never leaves the current process."""

    def probe(
        self,
        snapshot_root: Path,
        file: str,
        line: int,
        expression: str,
        test_command: str,
        timeout: float,
    ) -> ProbeResult:
        target = (Path(snapshot_root) / file).resolve()
        with _EXEC_LOCK:
            bp = _Breakpoint(target, line, expression, time.monotonic() + timeout)
            outcome = _execute(Path(snapshot_root), test_command, bp)
        return ProbeResult(
            hit_count=bp.hit_count,
            values=tuple(bp.values),
            eval_error=bp.eval_error,
            test_outcome=outcome,
        )

    def run_test(self, snapshot_root: Path, test_command: str, timeout: float) -> TestResult:
        with _EXEC_LOCK:
            watchdog = _Watchdog(time.monotonic() + timeout)
            return _execute(Path(snapshot_root), test_command, watchdog)
