"""Test-command execution in a throwaway subprocess.

The command runs with the snapshot root as its working directory, in its own
process group so a timeout can kill the whole tree.  Failure output is
normalized to exception form: the last line shaped like ``<Type>: <message>``
(type name ending in Error or Exception) wins; otherwise the failure is
reported as ``TestFailure`` with the exit code.
"""
from __future__ import annotations

import os
import re
import shlex
import signal
import subprocess
import sys
from pathlib import Path

from .records import truncate_value
from .tracing import PYTHON_TOKENS, TestOutcome

_EXCEPTION_LINE = re.compile(
    r"^([A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)*(?:Error|Exception))(?::\s?(.*))?$"
)


def parse_failure_output(output: str, returncode: int) -> tuple[str, str]:
    """Normalize failure output to (exception type, message)."""
    for line in reversed(output.splitlines()):
        match = _EXCEPTION_LINE.match(line.strip())
        if match:
            return match.group(1), match.group(2) or ""
    return "TestFailure", f"exit code {returncode}"


def run_test(root: Path, test_command: str, timeout: float) -> TestOutcome:
    argv = shlex.split(test_command)
    if argv and argv[0] in PYTHON_TOKENS:
        argv[0] = sys.executable
    env = dict(os.environ, PYTHONDONTWRITEBYTECODE="1")
    try:
        proc = subprocess.Popen(
            argv,
            cwd=str(root),
            stdout=subprocess.PIPE,
            stderr=subprocess.STDOUT,
            text=True,
            env=env,
            start_new_session=True,
        )
    except OSError as exc:
        return TestOutcome("fail", "TestFailure", f"could not start: {exc}")
    try:
        output, _ = proc.communicate(timeout=timeout)
    except subprocess.TimeoutExpired:
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except ProcessLookupError:
            pass
        proc.wait()
        return TestOutcome("timeout")
    if proc.returncode == 0:
        return TestOutcome("pass")
    exc_type, message = parse_failure_output(output or "", proc.returncode)
    return TestOutcome("fail", exc_type, truncate_value(message))
