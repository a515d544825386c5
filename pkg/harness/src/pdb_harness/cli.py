"""Command-line interface.

    autosd-pdb-harness probe <root> <file>:<line> <expr-b64> <test-cmd-b64> <timeout>
    autosd-pdb-harness run <root> <test-cmd-b64> <timeout>

The expression and test command arrive base64-encoded so arbitrary code
survives shell quoting.  All legitimate target outcomes (including zero
breakpoint hits, failures, and timeouts) exit 0 with records on stdout;
a nonzero exit means the harness itself was invoked or broke incorrectly.
"""
from __future__ import annotations

import base64
import os
import sys
from pathlib import Path

from . import records, testrun, tracing

USAGE = (
    "usage: autosd-pdb-harness probe <root> <file>:<line> <expr-b64> <test-cmd-b64> <timeout>\n"
    "       autosd-pdb-harness run <root> <test-cmd-b64> <timeout>"
)


def _decode(argument: str, what: str) -> str:
    try:
        return base64.b64decode(argument, validate=True).decode("utf-8")
    except Exception as exc:
        raise tracing.HarnessUsageError(f"bad base64 {what}: {exc}") from None


def _parse_location(location: str) -> tuple[str, int]:
    path, sep, line_text = location.rpartition(":")
    if not sep or not path or not line_text.isdigit():
        raise tracing.HarnessUsageError(f"location must be file:line, got {location!r}")
    return path, int(line_text)


def _emit_outcome(outcome: tracing.TestOutcome) -> None:
    records.emit_test(outcome.status, outcome.exception_type, outcome.exception_message)


def run(argv: list[str]) -> int:
    if not argv:
        raise tracing.HarnessUsageError(USAGE)
    mode, *rest = argv
    if mode == "probe":
        if len(rest) != 5:
            raise tracing.HarnessUsageError(USAGE)
        root = Path(rest[0]).resolve()
        file, line = _parse_location(rest[1])
        expression = _decode(rest[2], "expression")
        test_command = _decode(rest[3], "test command")
        timeout = float(rest[4])
        if not root.is_dir():
            raise tracing.HarnessUsageError(f"snapshot root {root} is not a directory")
        os.chdir(root)
        breakpoint_, outcome = tracing.probe(root, file, line, expression, test_command, timeout)
        records.emit_probe(breakpoint_.hit_count, breakpoint_.values, breakpoint_.eval_error)
        _emit_outcome(outcome)
        return 0
    if mode == "run":
        if len(rest) != 3:
            raise tracing.HarnessUsageError(USAGE)
        root = Path(rest[0]).resolve()
        test_command = _decode(rest[1], "test command")
        timeout = float(rest[2])
        if not root.is_dir():
            raise tracing.HarnessUsageError(f"snapshot root {root} is not a directory")
        _emit_outcome(testrun.run_test(root, test_command, timeout))
        return 0
    raise tracing.HarnessUsageError(USAGE)


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        return run(argv)
    except tracing.HarnessUsageError as exc:
        print(f"harness error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - internal fault, not a target outcome
        print(f"harness internal fault: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
