"""Runs experiments through a pluggable execution adapter.

An adapter performs two operations against a disposable project snapshot:
probe (breakpoint + one expression) and test run.  Adapters exchange results
through the line-delimited JSON record stream documented in
docs/adapter-protocol.md, which lets the in-process adapter used by the test
suite and the external harness process be swapped freely.
"""
from __future__ import annotations

import base64
import json
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from .dsl import DebuggerProbe
from .errors import AdapterFailure
from .model import BugContext
from .observations import (
    VALUE_COUNT_CAP,
    BreakpointNotHit,
    ExceptionRaised,
    ExperimentError,
    LoopValues,
    NoException,
    Observation,
    SingleValue,
    Timeout,
    truncate_value,
)
from .patching import ProjectSnapshot

# Extra wall-clock grace given to an external adapter before the driver kills it.
SUBPROCESS_GRACE = 5.0


@dataclass(frozen=True)
class TestResult:
    status: str  # "pass" | "fail" | "timeout"
    exception_type: str | None = None
    exception_message: str | None = None

    __test__ = False  # not a pytest class, despite the name


@dataclass(frozen=True)
class ProbeResult:
    hit_count: int
    values: tuple[str, ...]
    eval_error: str | None = None
    test_outcome: TestResult | None = None

    def __post_init__(self):
        if len(self.values) > VALUE_COUNT_CAP:
            raise AdapterFailure(f"adapter reported {len(self.values)} values (cap {VALUE_COUNT_CAP})")


class ExecutionAdapter(Protocol):
    def probe(
        self,
        snapshot_root: Path,
        file: str,
        line: int,
        expression: str,
        test_command: str,
        timeout: float,
    ) -> ProbeResult: ...

    def run_test(self, snapshot_root: Path, test_command: str, timeout: float) -> TestResult: ...


@dataclass
class AdapterAudit:
    """Chronological record of adapter invocations, tagged by session phase."""

    entries: list[dict] = field(default_factory=list)

    def record(self, phase: str, kind: str, detail: str) -> None:
        self.entries.append({"phase": phase, "kind": kind, "detail": detail})

    def count(self, phase: str | None = None) -> int:
        if phase is None:
            return len(self.entries)
        return sum(1 for entry in self.entries if entry["phase"] == phase)


def observation_from_probe(probe: DebuggerProbe, result: ProbeResult, timeout: float) -> Observation:
    """Map a probe result onto its canonical observation."""
    if result.test_outcome is not None and result.test_outcome.status == "timeout":
        return Observation.from_detail(Timeout(seconds=timeout))
    if result.eval_error is not None:
        return Observation.from_detail(ExperimentError(message=result.eval_error))
    if result.hit_count == 0:
        return Observation.from_detail(BreakpointNotHit(path=probe.path, line=probe.line))
    values = tuple(truncate_value(v) for v in result.values)
    if result.hit_count == 1:
        if not values:
            raise AdapterFailure("adapter reported one hit but no value")
        return Observation.from_detail(SingleValue(value=values[0]))
    return Observation.from_detail(LoopValues(values=values[:VALUE_COUNT_CAP]))


def observation_from_test(result: TestResult, timeout: float) -> Observation:
    if result.status == "pass":
        return Observation.from_detail(NoException())
    if result.status == "timeout":
        return Observation.from_detail(Timeout(seconds=timeout))
    return Observation.from_detail(
        ExceptionRaised(
            type=result.exception_type or "TestFailure",
            message=truncate_value(result.exception_message or ""),
        )
    )


def execute_probe(
    adapter: ExecutionAdapter,
    bug: BugContext,
    snapshot: ProjectSnapshot,
    probe: DebuggerProbe,
    timeout: float,
) -> Observation:
    result = adapter.probe(
        snapshot.root, probe.path, probe.line, probe.expression, bug.failing_test_command, timeout
    )
    return observation_from_probe(probe, result, timeout)


def execute_run(
    adapter: ExecutionAdapter,
    snapshot: ProjectSnapshot,
    test_command: str,
    timeout: float,
) -> Observation:
    result = adapter.run_test(snapshot.root, test_command, timeout)
    return observation_from_test(result, timeout)


def run_failing_test(
    adapter: ExecutionAdapter,
    snapshot: ProjectSnapshot,
    bug: BugContext,
    timeout: float,
) -> Observation:
    """Convenience re-export for the orchestrator: run the bug-revealing test."""
    return execute_run(adapter, snapshot, bug.failing_test_command, timeout)


def parse_record_stream(stream: str) -> ProbeResult | TestResult:
    """Decode an adapter's stdout records (docs/adapter-protocol.md)."""
    hit_count: int | None = None
    values: list[str] = []
    eval_error: str | None = None
    test: TestResult | None = None
    saw_record = False
    for raw_line in stream.splitlines():
        line = raw_line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError:
            continue  # adapters may interleave target-program output
        if not isinstance(record, dict) or "type" not in record:
            continue
        saw_record = True
        kind = record["type"]
        try:
            if kind == "probe":
                hit_count = int(record["hit_count"])
            elif kind == "value":
                values.append(str(record["text"]))
            elif kind == "eval_error":
                eval_error = str(record["message"])
            elif kind == "test":
                test = TestResult(
                    status=str(record["status"]),
                    exception_type=record.get("exception_type"),
                    exception_message=record.get("exception_message"),
                )
        except (KeyError, TypeError, ValueError) as exc:
            raise AdapterFailure(f"malformed adapter record {line!r}: {exc}") from None
    if not saw_record:
        raise AdapterFailure("adapter produced no records")
    if hit_count is not None:
        return ProbeResult(
            hit_count=hit_count,
            values=tuple(values),
            eval_error=eval_error,
            test_outcome=test,
        )
    if test is None:
        raise AdapterFailure("adapter records held neither a probe nor a test result")
    return test


class SubprocessAdapter:
    """Spawns an external adapter process per invocation.

    Protocol: ``<cmd> probe <root> <file>:<line> <expr-b64> <test-cmd-b64>
    <timeout>`` and ``<cmd> run <root> <test-cmd-b64> <timeout>``; records are
    read from its standard output.  A nonzero exit without records is an
    adapter failure.
    """

    def __init__(self, command: list[str]):
        if not command:
            raise AdapterFailure("empty adapter command")
        self.command = list(command)

    @staticmethod
    def _b64(text: str) -> str:
        return base64.b64encode(text.encode("utf-8")).decode("ascii")

    def _invoke(self, argv: list[str], timeout: float) -> str:
        try:
            proc = subprocess.run(
                argv,
                capture_output=True,
                text=True,
                timeout=timeout + SUBPROCESS_GRACE,
            )
        except subprocess.TimeoutExpired:
            raise AdapterFailure(f"adapter did not answer within {timeout + SUBPROCESS_GRACE}s")
        except OSError as exc:
            raise AdapterFailure(f"could not spawn adapter: {exc}") from None
        if proc.returncode != 0 and not proc.stdout.strip():
            raise AdapterFailure(
                f"adapter exited {proc.returncode} without records: {proc.stderr.strip()[:500]}"
            )
        return proc.stdout

    def probe(
        self,
        snapshot_root: Path,
        file: str,
        line: int,
        expression: str,
        test_command: str,
        timeout: float,
    ) -> ProbeResult:
        argv = [
            *self.command,
            "probe",
            str(snapshot_root),
            f"{file}:{line}",
            self._b64(expression),
            self._b64(test_command),
            f"{timeout:g}",
        ]
        result = parse_record_stream(self._invoke(argv, timeout))
        if not isinstance(result, ProbeResult):
            raise AdapterFailure("probe invocation returned no probe record")
        return result

    def run_test(self, snapshot_root: Path, test_command: str, timeout: float) -> TestResult:
        argv = [
            *self.command,
            "run",
            str(snapshot_root),
            self._b64(test_command),
            f"{timeout:g}",
        ]
        result = parse_record_stream(self._invoke(argv, timeout))
        if isinstance(result, ProbeResult):
            if result.test_outcome is None:
                raise AdapterFailure("run invocation returned no test record")
            return result.test_outcome
        return result
