"""Observation details and their canonical textual renderings.

The rendered text is the exact line injected into the prompt after the
``Observation:`` header, so every rule here is frozen and covered by golden
tests.  Formatting rules:

* a breakpoint hit once renders the value text verbatim;
* a breakpoint hit in a loop renders
  ``At each loop execution, the expression was: [v1, v2, ...]`` with at most
  ``VALUE_COUNT_CAP`` values;
* a passing test renders ``[No exception triggered]``;
* a failing test renders ``<ExceptionType>: <message>`` (bare type when the
  message is empty);
* a breakpoint that was never reached renders
  ``[Breakpoint at <path>:<line> was not hit]``;
* a broken experiment renders ``[Experiment error: <message>]``;
* a wall-clock expiry renders ``[Experiment timed out after <T>s]``.
"""
from __future__ import annotations

from dataclasses import dataclass

# Per-observation caps shared with every execution adapter
# (see docs/adapter-protocol.md).
VALUE_COUNT_CAP = 100
VALUE_TEXT_CAP = 256
TRUNCATION_MARK = "…"


@dataclass(frozen=True)
class SingleValue:
    value: str


@dataclass(frozen=True)
class LoopValues:
    values: tuple[str, ...]

    @property
    def count(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class NoException:
    pass


@dataclass(frozen=True)
class ExceptionRaised:
    type: str
    message: str


@dataclass(frozen=True)
class BreakpointNotHit:
    path: str
    line: int


@dataclass(frozen=True)
class ExperimentError:
    message: str


@dataclass(frozen=True)
class Timeout:
    seconds: float


ObservationDetail = (
    SingleValue
    | LoopValues
    | NoException
    | ExceptionRaised
    | BreakpointNotHit
    | ExperimentError
    | Timeout
)


def truncate_value(text: str) -> str:
    """Cap one value rendering at VALUE_TEXT_CAP characters, marker included."""
    if len(text) <= VALUE_TEXT_CAP:
        return text
    return text[: VALUE_TEXT_CAP - 1] + TRUNCATION_MARK


def render_detail(detail: ObservationDetail) -> str:
    """Canonical observation text; a pure function of the detail."""
    if isinstance(detail, SingleValue):
        return detail.value
    if isinstance(detail, LoopValues):
        shown = detail.values[:VALUE_COUNT_CAP]
        return f"At each loop execution, the expression was: [{', '.join(shown)}]"
    if isinstance(detail, NoException):
        return "[No exception triggered]"
    if isinstance(detail, ExceptionRaised):
        if detail.message:
            return f"{detail.type}: {detail.message}"
        return detail.type
    if isinstance(detail, BreakpointNotHit):
        return f"[Breakpoint at {detail.path}:{detail.line} was not hit]"
    if isinstance(detail, ExperimentError):
        return f"[Experiment error: {detail.message}]"
    if isinstance(detail, Timeout):
        return f"[Experiment timed out after {detail.seconds:g}s]"
    raise TypeError(f"unknown observation detail: {detail!r}")


@dataclass(frozen=True)
class Observation:
    """An experiment result as fed back into the prompt.

    ``grounded`` is False only when the observation was generated by the
    model itself (debugger-ablation mode); such observations carry no
    structured detail.
    """

    rendered: str
    grounded: bool = True
    detail: ObservationDetail | None = None

    @staticmethod
    def from_detail(detail: ObservationDetail) -> "Observation":
        return Observation(rendered=render_detail(detail), grounded=True, detail=detail)

    @staticmethod
    def hallucinated(text: str) -> "Observation":
        return Observation(rendered=text, grounded=False, detail=None)

    @property
    def is_experiment_error(self) -> bool:
        return isinstance(self.detail, ExperimentError)
