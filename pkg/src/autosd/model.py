"""Data model for scientific-debugging repair sessions.

Sessions serialize to a canonical UTF-8 JSON document (schema version
``autosd-session/1``, sorted keys, two-space indent, trailing newline) so that
identical sessions always produce byte-identical documents.  The format is
documented in docs/session-format.md.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any

from . import dsl
from .errors import SchemaError
from .observations import (
    BreakpointNotHit,
    ExceptionRaised,
    ExperimentError,
    LoopValues,
    NoException,
    Observation,
    ObservationDetail,
    SingleValue,
    Timeout,
)

SCHEMA_VERSION = "autosd-session/1"
DONE_TOKEN = "<DEBUGGING DONE>"


class Verdict(str, Enum):
    SUPPORTED = "Supported"
    REJECTED = "Rejected"
    UNDECIDED = "Undecided"


class TerminationReason(str, Enum):
    DONE_TOKEN = "DoneToken"
    STEP_LIMIT = "StepLimit"
    MODEL_FAILURE = "ModelFailure"
    DRIVER_FAILURE = "DriverFailure"


class PatchEvaluation(str, Enum):
    UNEVALUATED = "Unevaluated"
    PLAUSIBLE = "Plausible"
    IMPLAUSIBLE = "Implausible"


@dataclass(frozen=True)
class BugContext:
    """Everything the engine knows about one bug.

    ``method_span`` is the inclusive 1-based line range of the buggy function
    inside ``buggy_file``; ``buggy_source`` is that method's text with
    absolute file line numbers attached.  ``failing_test_command`` must exit
    nonzero on the unmodified project.
    """

    project_root: str
    buggy_file: str
    method_span: tuple[int, int]
    buggy_source: str
    failing_test_command: str
    error_message: str
    bug_report: str | None = None
    target_language_id: str = "python"

    def __post_init__(self):
        start, end = self.method_span
        if start < 1 or start > end:
            raise SchemaError("bug.method_span", f"invalid span {self.method_span}")


@dataclass
class SessionConfig:
    max_steps: int = 3
    patch_budget: int = 10
    ablate_debugger: bool = False
    malformed_retry_limit: int = 2
    per_experiment_timeout: float = 30.0
    random_seed: int = 0

    def __post_init__(self):
        if self.max_steps < 1:
            raise SchemaError("config.max_steps", "must be >= 1")
        if self.patch_budget < 1:
            raise SchemaError("config.patch_budget", "must be >= 1")


@dataclass
class TraceStep:
    """One hypothesize/observe/conclude iteration."""

    index: int
    hypothesis: str
    prediction: str
    experiment_raw: str
    experiment: dsl.ExperimentScript | None = None
    observation: Observation | None = None
    conclusion: str = ""
    verdict: Verdict = Verdict.UNDECIDED
    done: bool = False


@dataclass
class PatchCandidate:
    replacement_method_source: str
    applied_diff: str
    evaluation: PatchEvaluation = PatchEvaluation.UNEVALUATED
    needs_manual_review: bool = False


@dataclass
class RepairSession:
    bug: BugContext
    config: SessionConfig
    steps: list[TraceStep] = field(default_factory=list)
    patch: PatchCandidate | None = None
    confident: bool = False
    termination_reason: TerminationReason = TerminationReason.STEP_LIMIT


def validate_session(session: RepairSession) -> None:
    """Check every structural invariant; raise SchemaError on the first hit."""
    if len(session.steps) > session.config.max_steps:
        raise SchemaError(
            "steps",
            f"{len(session.steps)} steps exceed max_steps={session.config.max_steps}",
        )
    any_done = False
    for i, step in enumerate(session.steps):
        where = f"steps[{i}]"
        if step.index != i + 1:
            raise SchemaError(f"{where}.index", f"expected {i + 1}, got {step.index}")
        if step.observation is None:
            if i != len(session.steps) - 1:
                raise SchemaError(f"{where}.observation", "missing observation on a non-final step")
            if session.termination_reason not in (
                TerminationReason.MODEL_FAILURE,
                TerminationReason.DRIVER_FAILURE,
            ):
                raise SchemaError(
                    f"{where}.observation",
                    "missing observation requires a ModelFailure/DriverFailure termination",
                )
        elif step.observation.is_experiment_error and step.verdict is not Verdict.UNDECIDED:
            raise SchemaError(
                f"{where}.verdict",
                f"{step.verdict.value} verdict on an experiment-error observation",
            )
        if step.done:
            if DONE_TOKEN not in step.conclusion:
                raise SchemaError(f"{where}.done", "done without the done token in the conclusion")
            if i != len(session.steps) - 1:
                raise SchemaError(f"{where}.done", "done step must be the final step")
            any_done = True
    if session.confident != any_done:
        raise SchemaError("confident", "confident flag must mirror the presence of a done step")
    if session.confident and session.termination_reason is not TerminationReason.DONE_TOKEN:
        raise SchemaError(
            "termination_reason",
            "confident sessions must terminate via the done token",
        )


def _detail_to_dict(detail: ObservationDetail) -> dict[str, Any]:
    if isinstance(detail, SingleValue):
        return {"kind": "single_value", "value": detail.value}
    if isinstance(detail, LoopValues):
        return {"kind": "loop_values", "values": list(detail.values)}
    if isinstance(detail, NoException):
        return {"kind": "no_exception"}
    if isinstance(detail, ExceptionRaised):
        return {"kind": "exception", "type": detail.type, "message": detail.message}
    if isinstance(detail, BreakpointNotHit):
        return {"kind": "breakpoint_not_hit", "path": detail.path, "line": detail.line}
    if isinstance(detail, ExperimentError):
        return {"kind": "experiment_error", "message": detail.message}
    if isinstance(detail, Timeout):
        return {"kind": "timeout", "seconds": detail.seconds}
    raise TypeError(f"unknown detail {detail!r}")


def _detail_from_dict(data: dict[str, Any], path: str) -> ObservationDetail:
    kind = data.get("kind")
    try:
        if kind == "single_value":
            return SingleValue(value=data["value"])
        if kind == "loop_values":
            return LoopValues(values=tuple(data["values"]))
        if kind == "no_exception":
            return NoException()
        if kind == "exception":
            return ExceptionRaised(type=data["type"], message=data["message"])
        if kind == "breakpoint_not_hit":
            return BreakpointNotHit(path=data["path"], line=int(data["line"]))
        if kind == "experiment_error":
            return ExperimentError(message=data["message"])
        if kind == "timeout":
            return Timeout(seconds=float(data["seconds"]))
    except KeyError as exc:
        raise SchemaError(path, f"detail is missing field {exc}") from None
    raise SchemaError(path, f"unknown detail kind {kind!r}")


def serialize_session(session: RepairSession) -> str:
    """Canonical document text; byte-identical for identical sessions."""
    validate_session(session)
    bug = session.bug
    doc: dict[str, Any] = {
        "schema": SCHEMA_VERSION,
        "bug": {
            "project_root": bug.project_root,
            "buggy_file": bug.buggy_file,
            "method_span": list(bug.method_span),
            "buggy_source": bug.buggy_source,
            "failing_test_command": bug.failing_test_command,
            "error_message": bug.error_message,
            "bug_report": bug.bug_report,
            "target_language_id": bug.target_language_id,
        },
        "config": {
            "max_steps": session.config.max_steps,
            "patch_budget": session.config.patch_budget,
            "ablate_debugger": session.config.ablate_debugger,
            "malformed_retry_limit": session.config.malformed_retry_limit,
            "per_experiment_timeout": session.config.per_experiment_timeout,
            "random_seed": session.config.random_seed,
        },
        "steps": [
            {
                "index": step.index,
                "hypothesis": step.hypothesis,
                "prediction": step.prediction,
                "experiment_raw": step.experiment_raw,
                "experiment": (
                    dsl.render_experiment(step.experiment) if step.experiment is not None else None
                ),
                "observation": (
                    None
                    if step.observation is None
                    else {
                        "rendered": step.observation.rendered,
                        "grounded": step.observation.grounded,
                        "detail": (
                            None
                            if step.observation.detail is None
                            else _detail_to_dict(step.observation.detail)
                        ),
                    }
                ),
                "conclusion": step.conclusion,
                "verdict": step.verdict.value,
                "done": step.done,
            }
            for step in session.steps
        ],
        "patch": (
            None
            if session.patch is None
            else {
                "replacement_method_source": session.patch.replacement_method_source,
                "applied_diff": session.patch.applied_diff,
                "evaluation": session.patch.evaluation.value,
                "needs_manual_review": session.patch.needs_manual_review,
            }
        ),
        "confident": session.confident,
        "termination_reason": session.termination_reason.value,
    }
    return json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _require(data: dict[str, Any], key: str, path: str) -> Any:
    if key not in data:
        raise SchemaError(f"{path}.{key}", "missing field")
    return data[key]


def _enum(cls, value: Any, path: str):
    try:
        return cls(value)
    except ValueError:
        raise SchemaError(path, f"{value!r} is not a valid {cls.__name__}") from None


def deserialize_session(doc: str) -> RepairSession:
    """Parse and fully validate a canonical session document."""
    try:
        data = json.loads(doc)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise SchemaError("$", "document root must be an object")
    if data.get("schema") != SCHEMA_VERSION:
        raise SchemaError("schema", f"expected {SCHEMA_VERSION!r}, got {data.get('schema')!r}")

    bug_data = _require(data, "bug", "$")
    span = _require(bug_data, "method_span", "bug")
    if not (isinstance(span, list) and len(span) == 2):
        raise SchemaError("bug.method_span", "must be a [start, end] pair")
    bug = BugContext(
        project_root=_require(bug_data, "project_root", "bug"),
        buggy_file=_require(bug_data, "buggy_file", "bug"),
        method_span=(int(span[0]), int(span[1])),
        buggy_source=_require(bug_data, "buggy_source", "bug"),
        failing_test_command=_require(bug_data, "failing_test_command", "bug"),
        error_message=_require(bug_data, "error_message", "bug"),
        bug_report=bug_data.get("bug_report"),
        target_language_id=bug_data.get("target_language_id", "python"),
    )

    config_data = _require(data, "config", "$")
    config = SessionConfig(
        max_steps=int(_require(config_data, "max_steps", "config")),
        patch_budget=int(_require(config_data, "patch_budget", "config")),
        ablate_debugger=bool(_require(config_data, "ablate_debugger", "config")),
        malformed_retry_limit=int(_require(config_data, "malformed_retry_limit", "config")),
        per_experiment_timeout=float(_require(config_data, "per_experiment_timeout", "config")),
        random_seed=int(_require(config_data, "random_seed", "config")),
    )

    steps: list[TraceStep] = []
    for i, step_data in enumerate(_require(data, "steps", "$")):
        where = f"steps[{i}]"
        experiment_text = step_data.get("experiment")
        experiment = None
        if experiment_text is not None:
            try:
                experiment = dsl.parse_experiment(experiment_text)
            except Exception as exc:
                raise SchemaError(f"{where}.experiment", f"unparseable: {exc}") from None
        obs_data = step_data.get("observation")
        observation = None
        if obs_data is not None:
            detail_data = obs_data.get("detail")
            observation = Observation(
                rendered=_require(obs_data, "rendered", f"{where}.observation"),
                grounded=bool(_require(obs_data, "grounded", f"{where}.observation")),
                detail=(
                    None
                    if detail_data is None
                    else _detail_from_dict(detail_data, f"{where}.observation.detail")
                ),
            )
            if observation.grounded and observation.detail is None:
                raise SchemaError(f"{where}.observation.detail", "grounded observations carry a detail")
        steps.append(
            TraceStep(
                index=int(_require(step_data, "index", where)),
                hypothesis=_require(step_data, "hypothesis", where),
                prediction=_require(step_data, "prediction", where),
                experiment_raw=_require(step_data, "experiment_raw", where),
                experiment=experiment,
                observation=observation,
                conclusion=_require(step_data, "conclusion", where),
                verdict=_enum(Verdict, _require(step_data, "verdict", where), f"{where}.verdict"),
                done=bool(_require(step_data, "done", where)),
            )
        )

    patch_data = data.get("patch")
    patch = None
    if patch_data is not None:
        patch = PatchCandidate(
            replacement_method_source=_require(patch_data, "replacement_method_source", "patch"),
            applied_diff=_require(patch_data, "applied_diff", "patch"),
            evaluation=_enum(
                PatchEvaluation, _require(patch_data, "evaluation", "patch"), "patch.evaluation"
            ),
            needs_manual_review=bool(_require(patch_data, "needs_manual_review", "patch")),
        )

    session = RepairSession(
        bug=bug,
        config=config,
        steps=steps,
        patch=patch,
        confident=bool(_require(data, "confident", "$")),
        termination_reason=_enum(
            TerminationReason, _require(data, "termination_reason", "$"), "termination_reason"
        ),
    )
    validate_session(session)
    return session


def with_step(session: RepairSession, step: TraceStep) -> RepairSession:
    return replace(session, steps=[*session.steps, step])
