"""Explainable automated program repair via a scientific-debugging loop."""

from .model import (
    BugContext,
    PatchCandidate,
    PatchEvaluation,
    RepairSession,
    SessionConfig,
    TerminationReason,
    TraceStep,
    Verdict,
    deserialize_session,
    serialize_session,
)
from .observations import Observation
from .dsl import DebuggerProbe, Edit, EditKind, EditScript, parse_experiment, render_experiment
from .orchestrator import run_repair, run_session

__version__ = "0.1.0"

__all__ = [
    "BugContext",
    "DebuggerProbe",
    "Edit",
    "EditKind",
    "EditScript",
    "Observation",
    "PatchCandidate",
    "PatchEvaluation",
    "RepairSession",
    "SessionConfig",
    "TerminationReason",
    "TraceStep",
    "Verdict",
    "deserialize_session",
    "parse_experiment",
    "render_experiment",
    "run_repair",
    "run_session",
    "serialize_session",
    "__version__",
]
