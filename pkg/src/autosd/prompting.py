"""Prompt assembly for the debugging loop and for fix generation.

The conversation document grows monotonically during a session: the shipped
scientific-debugging instruction text, then the bug block, then one rendered
block per completed step.  Before fix generation every Rejected block is
dropped (undecided blocks are kept) and the fix suffix is appended.

Rendering is deterministic: identical inputs yield byte-identical text.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from importlib import resources

from .errors import PromptTooLargeError
from .model import BugContext, TraceStep, Verdict

HYPOTHESIS_CUE = "Hypothesis:"
OBSERVATION_CUE = "Observation:"
CONCLUSION_CUE = "Conclusion:"
FIX_SUFFIX = "The repaired code (full method, without comments) is:"

ERROR_MESSAGE_BYTE_CAP = 4096
MAX_PROMPT_BYTES = 1 << 20


class PromptMode(str, Enum):
    DEBUGGING = "Debugging"
    FIX_GENERATION = "FixGeneration"


def load_sd_description(language_id: str = "python") -> str:
    """Shipped instruction text for the given target language."""
    ref = resources.files("autosd").joinpath(f"assets/prompts/{language_id}/sd_description.txt")
    return ref.read_text(encoding="utf-8").rstrip("\n")


@dataclass(frozen=True)
class PromptDocument:
    sd_description: str
    bug_block: str
    step_blocks: tuple[str, ...] = ()
    mode: PromptMode = PromptMode.DEBUGGING

    def text(self) -> str:
        """Full prompt text, ending with the cue appropriate to the mode."""
        parts = [self.sd_description, self.bug_block, *self.step_blocks]
        body = "\n\n".join(parts)
        if self.mode is PromptMode.DEBUGGING:
            out = f"{body}\n\n{HYPOTHESIS_CUE}"
        else:
            out = f"{body}\n\n{FIX_SUFFIX}\n```"
        if len(out.encode("utf-8")) > MAX_PROMPT_BYTES:
            raise PromptTooLargeError(f"prompt exceeds {MAX_PROMPT_BYTES} bytes")
        return out


def _cap_error_message(message: str, byte_cap: int) -> str:
    encoded = message.encode("utf-8")
    if len(encoded) <= byte_cap:
        return message
    clipped = encoded[:byte_cap].decode("utf-8", errors="ignore")
    return clipped + "\n[error message truncated]"


def render_bug_block(bug: BugContext, *, error_byte_cap: int = ERROR_MESSAGE_BYTE_CAP) -> str:
    lines = [
        "The buggy method is:",
        "```",
        bug.buggy_source.rstrip("\n"),
        "```",
        "",
        f"The test that reveals the bug is run with: `{bug.failing_test_command}`",
        "",
        "The error message is:",
        "```",
        _cap_error_message(bug.error_message.rstrip("\n"), error_byte_cap),
        "```",
    ]
    if bug.bug_report is not None:
        lines += ["", "The bug report is:", "```", bug.bug_report.rstrip("\n"), "```"]
    return "\n".join(lines)


def build_initial_prompt(bug: BugContext, *, error_byte_cap: int = ERROR_MESSAGE_BYTE_CAP) -> PromptDocument:
    """Initial debugging prompt; its text ends with exactly ``Hypothesis:``."""
    return PromptDocument(
        sd_description=load_sd_description(bug.target_language_id),
        bug_block=render_bug_block(bug, error_byte_cap=error_byte_cap),
    )


def render_partial_step(hypothesis: str, prediction: str, experiment_raw: str) -> str:
    return (
        f"{HYPOTHESIS_CUE} {hypothesis}\n"
        f"Prediction: {prediction}\n"
        f"Experiment: `{experiment_raw}`"
    )


def render_step_block(step: TraceStep) -> str:
    observation = step.observation.rendered if step.observation is not None else ""
    return (
        f"{render_partial_step(step.hypothesis, step.prediction, step.experiment_raw)}\n"
        f"{OBSERVATION_CUE} {observation}\n"
        f"{CONCLUSION_CUE} {step.conclusion}"
    )


def append_step(doc: PromptDocument, step: TraceStep) -> PromptDocument:
    """Append one completed step block; the mode's cue follows at render time."""
    assert doc.mode is PromptMode.DEBUGGING, "steps are only appended while debugging"
    return replace(doc, step_blocks=(*doc.step_blocks, render_step_block(step)))


def observation_prompt(doc: PromptDocument, hypothesis: str, prediction: str, experiment_raw: str) -> str:
    """Mid-step prompt ending with the ``Observation:`` cue (ablation mode)."""
    body = doc.text()[: -len(HYPOTHESIS_CUE)].rstrip("\n")
    partial = render_partial_step(hypothesis, prediction, experiment_raw)
    return f"{body}\n\n{partial}\n{OBSERVATION_CUE}"


def conclusion_prompt(
    doc: PromptDocument,
    hypothesis: str,
    prediction: str,
    experiment_raw: str,
    observation_rendered: str,
) -> str:
    """Mid-step prompt ending with the ``Conclusion:`` cue."""
    body = doc.text()[: -len(HYPOTHESIS_CUE)].rstrip("\n")
    partial = render_partial_step(hypothesis, prediction, experiment_raw)
    return f"{body}\n\n{partial}\n{OBSERVATION_CUE} {observation_rendered}\n{CONCLUSION_CUE}"


def build_fix_prompt(doc: PromptDocument, steps: list[TraceStep]) -> PromptDocument:
    """Drop Rejected blocks and switch the document to fix generation.

    Pruning removes whole blocks only; surviving blocks are byte-identical to
    their debugging-mode rendering.
    """
    if len(steps) != len(doc.step_blocks):
        raise ValueError(f"{len(steps)} steps but {len(doc.step_blocks)} rendered blocks")
    survivors = tuple(
        block
        for block, step in zip(doc.step_blocks, steps)
        if step.verdict is not Verdict.REJECTED
    )
    return replace(doc, step_blocks=survivors, mode=PromptMode.FIX_GENERATION)
