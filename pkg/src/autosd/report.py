"""Static explanation documents for finished repair sessions.

One collapsible block per step: the header is the first sentence of the
hypothesis (at most 120 characters) color-coded by verdict, green for
supported, red for rejected, yellow for undecided; the body shows the five
step fields. The footer carries the patch diff and the confidence flag. HTML
output is self-contained (inline styles only) so reports can be attached to
review systems.
"""
from __future__ import annotations

import html
import re

from . import dsl
from .model import RepairSession, TraceStep, Verdict

HEADER_LIMIT = 120

_VERDICT_COLORS = {
    Verdict.SUPPORTED: "#2e7d32",
    Verdict.REJECTED: "#c62828",
    Verdict.UNDECIDED: "#f9a825",
}
_VERDICT_DOTS = {
    Verdict.SUPPORTED: "\U0001f7e2",
    Verdict.REJECTED: "\U0001f534",
    Verdict.UNDECIDED: "\U0001f7e1",
}

_SENTENCE_END = re.compile(r"(?<=[.!?])\s")


def hypothesis_summary(hypothesis: str) -> str:
    """First sentence of the hypothesis, truncated to 120 characters."""
    text = " ".join(hypothesis.split())
    sentence = _SENTENCE_END.split(text, 1)[0] if text else ""
    if len(sentence) > HEADER_LIMIT:
        sentence = sentence[: HEADER_LIMIT - 1] + "…"
    return sentence


def experiment_text(step: TraceStep) -> str:
    """Canonical experiment rendering; raw text when it never parsed."""
    if step.experiment is not None:
        return dsl.render_experiment(step.experiment)
    return step.experiment_raw


def render(session: RepairSession, format: str = "markdown") -> str:
    if format == "markdown":
        return _render_markdown(session)
    if format == "html":
        return _render_html(session)
    raise ValueError(f"unknown report format {format!r}")


def _step_fields(step: TraceStep) -> list[tuple[str, str]]:
    fields = [
        ("Hypothesis", step.hypothesis),
        ("Prediction", step.prediction),
        ("Experiment", f"`{experiment_text(step)}`"),
    ]
    if step.experiment is not None and dsl.render_experiment(step.experiment) != step.experiment_raw:
        fields.append(("Experiment (as written)", f"`{step.experiment_raw}`"))
    fields += [
        ("Observation", step.observation.rendered if step.observation is not None else "(not executed)"),
        ("Conclusion", step.conclusion),
    ]
    return fields


def _render_markdown(session: RepairSession) -> str:
    out = ["# Debugging explanation", ""]
    out.append(f"- failing test: `{session.bug.failing_test_command}`")
    out.append(f"- confident (`<DEBUGGING DONE>` emitted): **{'yes' if session.confident else 'no'}**")
    out.append(f"- termination: {session.termination_reason.value}")
    out.append("")
    for step in session.steps:
        dot = _VERDICT_DOTS[step.verdict]
        summary = hypothesis_summary(step.hypothesis)
        out.append("<details>")
        out.append(
            f"<summary>{dot} Step {step.index} ({step.verdict.value}): {html.escape(summary)}</summary>"
        )
        out.append("")
        for label, value in _step_fields(step):
            out.append(f"**{label}:** {value}")
            out.append("")
        out.append("</details>")
        out.append("")
    out.append("## Patch")
    out.append("")
    if session.patch is None:
        out.append("No patch was produced.")
    elif not session.patch.applied_diff:
        out.append("The generated code is identical to the buggy method (no-op patch).")
    else:
        out.append(f"Evaluation: {session.patch.evaluation.value}")
        if session.patch.needs_manual_review:
            out.append("Flagged for manual correctness review.")
        out.append("")
        out.append("```diff")
        out.append(session.patch.applied_diff.rstrip("\n"))
        out.append("```")
    out.append("")
    return "\n".join(out)


def _render_html(session: RepairSession) -> str:
    def esc(text: str) -> str:
        return html.escape(text, quote=False)

    out = [
        "<!DOCTYPE html>",
        "<html><head><meta charset='utf-8'><title>Debugging explanation</title></head>",
        "<body style='font-family: sans-serif; max-width: 60em; margin: 2em auto;'>",
        "<h1>Debugging explanation</h1>",
        f"<p>failing test: <code>{esc(session.bug.failing_test_command)}</code><br>",
        f"confident (&lt;DEBUGGING DONE&gt; emitted): <b>{'yes' if session.confident else 'no'}</b><br>",
        f"termination: {esc(session.termination_reason.value)}</p>",
    ]
    for step in session.steps:
        color = _VERDICT_COLORS[step.verdict]
        summary = esc(hypothesis_summary(step.hypothesis))
        out.append("<details style='margin: 0.5em 0;'>")
        out.append(
            "<summary style='cursor: pointer; padding: 0.4em 0.6em; color: white; "
            f"background: {color}; border-radius: 4px;'>"
            f"Step {step.index} ({step.verdict.value}): {summary}</summary>"
        )
        out.append("<dl style='margin: 0.6em 1em;'>")
        for label, value in _step_fields(step):
            if value.startswith("`") and value.endswith("`"):
                rendered = f"<code>{esc(value[1:-1])}</code>"
            else:
                rendered = esc(value)
            out.append(f"<dt><b>{esc(label)}</b></dt><dd>{rendered}</dd>")
        out.append("</dl>")
        out.append("</details>")
    out.append("<h2>Patch</h2>")
    if session.patch is None:
        out.append("<p>No patch was produced.</p>")
    elif not session.patch.applied_diff:
        out.append("<p>The generated code is identical to the buggy method (no-op patch).</p>")
    else:
        out.append(f"<p>Evaluation: {esc(session.patch.evaluation.value)}")
        if session.patch.needs_manual_review:
            out.append("<br>Flagged for manual correctness review.")
        out.append("</p>")
        out.append(
            "<pre style='background: #f5f5f5; padding: 1em; overflow-x: auto;'>"
            f"{esc(session.patch.applied_diff.rstrip())}</pre>"
        )
    out.append("</body></html>")
    return "\n".join(out) + "\n"
