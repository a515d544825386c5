"""Patch plausibility evaluation and benchmark-level aggregation.

A patch is plausible when the full provided test suite passes after applying
it; plausible patches are flagged for manual review because semantic
correctness still needs a human judgment.  Aggregation reports per-bug best
outcomes plus attempt-level plausibility partitioned by the confidence flag,
with ablation-mode runs kept separate.
"""
from __future__ import annotations

import csv
import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path

from .driver import ExecutionAdapter
from .model import (
    BugContext,
    PatchCandidate,
    PatchEvaluation,
    RepairSession,
)
from .observations import NoException
from .patching import ProjectSnapshot, apply_method_patch
from .driver import execute_run


@dataclass(frozen=True)
class EvaluationOutcome:
    evaluation: PatchEvaluation
    note: str = ""


def evaluate_patch(
    bug: BugContext,
    patch: PatchCandidate,
    adapter: ExecutionAdapter,
    timeout: float,
    *,
    suite_command: str | None = None,
) -> EvaluationOutcome:
    """Apply the patch to a fresh snapshot and run the full suite.

    ``suite_command`` defaults to the bug's failing test command when the
    caller has nothing broader.  No-op patches (replacement identical to the
    original method) are implausible without running anything.
    """
    if not patch.applied_diff:
        patch.evaluation = PatchEvaluation.IMPLAUSIBLE
        patch.needs_manual_review = False
        return EvaluationOutcome(PatchEvaluation.IMPLAUSIBLE, "no-op patch")
    command = suite_command or bug.failing_test_command
    with ProjectSnapshot.create(bug) as snapshot:
        apply_method_patch(snapshot, bug, patch.replacement_method_source)
        observation = execute_run(adapter, snapshot, command, timeout)
    if isinstance(observation.detail, NoException):
        patch.evaluation = PatchEvaluation.PLAUSIBLE
        patch.needs_manual_review = True
        return EvaluationOutcome(PatchEvaluation.PLAUSIBLE)
    patch.evaluation = PatchEvaluation.IMPLAUSIBLE
    patch.needs_manual_review = False
    note = "suite timed out" if observation.rendered.startswith("[Experiment timed out") else observation.rendered
    return EvaluationOutcome(PatchEvaluation.IMPLAUSIBLE, note)


@dataclass
class PartitionStats:
    attempts: int = 0
    plausible: int = 0

    @property
    def precision(self) -> float | None:
        if self.attempts == 0:
            return None
        return self.plausible / self.attempts

    def add(self, plausible: bool) -> None:
        self.attempts += 1
        if plausible:
            self.plausible += 1


@dataclass
class BugOutcome:
    bug_id: str
    attempts: int = 0
    plausible_attempts: int = 0
    confident_attempts: int = 0
    ablated: bool = False

    @property
    def fixed_plausibly(self) -> bool:
        return self.plausible_attempts > 0


@dataclass
class AggregateReport:
    bugs: dict[str, BugOutcome] = field(default_factory=dict)
    confident: PartitionStats = field(default_factory=PartitionStats)
    not_confident: PartitionStats = field(default_factory=PartitionStats)
    ablated_confident: PartitionStats = field(default_factory=PartitionStats)
    ablated_not_confident: PartitionStats = field(default_factory=PartitionStats)
    rows: list[dict] = field(default_factory=list)

    @property
    def total_attempts(self) -> int:
        return (
            self.confident.attempts
            + self.not_confident.attempts
            + self.ablated_confident.attempts
            + self.ablated_not_confident.attempts
        )

    @property
    def bugs_fixed_plausibly(self) -> int:
        return sum(1 for outcome in self.bugs.values() if outcome.fixed_plausibly)

    def to_dict(self) -> dict:
        def stats(p: PartitionStats) -> dict:
            return {"attempts": p.attempts, "plausible": p.plausible, "precision": p.precision}

        return {
            "bugs": len(self.bugs),
            "bugs_fixed_plausibly": self.bugs_fixed_plausibly,
            "attempts": self.total_attempts,
            "confident": stats(self.confident),
            "not_confident": stats(self.not_confident),
            "ablated_confident": stats(self.ablated_confident),
            "ablated_not_confident": stats(self.ablated_not_confident),
            "per_bug": {
                bug_id: {
                    "attempts": outcome.attempts,
                    "plausible_attempts": outcome.plausible_attempts,
                    "confident_attempts": outcome.confident_attempts,
                    "fixed_plausibly": outcome.fixed_plausibly,
                    "ablated": outcome.ablated,
                }
                for bug_id, outcome in sorted(self.bugs.items())
            },
        }


def aggregate(sessions_by_bug: dict[str, list[RepairSession]]) -> AggregateReport:
    """Fold evaluated sessions into the benchmark-level report.

    A bug counts as plausibly fixed when any of its attempts is plausible.
    Aggregation is a pure fold over persisted sessions, so re-running it is
    idempotent.
    """
    report = AggregateReport()
    for bug_id, sessions in sorted(sessions_by_bug.items()):
        outcome = report.bugs.setdefault(bug_id, BugOutcome(bug_id=bug_id))
        for k, session in enumerate(sessions, start=1):
            plausible = (
                session.patch is not None
                and session.patch.evaluation is PatchEvaluation.PLAUSIBLE
            )
            outcome.attempts += 1
            outcome.ablated = session.config.ablate_debugger
            if plausible:
                outcome.plausible_attempts += 1
            if session.confident:
                outcome.confident_attempts += 1
            if session.config.ablate_debugger:
                part = report.ablated_confident if session.confident else report.ablated_not_confident
            else:
                part = report.confident if session.confident else report.not_confident
            part.add(plausible)
            report.rows.append(
                {
                    "bug_id": bug_id,
                    "attempt": k,
                    "confident": session.confident,
                    "ablated": session.config.ablate_debugger,
                    "steps": len(session.steps),
                    "termination_reason": session.termination_reason.value,
                    "evaluation": (
                        session.patch.evaluation.value if session.patch is not None else "NoPatch"
                    ),
                }
            )
    return report


def evaluate_patch_on_entry(entry, patch: PatchCandidate) -> EvaluationOutcome:
    """Plausibility of a session patch against a benchmark entry's full suite."""
    from .corpus_runner import failing_tests, run_entry_tests
    from .patching import replace_method_lines

    if not patch.applied_diff:
        patch.evaluation = PatchEvaluation.IMPLAUSIBLE
        patch.needs_manual_review = False
        return EvaluationOutcome(PatchEvaluation.IMPLAUSIBLE, "no-op patch")
    lines = entry.mutated_source.splitlines(keepends=True)
    patched = "".join(
        replace_method_lines(lines, entry.method_span, patch.replacement_method_source)
    )
    outcome = run_entry_tests(solution_source=patched, test_source=entry.test_source)
    failed = failing_tests(outcome)
    if outcome["status"] == "ok" and not failed:
        patch.evaluation = PatchEvaluation.PLAUSIBLE
        patch.needs_manual_review = True
        return EvaluationOutcome(PatchEvaluation.PLAUSIBLE)
    patch.evaluation = PatchEvaluation.IMPLAUSIBLE
    patch.needs_manual_review = False
    note = outcome.get("error", ", ".join(failed))
    return EvaluationOutcome(PatchEvaluation.IMPLAUSIBLE, note)


def _fmt_precision(p: float | None) -> str:
    return "-" if p is None else f"{p:.3f}"


def render_table(report: AggregateReport) -> str:
    """Human-readable summary table."""
    lines = [
        f"bugs: {len(report.bugs)}   plausibly fixed: {report.bugs_fixed_plausibly}",
        f"attempts: {report.total_attempts}",
        "",
        f"{'partition':<28}{'attempts':>10}{'plausible':>11}{'precision':>11}",
    ]
    for label, part in (
        ("confident (<DONE>)", report.confident),
        ("not confident", report.not_confident),
        ("ablated, confident", report.ablated_confident),
        ("ablated, not confident", report.ablated_not_confident),
    ):
        lines.append(
            f"{label:<28}{part.attempts:>10}{part.plausible:>11}{_fmt_precision(part.precision):>11}"
        )
    return "\n".join(lines) + "\n"


def write_report_files(report: AggregateReport, out_dir: Path, *, figure: bool = True) -> None:
    """Emit the machine-readable results (CSV + JSON), table, and figure."""
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text(render_table(report), encoding="utf-8")
    (out_dir / "summary.json").write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    with (out_dir / "results.csv").open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(
            handle,
            fieldnames=[
                "bug_id",
                "attempt",
                "confident",
                "ablated",
                "steps",
                "termination_reason",
                "evaluation",
            ],
        )
        writer.writeheader()
        writer.writerows(report.rows)
    if figure:
        save_precision_figure(report, out_dir / "precision.png")


def save_precision_figure(report: AggregateReport, path: Path) -> None:
    """Bar chart of attempt-level plausibility by confidence partition."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels, values, colors = [], [], []
    for label, part, color in (
        ("<DONE>", report.confident, "#2e7d32"),
        ("no <DONE>", report.not_confident, "#c62828"),
        ("ablated\n<DONE>", report.ablated_confident, "#66bb6a"),
        ("ablated\nno <DONE>", report.ablated_not_confident, "#ef9a9a"),
    ):
        if part.attempts:
            labels.append(f"{label}\n(n={part.attempts})")
            values.append(part.precision or 0.0)
            colors.append(color)
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    if values:
        ax.bar(labels, values, color=colors)
    ax.set_ylim(0, 1)
    ax.set_ylabel("plausible-patch rate")
    ax.set_title("Attempt plausibility by confidence signal")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def summarize_samples(samples: list[float]) -> str:
    """``mean ± stddev`` presentation used for stochastic baselines."""
    mean = statistics.fmean(samples) if samples else 0.0
    std = statistics.pstdev(samples) if len(samples) > 1 else 0.0
    return f"{mean:.2f} ± {std:.2f}"
