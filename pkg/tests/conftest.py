from __future__ import annotations

from pathlib import Path

import pytest

from autosd.cli import load_bug_config
from autosd.model import (
    BugContext,
    PatchCandidate,
    PatchEvaluation,
    RepairSession,
    SessionConfig,
    TerminationReason,
    TraceStep,
    Verdict,
)
from autosd.observations import Observation, SingleValue

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def programs_dir() -> Path:
    return FIXTURES / "programs"


@pytest.fixture(scope="session")
def mini_corpus_dir() -> Path:
    return FIXTURES / "mini_corpus"


@pytest.fixture()
def demo_bug() -> BugContext:
    _, bug, _ = load_bug_config(FIXTURES / "demo_bug.json")
    return bug


@pytest.fixture()
def demo_replay() -> Path:
    return FIXTURES / "demo_session.replay"


def make_bug(tmp_path: Path, *, source: str, test_body: str, span: tuple[int, int]) -> BugContext:
    """Small throwaway project with one buggy file and a runnable test."""
    project = tmp_path / "project"
    project.mkdir(parents=True, exist_ok=True)
    (project / "lib.py").write_text(source, encoding="utf-8")
    (project / "run_test.py").write_text(test_body, encoding="utf-8")
    numbered = "\n".join(
        f"{i + span[0]:4d}  {line}"
        for i, line in enumerate(source.splitlines()[span[0] - 1 : span[1]])
    )
    return BugContext(
        project_root=str(project),
        buggy_file="lib.py",
        method_span=span,
        buggy_source=numbered,
        failing_test_command="python run_test.py",
        error_message="AssertionError: boom",
    )


def make_step(
    index: int = 1,
    *,
    verdict: Verdict = Verdict.SUPPORTED,
    done: bool = False,
    observation: Observation | None = None,
    hypothesis: str = "The loop bound is off by one.",
    experiment_raw: str = "stop at lib.py:2 ; run ; print x",
) -> TraceStep:
    if observation is None:
        observation = Observation.from_detail(SingleValue(value="3"))
    conclusion = f"The hypothesis is {verdict.value.lower()}."
    if done:
        conclusion += " <DEBUGGING DONE>"
    return TraceStep(
        index=index,
        hypothesis=hypothesis,
        prediction="x will be 3.",
        experiment_raw=experiment_raw,
        experiment=None,
        observation=observation,
        conclusion=conclusion,
        verdict=verdict,
        done=done,
    )


def make_session(
    bug: BugContext,
    *,
    verdicts: list[Verdict] = (),
    done_last: bool = False,
    plausible: bool | None = None,
    ablated: bool = False,
) -> RepairSession:
    config = SessionConfig(max_steps=max(3, len(verdicts)), ablate_debugger=ablated)
    steps = []
    for i, verdict in enumerate(verdicts, start=1):
        steps.append(make_step(i, verdict=verdict, done=done_last and i == len(verdicts)))
    patch = None
    if plausible is not None:
        patch = PatchCandidate(
            replacement_method_source="def f():\n    return 1",
            applied_diff="--- a/lib.py\n+++ b/lib.py\n@@ -1 +1 @@\n-x\n+y\n",
            evaluation=PatchEvaluation.PLAUSIBLE if plausible else PatchEvaluation.IMPLAUSIBLE,
            needs_manual_review=plausible,
        )
    return RepairSession(
        bug=bug,
        config=config,
        steps=steps,
        patch=patch,
        confident=done_last and bool(verdicts),
        termination_reason=(
            TerminationReason.DONE_TOKEN if done_last and verdicts else TerminationReason.STEP_LIMIT
        ),
    )


@pytest.fixture()
def tiny_bug(tmp_path) -> BugContext:
    return make_bug(
        tmp_path,
        source="def f(x):\n    return x + 2\n",
        test_body="from lib import f\nassert f(1) == 2, 'expected 2'\n",
        span=(1, 2),
    )
