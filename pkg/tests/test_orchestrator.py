from __future__ import annotations

import pytest

from autosd.backends import ReplayBackend
from autosd.driver import AdapterAudit, ProbeResult, TestResult
from autosd.errors import AdapterFailure, BugNotReproducible
from autosd.inprocess import InProcessAdapter
from autosd.model import (
    PatchEvaluation,
    SessionConfig,
    TerminationReason,
    Verdict,
    serialize_session,
)
from autosd.orchestrator import run_repair, run_session
from conftest import make_bug

FIX = "def f(x):\n    return x + 1"


def hyp(experiment: str, hypothesis: str = "The increment is wrong.") -> dict:
    return {
        "text": (
            f" {hypothesis}\n"
            "Prediction: The observed value will differ from the expected one.\n"
            f"Experiment: `{experiment}`\n"
        )
    }


def con(text: str) -> dict:
    return {"text": f" {text}"}


def fix(code: str = FIX) -> dict:
    return {"text": f"\n{code}\n```"}


def backend_for(entries: list[dict]) -> ReplayBackend:
    return ReplayBackend([entries])


def scripted(entries: list[dict]):
    return backend_for(entries).for_attempt(0)


class ScriptedAdapter:
    """Canned adapter for failure-path tests."""

    def __init__(self, probe_result=None, test_result=None, fail=False):
        self.probe_result = probe_result or ProbeResult(hit_count=1, values=("1",))
        self.test_result = test_result or TestResult(
            status="fail", exception_type="AssertionError", exception_message="expected 2"
        )
        self.fail = fail

    def probe(self, *args, **kwargs):
        if self.fail:
            raise AdapterFailure("adapter crashed")
        return self.probe_result

    def run_test(self, *args, **kwargs):
        return self.test_result


def _tree_digest(root) -> dict:
    import hashlib
    from pathlib import Path

    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(Path(root).rglob("*"))
        if p.is_file()
    }


def test_full_session_with_real_experiments(tiny_bug):
    entries = [
        hyp("stop at lib.py:2 ; run ; print x"),
        con("The value of x was 1, not 2, so the hypothesis is rejected."),
        hyp('REPLACE(2, "x + 2", "x + 1") AND RUN'),
        con("The previously failing test now passes, so the hypothesis is supported. <DEBUGGING DONE>"),
        fix(),
    ]
    origin = _tree_digest(tiny_bug.project_root)
    session = run_session(tiny_bug, SessionConfig(), scripted(entries), InProcessAdapter())
    assert [s.verdict for s in session.steps] == [Verdict.REJECTED, Verdict.SUPPORTED]
    assert session.steps[0].observation.rendered == "1"
    assert session.steps[1].observation.rendered == "[No exception triggered]"
    assert all(s.observation.grounded for s in session.steps)
    assert session.confident
    assert session.termination_reason is TerminationReason.DONE_TOKEN
    assert session.patch is not None and session.patch.applied_diff
    # edits and the final patch touched snapshots only, never the origin
    assert _tree_digest(tiny_bug.project_root) == origin


def test_dsl_error_yields_experiment_error_and_loop_continues(tiny_bug):
    entries = [
        hyp("b a.py:3 ;; c ;; p x ;; p y"),  # two prints: invalid
        con("The hypothesis is undecided due to experiment error."),
        hyp('REPLACE(2, "x + 2", "x + 1") AND RUN'),
        con("The test passes, so the hypothesis is supported. <DEBUGGING DONE>"),
        fix(),
    ]
    session = run_session(tiny_bug, SessionConfig(), scripted(entries), InProcessAdapter())
    first = session.steps[0]
    assert first.experiment is None
    assert first.observation.is_experiment_error
    assert first.verdict is Verdict.UNDECIDED
    assert len(session.steps) == 2 and session.confident


def test_verdict_coerced_to_undecided_on_experiment_error(tiny_bug):
    entries = [
        hyp('REPLACE(2, "does not exist", "x") AND RUN'),
        con("The hypothesis is rejected."),  # model says rejected; data model disagrees
        hyp("RUN"),
        con("The hypothesis is rejected."),
        hyp("RUN"),
        con("The hypothesis is rejected."),
        fix(),
    ]
    session = run_session(tiny_bug, SessionConfig(), scripted(entries), InProcessAdapter())
    assert session.steps[0].observation.is_experiment_error
    assert session.steps[0].verdict is Verdict.UNDECIDED
    assert session.steps[1].verdict is Verdict.REJECTED


def test_bare_run_reconfirms_failure(tiny_bug):
    entries = [
        hyp("RUN"),
        con("The failure reproduces, so the hypothesis is supported. <DEBUGGING DONE>"),
        fix(),
    ]
    session = run_session(tiny_bug, SessionConfig(), scripted(entries), InProcessAdapter())
    assert session.steps[0].observation.rendered == "AssertionError: expected 2"


def test_step_limit_all_rejected_still_generates_fix(tiny_bug):
    entries = []
    for _ in range(3):
        entries.append(hyp("stop at lib.py:2 ; run ; print x"))
        entries.append(con("The hypothesis is rejected."))
    entries.append(fix())
    session = run_session(tiny_bug, SessionConfig(max_steps=3), scripted(entries), InProcessAdapter())
    assert len(session.steps) == 3
    assert not session.confident
    assert session.termination_reason is TerminationReason.STEP_LIMIT
    assert session.patch is not None  # fix generation always runs


def test_model_failure_on_first_hypothesis(tiny_bug):
    session = run_session(
        tiny_bug, SessionConfig(malformed_retry_limit=0), scripted([{"text": "???"}] * 1), InProcessAdapter()
    )
    assert session.steps == []
    assert session.termination_reason is TerminationReason.MODEL_FAILURE
    assert session.patch is None


def test_model_failure_on_conclusion_keeps_step(tiny_bug):
    entries = [hyp("RUN")]  # no conclusion scripted: backend exhausts
    session = run_session(tiny_bug, SessionConfig(), scripted(entries), InProcessAdapter())
    assert len(session.steps) == 1
    assert session.steps[0].observation is not None
    assert session.steps[0].conclusion == ""
    assert session.termination_reason is TerminationReason.MODEL_FAILURE


def test_driver_failure_records_partial_step(tiny_bug):
    entries = [hyp("stop at lib.py:2 ; run ; print x")]
    adapter = ScriptedAdapter(fail=True)
    adapter.test_result = TestResult(status="fail", exception_type="AssertionError", exception_message="x")
    session = run_session(tiny_bug, SessionConfig(), scripted(entries), adapter)
    assert session.termination_reason is TerminationReason.DRIVER_FAILURE
    assert session.steps[0].observation is None
    serialize_session(session)  # failure tails still serialize


def test_malformed_fix_keeps_session_without_patch(tiny_bug):
    entries = [
        hyp("RUN"),
        con("The failure reproduces, so the hypothesis is supported. <DEBUGGING DONE>"),
        {"text": "\n```"},  # empty fenced block, repeated for every retry
        {"text": "\n```"},
        {"text": "\n```"},
    ]
    session = run_session(tiny_bug, SessionConfig(), scripted(entries), InProcessAdapter())
    assert session.confident
    assert session.termination_reason is TerminationReason.DONE_TOKEN
    assert session.patch is None


def test_reproducibility_check_observes_reported_failure(tiny_bug):
    from autosd.orchestrator import check_reproducible

    observation = check_reproducible(tiny_bug, InProcessAdapter(), timeout=10)
    observed_type = observation.rendered.split(":", 1)[0]
    assert tiny_bug.error_message.startswith(observed_type)


def test_unreproducible_bug_raises(tmp_path):
    bug = make_bug(
        tmp_path,
        source="def f(x):\n    return x + 1\n",
        test_body="from lib import f\nassert f(1) == 2\n",
        span=(1, 2),
    )
    with pytest.raises(BugNotReproducible):
        run_session(bug, SessionConfig(), scripted([]), InProcessAdapter())


def test_ablation_mode_never_touches_adapter_in_loop(tiny_bug):
    entries = [
        hyp("stop at lib.py:2 ; run ; print x"),
        {"text": " x was 2\n"},  # hallucinated observation
        con("The hypothesis is rejected."),
        hyp('REPLACE(2, "x + 2", "x + 1") AND RUN'),
        {"text": " [No exception triggered]\n"},
        con("The test passes, so the hypothesis is supported. <DEBUGGING DONE>"),
        fix(),
    ]
    audit = AdapterAudit()
    config = SessionConfig(ablate_debugger=True)
    session = run_session(tiny_bug, config, scripted(entries), InProcessAdapter(), audit=audit)
    assert audit.count("loop") == 0
    assert audit.count("preflight") == 1
    assert all(not s.observation.grounded for s in session.steps)
    assert all(s.observation.detail is None for s in session.steps)
    assert session.steps[0].observation.rendered == "x was 2"


def _pack_with_failures(n_ok: int, n_bad: int) -> ReplayBackend:
    good = [
        hyp("RUN"),
        con("The failure reproduces, so the hypothesis is supported. <DEBUGGING DONE>"),
        fix(),
    ]
    bad = [{"text": "???"}]
    return ReplayBackend([good] * n_ok + [bad] * n_bad)


def test_run_repair_counts_and_persistence(tiny_bug, tmp_path):
    config = SessionConfig(patch_budget=4, malformed_retry_limit=0, random_seed=3)
    sessions = run_repair(
        tiny_bug,
        config,
        _pack_with_failures(4, 0),
        InProcessAdapter(),
        jobs=2,
        out_dir=tmp_path / "out",
        bug_id="tiny",
    )
    assert len(sessions) == 4
    files = sorted((tmp_path / "out" / "sessions" / "tiny").glob("*.session"))
    assert [f.name for f in files] == [f"attempt_{k:02d}.session" for k in range(1, 5)]
    for session in sessions:
        assert session.patch is not None
        assert session.patch.evaluation is PatchEvaluation.PLAUSIBLE
        assert session.patch.needs_manual_review


def test_run_repair_fault_injection(tiny_bug):
    config = SessionConfig(patch_budget=10, malformed_retry_limit=0)
    sessions = run_repair(tiny_bug, config, _pack_with_failures(7, 3), InProcessAdapter(), jobs=1)
    failures = [s for s in sessions if s.termination_reason is TerminationReason.MODEL_FAILURE]
    evaluated = [s for s in sessions if s.patch is not None]
    assert len(failures) == 3
    assert len(evaluated) == 7


def test_run_repair_deterministic_documents(tiny_bug):
    config = SessionConfig(patch_budget=1, random_seed=11)

    def docs():
        sessions = run_repair(
            tiny_bug, config, _pack_with_failures(1, 0), InProcessAdapter(), jobs=1
        )
        return [serialize_session(s) for s in sessions]

    assert docs() == docs()


def test_evaluation_phase_runs_tests_in_ablation(tiny_bug):
    entries = [
        hyp("stop at lib.py:2 ; run ; print x"),
        {"text": " x was 2\n"},
        con("The hypothesis is supported. <DEBUGGING DONE>"),
        fix(),
    ]
    audit = AdapterAudit()
    config = SessionConfig(patch_budget=1, ablate_debugger=True)
    sessions = run_repair(
        tiny_bug, config, ReplayBackend([entries]), InProcessAdapter(), jobs=1, audit=audit
    )
    assert audit.count("loop") == 0
    assert audit.count("evaluation") == 1
    assert sessions[0].patch.evaluation is PatchEvaluation.PLAUSIBLE
