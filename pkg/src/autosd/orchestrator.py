"""The hypothesize-observe-conclude loop and multi-attempt repair runs.

Each step asks the model for a hypothesis/prediction/experiment triple, runs
the experiment against a disposable snapshot (or lets the model invent the
observation in debugger-ablation mode), then asks the model to conclude.  The
loop stops at the done token or the step limit; fix generation is always
attempted afterwards, on a prompt with every rejected hypothesis pruned.
"""
from __future__ import annotations

import concurrent.futures
import os
from pathlib import Path
from typing import Callable

from . import backends, dsl, prompting
from .driver import (
    AdapterAudit,
    ExecutionAdapter,
    execute_probe,
    execute_run,
    run_failing_test,
)
from .errors import (
    AdapterFailure,
    AutosdError,
    BackendUnavailable,
    BugNotReproducible,
    DslSyntaxError,
    EditTargetNotFound,
    LineOutOfRange,
    MalformedModelOutput,
    ReplacementSyntaxError,
    SpanMismatch,
)
from .model import (
    BugContext,
    Observation,
    PatchCandidate,
    RepairSession,
    SessionConfig,
    TerminationReason,
    TraceStep,
    Verdict,
    serialize_session,
    validate_session,
)
from .observations import ExperimentError, NoException
from .patching import ProjectSnapshot, apply_edits, apply_method_patch

EventSink = Callable[[dict], None]


def _emit(events: EventSink | None, **payload) -> None:
    if events is not None:
        events(payload)


class _AuditedAdapter:
    """Wraps an adapter so every invocation lands in the audit log."""

    def __init__(self, adapter: ExecutionAdapter, audit: AdapterAudit):
        self._adapter = adapter
        self._audit = audit
        self.phase = "preflight"

    def probe(self, snapshot_root, file, line, expression, test_command, timeout):
        self._audit.record(self.phase, "probe", f"{file}:{line} print {expression}")
        return self._adapter.probe(snapshot_root, file, line, expression, test_command, timeout)

    def run_test(self, snapshot_root, test_command, timeout):
        self._audit.record(self.phase, "run", test_command)
        return self._adapter.run_test(snapshot_root, test_command, timeout)


def check_reproducible(bug: BugContext, adapter: ExecutionAdapter, timeout: float) -> Observation:
    """The failing test must fail on the pristine project."""
    with ProjectSnapshot.create(bug) as snapshot:
        observation = run_failing_test(adapter, snapshot, bug, timeout)
    if isinstance(observation.detail, NoException):
        raise BugNotReproducible(
            f"{bug.failing_test_command!r} passes on the unmodified project"
        )
    return observation


def _observe(
    adapter: _AuditedAdapter,
    bug: BugContext,
    snapshot: ProjectSnapshot,
    script: dsl.ExperimentScript,
    timeout: float,
) -> Observation:
    snapshot.reset()
    if isinstance(script, dsl.DebuggerProbe):
        return execute_probe(adapter, bug, snapshot, script, timeout)
    try:
        apply_edits(snapshot, script.edits)
    except (EditTargetNotFound, LineOutOfRange) as exc:
        return Observation.from_detail(ExperimentError(message=str(exc)))
    # The observation for an edit script is always the test outcome, whether
    # or not the model wrote the trailing RUN explicitly.
    return execute_run(adapter, snapshot, bug.failing_test_command, timeout)


def run_session(
    bug: BugContext,
    config: SessionConfig,
    backend: backends.ModelBackend,
    adapter: ExecutionAdapter,
    *,
    audit: AdapterAudit | None = None,
    events: EventSink | None = None,
    seed: int | None = None,
    verify_bug: bool = True,
) -> RepairSession:
    """Run one complete repair attempt and return the finished session.

    Model and driver failures do not raise: they are recorded in the
    session's termination reason so batch runs keep going.  Only
    BugNotReproducible propagates.
    """
    audit = audit if audit is not None else AdapterAudit()
    audited = _AuditedAdapter(adapter, audit)
    seed = seed if seed is not None else config.random_seed
    retry_limit = config.malformed_retry_limit
    timeout = config.per_experiment_timeout

    if verify_bug:
        check_reproducible(bug, audited, timeout)

    session = RepairSession(bug=bug, config=config, termination_reason=TerminationReason.STEP_LIMIT)
    doc = prompting.build_initial_prompt(bug)
    snapshot = ProjectSnapshot.create(bug)
    snapshot.dirty = True  # force the first reset to guard against a stale copy
    audited.phase = "loop"
    try:
        for index in range(1, config.max_steps + 1):
            _emit(events, event="step_started", step=index)
            try:
                fragment = backends.request_hypothesis(
                    backend, doc, retry_limit=retry_limit, seed=seed
                )
            except (MalformedModelOutput, BackendUnavailable) as exc:
                _emit(events, event="model_failure", step=index, error=str(exc))
                session.termination_reason = TerminationReason.MODEL_FAILURE
                return _finish(session, None)

            script: dsl.ExperimentScript | None = None
            parse_error: DslSyntaxError | None = None
            try:
                script = dsl.parse_experiment(fragment.experiment_raw)
            except DslSyntaxError as exc:
                parse_error = exc

            step = TraceStep(
                index=index,
                hypothesis=fragment.hypothesis,
                prediction=fragment.prediction,
                experiment_raw=fragment.experiment_raw,
                experiment=script,
            )

            if config.ablate_debugger:
                prompt = prompting.observation_prompt(
                    doc, fragment.hypothesis, fragment.prediction, fragment.experiment_raw
                )
                try:
                    step.observation = Observation.hallucinated(
                        backends.hallucinate_observation(backend, prompt, seed=seed)
                    )
                except BackendUnavailable as exc:
                    _emit(events, event="model_failure", step=index, error=str(exc))
                    session.steps.append(step)
                    session.termination_reason = TerminationReason.MODEL_FAILURE
                    return _finish(session, None)
            elif parse_error is not None:
                step.observation = Observation.from_detail(ExperimentError(message=str(parse_error)))
            else:
                try:
                    step.observation = _observe(audited, bug, snapshot, script, timeout)
                except AdapterFailure as exc:
                    _emit(events, event="driver_failure", step=index, error=str(exc))
                    session.steps.append(step)
                    session.termination_reason = TerminationReason.DRIVER_FAILURE
                    return _finish(session, None)

            prompt = prompting.conclusion_prompt(
                doc,
                fragment.hypothesis,
                fragment.prediction,
                fragment.experiment_raw,
                step.observation.rendered,
            )
            try:
                conclusion, verdict, done = backends.request_conclusion(
                    backend, prompt, retry_limit=retry_limit, seed=seed
                )
            except (MalformedModelOutput, BackendUnavailable) as exc:
                _emit(events, event="model_failure", step=index, error=str(exc))
                session.steps.append(step)
                session.termination_reason = TerminationReason.MODEL_FAILURE
                return _finish(session, None)

            step.conclusion = conclusion
            # An errored experiment cannot support or reject a hypothesis.
            step.verdict = Verdict.UNDECIDED if step.observation.is_experiment_error else verdict
            step.done = done
            session.steps.append(step)
            doc = prompting.append_step(doc, step)
            _emit(events, event="step_finished", step=index, verdict=step.verdict.value, done=done)

            if done:
                session.confident = True
                session.termination_reason = TerminationReason.DONE_TOKEN
                break

        fix_doc = prompting.build_fix_prompt(doc, session.steps)
        audited.phase = "fix"
        try:
            replacement = backends.request_fix(backend, fix_doc, retry_limit=retry_limit, seed=seed)
        except (MalformedModelOutput, BackendUnavailable) as exc:
            # The trace is still a useful explanation; keep the session.
            _emit(events, event="fix_failed", error=str(exc))
            return _finish(session, None)

        snapshot.reset()
        try:
            diff = apply_method_patch(snapshot, bug, replacement)
        except (ReplacementSyntaxError, SpanMismatch) as exc:
            _emit(events, event="patch_rejected", error=str(exc))
            return _finish(session, None)
        patch = PatchCandidate(replacement_method_source=replacement, applied_diff=diff)
        _emit(events, event="patch_generated", noop=not bool(diff))
        return _finish(session, patch)
    finally:
        snapshot.dispose()


def _finish(session: RepairSession, patch: PatchCandidate | None) -> RepairSession:
    session.patch = patch
    validate_session(session)
    return session


def default_jobs(patch_budget: int) -> int:
    return max(1, min(patch_budget, os.cpu_count() or 1))


def run_repair(
    bug: BugContext,
    config: SessionConfig,
    backend: backends.ModelBackend,
    adapter: ExecutionAdapter,
    *,
    jobs: int | None = None,
    audit: AdapterAudit | None = None,
    events: EventSink | None = None,
    out_dir: Path | None = None,
    bug_id: str = "bug",
    suite_command: str | None = None,
) -> list[RepairSession]:
    """Run ``config.patch_budget`` independent attempts, in parallel workers.

    Per-attempt sampling seeds derive from ``config.random_seed`` plus the
    attempt index; no information is shared between attempts.  Every
    generated patch is evaluated for plausibility against ``suite_command``
    (default: the failing test command).  When ``out_dir`` is given, each
    session is persisted under ``sessions/<bug_id>/attempt_<k>.session``.
    """
    from .evaluation import evaluate_patch

    audit = audit if audit is not None else AdapterAudit()
    audited = _AuditedAdapter(adapter, audit)
    check_reproducible(bug, audited, config.per_experiment_timeout)

    def attempt(k: int) -> RepairSession:
        try:
            session_backend = backend.for_attempt(k)
        except BackendUnavailable as exc:
            _emit(events, event="model_failure", attempt=k, error=str(exc))
            return RepairSession(
                bug=bug, config=config, termination_reason=TerminationReason.MODEL_FAILURE
            )
        session = run_session(
            bug,
            config,
            session_backend,
            adapter,
            audit=audit,
            events=events,
            seed=config.random_seed + k,
            verify_bug=False,
        )
        _emit(events, event="attempt_finished", attempt=k, confident=session.confident)
        return session

    jobs = jobs or default_jobs(config.patch_budget)
    indices = range(config.patch_budget)
    if jobs == 1:
        sessions = [attempt(k) for k in indices]
    else:
        with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
            sessions = list(pool.map(attempt, indices))

    started = [s for s in sessions if s.steps or s.patch is not None]
    if not started:
        raise AutosdError("no session could start: every attempt failed before its first step")

    audited.phase = "evaluation"
    for k, session in enumerate(sessions):
        if session.patch is not None:
            outcome = evaluate_patch(
                bug,
                session.patch,
                audited,
                config.per_experiment_timeout,
                suite_command=suite_command,
            )
            _emit(events, event="patch_evaluated", attempt=k, outcome=outcome.evaluation.value)

    if out_dir is not None:
        persist_sessions(sessions, Path(out_dir), bug_id)
    return sessions


def persist_sessions(sessions: list[RepairSession], out_dir: Path, bug_id: str) -> list[Path]:
    target = out_dir / "sessions" / bug_id
    target.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, session in enumerate(sessions, start=1):
        path = target / f"attempt_{k:02d}.session"
        path.write_text(serialize_session(session), encoding="utf-8")
        paths.append(path)
    return paths
