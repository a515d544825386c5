from __future__ import annotations

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autosd.errors import SchemaError
from autosd.model import (
    DONE_TOKEN,
    SCHEMA_VERSION,
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
from autosd.observations import (
    BreakpointNotHit,
    ExceptionRaised,
    ExperimentError,
    LoopValues,
    NoException,
    Observation,
    SingleValue,
    Timeout,
)

from conftest import make_session, make_step


def _bug() -> BugContext:
    return BugContext(
        project_root="/tmp/project",
        buggy_file="lib.py",
        method_span=(1, 4),
        buggy_source="   1  def f():\n   2      return 0",
        failing_test_command="python run_test.py",
        error_message="AssertionError: boom",
    )


def test_empty_session_round_trip():
    session = RepairSession(bug=_bug(), config=SessionConfig())
    doc = serialize_session(session)
    data = json.loads(doc)
    assert data["schema"] == SCHEMA_VERSION
    assert data["steps"] == [] and data["confident"] is False
    assert deserialize_session(doc) == session


def test_done_session_forced_flags():
    session = make_session(_bug(), verdicts=[Verdict.SUPPORTED], done_last=True)
    doc = serialize_session(session)
    data = json.loads(doc)
    assert data["confident"] is True
    assert data["termination_reason"] == "DoneToken"
    assert deserialize_session(doc) == session


def test_serialization_is_byte_stable():
    session = make_session(_bug(), verdicts=[Verdict.REJECTED, Verdict.SUPPORTED], done_last=True)
    assert serialize_session(session) == serialize_session(session)


def test_steps_exceeding_max_steps_rejected():
    session = make_session(_bug(), verdicts=[Verdict.SUPPORTED])
    doc = serialize_session(session)
    data = json.loads(doc)
    data["config"]["max_steps"] = 0
    with pytest.raises(SchemaError):
        deserialize_session(json.dumps(data))


def test_verdict_error_combinations():
    # Only Undecided may accompany an experiment-error observation.
    error_obs = Observation.from_detail(ExperimentError(message="nope"))
    for verdict in Verdict:
        session = RepairSession(
            bug=_bug(),
            config=SessionConfig(),
            steps=[make_step(1, verdict=verdict, observation=error_obs)],
        )
        if verdict is Verdict.UNDECIDED:
            assert deserialize_session(serialize_session(session)).steps[0].verdict is verdict
        else:
            with pytest.raises(SchemaError) as err:
                serialize_session(session)
            assert "verdict" in err.value.path


def test_confident_requires_done_step():
    session = RepairSession(bug=_bug(), config=SessionConfig(), confident=True)
    with pytest.raises(SchemaError):
        serialize_session(session)


def test_done_requires_token_in_conclusion():
    step = make_step(1, verdict=Verdict.SUPPORTED)
    step.done = True  # conclusion lacks the token
    session = RepairSession(
        bug=_bug(),
        config=SessionConfig(),
        steps=[step],
        confident=True,
        termination_reason=TerminationReason.DONE_TOKEN,
    )
    with pytest.raises(SchemaError):
        serialize_session(session)
    step.conclusion += f" {DONE_TOKEN}"
    assert deserialize_session(serialize_session(session)).confident


def test_missing_observation_only_on_failure_tail():
    step = make_step(1)
    step.observation = None
    session = RepairSession(bug=_bug(), config=SessionConfig(), steps=[step])
    with pytest.raises(SchemaError):
        serialize_session(session)
    session.termination_reason = TerminationReason.DRIVER_FAILURE
    assert deserialize_session(serialize_session(session)).steps[0].observation is None


def test_schema_error_carries_path():
    session = make_session(_bug(), verdicts=[Verdict.SUPPORTED])
    data = json.loads(serialize_session(session))
    data["steps"][0]["verdict"] = "Maybe"
    with pytest.raises(SchemaError) as err:
        deserialize_session(json.dumps(data))
    assert err.value.path == "steps[0].verdict"
    del data["steps"][0]["verdict"]
    with pytest.raises(SchemaError):
        deserialize_session(json.dumps(data))


def test_unknown_schema_version_rejected():
    data = json.loads(serialize_session(RepairSession(bug=_bug(), config=SessionConfig())))
    data["schema"] = "autosd-session/999"
    with pytest.raises(SchemaError):
        deserialize_session(json.dumps(data))


_details = st.one_of(
    st.builds(SingleValue, value=st.text(max_size=20)),
    st.builds(LoopValues, values=st.lists(st.text(max_size=8), min_size=2, max_size=5).map(tuple)),
    st.just(NoException()),
    st.builds(ExceptionRaised, type=st.sampled_from(["ValueError", "KeyError"]), message=st.text(max_size=20)),
    st.builds(BreakpointNotHit, path=st.just("lib.py"), line=st.integers(1, 99)),
    st.builds(ExperimentError, message=st.text(max_size=20)),
    st.builds(Timeout, seconds=st.sampled_from([1.0, 30.0, 2.5])),
)


@st.composite
def _sessions(draw) -> RepairSession:
    config = SessionConfig(
        max_steps=draw(st.integers(1, 4)),
        patch_budget=draw(st.integers(1, 10)),
        ablate_debugger=draw(st.booleans()),
        random_seed=draw(st.integers(0, 999)),
    )
    n_steps = draw(st.integers(0, config.max_steps))
    steps: list[TraceStep] = []
    done_last = False
    failure_tail = False
    for i in range(1, n_steps + 1):
        is_last = i == n_steps
        if config.ablate_debugger:
            observation = Observation.hallucinated(draw(st.text(max_size=30)))
        else:
            observation = Observation.from_detail(draw(_details))
        if is_last and draw(st.booleans()) is False and not config.ablate_debugger:
            pass
        verdict = (
            Verdict.UNDECIDED
            if observation.is_experiment_error
            else draw(st.sampled_from(list(Verdict)))
        )
        done = is_last and draw(st.booleans())
        conclusion = draw(st.text(max_size=30)) + f" the hypothesis is {verdict.value.lower()}"
        if done:
            conclusion += f" {DONE_TOKEN}"
        steps.append(
            TraceStep(
                index=i,
                hypothesis=draw(st.text(min_size=1, max_size=40)),
                prediction=draw(st.text(min_size=1, max_size=40)),
                experiment_raw="stop at lib.py:2 ; run ; print x",
                observation=observation,
                conclusion=conclusion,
                verdict=verdict,
                done=done,
            )
        )
        if done:
            done_last = True
    if steps and not done_last and draw(st.booleans()):
        steps[-1].observation = None
        steps[-1].done = False
        failure_tail = True
    patch = draw(
        st.one_of(
            st.none(),
            st.builds(
                PatchCandidate,
                replacement_method_source=st.text(min_size=1, max_size=40),
                applied_diff=st.text(max_size=60),
                evaluation=st.sampled_from(list(PatchEvaluation)),
                needs_manual_review=st.booleans(),
            ),
        )
    )
    if done_last:
        termination = TerminationReason.DONE_TOKEN
    elif failure_tail:
        termination = draw(
            st.sampled_from([TerminationReason.MODEL_FAILURE, TerminationReason.DRIVER_FAILURE])
        )
    else:
        termination = draw(
            st.sampled_from([TerminationReason.STEP_LIMIT, TerminationReason.MODEL_FAILURE])
        )
    return RepairSession(
        bug=_bug(),
        config=config,
        steps=steps,
        patch=patch,
        confident=done_last,
        termination_reason=termination,
    )


@settings(max_examples=200)
@given(_sessions())
def test_round_trip_property(session):
    assert deserialize_session(serialize_session(session)) == session
