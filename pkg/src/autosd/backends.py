"""Completion backends and parsing of raw model output into step fragments.

Two backends ship with the package: an HTTP chat-completion client configured
through the ``AUTOSD_API_BASE`` / ``AUTOSD_API_KEY`` / ``AUTOSD_MODEL``
environment variables, and a deterministic replay backend that consumes a
scripted list of completions (``*.replay`` files, one JSON document per
session; a pack file carries one document per attempt).
"""
from __future__ import annotations

import json
import os
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from .errors import BackendUnavailable, MalformedModelOutput, ReplayExhausted, ReplayMismatch
from .model import DONE_TOKEN, Verdict
from .prompting import CONCLUSION_CUE, HYPOTHESIS_CUE, OBSERVATION_CUE, PromptDocument, PromptMode

DEFAULT_MAX_TOKENS = 1024
DEFAULT_TEMPERATURE = 0.7


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    stop_sequences: tuple[str, ...]
    max_tokens: int = DEFAULT_MAX_TOKENS
    temperature: float = DEFAULT_TEMPERATURE
    seed: int | None = None


@dataclass(frozen=True)
class StepFragment:
    hypothesis: str
    prediction: str
    experiment_raw: str


class ModelBackend(Protocol):
    @property
    def identity(self) -> str: ...

    def complete(self, request: CompletionRequest) -> str: ...

    def for_attempt(self, attempt_index: int) -> "ModelBackend": ...


def apply_stop_sequences(text: str, stop_sequences: tuple[str, ...]) -> str:
    """Truncate at the earliest stop sequence, like a sampling API would."""
    cut = len(text)
    for stop in stop_sequences:
        idx = text.find(stop)
        if idx != -1:
            cut = min(cut, idx)
    return text[:cut]


class HttpBackend:
    """Chat-completion-style HTTP client.

    Sampling temperature defaults to 0.7 so the independent patch attempts
    stay diverse; the seed is forwarded when the server supports one.
    """

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        model: str | None = None,
        *,
        transport_retries: int = 2,
        timeout: float = 120.0,
    ):
        self.base_url = (base_url or os.environ.get("AUTOSD_API_BASE", "")).rstrip("/")
        self.api_key = api_key or os.environ.get("AUTOSD_API_KEY", "")
        self.model = model or os.environ.get("AUTOSD_MODEL", "")
        self.transport_retries = transport_retries
        self.timeout = timeout
        if not self.base_url or not self.model:
            raise BackendUnavailable(
                "HTTP backend needs AUTOSD_API_BASE and AUTOSD_MODEL (AUTOSD_API_KEY optional)"
            )

    @property
    def identity(self) -> str:
        return f"http:{self.model}"

    def for_attempt(self, attempt_index: int) -> "HttpBackend":
        return self

    def complete(self, request: CompletionRequest) -> str:
        import requests

        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
            "stop": list(request.stop_sequences),
        }
        if request.seed is not None:
            payload["seed"] = request.seed
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for _ in range(self.transport_retries + 1):
            try:
                response = requests.post(
                    f"{self.base_url}/chat/completions",
                    json=payload,
                    headers=headers,
                    timeout=self.timeout,
                )
                response.raise_for_status()
                body = response.json()
                text = body["choices"][0]["message"]["content"]
                return apply_stop_sequences(text, request.stop_sequences)
            except Exception as exc:  # noqa: BLE001 - every transport error retries
                last_error = exc
        raise BackendUnavailable(f"completion request failed: {last_error}") from last_error


@dataclass
class _ReplayCursor:
    """Per-session view over one scripted completion list."""

    entries: list[dict]
    name: str
    position: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def identity(self) -> str:
        return f"replay:{self.name}"

    def for_attempt(self, attempt_index: int) -> "_ReplayCursor":
        return self

    def complete(self, request: CompletionRequest) -> str:
        with self.lock:
            if self.position >= len(self.entries):
                raise ReplayExhausted(f"{self.name}: no completion left for request")
            entry = self.entries[self.position]
            self.position += 1
        prefix = entry.get("expect_prompt_prefix")
        if prefix is not None and not request.prompt.startswith(prefix):
            raise ReplayMismatch(
                f"{self.name}: prompt does not start with the scripted prefix {prefix!r}"
            )
        return apply_stop_sequences(entry["text"], request.stop_sequences)


class ReplayBackend:
    """Deterministic backend that replays scripted completions.

    Script format (JSON): either a single list of entries (one session) or
    ``{"sessions": [[entry, ...], ...]}`` (one document per attempt).  Each
    entry is ``{"text": "...", "expect_prompt_prefix": "..."?}``.
    """

    def __init__(self, sessions: list[list[dict]], name: str = "<memory>"):
        if not sessions:
            raise BackendUnavailable(f"{name}: replay script holds no sessions")
        self._sessions = sessions
        self.name = name

    @classmethod
    def load(cls, path: str | Path) -> "ReplayBackend":
        path = Path(path)
        data = json.loads(path.read_text(encoding="utf-8"))
        if isinstance(data, list):
            sessions = [data]
        elif isinstance(data, dict) and isinstance(data.get("sessions"), list):
            sessions = data["sessions"]
        elif isinstance(data, dict) and isinstance(data.get("completions"), list):
            sessions = [data["completions"]]
        else:
            raise BackendUnavailable(f"{path}: unrecognized replay script layout")
        return cls(sessions, name=path.name)

    @property
    def identity(self) -> str:
        return f"replay:{self.name}"

    def for_attempt(self, attempt_index: int) -> _ReplayCursor:
        if len(self._sessions) == 1:
            entries = self._sessions[0]
        else:
            try:
                entries = self._sessions[attempt_index]
            except IndexError:
                raise ReplayExhausted(
                    f"{self.name}: no session document for attempt {attempt_index}"
                ) from None
        return _ReplayCursor(entries=list(entries), name=f"{self.name}[{attempt_index}]")

    def complete(self, request: CompletionRequest) -> str:
        raise BackendUnavailable("replay backend completes through per-attempt cursors")


def _prompt_text(doc: PromptDocument | str) -> str:
    return doc.text() if isinstance(doc, PromptDocument) else doc


_HEADER_SPLIT = re.compile(r"^[ \t]*(Prediction|Experiment)[ \t]*:", re.MULTILINE)


def parse_step_fragment(completion: str) -> StepFragment:
    """Split a hypothesis-phase completion into its three fields.

    The completion starts right after the ``Hypothesis:`` cue, so the text up
    to the ``Prediction:`` header is the hypothesis.  The experiment is the
    first backtick span after ``Experiment:``; with several spans, the first
    one wins.
    """
    pieces = _HEADER_SPLIT.split(completion)
    # pieces: [hypothesis, header, text, header, text, ...]
    fields = {"hypothesis": pieces[0]}
    for header, text in zip(pieces[1::2], pieces[2::2]):
        fields.setdefault(header.lower(), text)
    if "prediction" not in fields or "experiment" not in fields:
        raise MalformedModelOutput("completion lacks a Prediction: or Experiment: header")
    span = re.search(r"`+", fields["experiment"])
    if not span:
        raise MalformedModelOutput("experiment is not wrapped in backticks")
    fence = span.group(0)
    rest = fields["experiment"][span.end() :]
    close = rest.find(fence)
    if close == -1:
        raise MalformedModelOutput("experiment backtick span is not closed")
    hypothesis = fields["hypothesis"].strip()
    prediction = fields["prediction"].strip()
    experiment_raw = rest[:close].strip()
    if not hypothesis or not prediction or not experiment_raw:
        raise MalformedModelOutput("hypothesis, prediction and experiment must be nonempty")
    return StepFragment(hypothesis=hypothesis, prediction=prediction, experiment_raw=experiment_raw)


def _complete_with_retries(
    backend: ModelBackend,
    request: CompletionRequest,
    parser,
    retry_limit: int,
):
    last_error: MalformedModelOutput | None = None
    for _ in range(retry_limit + 1):
        text = backend.complete(request)
        try:
            return parser(text)
        except MalformedModelOutput as exc:
            last_error = exc
    raise last_error  # type: ignore[misc]


def request_hypothesis(
    backend: ModelBackend,
    doc: PromptDocument | str,
    *,
    retry_limit: int = 2,
    seed: int | None = None,
    temperature: float = DEFAULT_TEMPERATURE,
) -> StepFragment:
    """Ask for the next hypothesis/prediction/experiment triple."""
    request = CompletionRequest(
        prompt=_prompt_text(doc),
        stop_sequences=(OBSERVATION_CUE,),
        seed=seed,
        temperature=temperature,
    )
    return _complete_with_retries(backend, request, parse_step_fragment, retry_limit)


_VERDICT_KEYWORDS = (
    ("reject", Verdict.REJECTED),
    ("support", Verdict.SUPPORTED),
    ("undecided", Verdict.UNDECIDED),
)


def parse_verdict(conclusion: str) -> Verdict:
    """First verdict keyword by text position wins (case-insensitive)."""
    lowered = conclusion.lower()
    hits = [(lowered.find(k), verdict) for k, verdict in _VERDICT_KEYWORDS]
    hits = [(pos, verdict) for pos, verdict in hits if pos != -1]
    if not hits:
        raise MalformedModelOutput(f"no verdict keyword in conclusion: {conclusion!r}")
    return min(hits)[1]


def request_conclusion(
    backend: ModelBackend,
    doc: PromptDocument | str,
    *,
    retry_limit: int = 2,
    seed: int | None = None,
    temperature: float = DEFAULT_TEMPERATURE,
) -> tuple[str, Verdict, bool]:
    """Ask for the conclusion; returns (text, verdict, done flag)."""
    request = CompletionRequest(
        prompt=_prompt_text(doc),
        stop_sequences=(HYPOTHESIS_CUE,),
        seed=seed,
        temperature=temperature,
    )

    def parser(text: str) -> tuple[str, Verdict, bool]:
        conclusion = text.strip()
        return conclusion, parse_verdict(conclusion), DONE_TOKEN in conclusion

    return _complete_with_retries(backend, request, parser, retry_limit)


def request_fix(
    backend: ModelBackend,
    doc: PromptDocument | str,
    *,
    retry_limit: int = 2,
    seed: int | None = None,
    temperature: float = DEFAULT_TEMPERATURE,
    max_tokens: int = 2 * DEFAULT_MAX_TOKENS,
) -> str:
    """Ask for the repaired method; prose after the closing fence is dropped."""
    if isinstance(doc, PromptDocument) and doc.mode is not PromptMode.FIX_GENERATION:
        raise ValueError("fix requests need a FixGeneration document")
    request = CompletionRequest(
        prompt=_prompt_text(doc),
        stop_sequences=("```",),
        seed=seed,
        temperature=temperature,
        max_tokens=max_tokens,
    )

    def parser(text: str) -> str:
        code = text.split("```", 1)[0]
        code = code.strip("\n")
        # Tolerate a leading fence language tag echoed by the model.
        first, _, rest = code.partition("\n")
        if first.strip().lower() in ("python", "py") and rest:
            code = rest
        if not code.strip():
            raise MalformedModelOutput("fix completion held no code")
        return code

    return _complete_with_retries(backend, request, parser, retry_limit)


def hallucinate_observation(
    backend: ModelBackend,
    doc: PromptDocument | str,
    *,
    seed: int | None = None,
    temperature: float = DEFAULT_TEMPERATURE,
) -> str:
    """Debugger-ablation mode: the model writes the observation itself."""
    request = CompletionRequest(
        prompt=_prompt_text(doc),
        stop_sequences=(CONCLUSION_CUE,),
        seed=seed,
        temperature=temperature,
    )
    return backend.complete(request).strip()
