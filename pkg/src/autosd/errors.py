"""Exception taxonomy shared across the package."""
from __future__ import annotations


class AutosdError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(AutosdError):
    """A session document violates the schema or a model invariant."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class PromptTooLargeError(AutosdError):
    """Rendered prompt exceeded the configured hard byte cap."""


class MalformedModelOutput(AutosdError):
    """Model output could not be parsed into the expected structure."""


class BackendUnavailable(AutosdError):
    """The completion backend failed at the transport level."""


class ReplayExhausted(BackendUnavailable):
    """A replay script ran out of completions."""


class ReplayMismatch(BackendUnavailable):
    """A replay entry's prompt-prefix assertion failed."""


class DslSyntaxError(AutosdError):
    """Experiment script failed to parse.

    Carries the byte offset of the failure inside the input and the set of
    token descriptions that would have been accepted there.
    """

    def __init__(self, message: str, position: int, expected: set[str] | None = None):
        detail = f"at offset {position}: {message}"
        if expected:
            detail += f" (expected one of: {', '.join(sorted(expected))})"
        super().__init__(detail)
        self.position = position
        self.expected = expected or set()


class MixedScriptError(DslSyntaxError):
    """Probe and edit vocabulary were combined in one script."""


class AdapterFailure(AutosdError):
    """The execution adapter crashed or produced unparseable output."""


class EditTargetNotFound(AutosdError):
    """An edit's old expression was absent from the target line."""

    def __init__(self, line: int, old_expr: str):
        super().__init__(f"line {line} does not contain {old_expr!r}")
        self.line = line
        self.old_expr = old_expr


class LineOutOfRange(AutosdError):
    """An edit addressed a line outside the file."""

    def __init__(self, line: int, file_length: int):
        super().__init__(f"line {line} is outside the file (1..{file_length})")
        self.line = line
        self.file_length = file_length


class ReplacementSyntaxError(AutosdError):
    """Generated replacement method is not syntactically valid."""


class SpanMismatch(AutosdError):
    """Snapshot content no longer matches the origin at the method span."""


class BugNotReproducible(AutosdError):
    """The failing test command passed on the unmodified project."""


class CorpusTestFailure(AutosdError):
    """A corpus entry's baseline test suite does not pass."""


class ParseError(AutosdError):
    """Source handed to the mutant enumerator does not parse."""
