"""Experiment script language: debugger probes and edit-and-run scripts.

Grammar (whitespace-insensitive, command keywords case-insensitive; see
docs/dsl.md for the normative description):

    probe   := STOP "at"? LOC SEP RUN_KW SEP PRINT EXPR
    STOP    := "stop" | "b" | "break"
    RUN_KW  := "run" | "c" | "continue"
    PRINT   := "print" | "p"
    SEP     := ";" | ";;"
    LOC     := PATH ":" INTEGER

    edits   := EDIT ("AND" EDIT)* ("AND" "RUN")? | "RUN"
    EDIT    := "REPLACE(" INT "," STR "," STR ")"
             | "ADD(" INT "," STR ")"
             | "DEL(" INT "," STR ")"
    STR     := double-quoted; backslash escapes only for quote and backslash

A probe carries exactly one expression (one print).  Probe and edit
vocabulary may not be mixed in one script.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from .errors import DslSyntaxError, MixedScriptError

STOP_WORDS = {"stop", "b", "break"}
RUN_WORDS = {"run", "c", "continue"}
PRINT_WORDS = {"print", "p"}
EDIT_WORDS = {"replace", "add", "del"}


class EditKind(str, Enum):
    REPLACE = "Replace"
    ADD = "Add"
    DELETE = "Delete"


@dataclass(frozen=True)
class Edit:
    kind: EditKind
    line: int
    old_expr: str | None = None
    new_expr: str | None = None

    def __post_init__(self):
        if self.kind is EditKind.REPLACE and (self.old_expr is None or self.new_expr is None):
            raise ValueError("Replace requires old_expr and new_expr")
        if self.kind is EditKind.ADD and (self.new_expr is None or self.old_expr is not None):
            raise ValueError("Add requires only new_expr")
        if self.kind is EditKind.DELETE and (self.old_expr is None or self.new_expr is not None):
            raise ValueError("Delete requires only old_expr")


@dataclass(frozen=True)
class DebuggerProbe:
    path: str
    line: int
    expression: str


@dataclass(frozen=True)
class EditScript:
    edits: tuple[Edit, ...]
    run_test: bool = False

    def __post_init__(self):
        if not self.edits and not self.run_test:
            raise ValueError("edit script needs edits or RUN")


ExperimentScript = DebuggerProbe | EditScript


class _Cursor:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def at_end(self) -> bool:
        self.skip_ws()
        return self.pos >= len(self.text)

    def peek_word(self) -> tuple[str, int]:
        """Next run of word characters (empty string if none), and its offset."""
        self.skip_ws()
        m = re.match(r"[A-Za-z_]\w*", self.text[self.pos :])
        if not m:
            return "", self.pos
        return m.group(0), self.pos

    def take_word(self) -> tuple[str, int]:
        word, start = self.peek_word()
        self.pos = start + len(word)
        return word, start

    def fail(self, message: str, expected: set[str] | None = None, pos: int | None = None):
        raise DslSyntaxError(message, self.pos if pos is None else pos, expected)


def parse_experiment(raw: str) -> ExperimentScript:
    """Parse the backtick-span content of a model-written experiment."""
    cur = _Cursor(raw)
    word, start = cur.peek_word()
    lowered = word.lower()
    if lowered in STOP_WORDS:
        return _parse_probe(cur)
    if lowered in EDIT_WORDS or lowered == "run":
        return _parse_edits(cur)
    cur.fail(
        f"script must start with a probe or edit command, got {word or raw[start:start + 10]!r}",
        expected=STOP_WORDS | {"REPLACE", "ADD", "DEL", "RUN"},
        pos=start,
    )


def _parse_sep(cur: _Cursor) -> None:
    cur.skip_ws()
    if cur.pos >= len(cur.text) or cur.text[cur.pos] != ";":
        cur.fail("missing separator", expected={";"})
    cur.pos += 1
    if cur.pos < len(cur.text) and cur.text[cur.pos] == ";":
        cur.pos += 1


def _parse_probe(cur: _Cursor) -> DebuggerProbe:
    cur.take_word()  # stop keyword
    word, _ = cur.peek_word()
    if word.lower() == "at":
        cur.take_word()

    cur.skip_ws()
    loc_start = cur.pos
    while cur.pos < len(cur.text) and cur.text[cur.pos] != ";" and not cur.text[cur.pos].isspace():
        cur.pos += 1
    loc = cur.text[loc_start : cur.pos]
    if ":" not in loc:
        cur.fail("breakpoint location must be path:line", expected={"PATH:LINE"}, pos=loc_start)
    path, _, line_text = loc.rpartition(":")
    if not path:
        cur.fail("breakpoint location has an empty path", pos=loc_start)
    if not line_text.isdigit() or int(line_text) < 1:
        cur.fail("breakpoint line must be a positive integer", pos=loc_start + len(path) + 1)

    _parse_sep(cur)
    word, start = cur.take_word()
    if word.lower() not in RUN_WORDS:
        if word.lower() in EDIT_WORDS or word.upper() == "AND":
            raise MixedScriptError("edit command inside a probe script", start)
        cur.fail(f"expected run command, got {word!r}", expected=RUN_WORDS, pos=start)
    _parse_sep(cur)
    word, start = cur.take_word()
    if word.lower() not in PRINT_WORDS:
        cur.fail(f"expected print command, got {word!r}", expected=PRINT_WORDS, pos=start)

    cur.skip_ws()
    expr = cur.text[cur.pos :].strip()
    if not expr:
        cur.fail("print needs an expression", expected={"EXPR"})
    extra_sep = expr.find(";")
    if extra_sep != -1:
        cur.fail(
            "a probe may contain exactly one print command",
            expected={"end of script"},
            pos=cur.pos + extra_sep,
        )
    if re.search(r"\b(REPLACE|ADD|DEL)\s*\(", expr, re.IGNORECASE):
        raise MixedScriptError("edit command inside a probe expression", cur.pos)
    return DebuggerProbe(path=path, line=int(line_text), expression=expr)


def _parse_string(cur: _Cursor) -> str:
    cur.skip_ws()
    if cur.pos >= len(cur.text) or cur.text[cur.pos] != '"':
        cur.fail("expected a double-quoted string", expected={'"'})
    cur.pos += 1
    out: list[str] = []
    while True:
        if cur.pos >= len(cur.text):
            cur.fail("unterminated string", expected={'"'})
        ch = cur.text[cur.pos]
        if ch == "\\":
            if cur.pos + 1 >= len(cur.text) or cur.text[cur.pos + 1] not in ('"', "\\"):
                cur.fail("backslash may only escape a quote or a backslash")
            out.append(cur.text[cur.pos + 1])
            cur.pos += 2
            continue
        if ch == '"':
            cur.pos += 1
            return "".join(out)
        out.append(ch)
        cur.pos += 1


def _parse_int(cur: _Cursor) -> int:
    cur.skip_ws()
    m = re.match(r"\d+", cur.text[cur.pos :])
    if not m:
        cur.fail("expected a line number", expected={"INTEGER"})
    cur.pos += len(m.group(0))
    value = int(m.group(0))
    if value < 1:
        cur.fail("line numbers are 1-based", pos=cur.pos - len(m.group(0)))
    return value


def _expect_char(cur: _Cursor, ch: str) -> None:
    cur.skip_ws()
    if cur.pos >= len(cur.text) or cur.text[cur.pos] != ch:
        cur.fail(f"expected {ch!r}", expected={ch})
    cur.pos += 1


def _parse_edits(cur: _Cursor) -> EditScript:
    edits: list[Edit] = []
    run_test = False
    while True:
        word, start = cur.take_word()
        lowered = word.lower()
        if lowered == "run":
            run_test = True
            break
        if lowered in STOP_WORDS or lowered in PRINT_WORDS:
            raise MixedScriptError("probe command inside an edit script", start)
        if lowered not in EDIT_WORDS:
            cur.fail(
                f"expected an edit command, got {word!r}",
                expected={"REPLACE", "ADD", "DEL", "RUN"},
                pos=start,
            )
        _expect_char(cur, "(")
        line = _parse_int(cur)
        _expect_char(cur, ",")
        first = _parse_string(cur)
        if lowered == "replace":
            _expect_char(cur, ",")
            second = _parse_string(cur)
            edits.append(Edit(EditKind.REPLACE, line, old_expr=first, new_expr=second))
        elif lowered == "add":
            edits.append(Edit(EditKind.ADD, line, new_expr=first))
        else:
            edits.append(Edit(EditKind.DELETE, line, old_expr=first))
        _expect_char(cur, ")")

        if cur.at_end():
            break
        cur.skip_ws()
        if cur.text[cur.pos] == ";":
            raise MixedScriptError("probe separator inside an edit script", cur.pos)
        word, start = cur.take_word()
        if word.upper() != "AND":
            cur.fail(f"expected AND between edit commands, got {word!r}", expected={"AND"}, pos=start)

    if not cur.at_end():
        cur.skip_ws()
        if cur.text[cur.pos] == ";":
            raise MixedScriptError("probe separator inside an edit script", cur.pos)
        cur.fail("RUN must be the final command", expected={"end of script"})
    return EditScript(edits=tuple(edits), run_test=run_test)


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def render_experiment(script: ExperimentScript) -> str:
    """Canonical single form; ``parse_experiment(render_experiment(s)) == s``."""
    if isinstance(script, DebuggerProbe):
        return f"stop at {script.path}:{script.line} ; run ; print {script.expression}"
    parts = []
    for edit in script.edits:
        if edit.kind is EditKind.REPLACE:
            parts.append(f"REPLACE({edit.line}, {_quote(edit.old_expr)}, {_quote(edit.new_expr)})")
        elif edit.kind is EditKind.ADD:
            parts.append(f"ADD({edit.line}, {_quote(edit.new_expr)})")
        else:
            parts.append(f"DEL({edit.line}, {_quote(edit.old_expr)})")
    if script.run_test:
        parts.append("RUN")
    return " AND ".join(parts)
