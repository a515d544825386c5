"""Disposable project snapshots, edit application, and final method patches.

Snapshots are working copies of the project under repair.  The canonical
project tree is never modified: one snapshot is created per repair attempt
and reset to the origin's content before every experiment, so each experiment
sees the pristine bug.
"""
from __future__ import annotations

import ast
import difflib
import shutil
import tempfile
import textwrap
from dataclasses import dataclass, field
from pathlib import Path

from .dsl import Edit, EditKind
from .errors import EditTargetNotFound, LineOutOfRange, ReplacementSyntaxError, SpanMismatch
from .model import BugContext


@dataclass
class ProjectSnapshot:
    root: Path
    origin: BugContext
    dirty: bool = False
    _owned: bool = field(default=False, repr=False)

    @classmethod
    def create(cls, bug: BugContext) -> "ProjectSnapshot":
        root = Path(tempfile.mkdtemp(prefix="autosd-snap-"))
        _copy_tree(Path(bug.project_root), root)
        return cls(root=root, origin=bug, _owned=True)

    def reset(self) -> None:
        """Restore the snapshot to the origin's content."""
        if not self.dirty:
            return
        for child in self.root.iterdir():
            if child.is_dir():
                shutil.rmtree(child)
            else:
                child.unlink()
        _copy_tree(Path(self.origin.project_root), self.root)
        self.dirty = False

    def dispose(self) -> None:
        if self._owned and self.root.exists():
            shutil.rmtree(self.root, ignore_errors=True)

    def __enter__(self) -> "ProjectSnapshot":
        return self

    def __exit__(self, *exc_info) -> None:
        self.dispose()


def _copy_tree(src: Path, dst: Path) -> None:
    shutil.copytree(
        src,
        dst,
        dirs_exist_ok=True,
        ignore=shutil.ignore_patterns("__pycache__", "*.pyc", ".git"),
    )


@dataclass(frozen=True)
class EditReport:
    applied: int
    lines_added: int
    lines_removed: int


def apply_edits(snapshot: ProjectSnapshot, edits: list[Edit] | tuple[Edit, ...]) -> EditReport:
    """Apply edits in order against the evolving buggy file.

    Line numbers refer to the file state at application time, so later edits
    see the shifts caused by earlier whole-line insertions and removals.
    Replace and Delete act on the first occurrence of ``old_expr`` within the
    addressed line; a Delete that blanks the line removes the line.
    """
    target = snapshot.root / snapshot.origin.buggy_file
    lines = target.read_text(encoding="utf-8").splitlines(keepends=True)
    added = removed = 0
    for edit in edits:
        if edit.line < 1 or edit.line > len(lines):
            raise LineOutOfRange(edit.line, len(lines))
        idx = edit.line - 1
        if edit.kind is EditKind.ADD:
            anchor = lines[idx]
            indent = anchor[: len(anchor) - len(anchor.lstrip())].rstrip("\n\r")
            lines.insert(idx, f"{indent}{edit.new_expr.strip()}\n")
            added += 1
            continue
        body = lines[idx]
        newline = body[len(body.rstrip("\n\r")) :]
        text = body.rstrip("\n\r")
        assert edit.old_expr is not None
        if edit.old_expr not in text:
            raise EditTargetNotFound(edit.line, edit.old_expr)
        if edit.kind is EditKind.REPLACE:
            lines[idx] = text.replace(edit.old_expr, edit.new_expr or "", 1) + newline
        else:
            stripped = text.replace(edit.old_expr, "", 1)
            if stripped.strip():
                lines[idx] = stripped + newline
            else:
                del lines[idx]
                removed += 1
    snapshot.dirty = True
    target.write_text("".join(lines), encoding="utf-8")
    return EditReport(applied=len(edits), lines_added=added, lines_removed=removed)


def reindent_method(replacement: str, base_indent: str) -> list[str]:
    """Replacement source as file lines, shifted to the original indentation."""
    body = textwrap.dedent(replacement).strip("\n")
    out = []
    for line in body.splitlines():
        out.append(f"{base_indent}{line}\n" if line.strip() else "\n")
    return out


def replace_method_lines(lines: list[str], span: tuple[int, int], replacement: str) -> list[str]:
    """Pure splice of a replacement method over the inclusive 1-based span."""
    start, end = span
    first = lines[start - 1]
    base_indent = first[: len(first) - len(first.lstrip())].rstrip("\n\r")
    return lines[: start - 1] + reindent_method(replacement, base_indent) + lines[end:]


def check_replacement_syntax(replacement: str, language_id: str = "python") -> None:
    """Parse probe: the replacement must be a syntactically valid function."""
    if language_id != "python":
        raise ReplacementSyntaxError(f"unsupported target language {language_id!r}")
    try:
        tree = ast.parse(textwrap.dedent(replacement))
    except SyntaxError as exc:
        raise ReplacementSyntaxError(f"replacement does not parse: {exc}") from None
    if not any(isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)) for node in tree.body):
        raise ReplacementSyntaxError("replacement holds no function definition")


def apply_method_patch(
    snapshot: ProjectSnapshot, bug: BugContext, replacement_method_source: str
) -> str:
    """Replace the buggy method with the generated one; returns a unified diff.

    The replacement is re-indented to the original method's base indentation.
    An empty diff means the model returned the original code (a no-op patch).
    """
    check_replacement_syntax(replacement_method_source, bug.target_language_id)
    target = snapshot.root / bug.buggy_file
    lines = target.read_text(encoding="utf-8").splitlines(keepends=True)
    start, end = bug.method_span
    if end > len(lines):
        raise SpanMismatch(f"method span {bug.method_span} exceeds file length {len(lines)}")
    origin_lines = (
        (Path(bug.project_root) / bug.buggy_file)
        .read_text(encoding="utf-8")
        .splitlines(keepends=True)
    )
    if lines[start - 1 : end] != origin_lines[start - 1 : end]:
        raise SpanMismatch("snapshot no longer matches the origin at the method span")

    new_lines = replace_method_lines(lines, bug.method_span, replacement_method_source)
    diff = "".join(
        difflib.unified_diff(
            lines,
            new_lines,
            fromfile=f"a/{bug.buggy_file}",
            tofile=f"b/{bug.buggy_file}",
            n=3,
        )
    )
    if diff:
        target.write_text("".join(new_lines), encoding="utf-8")
        snapshot.dirty = True
    return diff
