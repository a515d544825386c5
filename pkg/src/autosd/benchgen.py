"""Almost-right bug construction by single-site mutation of correct functions.

Seven mutators generate candidate bugs from a corpus of function+test entries;
a candidate is kept only when exactly one test fails on the mutated source.
Each mutation is a single contiguous byte-span splice, so an inverse splice
can restore the original source byte-identically when one exists.

Reversibility: IfRemover and BinOpRemover bugs (deleted code cannot be
resurrected) and emptied string literals are never reversible; case mutations
of string literals are reversible exactly when the inverse casing applied at
the same site restores the original text; everything else is reversible.

The reverse-template baseline repairs by sampling random inverse applications
on the mutated source until the originally failing test passes.
"""
from __future__ import annotations

import ast
import json
import random
import shutil
import tempfile
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .corpus_runner import (
    SOLUTION_FILE,
    TEST_FILE,
    failing_tests,
    run_entry_subprocess,
    run_entry_tests,
)
from .errors import CorpusTestFailure, ParseError

MANIFEST_VERSION = "autosd-benchmark/1"
MANIFEST_NAME = "manifest.json"
ORIGINAL_FILE = "original_solution.py"


class Mutator(str, Enum):
    INT_LITERAL = "IntLiteral"
    IF_REMOVER = "IfRemover"
    STR_LITERAL = "StrLiteral"
    OPERATOR_CHANGER = "OperatorChanger"
    BINOP_REMOVER = "BinOpRemover"
    AUG_ASSIGN = "AugAssign"
    IF_NEGATOR = "IfNegator"


@dataclass(frozen=True)
class MutationSpec:
    """One applicable mutation: a byte-span splice on the source."""

    mutator: Mutator
    variant: str
    start: int
    end: int
    replacement: str
    lineno: int


@dataclass(frozen=True)
class InverseApplication:
    """One candidate repair move available to the template baseline."""

    op: str
    start: int
    end: int
    replacement: str


@dataclass
class BenchmarkEntry:
    id: str
    name: str
    original_source: str
    mutated_source: str
    test_source: str
    failing_test_id: str
    spec: MutationSpec
    reversible: bool
    method_span: tuple[int, int]


class _ByteSource:
    """Byte-offset arithmetic over a source string (ast offsets are bytes)."""

    def __init__(self, source: str):
        self.text = source
        self.data = source.encode("utf-8")
        self.line_starts = [0]
        for i, byte in enumerate(self.data):
            if byte == 0x0A:
                self.line_starts.append(i + 1)

    def pos(self, lineno: int, col: int) -> int:
        return self.line_starts[lineno - 1] + col

    def node_span(self, node: ast.AST) -> tuple[int, int]:
        return (
            self.pos(node.lineno, node.col_offset),
            self.pos(node.end_lineno, node.end_col_offset),
        )

    def segment(self, start: int, end: int) -> str:
        return self.data[start:end].decode("utf-8")

    def line_start(self, lineno: int) -> int:
        return self.line_starts[lineno - 1]

    def line_end(self, lineno: int) -> int:
        if lineno < len(self.line_starts):
            return self.line_starts[lineno]
        return len(self.data)

    def line_text(self, lineno: int) -> str:
        return self.segment(self.line_start(lineno), self.line_end(lineno))

    def splice(self, start: int, end: int, replacement: str) -> str:
        return (self.data[:start] + replacement.encode("utf-8") + self.data[end:]).decode("utf-8")


def apply_mutation(source: str, spec: MutationSpec) -> str:
    return _ByteSource(source).splice(spec.start, spec.end, spec.replacement)


def _parse(source: str) -> ast.Module:
    try:
        return ast.parse(source)
    except SyntaxError as exc:
        raise ParseError(f"source does not parse: {exc}") from None


def _collect_context(tree: ast.Module) -> tuple[set[int], set[int]]:
    """Node ids of f-string innards and of docstring constants."""
    in_fstring: set[int] = set()
    docstrings: set[int] = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.JoinedStr):
            for child in ast.walk(node):
                in_fstring.add(id(child))
        if isinstance(node, (ast.Module, ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
            body = node.body
            if body and isinstance(body[0], ast.Expr) and isinstance(body[0].value, ast.Constant):
                if isinstance(body[0].value.value, str):
                    docstrings.add(id(body[0].value))
    return in_fstring, docstrings


_BINOP_SWAPS: dict[type, tuple[str, str, str]] = {
    ast.Add: ("+", "-", "+<->-"),
    ast.Sub: ("-", "+", "-<->+"),
    ast.Mult: ("*", "/", "*<->/"),
    ast.Div: ("/", "*", "/<->*"),
    ast.LShift: ("<<", ">>", "<<<->>>"),
    ast.RShift: (">>", "<<", ">><-><<"),
}

_AUG_SWAPS: dict[type, tuple[str, str, str]] = {
    ast.Add: ("+=", "-=", "+=<->-="),
    ast.Sub: ("-=", "+=", "-=<->+="),
    ast.Mult: ("*=", "/=", "*=<->/="),
    ast.Div: ("/=", "*=", "/=<->*="),
    ast.LShift: ("<<=", ">>=", "<<=<->>>="),
    ast.RShift: (">>=", "<<=", ">>=<-><<="),
}


def _find_between(src: _ByteSource, start: int, end: int, token: str) -> int | None:
    idx = src.data.find(token.encode("utf-8"), start, end)
    return None if idx == -1 else idx


def _string_sites(src: _ByteSource, node: ast.Constant) -> list[tuple[str, str]]:
    """(variant, replacement) pairs for one string literal."""
    start, end = src.node_span(node)
    seg = src.segment(start, end)
    if not seg or seg[0] not in "'\"":
        return []  # prefixed literals (r/b/f) are left alone
    qlen = 3 if seg[:3] in ("'''", '"""') else 1
    quote = seg[:qlen]
    inner = seg[qlen:-qlen]
    variants: list[tuple[str, str]] = []
    if node.value != "":
        variants.append(("empty", quote[0] * 2))
    if "\\" not in inner:
        for variant, transformed in (("lower", inner.lower()), ("upper", inner.upper())):
            if transformed != inner:
                candidate = quote + transformed + quote
                try:
                    expected = node.value.lower() if variant == "lower" else node.value.upper()
                    if ast.literal_eval(candidate) == expected:
                        variants.append((variant, candidate))
                except (ValueError, SyntaxError):
                    continue
    return variants


def _else_header_line(src: _ByteSource, node: ast.If) -> int | None:
    """Line carrying the else/elif keyword of this if, if determinable."""
    body_end = node.body[-1].end_lineno
    first_else = node.orelse[0].lineno
    for lineno in range(body_end + 1, first_else + 1):
        stripped = src.line_text(lineno).strip()
        if stripped.startswith(("else", "elif")):
            return lineno
    return None


def enumerate_mutants(function_source: str) -> list[MutationSpec]:
    """All applicable single-site mutations, in deterministic AST-walk order."""
    tree = _parse(function_source)
    src = _ByteSource(function_source)
    in_fstring, docstrings = _collect_context(tree)
    specs: list[MutationSpec] = []

    for node in ast.walk(tree):
        if isinstance(node, ast.Constant) and id(node) not in in_fstring:
            start, end = src.node_span(node)
            seg = src.segment(start, end)
            if type(node.value) is int and seg in ("0", "1"):
                flipped = "1" if seg == "0" else "0"
                specs.append(
                    MutationSpec(Mutator.INT_LITERAL, f"{seg}->{flipped}", start, end, flipped, node.lineno)
                )
            elif isinstance(node.value, str) and id(node) not in docstrings:
                for variant, replacement in _string_sites(src, node):
                    specs.append(
                        MutationSpec(Mutator.STR_LITERAL, variant, start, end, replacement, node.lineno)
                    )

        elif isinstance(node, ast.BinOp):
            swap = _BINOP_SWAPS.get(type(node.op))
            left_span = src.node_span(node.left)
            right_span = src.node_span(node.right)
            if swap is not None:
                token, replacement, variant = swap
                idx = _find_between(src, left_span[1], right_span[0], token)
                if idx is not None:
                    specs.append(
                        MutationSpec(
                            Mutator.OPERATOR_CHANGER, variant, idx, idx + len(token), replacement, node.lineno
                        )
                    )
            start, end = src.node_span(node)
            specs.append(
                MutationSpec(
                    Mutator.BINOP_REMOVER, "keep_left", start, end, src.segment(*left_span), node.lineno
                )
            )
            specs.append(
                MutationSpec(
                    Mutator.BINOP_REMOVER, "keep_right", start, end, src.segment(*right_span), node.lineno
                )
            )

        elif isinstance(node, ast.AugAssign):
            swap = _AUG_SWAPS.get(type(node.op))
            if swap is not None:
                token, replacement, variant = swap
                target_end = src.node_span(node.target)[1]
                value_start = src.node_span(node.value)[0]
                idx = _find_between(src, target_end, value_start, token)
                if idx is not None:
                    specs.append(
                        MutationSpec(
                            Mutator.AUG_ASSIGN, variant, idx, idx + len(token), replacement, node.lineno
                        )
                    )

        elif isinstance(node, ast.If):
            test_start, test_end = src.node_span(node.test)
            test_text = src.segment(test_start, test_end)
            specs.append(
                MutationSpec(
                    Mutator.IF_NEGATOR, "negate", test_start, test_end, f"not ({test_text})", node.lineno
                )
            )
            if node.orelse:
                header = _else_header_line(src, node)
                if header is not None:
                    specs.append(
                        MutationSpec(
                            Mutator.IF_REMOVER,
                            "remove_else",
                            src.line_start(header),
                            src.line_end(node.end_lineno),
                            "",
                            node.lineno,
                        )
                    )
            else:
                # Removing the then-block of an else-less if leaves no
                # children, so the whole statement goes.
                specs.append(
                    MutationSpec(
                        Mutator.IF_REMOVER,
                        "remove_then",
                        src.line_start(node.lineno),
                        src.line_end(node.end_lineno),
                        "",
                        node.lineno,
                    )
                )

    seen: set[tuple[int, int, str]] = set()
    unique: list[MutationSpec] = []
    for spec in specs:
        key = (spec.start, spec.end, spec.replacement)
        if key not in seen:
            seen.add(key)
            unique.append(spec)
    return unique


def enumerate_inverse_applications(source: str) -> list[InverseApplication]:
    """Every repair move the template baseline may try on this source."""
    tree = _parse(source)
    src = _ByteSource(source)
    in_fstring, docstrings = _collect_context(tree)
    apps: list[InverseApplication] = []
    for node in ast.walk(tree):
        if isinstance(node, ast.Constant) and id(node) not in in_fstring:
            start, end = src.node_span(node)
            seg = src.segment(start, end)
            if type(node.value) is int and seg in ("0", "1"):
                apps.append(InverseApplication("int_flip", start, end, "1" if seg == "0" else "0"))
            elif isinstance(node.value, str) and id(node) not in docstrings:
                for variant, replacement in _string_sites(src, node):
                    if variant in ("lower", "upper"):
                        apps.append(InverseApplication(f"str_{variant}", start, end, replacement))
        elif isinstance(node, ast.BinOp):
            swap = _BINOP_SWAPS.get(type(node.op))
            if swap is not None:
                token, replacement, _ = swap
                idx = _find_between(
                    src, src.node_span(node.left)[1], src.node_span(node.right)[0], token
                )
                if idx is not None:
                    apps.append(InverseApplication("op_swap", idx, idx + len(token), replacement))
        elif isinstance(node, ast.AugAssign):
            swap = _AUG_SWAPS.get(type(node.op))
            if swap is not None:
                token, replacement, _ = swap
                idx = _find_between(
                    src, src.node_span(node.target)[1], src.node_span(node.value)[0], token
                )
                if idx is not None:
                    apps.append(InverseApplication("aug_swap", idx, idx + len(token), replacement))
        elif isinstance(node, ast.If):
            # Reverse of the if-negator: strip a leading `not` from the test.
            if isinstance(node.test, ast.UnaryOp) and isinstance(node.test.op, ast.Not):
                test_span = src.node_span(node.test)
                operand_text = src.segment(*src.node_span(node.test.operand))
                apps.append(InverseApplication("strip_not", test_span[0], test_span[1], operand_text))
    return apps


def apply_inverse(source: str, app: InverseApplication) -> str:
    return _ByteSource(source).splice(app.start, app.end, app.replacement)


def classify_reversible(spec: MutationSpec, original: str, mutated: str) -> bool:
    """Rule-based reversibility tag for one generated bug."""
    if spec.mutator in (Mutator.IF_REMOVER, Mutator.BINOP_REMOVER):
        return False
    if spec.mutator is Mutator.STR_LITERAL:
        if spec.variant == "empty":
            return False
        # Case mutation: reversible iff the inverse casing at the same site
        # restores the original text.
        inverse = "upper" if spec.variant == "lower" else "lower"
        mutated_src = _ByteSource(mutated)
        new_end = spec.start + len(spec.replacement.encode("utf-8"))
        seg = mutated_src.segment(spec.start, new_end)
        qlen = 3 if seg[:3] in ("'''", '"""') else 1
        inner = seg[qlen:-qlen]
        transformed = inner.upper() if inverse == "upper" else inner.lower()
        restored = mutated_src.splice(spec.start, new_end, seg[:qlen] + transformed + seg[-qlen:])
        return restored == original
    return True


def brute_force_reversible(original: str, mutated: str) -> bool:
    """Oracle: some single inverse application restores the original bytes."""
    return any(apply_inverse(mutated, app) == original for app in enumerate_inverse_applications(mutated))


def _function_span(source: str) -> tuple[int, int]:
    tree = _parse(source)
    defs = [n for n in tree.body if isinstance(n, (ast.FunctionDef, ast.AsyncFunctionDef))]
    if not defs:
        raise ParseError("corpus solution holds no function definition")
    node = defs[0]
    start = min(node.lineno, *(d.lineno for d in node.decorator_list)) if node.decorator_list else node.lineno
    return (start, node.end_lineno)


def load_corpus(corpus_dir: Path) -> list[tuple[str, Path]]:
    entries = sorted(
        child for child in Path(corpus_dir).iterdir() if (child / SOLUTION_FILE).is_file()
    )
    if not entries:
        raise CorpusTestFailure(f"no corpus entries under {corpus_dir}")
    return [(child.name, child) for child in entries]


def _evaluate_candidate(
    name: str, mutated: str, test_source: str, workdir: Path
) -> list[str] | None:
    """Failing test ids for a candidate, or None when the candidate is unusable."""
    try:
        ast.parse(mutated)
    except SyntaxError:
        return None
    candidate_dir = workdir / name
    candidate_dir.mkdir(parents=True, exist_ok=True)
    (candidate_dir / SOLUTION_FILE).write_text(mutated, encoding="utf-8")
    (candidate_dir / TEST_FILE).write_text(test_source, encoding="utf-8")
    outcome = run_entry_subprocess(candidate_dir)
    if outcome["status"] != "ok":
        return None  # collection-time breakage: every test errored out
    return failing_tests(outcome)


def generate_benchmark(
    corpus_dir: Path,
    seed: int,
    target_size: int,
    *,
    max_per_function: int = 2,
    mutators: set[Mutator] | None = None,
) -> list[BenchmarkEntry]:
    """Build benchmark entries whose suites fail in exactly one test.

    Candidates are visited in a seeded shuffle over (corpus entry, mutation)
    pairs; at most ``max_per_function`` bugs are kept per source function.
    ``mutators`` restricts generation to a subset of the seven mutators.
    """
    corpus = load_corpus(corpus_dir)
    sources: dict[str, tuple[str, str]] = {}
    for name, entry_dir in corpus:
        baseline = run_entry_subprocess(entry_dir)
        failed = failing_tests(baseline)
        if baseline["status"] != "ok" or failed:
            raise CorpusTestFailure(f"{name}: baseline suite fails ({baseline.get('error', failed)})")
        sources[name] = (
            (entry_dir / SOLUTION_FILE).read_text(encoding="utf-8"),
            (entry_dir / TEST_FILE).read_text(encoding="utf-8"),
        )

    candidates: list[tuple[str, MutationSpec]] = []
    for name, _ in corpus:
        solution, _test = sources[name]
        for spec in enumerate_mutants(solution):
            if mutators is None or spec.mutator in mutators:
                candidates.append((name, spec))
    random.Random(seed).shuffle(candidates)

    entries: list[BenchmarkEntry] = []
    per_function: dict[str, int] = {}
    counters: dict[tuple[str, str], int] = {}
    workdir = Path(tempfile.mkdtemp(prefix="autosd-benchgen-"))
    try:
        for name, spec in candidates:
            if len(entries) >= target_size:
                break
            if per_function.get(name, 0) >= max_per_function:
                continue
            solution, test_source = sources[name]
            mutated = apply_mutation(solution, spec)
            if mutated == solution:
                continue
            failed = _evaluate_candidate(name, mutated, test_source, workdir)
            if failed is None or len(failed) != 1:
                continue
            key = (name, spec.mutator.value.lower())
            counters[key] = counters.get(key, 0) + 1
            entry = BenchmarkEntry(
                id=f"{name}_{spec.mutator.value.lower()}_{counters[key]}",
                name=name,
                original_source=solution,
                mutated_source=mutated,
                test_source=test_source,
                failing_test_id=failed[0],
                spec=spec,
                reversible=classify_reversible(spec, solution, mutated),
                method_span=_function_span(mutated),
            )
            entries.append(entry)
            per_function[name] = per_function.get(name, 0) + 1
    finally:
        shutil.rmtree(workdir, ignore_errors=True)
    return entries


def write_benchmark(entries: list[BenchmarkEntry], out_dir: Path) -> Path:
    """Materialize entry directories plus the manifest (docs/benchmark-manifest.md)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_entries = []
    for entry in entries:
        entry_dir = out_dir / entry.id
        entry_dir.mkdir(parents=True, exist_ok=True)
        (entry_dir / SOLUTION_FILE).write_text(entry.mutated_source, encoding="utf-8")
        (entry_dir / TEST_FILE).write_text(entry.test_source, encoding="utf-8")
        (entry_dir / ORIGINAL_FILE).write_text(entry.original_source, encoding="utf-8")
        manifest_entries.append(
            {
                "id": entry.id,
                "name": entry.name,
                "dir": entry.id,
                "failing_test_id": entry.failing_test_id,
                "mutator": entry.spec.mutator.value,
                "variant": entry.spec.variant,
                "site": [entry.spec.start, entry.spec.end],
                "replacement": entry.spec.replacement,
                "lineno": entry.spec.lineno,
                "reversible": entry.reversible,
                "method_span": list(entry.method_span),
            }
        )
    manifest_path = out_dir / MANIFEST_NAME
    manifest_path.write_text(
        json.dumps({"version": MANIFEST_VERSION, "entries": manifest_entries}, indent=2, sort_keys=True)
        + "\n",
        encoding="utf-8",
    )
    return manifest_path


def load_benchmark(manifest_path: Path) -> list[BenchmarkEntry]:
    manifest_path = Path(manifest_path)
    data = json.loads(manifest_path.read_text(encoding="utf-8"))
    if data.get("version") != MANIFEST_VERSION:
        raise CorpusTestFailure(f"unknown manifest version {data.get('version')!r}")
    root = manifest_path.parent
    entries = []
    for item in data["entries"]:
        entry_dir = root / item["dir"]
        entries.append(
            BenchmarkEntry(
                id=item["id"],
                name=item["name"],
                original_source=(entry_dir / ORIGINAL_FILE).read_text(encoding="utf-8"),
                mutated_source=(entry_dir / SOLUTION_FILE).read_text(encoding="utf-8"),
                test_source=(entry_dir / TEST_FILE).read_text(encoding="utf-8"),
                failing_test_id=item["failing_test_id"],
                spec=MutationSpec(
                    mutator=Mutator(item["mutator"]),
                    variant=item["variant"],
                    start=item["site"][0],
                    end=item["site"][1],
                    replacement=item["replacement"],
                    lineno=item["lineno"],
                ),
                reversible=bool(item["reversible"]),
                method_span=tuple(item["method_span"]),
            )
        )
    return entries


@dataclass(frozen=True)
class BaselineOutcome:
    entry_id: str
    mutator: str
    reversible: bool
    success: bool
    exact_restore: bool
    attempts_used: int


def reverse_template_baseline(entry: BenchmarkEntry, attempts: int, seed: int) -> BaselineOutcome:
    """Random inverse-mutation repair of one bug (one rerun).

    Each attempt draws one (site, inverse mutation) application with
    replacement and succeeds when the originally failing test passes on the
    patched source.
    """
    rng = random.Random(seed)
    apps = enumerate_inverse_applications(entry.mutated_source)
    for attempt in range(1, attempts + 1):
        if not apps:
            break
        app = apps[rng.randrange(len(apps))]
        patched = apply_inverse(entry.mutated_source, app)
        try:
            ast.parse(patched)
        except SyntaxError:
            continue
        outcome = run_entry_tests(
            solution_source=patched,
            test_source=entry.test_source,
            only=entry.failing_test_id,
        )
        if outcome["status"] != "ok":
            continue
        result = outcome["results"].get(entry.failing_test_id, {"status": "fail"})
        if result["status"] == "pass":
            return BaselineOutcome(
                entry_id=entry.id,
                mutator=entry.spec.mutator.value,
                reversible=entry.reversible,
                success=True,
                exact_restore=patched == entry.original_source,
                attempts_used=attempt,
            )
    return BaselineOutcome(
        entry_id=entry.id,
        mutator=entry.spec.mutator.value,
        reversible=entry.reversible,
        success=False,
        exact_restore=False,
        attempts_used=attempts,
    )


def run_baseline(
    entries: list[BenchmarkEntry], reruns: int, attempts: int, seed: int
) -> list[list[BaselineOutcome]]:
    """All reruns; rerun ``r`` derives its RNG from ``seed + r`` per entry."""
    outcomes = []
    for rerun in range(reruns):
        rerun_seed = seed + rerun
        outcomes.append(
            [
                reverse_template_baseline(entry, attempts, rerun_seed * 10007 + i)
                for i, entry in enumerate(entries)
            ]
        )
    return outcomes
