"""Acceptance criteria, one test per criterion, each printing PASS or FAIL.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines.  Tolerances are exact unless stated otherwise in the assertion.
"""
from __future__ import annotations

import hashlib
import random
import string
import time
from contextlib import contextmanager
from pathlib import Path

from autosd import dsl
from autosd.backends import ReplayBackend
from autosd.benchgen import (
    Mutator,
    brute_force_reversible,
    classify_reversible,
    generate_benchmark,
    run_baseline,
)
from autosd.cli import load_bug_config, main
from autosd.corpus_runner import failing_tests, run_entry_tests
from autosd.driver import AdapterAudit, observation_from_probe, observation_from_test
from autosd.dsl import DebuggerProbe, Edit, EditKind, EditScript
from autosd.evaluation import aggregate
from autosd.inprocess import InProcessAdapter
from autosd.model import SessionConfig, TerminationReason, Verdict
from autosd.orchestrator import run_repair, run_session
from autosd.prompting import append_step, build_fix_prompt, build_initial_prompt
from conftest import make_session, make_step
from golden_suite import GOLDEN_CASES

FIXTURES = Path(__file__).parent / "fixtures"


@contextmanager
def criterion(name: str):
    try:
        yield
    except BaseException:
        print(f"\n[ACCEPTANCE] {name}: FAIL")
        raise
    print(f"\n[ACCEPTANCE] {name}: PASS")


def _tree_digest(root: Path) -> dict[str, str]:
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def test_end_to_end_determinism(tmp_path):
    with criterion("end-to-end determinism (replay repair, byte-identical, < 30 s)"):
        started = time.monotonic()

        def run(tag: str) -> dict[str, str]:
            out = tmp_path / tag
            code = main(
                [
                    "repair",
                    "--bug-config", str(FIXTURES / "demo_bug.json"),
                    "--backend", "replay",
                    "--replay-script", str(FIXTURES / "demo_pack.replay"),
                    "--n", "3",
                    "--seed", "17",
                    "--jobs", "2",
                    "--out", str(out),
                    "--no-figure",
                ]
            )
            assert code == 0
            return _tree_digest(out)

        first = run("run1")
        second = run("run2")
        assert first == second
        assert any(name.endswith(".session") for name in first)
        assert any(name.endswith(".md") for name in first)
        assert time.monotonic() - started < 30


def test_fig1_structural_replay():
    with criterion("three-step structural replay ([Rejected, Supported, Supported], done)"):
        _, bug, _ = load_bug_config(FIXTURES / "demo_bug.json")
        backend = ReplayBackend.load(FIXTURES / "demo_session.replay").for_attempt(0)
        session = run_session(bug, SessionConfig(), backend, InProcessAdapter())
        assert [s.verdict for s in session.steps] == [
            Verdict.REJECTED,
            Verdict.SUPPORTED,
            Verdict.SUPPORTED,
        ]
        assert session.confident is True
        assert session.termination_reason is TerminationReason.DONE_TOKEN
        assert session.patch is not None and session.patch.applied_diff.strip()


def test_observation_formatting_golden_suite():
    with criterion("observation formatting golden suite (exact strings, fake adapter)"):
        adapter = InProcessAdapter()
        for case in GOLDEN_CASES:
            root = FIXTURES / "programs" / case.name
            if case.kind == "probe":
                probe = DebuggerProbe(path="prog.py", line=case.line, expression=case.expression)
                result = adapter.probe(
                    root, "prog.py", case.line, case.expression, "python prog.py", case.timeout
                )
                observation = observation_from_probe(probe, result, case.timeout)
                if case.name == "loop150":
                    assert result.hit_count == 150 and len(result.values) == 100
            else:
                observation = observation_from_test(
                    adapter.run_test(root, "python prog.py", case.timeout), case.timeout
                )
            assert observation.rendered == case.expected, case.name


def _random_probe(rng: random.Random) -> DebuggerProbe:
    path = "".join(rng.choices(string.ascii_lowercase, k=rng.randint(1, 8))) + ".py"
    expr_alphabet = string.ascii_letters + string.digits + "()[]._+-*/ <>="
    expr = "".join(rng.choices(expr_alphabet, k=rng.randint(1, 24))).strip() or "x"
    return DebuggerProbe(path=path, line=rng.randint(1, 9999), expression=expr)


def _random_edit_script(rng: random.Random) -> EditScript:
    text_alphabet = string.ascii_letters + string.digits + " _+-*/()\"\\<>=!,;"

    def arg() -> str:
        return "".join(rng.choices(text_alphabet, k=rng.randint(0, 16)))

    edits = []
    for _ in range(rng.randint(0, 3)):
        kind = rng.choice(list(EditKind))
        line = rng.randint(1, 9999)
        if kind is EditKind.REPLACE:
            edits.append(Edit(kind, line, old_expr=arg(), new_expr=arg()))
        elif kind is EditKind.ADD:
            edits.append(Edit(kind, line, new_expr=arg()))
        else:
            edits.append(Edit(kind, line, old_expr=arg()))
    run_test = True if not edits else rng.random() < 0.5
    return EditScript(edits=tuple(edits), run_test=run_test)


def test_dsl_round_trip_property():
    with criterion("DSL round-trip: 1,000 ASTs, parse after render is identity (< 10 s)"):
        started = time.monotonic()
        rng = random.Random(20240401)
        for i in range(1000):
            script = _random_probe(rng) if i % 2 == 0 else _random_edit_script(rng)
            assert dsl.parse_experiment(dsl.render_experiment(script)) == script
        composite = dsl.parse_experiment(
            'REPLACE(4321, "c>b", "c>b && a <= d") AND ADD(4323, "a+=1;") AND RUN'
        )
        assert composite == EditScript(
            edits=(
                Edit(EditKind.REPLACE, 4321, old_expr="c>b", new_expr="c>b && a <= d"),
                Edit(EditKind.ADD, 4323, new_expr="a+=1;"),
            ),
            run_test=True,
        )
        assert time.monotonic() - started < 10


def test_pruning_removes_every_rejected_block(demo_bug):
    with criterion("fix prompts carry zero rejected blocks (50-session corpus)"):
        rng = random.Random(99)
        for session_index in range(50):
            doc = build_initial_prompt(demo_bug)
            steps = []
            for step_index in range(1, rng.randint(1, 4) + 1):
                verdict = rng.choice(list(Verdict))
                step = make_step(
                    step_index,
                    verdict=verdict,
                    hypothesis=f"Hypothesis marker s{session_index} i{step_index}.",
                )
                steps.append(step)
                doc = append_step(doc, step)
            fix_doc = build_fix_prompt(doc, steps)
            text = fix_doc.text()
            for step in steps:
                marker = f"marker s{session_index} i{step.index}."
                if step.verdict is Verdict.REJECTED:
                    assert marker not in text
                else:
                    assert marker in text


def test_benchgen_oracle_agreement(mini_corpus_dir):
    with criterion("benchgen: exactly one failing test per entry; classifier == oracle (< 2 min)"):
        started = time.monotonic()
        entries = generate_benchmark(mini_corpus_dir, seed=42, target_size=24)
        assert entries, "seed 42 must produce entries"
        for entry in entries:
            outcome = run_entry_tests(
                solution_source=entry.mutated_source, test_source=entry.test_source
            )
            assert failing_tests(outcome) == [entry.failing_test_id], entry.id
            assert entry.reversible == classify_reversible(
                entry.spec, entry.original_source, entry.mutated_source
            )
            assert entry.reversible == brute_force_reversible(
                entry.original_source, entry.mutated_source
            ), entry.id
        assert time.monotonic() - started < 120


def test_baseline_asymmetry(mini_corpus_dir):
    with criterion("baseline asymmetry: mean reversible fixes < ground truth; deletions unrecoverable (< 5 min)"):
        started = time.monotonic()
        entries = generate_benchmark(mini_corpus_dir, seed=42, target_size=24)
        reversible_total = sum(1 for e in entries if e.reversible)
        deletion_class = [
            e for e in entries if e.spec.mutator in (Mutator.BINOP_REMOVER, Mutator.IF_REMOVER)
        ]
        assert reversible_total > 0 and deletion_class

        # ground-truth restoration repairs every bug
        for entry in entries:
            outcome = run_entry_tests(
                solution_source=entry.original_source, test_source=entry.test_source
            )
            assert outcome["status"] == "ok" and not failing_tests(outcome), entry.id

        reruns = run_baseline(entries, reruns=20, attempts=10, seed=7)
        reversible_fixed = [
            sum(1 for o in rerun if o.success and o.reversible) for rerun in reruns
        ]
        mean_fixed = sum(reversible_fixed) / len(reversible_fixed)
        assert mean_fixed < reversible_total

        deletion_exact = [
            o
            for rerun in reruns
            for o in rerun
            if o.exact_restore and o.mutator in ("BinOpRemover", "IfRemover")
        ]
        assert deletion_exact == []

        coincidental = sum(
            1 for rerun in reruns for o in rerun if o.success and not o.exact_restore
        )
        print(
            f"\n  reversible bugs: {reversible_total}; baseline mean fixed: {mean_fixed:.2f}; "
            f"coincidental (non-restoring) fixes: {coincidental}"
        )
        assert time.monotonic() - started < 300


def test_confidence_partitioning(tiny_bug):
    with criterion("confidence partitioning: precision 0.8 (<DONE>) vs 0.4 (exact)"):
        sessions = []
        for i in range(10):
            sessions.append(
                make_session(tiny_bug, verdicts=[Verdict.SUPPORTED], done_last=True, plausible=i < 8)
            )
        for i in range(10):
            sessions.append(make_session(tiny_bug, verdicts=[Verdict.REJECTED], plausible=i < 4))
        report = aggregate({"synthetic": sessions})
        assert report.confident.attempts == 10
        assert report.not_confident.attempts == 10
        assert report.confident.precision == 0.8
        assert report.not_confident.precision == 0.4


def test_ablation_audit(tiny_bug):
    with criterion("ablation audit: zero loop adapter calls; evaluation still executes tests"):
        entries = [
            {
                "text": (
                    " The increment is wrong.\n"
                    "Prediction: The test will pass once fixed.\n"
                    "Experiment: `stop at lib.py:2 ; run ; print x`\n"
                )
            },
            {"text": " x was 2\n"},
            {"text": " The hypothesis is supported. <DEBUGGING DONE>"},
            {"text": "\ndef f(x):\n    return x + 1\n```"},
        ]
        audit = AdapterAudit()
        config = SessionConfig(patch_budget=1, ablate_debugger=True)
        sessions = run_repair(
            tiny_bug, config, ReplayBackend([entries]), InProcessAdapter(), jobs=1, audit=audit
        )
        assert audit.count("loop") == 0
        assert audit.count("evaluation") >= 1
        assert sessions[0].patch is not None
        assert sessions[0].patch.evaluation.value == "Plausible"
