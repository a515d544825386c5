"""Command-line entry point.

Subcommands: ``repair`` (run the debugging loop on one bug), ``benchgen``
(build an almost-right benchmark from a corpus), ``baseline`` (reverse-
template repair baseline), ``evaluate`` (aggregate persisted sessions), and
``render`` (explanation document for one session).

Exit codes: 0 success, 2 configuration error, 3 bug not reproducible,
4 backend unavailable.
"""
from __future__ import annotations

import argparse
import csv
import json
import shlex
import statistics
import sys
from pathlib import Path

from . import benchgen as benchgen_mod
from . import evaluation, orchestrator, report
from .backends import HttpBackend, ReplayBackend
from .driver import AdapterAudit, SubprocessAdapter
from .errors import AutosdError, BackendUnavailable, BugNotReproducible, SchemaError
from .inprocess import InProcessAdapter
from .model import BugContext, SessionConfig, deserialize_session

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_REPRODUCIBLE = 3
EXIT_BACKEND = 4

LINE_NUMBER_FORMAT = "{lineno:4d}  {text}"


class ConfigError(AutosdError):
    pass


def number_source_lines(text: str, start: int) -> str:
    """Attach absolute 1-based file line numbers to a source excerpt."""
    lines = text.splitlines()
    return "\n".join(
        LINE_NUMBER_FORMAT.format(lineno=start + i, text=line) for i, line in enumerate(lines)
    )


def load_bug_config(path: Path) -> tuple[str, BugContext, str | None]:
    """Read a declarative bug description (docs/bug-config.md).

    Returns (bug id, context, optional full-suite command).  Relative paths
    resolve against the config file's directory.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read bug config {path}: {exc}") from None
    for key in ("project_root", "buggy_file", "method_span", "failing_test_command", "error_message"):
        if key not in data:
            raise ConfigError(f"{path}: missing required field {key!r}")
    project_root = (path.parent / data["project_root"]).resolve()
    if not project_root.is_dir():
        raise ConfigError(f"{path}: project root {project_root} is not a directory")
    buggy_path = project_root / data["buggy_file"]
    if not buggy_path.is_file():
        raise ConfigError(f"{path}: buggy file {buggy_path} is missing")
    span = data["method_span"]
    if not (isinstance(span, list) and len(span) == 2):
        raise ConfigError(f"{path}: method_span must be [start, end]")
    start, end = int(span[0]), int(span[1])
    file_lines = buggy_path.read_text(encoding="utf-8").splitlines()
    if not (1 <= start <= end <= len(file_lines)):
        raise ConfigError(f"{path}: method_span {span} out of range for {data['buggy_file']}")
    buggy_source = number_source_lines("\n".join(file_lines[start - 1 : end]), start)
    bug = BugContext(
        project_root=str(project_root),
        buggy_file=data["buggy_file"],
        method_span=(start, end),
        buggy_source=buggy_source,
        failing_test_command=data["failing_test_command"],
        error_message=data["error_message"],
        bug_report=data.get("bug_report"),
        target_language_id=data.get("language", "python"),
    )
    bug_id = data.get("id") or path.stem
    return bug_id, bug, data.get("suite_command")


def _make_backend(args):
    if args.backend == "replay":
        if not args.replay_script:
            raise ConfigError("--backend replay requires --replay-script")
        script = Path(args.replay_script)
        if not script.is_file():
            raise ConfigError(f"replay script {script} is missing")
        return ReplayBackend.load(script)
    return HttpBackend()


def _make_adapter(args):
    if getattr(args, "adapter_cmd", None):
        return SubprocessAdapter(shlex.split(args.adapter_cmd))
    return InProcessAdapter()


def _print_event(event: dict) -> None:
    parts = [f"{key}={value}" for key, value in event.items() if key != "event"]
    print(f"[{event['event']}] {' '.join(parts)}", file=sys.stderr)


def cmd_repair(args) -> int:
    bug_id, bug, suite_command = load_bug_config(Path(args.bug_config))
    config = SessionConfig(
        max_steps=args.max_steps,
        patch_budget=args.n,
        ablate_debugger=args.ablate_debugger,
        per_experiment_timeout=args.timeout,
        random_seed=args.seed,
    )
    backend = _make_backend(args)
    adapter = _make_adapter(args)
    out_dir = Path(args.out)
    audit = AdapterAudit()
    events = _print_event if args.verbose else None

    sessions = orchestrator.run_repair(
        bug,
        config,
        backend,
        adapter,
        jobs=args.jobs,
        audit=audit,
        events=events,
        out_dir=out_dir,
        bug_id=bug_id,
        suite_command=suite_command,
    )

    reports_dir = out_dir / "reports" / bug_id
    diffs_dir = out_dir / "diffs" / bug_id
    reports_dir.mkdir(parents=True, exist_ok=True)
    diffs_dir.mkdir(parents=True, exist_ok=True)
    for k, session in enumerate(sessions, start=1):
        stem = f"attempt_{k:02d}"
        (reports_dir / f"{stem}.md").write_text(report.render(session, "markdown"), encoding="utf-8")
        (reports_dir / f"{stem}.html").write_text(report.render(session, "html"), encoding="utf-8")
        if session.patch is not None and session.patch.applied_diff:
            (diffs_dir / f"{stem}.diff").write_text(session.patch.applied_diff, encoding="utf-8")

    agg = evaluation.aggregate({bug_id: sessions})
    evaluation.write_report_files(agg, out_dir, figure=not args.no_figure)
    (out_dir / "audit.log").write_text(
        "".join(json.dumps(entry, sort_keys=True) + "\n" for entry in audit.entries),
        encoding="utf-8",
    )
    print(evaluation.render_table(agg), end="")
    return EXIT_OK


def cmd_benchgen(args) -> int:
    corpus = Path(args.corpus)
    if not corpus.is_dir():
        raise ConfigError(f"corpus directory {corpus} is missing")
    entries = benchgen_mod.generate_benchmark(
        corpus, args.seed, args.size, max_per_function=args.max_per_function
    )
    manifest = benchgen_mod.write_benchmark(entries, Path(args.out))
    by_mutator: dict[str, int] = {}
    for entry in entries:
        by_mutator[entry.spec.mutator.value] = by_mutator.get(entry.spec.mutator.value, 0) + 1
    print(f"kept {len(entries)} bugs -> {manifest}")
    for mutator, count in sorted(by_mutator.items()):
        print(f"  {mutator:<16} {count}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    entries = benchgen_mod.load_benchmark(Path(args.manifest))
    reruns = benchgen_mod.run_baseline(entries, args.reruns, args.attempts, args.seed)
    fixed_counts = [sum(1 for o in rerun if o.success) for rerun in reruns]
    reversible_counts = [sum(1 for o in rerun if o.success and o.reversible) for rerun in reruns]
    exact_counts = [sum(1 for o in rerun if o.exact_restore) for rerun in reruns]
    print(f"bugs: {len(entries)}  reruns: {args.reruns}  attempts per bug: {args.attempts}")
    print(f"fixed (test passes): {evaluation.summarize_samples([float(c) for c in fixed_counts])}")
    print(f"  of reversible bugs: {evaluation.summarize_samples([float(c) for c in reversible_counts])}")
    print(f"  by exact inverse restoration: {evaluation.summarize_samples([float(c) for c in exact_counts])}")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        with (out_dir / "baseline.csv").open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["rerun", "entry_id", "mutator", "reversible", "success", "exact_restore", "attempts_used"])
            for r, rerun in enumerate(reruns):
                for o in rerun:
                    writer.writerow([r, o.entry_id, o.mutator, o.reversible, o.success, o.exact_restore, o.attempts_used])
        summary = {
            "bugs": len(entries),
            "reruns": args.reruns,
            "attempts": args.attempts,
            "seed": args.seed,
            "fixed_mean": statistics.fmean(fixed_counts) if fixed_counts else 0.0,
            "fixed_stddev": statistics.pstdev(fixed_counts) if len(fixed_counts) > 1 else 0.0,
            "fixed_counts": fixed_counts,
            "exact_restore_counts": exact_counts,
        }
        (out_dir / "baseline.json").write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        if not args.no_figure:
            _save_baseline_figure(fixed_counts, len(entries), out_dir / "baseline.png")
    return EXIT_OK


def _save_baseline_figure(fixed_counts: list[int], total: int, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    ax.hist(fixed_counts, bins=range(0, total + 2), color="#607d8b", edgecolor="white")
    ax.set_xlabel("bugs fixed per rerun")
    ax.set_ylabel("reruns")
    ax.set_title("Reverse-template baseline across seeded reruns")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _load_sessions_tree(sessions_dir: Path) -> dict[str, list]:
    sessions_by_bug: dict[str, list] = {}
    if not sessions_dir.is_dir():
        return sessions_by_bug
    for session_path in sorted(sessions_dir.glob("*/*.session")):
        bug_id = session_path.parent.name
        try:
            session = deserialize_session(session_path.read_text(encoding="utf-8"))
        except SchemaError as exc:
            raise ConfigError(f"{session_path}: {exc}") from None
        sessions_by_bug.setdefault(bug_id, []).append(session)
    return sessions_by_bug


def cmd_evaluate(args) -> int:
    entries = {entry.id: entry for entry in benchgen_mod.load_benchmark(Path(args.manifest))}
    sessions_dir = Path(args.sessions)
    sessions_by_bug = _load_sessions_tree(sessions_dir)
    evaluated = 0
    for bug_id, sessions in sessions_by_bug.items():
        entry = entries.get(bug_id)
        for session in sessions:
            if (
                entry is not None
                and session.patch is not None
                and session.patch.evaluation.value == "Unevaluated"
            ):
                evaluation.evaluate_patch_on_entry(entry, session.patch)
                evaluated += 1
    agg = evaluation.aggregate(sessions_by_bug)
    out_dir = Path(args.out) if args.out else sessions_dir.parent / "report"
    evaluation.write_report_files(agg, out_dir, figure=not args.no_figure)
    if evaluated:
        print(f"evaluated {evaluated} pending patches")
    print(evaluation.render_table(agg), end="")
    return EXIT_OK


def cmd_render(args) -> int:
    session_path = Path(args.session)
    if not session_path.is_file():
        raise ConfigError(f"session file {session_path} is missing")
    session = deserialize_session(session_path.read_text(encoding="utf-8"))
    suffix = ".md" if args.format == "markdown" else ".html"
    out_path = Path(args.out) if args.out else session_path.with_suffix(suffix)
    out_path.write_text(report.render(session, args.format), encoding="utf-8")
    print(out_path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="autosd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("repair", help="run the scientific-debugging repair loop on one bug")
    p.add_argument("--bug-config", required=True, help="declarative bug description (JSON)")
    p.add_argument("--n", type=int, default=10, help="patch attempts to generate")
    p.add_argument("--max-steps", type=int, default=3, help="debugging steps per attempt")
    p.add_argument("--backend", choices=("http", "replay"), default="http")
    p.add_argument("--replay-script", help="scripted completions for --backend replay")
    p.add_argument("--ablate-debugger", action="store_true", help="model-invented observations")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=None, help="parallel attempt workers")
    p.add_argument("--adapter-cmd", help="external execution adapter command (default: in-process)")
    p.add_argument("--timeout", type=float, default=30.0, help="per-experiment timeout (s)")
    p.add_argument("--no-figure", action="store_true")
    p.add_argument("--verbose", action="store_true", help="stream progress events to stderr")
    p.set_defaults(func=cmd_repair)

    p = sub.add_parser("benchgen", help="generate an almost-right benchmark from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--max-per-function", type=int, default=2)
    p.set_defaults(func=cmd_benchgen)

    p = sub.add_parser("baseline", help="reverse-template repair baseline over a benchmark")
    p.add_argument("--manifest", required=True)
    p.add_argument("--reruns", type=int, default=100)
    p.add_argument("--attempts", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write baseline.csv/baseline.json/baseline.png here")
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("evaluate", help="aggregate persisted sessions against a benchmark")
    p.add_argument("--manifest", required=True)
    p.add_argument("--sessions", required=True, help="directory holding <bug_id>/*.session")
    p.add_argument("--out", help="report directory (default: <sessions>/../report)")
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("render", help="render one session as an explanation document")
    p.add_argument("--session", required=True)
    p.add_argument("--format", choices=("markdown", "html"), default="markdown")
    p.add_argument("--out")
    p.set_defaults(func=cmd_render)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BugNotReproducible as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_REPRODUCIBLE
    except BackendUnavailable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (SchemaError, AutosdError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
