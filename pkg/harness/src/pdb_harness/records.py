"""Adapter record stream emission (one JSON object per stdout line).

Record shapes, as consumed by the repair engine:

    {"type": "probe", "hit_count": <int>}
    {"type": "value", "text": <str>}            # one per captured hit, in order
    {"type": "eval_error", "message": <str>}    # first expression error, if any
    {"type": "test", "status": "pass"|"fail"|"timeout",
     "exception_type": <str|null>, "exception_message": <str|null>}
"""
from __future__ import annotations

import json
import sys

VALUE_COUNT_CAP = 100
VALUE_TEXT_CAP = 256
TRUNCATION_MARK = "…"


def truncate_value(text: str) -> str:
    if len(text) <= VALUE_TEXT_CAP:
        return text
    return text[: VALUE_TEXT_CAP - 1] + TRUNCATION_MARK


def emit(record: dict) -> None:
    sys.stdout.write(json.dumps(record, sort_keys=True) + "\n")
    sys.stdout.flush()


def emit_probe(hit_count: int, values: list[str], eval_error: str | None) -> None:
    emit({"type": "probe", "hit_count": hit_count})
    for value in values[:VALUE_COUNT_CAP]:
        emit({"type": "value", "text": value})
    if eval_error is not None:
        emit({"type": "eval_error", "message": eval_error})


def emit_test(status: str, exception_type: str | None = None, exception_message: str | None = None) -> None:
    emit(
        {
            "type": "test",
            "status": status,
            "exception_type": exception_type,
            "exception_message": exception_message,
        }
    )
