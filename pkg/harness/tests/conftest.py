from __future__ import annotations

import base64
import subprocess
import sys
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"


def b64(text: str) -> str:
    return base64.b64encode(text.encode("utf-8")).decode("ascii")


def invoke(*args: str, timeout: float = 60.0) -> subprocess.CompletedProcess:
    return subprocess.run(
        [sys.executable, "-m", "pdb_harness.cli", *args],
        capture_output=True,
        text=True,
        timeout=timeout,
    )


def probe(root: Path, location: str, expression: str, command: str = "python prog.py", timeout: float = 10.0):
    return invoke("probe", str(root), location, b64(expression), b64(command), f"{timeout:g}")


def run(root: Path, command: str = "python prog.py", timeout: float = 10.0):
    return invoke("run", str(root), b64(command), f"{timeout:g}")


@pytest.fixture(scope="session")
def programs_dir() -> Path:
    return FIXTURES / "programs"
