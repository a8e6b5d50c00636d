"""The frozen reference values must be reproducible from their generator."""

import json
import subprocess
import sys
from pathlib import Path

import pytest

HERE = Path(__file__).parent


def test_frozen_reference_regenerates():
    pytest.importorskip("sympy")
    proc = subprocess.run([sys.executable, str(HERE / "oracle" / "build_oracle.py")],
                          capture_output=True, text=True, check=True)
    assert json.loads(proc.stdout) == json.loads((HERE / "data" / "oracle.json").read_text())
