import json
import math

import numpy as np

from nonlocal_cl.io import fmt, read_csv, write_csv, write_json


def test_seventeen_digit_format_roundtrips():
    for v in (0.1, 1.0 / 3.0, math.pi * 1e-300, 2.0**60 + 1.0, -0.0):
        assert float(fmt(v)) == v
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(np.int64(3)) == "3"
    assert fmt(True) == "1"


def test_csv_roundtrip(tmp_path):
    rows = [[1.0 / 3.0, 2], [math.e, -1]]
    write_csv(tmp_path / "x" / "a.csv", ["a", "b"], rows)
    header, data = read_csv(tmp_path / "x" / "a.csv")
    assert header == ["a", "b"]
    assert data[0, 0] == 1.0 / 3.0 and data[1, 0] == math.e


def test_json_handles_numpy_and_nonfinite(tmp_path):
    write_json(tmp_path / "s.json", {"b": np.array([1.0, np.nan]), "a": np.float64(math.inf), "c": np.int32(4)})
    text = (tmp_path / "s.json").read_text()
    d = json.loads(text)
    assert d == {"a": "inf", "b": [1.0, "nan"], "c": 4}
    assert text.index('"a"') < text.index('"b"')
