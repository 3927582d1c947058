import json

import numpy as np
import pytest

from avgproc.export import _fmt, read_csv, write_csv, write_json


def test_float_format_roundtrips():
    for v in (0.1, 1 / 3, 1e-300, -2.5, np.float64(0.7)):
        assert float(_fmt(v)) == float(v)
    assert _fmt(True) == "1" and _fmt(np.int64(4)) == "4" and _fmt("x") == "x"


def test_write_csv_checks_width(tmp_path):
    with pytest.raises(ValueError):
        write_csv(tmp_path / "a.csv", ("a", "b"), [(1,)])


def test_csv_roundtrip(tmp_path):
    p = write_csv(tmp_path / "sub" / "a.csv", ("t", "v"), [(0.0, 1 / 3), (1.0, 2.0)])
    assert p.read_text() == "t,v\n0.0,0.3333333333333333\n1.0,2.0\n"
    assert read_csv(p)[0] == {"t": "0.0", "v": "0.3333333333333333"}


def test_json_is_sorted_and_clean(tmp_path):
    p = write_json(tmp_path / "m.json", {"b": np.float64(1.5), "a": [np.int32(2)], "c": float("inf")})
    assert p.read_text().index('"a"') < p.read_text().index('"b"')
    assert json.loads(p.read_text()) == {"a": [2], "b": 1.5, "c": "inf"}
