# test_artifact_writer.py
"""
结果文件输出测试
"""

import json
import sys
import os

import numpy as np
import pandas as pd
import pytest

# 添加当前目录到路径
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from artifact_writer import _convert_to_python_types, config_hash, write_csv, write_json
from exceptions import NumericalError


def read_csv_body(path):
    """读取 CSV 数据部分 (跳过 '#' 元数据块)"""
    return pd.read_csv(path, comment="#")


def read_csv_metadata(path):
    metadata = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.startswith("# ") and "=" in line:
                key, value = line[2:].rstrip("\n").split("=", 1)
                metadata[key] = value
    return metadata


def test_config_hash_ignores_key_order():
    a = {"ifs": "dyadic", "seed": 7, "beta_grid": {"min": -1, "max": 1}}
    b = {"beta_grid": {"max": 1, "min": -1}, "seed": 7, "ifs": "dyadic"}
    assert config_hash(a) == config_hash(b)
    assert len(config_hash(a)) == 64
    assert config_hash(a) != config_hash({**a, "seed": 8})


def test_convert_to_python_types():
    converted = _convert_to_python_types({
        "flag": np.bool_(True),
        "count": np.int64(3),
        "value": np.float64(0.1),
        "missing": float("nan"),
        "array": np.array([1.0, np.inf]),
        "pair": (1, 2),
    })
    assert converted == {"flag": True, "count": 3, "value": 0.1, "missing": None,
                         "array": [1.0, None], "pair": [1, 2]}
    assert type(converted["count"]) is int


def test_write_csv_with_metadata(tmp_path):
    frame = pd.DataFrame({"beta": [0.0, 1.0], "t": [1.0, 1 / 3]})
    path = write_csv(str(tmp_path / "sub" / "pressure.csv"), frame, {"tool_version": "1.0.0", "depth": 1})
    text = open(path, encoding="utf-8").read()
    assert text.startswith("beta,t\n")
    assert "0.33333333333333331" in text
    assert text.endswith("# tool_version=1.0.0\n# depth=1\n")
    body = read_csv_body(path)
    assert list(body.columns) == ["beta", "t"]
    assert body["t"].iloc[1] == 1 / 3
    assert read_csv_metadata(path) == {"tool_version": "1.0.0", "depth": "1"}


def test_write_csv_rejects_non_finite(tmp_path):
    frame = pd.DataFrame({"beta": [0.0, 1.0], "t": [1.0, np.nan]})
    with pytest.raises(NumericalError):
        write_csv(str(tmp_path / "bad.csv"), frame, {})
    assert not (tmp_path / "bad.csv").exists()


def test_write_json_is_deterministic(tmp_path):
    payload = {"b": 1.0, "a": np.float64(2.5), "nested": {"z": float("inf"), "y": [1, 2]}}
    first = write_json(str(tmp_path / "one.json"), payload)
    second = write_json(str(tmp_path / "two.json"), dict(reversed(list(payload.items()))))
    assert open(first, "rb").read() == open(second, "rb").read()
    data = json.load(open(first, encoding="utf-8"))
    assert data == {"a": 2.5, "b": 1.0, "nested": {"y": [1, 2], "z": None}}


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
