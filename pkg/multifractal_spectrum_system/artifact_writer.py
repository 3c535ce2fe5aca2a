"""
确定性的 CSV / JSON 结果输出
浮点数统一用 17 位有效数字, 同样的配置与种子产生逐字节相同的文件
"""
import hashlib
import json
import logging
import math
import os
from typing import Any, Dict

import numpy as np
import pandas as pd

from exceptions import NumericalError

logger = logging.getLogger(__name__)

TOOL_VERSION = "1.0.0"
FLOAT_FORMAT = "%.17g"


def config_hash(raw_config: Dict[str, Any]) -> str:
    """规范化 JSON (键排序、紧凑分隔符) 的 SHA-256"""
    canonical = json.dumps(raw_config, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _convert_to_python_types(obj):
    """将NumPy数据类型转换为Python原生类型, 浮点数经 17 位有效数字规整, 非有限值写为 null"""
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if not math.isfinite(value):
            return None
        return float(FLOAT_FORMAT % value)
    if isinstance(obj, np.ndarray):
        return [_convert_to_python_types(item) for item in obj.tolist()]
    if isinstance(obj, dict):
        return {str(key): _convert_to_python_types(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_convert_to_python_types(item) for item in obj]
    return obj


def write_csv(path: str, frame: pd.DataFrame, metadata: Dict[str, Any]) -> str:
    """
    写出 CSV: 表头、数据行 (17 位有效数字), 末尾是以 '#' 开头的元数据块

    异常:
        NumericalError: 存在 NaN 或 Inf
    """
    numeric = frame.select_dtypes(include=[np.number])
    if not np.all(np.isfinite(numeric.to_numpy(dtype=float))):
        bad = [c for c in numeric.columns if not np.all(np.isfinite(numeric[c].to_numpy(dtype=float)))]
        raise NumericalError(f"{os.path.basename(path)} 的列 {bad} 含有非有限值")
    body = frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    footer = "".join(f"# {key}={value}\n" for key, value in metadata.items())
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(body)
        f.write(footer)
    logger.info(f"✅ 已写出 {path} ({len(frame)} 行)")
    return path


def write_json(path: str, payload: Dict[str, Any]) -> str:
    """写出 JSON: 键排序, 两空格缩进"""
    text = json.dumps(_convert_to_python_types(payload), sort_keys=True, indent=2, ensure_ascii=False)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text + "\n")
    logger.info(f"✅ 已写出 {path}")
    return path
