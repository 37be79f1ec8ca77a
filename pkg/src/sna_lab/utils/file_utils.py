"""
Atomic artifact writing and deterministic rendering
原子写入与确定性序列化
"""

import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Sequence, Union

import numpy as np


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars/arrays and non-finite floats into plain JSON values."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


def json_text(payload: Any) -> str:
    """Sorted keys, 2-space indent, trailing newline."""
    return json.dumps(to_jsonable(payload), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def render_cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """
    CSV with shortest round-trip float rendering
    使用最短往返浮点表示的 CSV
    """
    lines = [",".join(header)]
    lines.extend(",".join(render_cell(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def atomic_write_text(path: Union[str, Path], content: str) -> Path:
    """
    Write content to path via a temp file in the same directory and os.replace
    通过临时文件与 os.replace 原子写入
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", suffix=".tmp", dir=target.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(content)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return target
