"""
Validation and parsing of command-line and config values
命令行与配置值的校验和解析
"""

import math
import re
from typing import List, Tuple

from ..core.errors import ConfigError

_POWER = re.compile(r"^\s*(-?\d+(?:\.\d*)?)\s*\^\s*(-?\d+(?:\.\d*)?)\s*$")
_DECIMAL = re.compile(r"^\s*[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?\s*$")


def parse_scale(text: str) -> float:
    """
    Parse a positive scale such as 0.125, 1e-3 or 2^-3
    解析正尺度值（支持 2^-3 写法）
    """
    match = _POWER.match(text)
    try:
        value = float(match.group(1)) ** float(match.group(2)) if match else float(text)
    except (ValueError, OverflowError):
        raise ConfigError(f"invalid scale {text!r}") from None
    if not value > 0 or not math.isfinite(value):
        raise ConfigError(f"scale must be positive and finite, got {text!r}")
    return value


def parse_ladder(spec: str) -> Tuple[float, float, float]:
    """
    Parse a ladder spec '<coarse>:<fine>:<ratio>'
    解析尺度阶梯 '<粗>:<细>:<比率>'

    Returns:
        (coarse, fine, ratio) with 0 < fine <= coarse and 0 < ratio < 1
    """
    parts = spec.split(":")
    if len(parts) != 3:
        raise ConfigError(f"ladder must look like <coarse>:<fine>:<ratio>, got {spec!r}")
    coarse, fine, ratio = (parse_scale(p) for p in parts)
    if fine > coarse:
        raise ConfigError(f"ladder fine scale {fine!r} exceeds coarse scale {coarse!r}")
    if not ratio < 1:
        raise ConfigError(f"ladder ratio must be below 1, got {ratio!r}")
    return coarse, fine, ratio


def validate_rho_spec(spec: str, D: int) -> List[str]:
    """
    Check a rotation spec: 'golden' (D=1), 'default', or D comma-separated decimals
    校验旋转向量写法
    """
    text = (spec or "").strip().lower()
    if text in ("golden", "default"):
        if text == "golden" and D != 1:
            raise ConfigError("--rho golden is only defined for D=1")
        return []
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != D:
        raise ConfigError(f"rotation spec needs {D} components, got {len(parts)}")
    for part in parts:
        if not _DECIMAL.match(part):
            raise ConfigError(f"invalid rotation component {part!r}")
    return parts


def parse_float_list(text: str, D: int, name: str) -> List[float]:
    """Parse D comma-separated floats (e.g. a base point)."""
    try:
        values = [float(p) for p in text.split(",")]
    except ValueError:
        raise ConfigError(f"invalid value for {name}: {text!r}") from None
    if len(values) != D:
        raise ConfigError(f"{name} needs {D} components, got {len(values)}")
    return values


def parse_depths(spec: str) -> List[int]:
    """'start:stop:step' (inclusive stop) or a comma-separated list of depths."""
    try:
        if ":" in spec:
            start, stop, step = (int(p) for p in spec.split(":"))
            depths = list(range(start, stop + 1, step))
        else:
            depths = [int(p) for p in spec.split(",")]
    except ValueError:
        raise ConfigError(f"invalid depth list {spec!r}") from None
    if not depths or min(depths) < 1:
        raise ConfigError(f"depths must be >= 1, got {spec!r}")
    return depths
