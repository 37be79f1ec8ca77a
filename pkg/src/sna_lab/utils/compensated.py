"""
Error-free transformations and double-double helpers
无误差变换与双双精度工具

Everything here works elementwise on numpy arrays as well as on Python floats.
"""

from typing import Tuple

import numpy as np

_SPLITTER = 134217729.0  # 2^27 + 1


def split(a):
    """Dekker split: a -> (hi, lo) with hi + lo == a, each with <= 27 bits."""
    c = _SPLITTER * a
    abig = c - a
    hi = c - abig
    return hi, a - hi


def two_sum(a, b):
    """Return (s, err) with s + err == a + b exactly."""
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err


def two_prod(a, b):
    """Return (p, err) with p + err == a * b exactly."""
    p = a * b
    ahi, alo = split(a)
    bhi, blo = split(b)
    err = ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo
    return p, err


def dd_from_mpf(value) -> Tuple[float, float]:
    """Round an mpmath number to a (hi, lo) double-double pair."""
    hi = float(value)
    lo = float(value - hi)
    return hi, lo


def frac_multiple(k, hi, lo):
    """
    Fractional part of k * (hi + lo) as an unreduced double-double.
    k*(hi+lo) 的小数部分（双双精度）

    `k` may be an integer or an integer array (|k| < 2^53); `hi`/`lo` hold the
    rotation vector per coordinate. Result broadcasts as k[..., None] * hi.
    The returned pair (h, l) satisfies h + l == frac(k*(hi+lo)) up to ~1e-32
    relative, with h in [0, 1] and |l| tiny; callers reduce mod 1 at the end.
    """
    k = np.asarray(k, dtype=np.float64)
    if k.ndim:
        k = k[..., None]
    p, e = two_prod(k, np.asarray(hi, dtype=np.float64))
    q = k * np.asarray(lo, dtype=np.float64)
    # exact once |p| >= 1 (Sterbenz); below that the rounding is < 2^-54
    h0 = p - np.floor(p)
    return two_sum(h0, e + q)


class CompensatedSum:
    """Running sum with a carried error term (like math.fsum, but incremental)"""

    def __init__(self, value: float = 0.0):
        self._s = float(value)
        self._t = 0.0

    def add(self, value: float) -> "CompensatedSum":
        self._s, err = two_sum(self._s, float(value))
        self._t += err
        return self

    def add_array(self, values: np.ndarray) -> "CompensatedSum":
        """Add a block of values (pairwise-summed by numpy, then carried here)."""
        values = np.asarray(values, dtype=np.float64)
        if values.size:
            self.add(float(np.sum(values)))
        return self

    @property
    def value(self) -> float:
        return self._s + self._t
