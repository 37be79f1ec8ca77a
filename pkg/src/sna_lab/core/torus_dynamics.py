"""
Torus arithmetic and the pinched skew-product map
环面运算与夹点斜积映射

F(theta, x) = (theta + rho mod 1, tanh(kappa x) * (1/D) * sum_i sin(pi theta_i))

Scalar entry points (torus_distance, rotate, fiber_map, ...) take the domain
types below; the *_array / *_values variants work on numpy arrays of shape
(M, D) and are what the other modules use in their inner loops.
"""

import hashlib
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import mpmath
import numpy as np

from ..utils.compensated import CompensatedSum, dd_from_mpf, frac_multiple, two_sum
from ..utils.parallel import index_chunks
from .errors import ConfigError, PinchedOrbitError

# Results this close to an integer are identified with 0 on the circle.
SNAP = 2.0 ** -50

# fiber_map tolerates rounding below zero down to this value
NEGATIVE_CLAMP = -1e-15

_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71)


def wrap(values):
    """Reduce modulo 1 into [0, 1), snapping near-integers to 0."""
    r = np.asarray(values, dtype=np.float64)
    r = r - np.floor(r)
    return np.where((r < SNAP) | (r > 1.0 - SNAP), 0.0, r)


@dataclass(frozen=True)
class TorusPoint:
    """A point of the D-torus, coordinates kept in [0, 1)"""

    coords: Tuple[float, ...]

    def __post_init__(self):
        coords = tuple(float(c) for c in np.atleast_1d(self.coords))
        if not coords:
            raise ConfigError("TorusPoint needs at least one coordinate")
        object.__setattr__(self, "coords", tuple(float(c) for c in wrap(coords)))

    @property
    def D(self) -> int:
        return len(self.coords)

    def as_array(self) -> np.ndarray:
        return np.array(self.coords, dtype=np.float64)

    @classmethod
    def zeros(cls, D: int) -> "TorusPoint":
        return cls((0.0,) * D)


@dataclass(frozen=True)
class PhasePoint:
    """(theta, x) in T^D x [0, 1]"""

    theta: TorusPoint
    x: float

    def __post_init__(self):
        if not 0.0 <= self.x <= 1.0:
            raise ConfigError(f"fiber coordinate x={self.x!r} outside [0, 1]")


@dataclass(frozen=True)
class SystemParams:
    """
    Parameters of F_kappa: steepness, base dimension, rotation vector and
    Diophantine constants. rho_lo carries the low-order double-double part of rho.
    """

    kappa: float
    D: int = 1
    rho: Optional[TorusPoint] = None
    c: float = 0.2
    d: float = 1.1
    theta_star: Optional[TorusPoint] = None
    rho_lo: Tuple[float, ...] = field(default=())

    def __post_init__(self):
        if not self.kappa > 0:
            raise ConfigError(f"kappa must be positive, got {self.kappa!r}")
        if int(self.D) != self.D or self.D < 1:
            raise ConfigError(f"D must be a positive integer, got {self.D!r}")
        if not self.c > 0:
            raise ConfigError(f"Diophantine constant c must be positive, got {self.c!r}")
        if not self.d > 1:
            raise ConfigError(f"Diophantine exponent d must exceed 1, got {self.d!r}")
        if self.rho is None:
            hi, lo = default_rotation(self.D)
            object.__setattr__(self, "rho", TorusPoint(hi))
            object.__setattr__(self, "rho_lo", lo)
        if self.theta_star is None:
            object.__setattr__(self, "theta_star", TorusPoint.zeros(self.D))
        if not self.rho_lo:
            object.__setattr__(self, "rho_lo", (0.0,) * self.D)
        if self.rho.D != self.D or self.theta_star.D != self.D or len(self.rho_lo) != self.D:
            raise ConfigError(f"rho, theta_star and rho_lo must all have D={self.D} coordinates")

    @property
    def rho_hi(self) -> np.ndarray:
        return self.rho.as_array()

    @property
    def rho_low(self) -> np.ndarray:
        return np.array(self.rho_lo, dtype=np.float64)

    @property
    def star(self) -> np.ndarray:
        return self.theta_star.as_array()

    @property
    def pinched_at_origin(self) -> bool:
        return not any(self.theta_star.coords)

    @property
    def params_hash(self) -> str:
        text = repr((float(self.kappa), self.D, self.rho.coords, self.rho_lo,
                     float(self.c), float(self.d), self.theta_star.coords))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "D": self.D,
            "rho": list(self.rho.coords),
            "rho_lo": list(self.rho_lo),
            "c": self.c,
            "d": self.d,
            "theta_star": list(self.theta_star.coords),
        }


def golden_rotation() -> Tuple[float, float]:
    """(sqrt(5) - 1) / 2 as a double-double pair."""
    mpmath.mp.prec = 160
    return dd_from_mpf((mpmath.sqrt(5) - 1) / 2)


def default_rotation(D: int) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
    """Golden mean for D=1, otherwise sqrt(p) mod 1 over the first D primes."""
    if D == 1:
        hi, lo = golden_rotation()
        return (hi,), (lo,)
    if D > len(_PRIMES):
        raise ConfigError(f"default rotation only tabulated up to D={len(_PRIMES)}")
    mpmath.mp.prec = 160
    pairs = [dd_from_mpf(mpmath.sqrt(p) - mpmath.floor(mpmath.sqrt(p))) for p in _PRIMES[:D]]
    return tuple(p[0] for p in pairs), tuple(p[1] for p in pairs)


def decimal_rotation(text: str) -> Tuple[float, float]:
    """Render a decimal string as a double-double pair."""
    mpmath.mp.prec = 160
    value = mpmath.mpf(text)
    value -= mpmath.floor(value)
    return dd_from_mpf(value)


# ---------------------------------------------------------------------------
# Torus arithmetic
# ---------------------------------------------------------------------------

def torus_distance_array(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Max-metric wrap-around distance along the last axis."""
    delta = np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))
    delta = np.minimum(delta, 1.0 - delta)
    return np.max(delta, axis=-1)


def torus_distance(p: TorusPoint, q: TorusPoint) -> float:
    """max_i min(|p_i - q_i|, 1 - |p_i - q_i|)"""
    if p.D != q.D:
        raise ConfigError(f"dimension mismatch: {p.D} vs {q.D}")
    return float(torus_distance_array(p.as_array(), q.as_array()))


def rotate_array(thetas: np.ndarray, k: int, rho_hi: np.ndarray, rho_lo: np.ndarray) -> np.ndarray:
    """theta + k*rho mod 1 for an array of points and one integer k."""
    h, l = frac_multiple(int(k), rho_hi, rho_lo)
    s, err = two_sum(np.asarray(thetas, dtype=np.float64), h)
    return wrap(s + (err + l))


def rotate_orbit(theta: np.ndarray, ks: np.ndarray, rho_hi: np.ndarray, rho_lo: np.ndarray) -> np.ndarray:
    """theta + k*rho mod 1 for one point and an array of integers; shape (len(ks), D)."""
    h, l = frac_multiple(np.asarray(ks), rho_hi, rho_lo)
    s, err = two_sum(np.asarray(theta, dtype=np.float64), h)
    return wrap(s + (err + l))


def rotate(theta: TorusPoint, k: int, rho: Union[TorusPoint, SystemParams],
           rho_lo: Optional[Sequence[float]] = None) -> TorusPoint:
    """
    theta + k*rho mod 1 with double-double accumulation of k*rho
    以双双精度累加 k*rho 的环面旋转

    `rho` may be a TorusPoint (with optional low-order parts) or SystemParams.
    """
    if isinstance(rho, SystemParams):
        rho_hi, low = rho.rho_hi, rho.rho_low
    else:
        rho_hi = rho.as_array()
        low = np.zeros(rho.D) if rho_lo is None else np.asarray(rho_lo, dtype=np.float64)
    if theta.D != len(rho_hi):
        raise ConfigError(f"dimension mismatch: theta has {theta.D}, rho has {len(rho_hi)}")
    return TorusPoint(tuple(rotate_array(theta.as_array(), k, rho_hi, low)))


# ---------------------------------------------------------------------------
# Fiber maps
# ---------------------------------------------------------------------------

def base_weights(params: SystemParams, thetas: np.ndarray) -> np.ndarray:
    """(1/D) sum_i sin(pi (theta_i - theta*_i)), clamped at 0; shape (...,)."""
    thetas = np.asarray(thetas, dtype=np.float64)
    u = thetas if params.pinched_at_origin else wrap(thetas - params.star)
    w = np.mean(np.sin(np.pi * u), axis=-1)
    return np.where(w >= NEGATIVE_CLAMP, np.maximum(w, 0.0), w)


def fiber_values(params: SystemParams, thetas: np.ndarray, xs) -> np.ndarray:
    """Vectorised T_theta(x); no range checks."""
    return np.tanh(params.kappa * np.asarray(xs, dtype=np.float64)) * base_weights(params, thetas)


def fiber_derivative_values(params: SystemParams, thetas: np.ndarray, xs) -> np.ndarray:
    """Vectorised T'_theta(x) = 4 kappa / (e^{kx} + e^{-kx})^2 * weight."""
    with np.errstate(over="ignore"):
        cosh = np.cosh(params.kappa * np.asarray(xs, dtype=np.float64))
    return params.kappa / (cosh * cosh) * base_weights(params, thetas)


def _check_fiber(x: float) -> float:
    x = float(x)
    if not 0.0 <= x <= 1.0:
        raise ConfigError(f"fiber coordinate x={x!r} outside [0, 1]")
    return x


def fiber_map(params: SystemParams, theta: TorusPoint, x: float) -> float:
    """T_theta(x) = tanh(kappa x) * (1/D) * sum_i sin(pi theta_i)"""
    x = _check_fiber(x)
    return float(fiber_values(params, theta.as_array(), x))


def fiber_derivative(params: SystemParams, theta: TorusPoint, x: float) -> float:
    """d/dx T_theta(x)"""
    x = _check_fiber(x)
    return float(fiber_derivative_values(params, theta.as_array(), x))


def step(params: SystemParams, p: PhasePoint) -> PhasePoint:
    """One application of the skew product."""
    x = fiber_map(params, p.theta, p.x)
    return PhasePoint(rotate(p.theta, 1, params), min(max(x, 0.0), 1.0))


def zero_line_lyapunov(params: SystemParams, N: int, theta0: Optional[TorusPoint] = None,
                       chunk: Optional[int] = None) -> float:
    """
    Birkhoff average of log T'_theta(0) along the base orbit of theta0
    零线上的李雅普诺夫指数

    For D=1 this converges to log(kappa) - log(2).
    """
    if N < 1:
        raise ConfigError(f"N must be >= 1, got {N!r}")
    if theta0 is None:
        theta0 = TorusPoint(tuple(wrap(params.star + 0.5)))
    start = theta0.as_array()
    total = CompensatedSum()
    for lo, hi in index_chunks(N, chunk or (1 << 20)):
        points = rotate_orbit(start, np.arange(lo, hi), params.rho_hi, params.rho_low)
        w = base_weights(params, points)
        zero = np.flatnonzero(w <= 0.0)
        if zero.size:
            index = lo + int(zero[0])
            raise PinchedOrbitError(
                f"orbit of theta0 reaches the pinching point at k={index}; log T'(0) = -inf",
                index=index,
            )
        total.add_array(np.log(w))
    return float(np.log(params.kappa) + total.value / N)
