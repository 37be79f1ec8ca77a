"""
Peak balls and the Omega-partition of the base torus
峰值球与基环面的 Omega 划分

Balls use the max metric, so B_r(tau) is an open cube of volume (2r)^D.
Radii decay with the rate a_eff of DerivedConstants (equal to `a` once
condition (10) holds).
"""

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from ..utils.parallel import chunk_size, index_chunks, ordered_map
from ..utils.sampling import make_rng, uniform_torus
from .constants_gate import DerivedConstants
from .errors import ConfigError
from .torus_dynamics import SystemParams, TorusPoint, rotate, rotate_orbit, torus_distance_array

OMEGA_0 = "Omega0"
OMEGA_J = "OmegaJ"
OMEGA_INF = "OmegaInfinityCandidate"

_KIND_CODES = {0: OMEGA_0, 1: OMEGA_J, 2: OMEGA_INF}

# extended scan factor used to certify the tail beyond the horizon
TAIL_FACTOR = 10

_BALL_BLOCK = 128


@dataclass(frozen=True)
class PeakBall:
    j: int
    center: TorusPoint
    radius: float

    def contains(self, theta: TorusPoint) -> bool:
        """Open-ball membership; boundary points are outside."""
        return float(torus_distance_array(theta.as_array(), self.center.as_array())) < self.radius

    @property
    def volume(self) -> float:
        return (2.0 * self.radius) ** self.center.D


@dataclass(frozen=True)
class PartitionIndex:
    kind: str
    witness: int = 0

    def __post_init__(self):
        if self.kind not in (OMEGA_0, OMEGA_J, OMEGA_INF):
            raise ConfigError(f"unknown partition kind {self.kind!r}")


@dataclass
class OverlapReport:
    j_max: int
    overlaps: int
    violations: List[Tuple[int, int]] = field(default_factory=list)


@dataclass
class ReturnTimeReport:
    N: int
    i_max: int
    checked: int
    violations: List[Tuple[int, int]] = field(default_factory=list)


@dataclass
class CensusResult:
    rows: List[dict]
    samples: int
    seed: int
    J: int
    j0: int
    omega_infinity_bound: float

    @property
    def total_mass(self) -> float:
        return sum(row["leb_estimate"] for row in self.rows)


# ---------------------------------------------------------------------------
# Balls
# ---------------------------------------------------------------------------

def peak_radii(consts: DerivedConstants, js) -> np.ndarray:
    """r_j = (b/2) a^{-(j-1)/m}, vectorised over j."""
    js = np.asarray(js, dtype=np.float64)
    return 0.5 * consts.b * np.exp(-(js - 1.0) / consts.m * math.log(consts.a_eff))


def peak_ball(params: SystemParams, consts: DerivedConstants, j: int) -> PeakBall:
    """
    The j-th peak ball B_{r_j}(tau_j)
    第 j 个峰值球
    """
    if int(j) != j or j < 1:
        raise ConfigError(f"peak ball index must be >= 1, got {j!r}")
    j = int(j)
    return PeakBall(j=j, center=rotate(params.theta_star, j, params), radius=float(peak_radii(consts, j)))


def ball_volume(consts: DerivedConstants, k, D: int):
    """Leb(B_{r_k}) = (2 r_k)^D = b^D a^{-D(k-1)/m}."""
    return (2.0 * peak_radii(consts, k)) ** D


def _volume_ratio(consts: DerivedConstants, D: int) -> float:
    return math.exp(-D / consts.m * math.log(consts.a_eff))


def tail_volume(consts: DerivedConstants, k_from: float, D: int) -> float:
    """sum_{k >= k_from} Leb(B_{r_k}) in closed form."""
    ratio = _volume_ratio(consts, D)
    return consts.b ** D * ratio ** (k_from - 1) / (1.0 - ratio)


def v_threshold(consts: DerivedConstants, j: int) -> float:
    """v(j) = a^{(j-1)/(dm)} + j"""
    return math.exp((j - 1) / (consts.d * consts.m) * math.log(consts.a_eff)) + j


def j0_criteria(params: SystemParams, consts: DerivedConstants, j0: int) -> Tuple[bool, bool]:
    """
    The two sufficient conditions for Leb(Omega_j) > 0 at a candidate j0.

    (i) the tail from j0 has total volume below 1; (ii) each ball outweighs the
    tail past v(k). v(k) - k grows with k, so k = j0 is the binding case of (ii).
    """
    D = params.D
    ratio = _volume_ratio(consts, D)
    first = tail_volume(consts, j0, D) < 1.0
    gap = math.ceil(v_threshold(consts, j0)) - j0
    second = gap * math.log(ratio) < math.log1p(-ratio)
    return first, second


def choose_j0(params: SystemParams, consts: DerivedConstants) -> int:
    """
    Smallest j0 with Leb(Omega_j) > 0 certified for every j
    选取最小的 j0
    """
    j0 = 1
    while not all(j0_criteria(params, consts, j0)):
        j0 += 1
    return j0


# ---------------------------------------------------------------------------
# Membership
# ---------------------------------------------------------------------------

def deepest_ball(params: SystemParams, consts: DerivedConstants, thetas: np.ndarray,
                 k_lo: int, k_hi: int) -> np.ndarray:
    """
    Largest k in [k_lo, k_hi] with theta in B_{r_k}(tau_k), 0 where none;
    one entry per row of thetas.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    best = np.zeros(len(thetas), dtype=np.int64)
    if k_hi < k_lo:
        return best
    ks = np.arange(max(1, k_lo), k_hi + 1)
    centers = rotate_orbit(params.star, ks, params.rho_hi, params.rho_low)
    radii = peak_radii(consts, ks)

    def _chunk(bounds):
        lo, hi = bounds
        out = np.zeros(hi - lo, dtype=np.int64)
        pts = thetas[lo:hi, None, :]
        for start in range(0, len(ks), _BALL_BLOCK):
            stop = start + _BALL_BLOCK
            inside = torus_distance_array(pts, centers[None, start:stop, :]) < radii[None, start:stop]
            hit = inside.any(axis=1)
            if hit.any():
                last = inside.shape[1] - 1 - np.argmax(inside[:, ::-1], axis=1)
                out = np.where(hit, ks[start:stop][last], out)
        return out

    parts = ordered_map(_chunk, index_chunks(len(thetas), min(chunk_size(), 8192)))
    return np.concatenate(parts) if parts else best


def in_peak_union(params: SystemParams, consts: DerivedConstants, thetas: np.ndarray,
                  j_lo: int, j_hi: int) -> np.ndarray:
    """Mask of rows of thetas lying in the union of B_{r_j}(tau_j), j_lo <= j <= j_hi."""
    return deepest_ball(params, consts, thetas, j_lo, j_hi) > 0


def classify_points(params: SystemParams, consts: DerivedConstants, thetas: np.ndarray,
                    J: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorised classify: returns (kind codes, witnesses) with codes
    0 = Omega0, 1 = OmegaJ, 2 = OmegaInfinityCandidate.
    """
    if J < consts.j0:
        raise ConfigError(f"scan horizon J={J} is below j0={consts.j0}")
    deepest = deepest_ball(params, consts, thetas, consts.j0, J)
    beyond = deepest_ball(params, consts, thetas, J + 1, TAIL_FACTOR * J) > 0
    codes = np.where(beyond, 2, np.where(deepest > 0, 1, 0)).astype(np.int8)
    witness = np.where(codes == 1, deepest - consts.j0 + 1, np.where(codes == 2, J, 0))
    return codes, witness


def classify(params: SystemParams, consts: DerivedConstants, theta: TorusPoint, J: int) -> PartitionIndex:
    """
    Omega-partition index of theta at scan horizon J
    计算 theta 在扫描视界 J 下的划分索引

    The tail beyond J is certified by a direct scan of the balls J < j <= 10 J;
    a containing ball found there makes theta an Omega_infinity candidate.
    Balls beyond 10 J are never checked, so a point lying only in one of
    them is reported as Omega0 or Omega_j.
    """
    codes, witness = classify_points(params, consts, theta.as_array()[None, :], J)
    return PartitionIndex(kind=_KIND_CODES[int(codes[0])], witness=int(witness[0]))


def omega_infinity_mass(params: SystemParams, consts: DerivedConstants, horizon: int) -> float:
    """
    Upper bound on Leb(Omega_inf): the tail sum past the horizon
    Omega_inf 测度上界
    """
    if horizon < 1:
        raise ConfigError(f"horizon must be >= 1, got {horizon!r}")
    return min(1.0, tail_volume(consts, horizon + 1, params.D))


# ---------------------------------------------------------------------------
# Checks on the ball geometry
# ---------------------------------------------------------------------------

def check_return_times(params: SystemParams, consts: DerivedConstants, N: int,
                       i_max: int = 8) -> ReturnTimeReport:
    """
    Whenever d(tau_n, theta*) <= b a^-i, then n >= a^{i/d}
    检验回归时间引理
    """
    ns = np.arange(1, N + 1)
    dist = torus_distance_array(rotate_orbit(params.star, ns, params.rho_hi, params.rho_low), params.star)
    log_a = math.log(consts.a_eff)
    with np.errstate(divide="ignore"):
        depth = np.floor(np.log(consts.b / dist) / log_a)
    depth = np.minimum(depth, i_max)
    close = depth >= 0
    needed = np.exp(depth[close] / consts.d * log_a)
    bad = ns[close] < needed
    violations = [(int(n), int(i)) for n, i in zip(ns[close][bad], depth[close][bad])]
    return ReturnTimeReport(N=N, i_max=i_max, checked=int(close.sum()), violations=violations)


def overlap_scan(params: SystemParams, consts: DerivedConstants, j_max: int = 1000,
                 status_callback: Optional[Callable] = None) -> OverlapReport:
    """
    Every overlapping pair B_{r_j}(tau_j), B_{r_j'}(tau_j') with j' > j must have j' > v(j)
    穷举检查峰值球重叠
    """
    status = status_callback or (lambda msg: None)
    ks = np.arange(1, j_max + 1)
    centers = rotate_orbit(params.star, ks, params.rho_hi, params.rho_low)
    radii = peak_radii(consts, ks)
    report = OverlapReport(j_max=j_max, overlaps=0)
    for i in range(j_max - 1):
        dist = torus_distance_array(centers[i + 1:], centers[i])
        hits = np.flatnonzero(dist < radii[i] + radii[i + 1:])
        report.overlaps += int(hits.size)
        bound = v_threshold(consts, int(ks[i]))
        for h in hits:
            later = int(ks[i + 1 + h])
            if later <= bound:
                report.violations.append((int(ks[i]), later))
    glyph = "✅" if not report.violations else "⚠️"
    status(f"{glyph} Overlap scan to j={j_max}: {report.overlaps} overlaps, {len(report.violations)} violations")
    return report


def subgraph_lipschitz(consts: DerivedConstants, j: int) -> float:
    """log(1 + K alpha^{(j+j0) m}), the Lipschitz constant of the subgraph map on Omega_j."""
    return float(np.logaddexp(0.0, math.log(consts.K) + (j + consts.j0) * consts.m * math.log(consts.alpha)))


def limsup_cover_sums(consts: DerivedConstants, s: float, horizon: int) -> np.ndarray:
    """Partial sums of sum_k diam(B_{r_k})^s, k = 1..horizon."""
    if not s > 0:
        raise ConfigError(f"exponent s must be positive, got {s!r}")
    ks = np.arange(1, horizon + 1)
    return np.cumsum((2.0 * peak_radii(consts, ks)) ** s)


def partition_census(params: SystemParams, consts: DerivedConstants, samples: int, seed: int,
                     J: int, status_callback: Optional[Callable] = None) -> CensusResult:
    """
    Monte-Carlo masses of Omega0, each Omega_j and the Omega_infinity candidates
    划分各部分的蒙特卡洛测度
    """
    status = status_callback or (lambda msg: None)
    thetas = uniform_torus(make_rng(seed), samples, params.D)
    codes, witness = classify_points(params, consts, thetas, J)
    status(f"📐 Classified {samples} base points at horizon J={J}")

    rows = []
    count0 = int(np.sum(codes == 0))
    rows.append(_census_row("0", params.star, 0.0, count0, samples))
    js, counts = np.unique(witness[codes == 1], return_counts=True)
    for j, count in zip(js, counts):
        k = int(j) + consts.j0 - 1
        ball = peak_ball(params, consts, k)
        rows.append(_census_row(str(int(j)), ball.center.as_array(), ball.radius, int(count), samples))
    rows.append(_census_row("inf", params.star, 0.0, int(np.sum(codes == 2)), samples))
    return CensusResult(rows=rows, samples=samples, seed=seed, J=J, j0=consts.j0,
                        omega_infinity_bound=omega_infinity_mass(params, consts, J))


def _census_row(j: str, tau: np.ndarray, radius: float, count: int, samples: int) -> dict:
    return {
        "j": j,
        "tau": [float(t) for t in np.atleast_1d(tau)],
        "r_j": float(radius),
        "leb_estimate": count / samples,
        "count": count,
    }
