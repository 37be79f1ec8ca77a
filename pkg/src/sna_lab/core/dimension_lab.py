"""
Dimension estimators for the measure on the graph of phi^+
phi^+ 图上测度的维数估计

All balls are max-metric cubes on T^D x [0, 1]; the base coordinates wrap,
the fiber coordinate does not.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import linregress

from ..utils.compensated import CompensatedSum
from ..utils.parallel import index_chunks, ordered_map
from ..utils.sampling import grid_points, make_rng, uniform_torus
from .bounding_lines import evaluate_phi, log_cosh, phi_grid
from .constants_gate import DerivedConstants, hausdorff_finiteness_threshold, hausdorff_ratio_threshold
from .errors import ConfigError, NumericFailure
from .partition_builder import peak_radii
from .torus_dynamics import SystemParams, TorusPoint, base_weights, wrap

# periodic box length for the fiber axis; larger than 1 + any radius, so it never wraps
FIBER_BOX = 3.0

MIN_R2 = 0.98

# graph_lyapunov refuses when more than this share of the grid has T' = 0
MAX_EXCLUDED_SHARE = 0.01

DENSITY_CONVENTION = "max metric: V_D eps^D = (2 eps)^D"


@dataclass
class MeasureSample:
    """Points (theta_i, phi_n(theta_i)) pushed forward from the base"""

    thetas: np.ndarray
    phis: np.ndarray
    n: int
    tolerance: float = 0.0
    seed: Optional[int] = None
    resolution: float = 0.0

    def __post_init__(self):
        self.thetas = np.atleast_2d(np.asarray(self.thetas, dtype=np.float64))
        self.phis = np.asarray(self.phis, dtype=np.float64)
        if len(self.thetas) != len(self.phis):
            raise ConfigError("thetas and phis must have the same length")
        if self.phis.size and (self.phis.min() < 0.0 or self.phis.max() > 1.0):
            raise ConfigError("phi values must lie in [0, 1]")
        if not self.resolution:
            self.resolution = len(self.phis) ** (1.0 / self.D) if len(self.phis) else 0.0

    @property
    def D(self) -> int:
        return self.thetas.shape[1]

    @property
    def size(self) -> int:
        return len(self.phis)

    @property
    def points(self) -> List[Tuple[TorusPoint, float]]:
        return [(TorusPoint(tuple(t)), float(x)) for t, x in zip(self.thetas, self.phis)]

    def coords(self) -> np.ndarray:
        return np.column_stack([self.thetas, self.phis])

    @classmethod
    def from_coords(cls, coords: np.ndarray, n: int = 0, tolerance: float = 0.0,
                    seed: Optional[int] = None, resolution: float = 0.0) -> "MeasureSample":
        """Build a sample from rows (theta_1..theta_D, x)."""
        coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
        return cls(coords[:, :-1], coords[:, -1], n, tolerance, seed, resolution)


@dataclass
class DimensionEstimate:
    method: str
    ladder: List[float]
    stats: List[float]
    slope: float
    stderr: float
    r2: float
    window: Tuple[int, int]
    seed: Optional[int] = None
    proxy_depth_n: Optional[int] = None
    proxy_tolerance: Optional[float] = None
    excluded: int = 0
    flags: List[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def accepted(self) -> bool:
        return self.r2 >= MIN_R2

    def to_dict(self) -> dict:
        data = {
            "method": self.method,
            "ladder": list(self.ladder),
            "stats": list(self.stats),
            "slope": self.slope,
            "stderr": self.stderr,
            "r2": self.r2,
            "window": list(self.window),
            "seed": self.seed,
            "proxy_depth_n": self.proxy_depth_n,
            "proxy_tolerance": self.proxy_tolerance,
            "excluded": self.excluded,
            "flags": list(self.flags),
        }
        data.update(self.extra)
        return data

    def eps_rows(self) -> List[list]:
        return [[eps, stat] for eps, stat in zip(self.ladder, self.stats)]


@dataclass
class LyapunovEstimate:
    value: float
    excluded: int
    M: int
    n: int

    def __float__(self) -> float:
        return self.value


@dataclass
class CoverCost:
    s: float
    D: int
    log_summands: np.ndarray
    log_partial_sums: np.ndarray
    log_ratio: float
    ratio_threshold: float
    finiteness_threshold: float

    @property
    def convergent(self) -> bool:
        """Asymptotic summand ratio alpha^m a^{-s/m} below 1."""
        return self.log_ratio < 0.0

    @property
    def finite_at_base_dimension(self) -> bool:
        """D above m^2 log(alpha/a): the D-dimensional measure of the graph is finite."""
        return self.D > self.finiteness_threshold

    @property
    def partial_sums(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_partial_sums)


@dataclass
class DensityProfile:
    rows: List[Tuple[float, float]]
    convention: str
    excluded: int
    flags: List[str] = field(default_factory=list)

    @property
    def tail_spread(self) -> float:
        """Relative spread (max - min) / mean over the last three rungs."""
        tail = np.array([ratio for _, ratio in self.rows[-3:]])
        if tail.size == 0:
            return math.nan
        return float((tail.max() - tail.min()) / tail.mean())


# ---------------------------------------------------------------------------
# Samples and ladders
# ---------------------------------------------------------------------------

def sample_measure(params: SystemParams, samples: int, n: int, seed: int = 0, grid: bool = False,
                   tolerance: float = 0.0) -> MeasureSample:
    """
    Push uniform base points forward onto the graph of phi_n
    将均匀基点推送到 phi_n 的图上
    """
    if samples < 1:
        raise ConfigError(f"samples must be >= 1, got {samples!r}")
    if grid:
        thetas = grid_points(samples, params.D)
        seed = None
    else:
        thetas = uniform_torus(make_rng(seed), samples, params.D)
    phis = np.clip(evaluate_phi(params, thetas, n), 0.0, 1.0)
    return MeasureSample(thetas, phis, n, tolerance=tolerance, seed=seed)


def pinched_fraction(sample: MeasureSample, tol: float = 1e-12) -> float:
    """Share of the sample with phi_n <= tol."""
    if sample.size == 0:
        return 0.0
    return float(np.mean(sample.phis <= tol))


def geometric_ladder(coarse: float, fine: float, ratio: float = 0.5) -> List[float]:
    """coarse, coarse*ratio, ... down to fine (inclusive within rounding)."""
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"ladder ratio must lie in (0, 1), got {ratio!r}")
    if not 0.0 < fine <= coarse:
        raise ConfigError(f"ladder needs 0 < fine <= coarse, got {coarse!r}:{fine!r}")
    steps = int(math.floor(math.log(fine / coarse) / math.log(ratio) + 1e-9))
    return [coarse * ratio ** i for i in range(steps + 1)]


def default_ladder(M: float) -> List[float]:
    """2^-3 down to max(2^-14, 4/M), ratio 1/2."""
    fine = max(2.0 ** -14, 4.0 / M)
    return geometric_ladder(2.0 ** -3, min(fine, 2.0 ** -3), 0.5)


def default_window(length: int) -> Tuple[int, int]:
    """Drop the two coarsest and two finest rungs when enough remain."""
    return (2, length - 2) if length >= 6 else (0, length)


def _fit(xs: Sequence[float], ys: Sequence[float]) -> Tuple[float, float, float]:
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.size < 2:
        raise NumericFailure(f"need at least two ladder rungs to fit, got {xs.size}")
    if np.ptp(ys) == 0.0:
        return 0.0, 0.0, 1.0
    fit = linregress(xs, ys)
    return float(fit.slope), float(fit.stderr), float(fit.rvalue ** 2)


def _check_ladder(ladder: Sequence[float]) -> np.ndarray:
    eps = np.asarray(ladder, dtype=np.float64)
    if eps.size == 0 or np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise ConfigError("ladder must be a non-empty strictly decreasing list of positive scales")
    return eps


# ---------------------------------------------------------------------------
# Box counting
# ---------------------------------------------------------------------------

def _occupied_cells(coords: np.ndarray, eps: float) -> int:
    cells = np.floor(coords / eps).astype(np.int64)
    base = int(math.ceil(1.0 / eps)) + 2
    if base ** coords.shape[1] < 2 ** 62:
        keys = np.zeros(len(cells), dtype=np.int64)
        for axis in range(coords.shape[1]):
            keys = keys * base + cells[:, axis]
        parts = ordered_map(lambda b: np.unique(keys[b[0]:b[1]]), index_chunks(len(keys)))
        return int(np.unique(np.concatenate(parts)).size)
    return int(np.unique(cells, axis=0).shape[0])


def box_dimension(sample: MeasureSample, ladder: Sequence[float],
                  window: Optional[Tuple[int, int]] = None) -> DimensionEstimate:
    """
    Grid-cover box-counting slope of log N(eps) against -log eps
    网格覆盖盒计数维数
    """
    if sample.size == 0:
        raise ConfigError("box counting needs a non-empty sample")
    eps = _check_ladder(ladder)
    if eps[-1] < 1.0 / sample.resolution:
        raise NumericFailure(
            f"undersampled: finest eps={eps[-1]!r} is below the sampling resolution 1/{sample.resolution:g}"
        )
    coords = sample.coords()
    counts = [_occupied_cells(coords, e) for e in eps]
    lo, hi = window or default_window(len(eps))
    slope, stderr, r2 = _fit(-np.log(eps[lo:hi]), np.log(counts[lo:hi]))
    estimate = DimensionEstimate("box", eps.tolist(), [float(c) for c in counts], slope, stderr, r2, (lo, hi),
                                 seed=sample.seed, proxy_depth_n=sample.n, proxy_tolerance=sample.tolerance)
    # half-window slopes share the middle rung
    mid = (lo + hi) // 2
    if mid - lo >= 1 and hi - mid >= 2:
        coarse = _fit(-np.log(eps[lo:mid + 1]), np.log(counts[lo:mid + 1]))[0]
        fine = _fit(-np.log(eps[mid:hi]), np.log(counts[mid:hi]))[0]
        estimate.extra.update({"coarse_slope": coarse, "fine_slope": fine})
    return estimate


# ---------------------------------------------------------------------------
# Ball masses
# ---------------------------------------------------------------------------

def _tree(sample: MeasureSample) -> cKDTree:
    box = np.array([1.0] * sample.D + [FIBER_BOX])
    coords = sample.coords()
    coords[:, :-1] = wrap(coords[:, :-1])
    return cKDTree(coords, boxsize=box)


def _ball_counts(tree: cKDTree, anchors: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """counts[i, k] = #{sample points within eps_k of anchors[i]} (closed cube)."""

    def _chunk(bounds):
        lo, hi = bounds
        block = anchors[lo:hi]
        return np.stack([tree.query_ball_point(block, r=e, p=np.inf, return_length=True) for e in eps], axis=1)

    parts = ordered_map(_chunk, index_chunks(len(anchors), 256))
    return np.concatenate(parts).astype(np.int64)


def _anchor_coords(sample: MeasureSample, anchors: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    if not 1 <= anchors <= sample.size:
        raise ConfigError(f"anchors must lie in [1, {sample.size}], got {anchors!r}")
    index = np.sort(make_rng(seed).choice(sample.size, size=anchors, replace=False))
    return index, sample.coords()[index]


def ball_masses(sample: MeasureSample, anchors: np.ndarray, ladder: Sequence[float],
                self_count: int = 1, tree: Optional[cKDTree] = None) -> np.ndarray:
    """
    Empirical mu(B_eps(anchor)) with self_count points (the anchor itself)
    removed; 0 marks an empty ball.
    """
    eps = _check_ladder(ladder)
    counts = _ball_counts(tree or _tree(sample), np.atleast_2d(anchors), eps) - self_count
    return np.maximum(counts, 0) / max(sample.size - self_count, 1)


def information_dimension(sample: MeasureSample, ladder: Sequence[float], anchors: int, seed: int,
                          window: Optional[Tuple[int, int]] = None,
                          status_callback: Optional[Callable] = None) -> DimensionEstimate:
    """
    Slope of the anchor average of log mu(B_eps(x)) against log eps
    信息维数估计
    """
    status = status_callback or (lambda msg: None)
    eps = _check_ladder(ladder)
    _, coords = _anchor_coords(sample, anchors, seed)
    status(f"📐 Ball masses for {anchors} anchors over {len(eps)} scales...")
    masses = ball_masses(sample, coords, eps)
    empty = masses <= 0
    with np.errstate(divide="ignore"):
        logs = np.where(empty, 0.0, np.log(np.where(empty, 1.0, masses)))
    kept = (~empty).sum(axis=0)
    if np.any(kept == 0):
        raise NumericFailure("every anchor ball is empty at some scale; ladder too fine for the sample")
    stats = logs.sum(axis=0) / kept
    lo, hi = window or default_window(len(eps))
    slope, stderr, r2 = _fit(np.log(eps[lo:hi]), stats[lo:hi])
    pointwise = _per_anchor_slopes(eps, logs, empty, (lo, hi))
    extra = {
        "anchors": int(anchors),
        "pointwise_p10": float(np.nanpercentile(pointwise, 10)),
        "pointwise_p90": float(np.nanpercentile(pointwise, 90)),
    }
    return DimensionEstimate("information", eps.tolist(), stats.tolist(), slope, stderr, r2, (lo, hi),
                             seed=seed, proxy_depth_n=sample.n, proxy_tolerance=sample.tolerance,
                             excluded=int(empty.sum()), extra=extra)


def _per_anchor_slopes(eps: np.ndarray, logs: np.ndarray, empty: np.ndarray,
                       window: Tuple[int, int]) -> np.ndarray:
    lo, hi = window
    x = np.log(eps[lo:hi])
    slopes = np.full(len(logs), np.nan)
    for i in range(len(logs)):
        keep = ~empty[i, lo:hi]
        if keep.sum() >= 2:
            slopes[i] = _fit(x[keep], logs[i, lo:hi][keep])[0]
    return slopes


def pointwise_survey(sample: MeasureSample, ladder: Sequence[float], anchors: int, seed: int,
                     window: Optional[Tuple[int, int]] = None) -> np.ndarray:
    """Single-anchor slopes for `anchors` mu-random anchors (nan where too few rungs)."""
    eps = _check_ladder(ladder)
    _, coords = _anchor_coords(sample, anchors, seed)
    masses = ball_masses(sample, coords, eps)
    empty = masses <= 0
    with np.errstate(divide="ignore"):
        logs = np.where(empty, 0.0, np.log(np.where(empty, 1.0, masses)))
    return _per_anchor_slopes(eps, logs, empty, window or default_window(len(eps)))


def _anchor_masses(sample: MeasureSample, anchor: Tuple[TorusPoint, float],
                   eps: np.ndarray) -> Tuple[np.ndarray, float]:
    """Ball masses around an external anchor, not counting sample points equal to it."""
    theta, x = anchor
    point = np.append(wrap(theta.as_array()), float(x))
    tree = _tree(sample)
    hits = int(tree.query_ball_point(point, r=0.0, p=np.inf, return_length=True))
    return ball_masses(sample, point, eps, self_count=hits, tree=tree)[0], float(x)


def pointwise_dimension(sample: MeasureSample, anchor: Tuple[TorusPoint, float], ladder: Sequence[float],
                        window: Optional[Tuple[int, int]] = None) -> DimensionEstimate:
    """
    Single-anchor slope of log mu(B_eps(anchor)) against log eps
    单点逐点维数
    """
    eps = _check_ladder(ladder)
    masses, x = _anchor_masses(sample, anchor, eps)
    keep = masses > 0
    lo, hi = window or default_window(len(eps))
    in_window = keep[lo:hi]
    logs = np.log(np.where(keep, masses, 1.0))
    slope, stderr, r2 = _fit(np.log(eps[lo:hi])[in_window], logs[lo:hi][in_window])
    flags = ["atypical point"] if x <= 0.0 else []
    ratios = logs[keep] / np.log(eps[keep])
    extra = {"local_min": float(ratios.min()) if ratios.size else None,
             "local_max": float(ratios.max()) if ratios.size else None}
    return DimensionEstimate("pointwise", eps[keep].tolist(), logs[keep].tolist(), slope, stderr, r2, (lo, hi),
                             seed=sample.seed, proxy_depth_n=sample.n, proxy_tolerance=sample.tolerance,
                             excluded=int((~keep).sum()), flags=flags, extra=extra)


def density_profile(sample: MeasureSample, anchor: Tuple[TorusPoint, float], ladder: Sequence[float],
                    D: int) -> DensityProfile:
    """
    mu(B_eps(anchor)) / (V_D eps^D) for each eps of the ladder
    可求长密度剖面
    """
    eps = _check_ladder(ladder)
    masses, x = _anchor_masses(sample, anchor, eps)
    keep = masses > 0
    rows = [(float(e), float(mass / (2.0 * e) ** D)) for e, mass in zip(eps[keep], masses[keep])]
    flags = ["atypical point"] if x <= 0.0 else []
    return DensityProfile(rows=rows, convention=DENSITY_CONVENTION, excluded=int((~keep).sum()), flags=flags)


# ---------------------------------------------------------------------------
# Dynamics-based quantities
# ---------------------------------------------------------------------------

def graph_lyapunov(params: SystemParams, n: int, M: int, zero_line: bool = False,
                   status_callback: Optional[Callable] = None) -> LyapunovEstimate:
    """
    Grid average of log T'_theta(phi_n(theta))
    吸引子图上的李雅普诺夫指数

    zero_line evaluates on x = 0 instead, giving log(kappa) - log(2) for D=1.
    """
    status = status_callback or (lambda msg: None)
    if n < 0 or M < 1:
        raise ConfigError(f"need n >= 0 and M >= 1, got n={n!r}, M={M!r}")
    grid = grid_points(M, params.D)
    values = np.zeros(len(grid)) if zero_line else evaluate_phi(params, grid, n)
    w = base_weights(params, grid)
    usable = w > 0
    excluded = int(len(grid) - usable.sum())
    if excluded > MAX_EXCLUDED_SHARE * len(grid):
        raise NumericFailure(f"too close to pinched set: {excluded} of {len(grid)} grid points have T' = 0")
    logs = math.log(params.kappa) - 2.0 * log_cosh(params.kappa * values[usable]) + np.log(w[usable])
    total = CompensatedSum().add_array(logs)
    value = total.value / int(usable.sum())
    status(f"📐 lambda = {value:.6f} over {int(usable.sum())} grid points ({excluded} excluded)")
    return LyapunovEstimate(value=float(value), excluded=excluded, M=len(grid), n=n)


def cover_cost(consts: DerivedConstants, s: float, j_max: int, D: int) -> CoverCost:
    """
    Partial sums of sqrt(1 + (K alpha^{(j+j0)m+1})^2) (2 r_{j+j0-1})^s, in log space
    Hausdorff 覆盖代价部分和（对数空间）
    """
    if not s > 0 or j_max < 1 or D < 1:
        raise ConfigError(f"need s > 0, j_max >= 1 and D >= 1, got s={s!r}, j_max={j_max!r}, D={D!r}")
    js = np.arange(0, j_max + 1)
    log_alpha = math.log(consts.alpha)
    log_stretch = 0.5 * np.logaddexp(0.0, 2.0 * (math.log(consts.K) + ((js + consts.j0) * consts.m + 1) * log_alpha))
    log_diam = np.log(2.0 * peak_radii(consts, js + consts.j0 - 1))
    log_summands = log_stretch + s * log_diam
    log_ratio = consts.m * log_alpha - s / consts.m * math.log(consts.a_eff)
    return CoverCost(
        s=s,
        D=D,
        log_summands=log_summands,
        log_partial_sums=np.logaddexp.accumulate(log_summands),
        log_ratio=float(log_ratio),
        ratio_threshold=hausdorff_ratio_threshold(consts),
        finiteness_threshold=hausdorff_finiteness_threshold(consts),
    )


def graph_variation(params: SystemParams, n: int, M: int) -> float:
    """
    Total variation of the closed polyline through phi_n on the M-grid (D=1)
    phi_n 折线的全变差
    """
    if params.D != 1:
        raise ConfigError("graph_variation is defined for D=1 only")
    values = phi_grid(params, M, n).values
    return float(np.sum(np.abs(np.diff(np.append(values, values[0])))))
