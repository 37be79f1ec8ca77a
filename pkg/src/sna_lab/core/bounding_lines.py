"""
Iterated upper bounding lines phi_n and the checks built on them
迭代上界线 phi_n 及相关验证

phi_n(theta) = T_{theta-rho} o ... o T_{theta-n rho}(1). Every backward orbit
point theta - k rho is computed directly from theta, never by accumulating
rotations, so phi_n(tau_k) is exactly 0 for 1 <= k <= n.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import linregress

from ..utils.parallel import index_chunks, ordered_map
from ..utils.sampling import grid_points, make_rng, uniform_torus
from .constants_gate import ConditionEntry, ConditionReport, DerivedConstants
from .errors import ConfigError, NumericFailure, PinchedOrbitError
from .partition_builder import in_peak_union
from .torus_dynamics import (
    SystemParams,
    TorusPoint,
    base_weights,
    rotate_array,
    rotate_orbit,
    torus_distance_array,
)

LOG_2 = math.log(2.0)

PINCH_DISTANCE = 1e-14


@dataclass
class GraphSample:
    """phi_n sampled on a grid"""

    grid: np.ndarray
    values: np.ndarray
    n: int
    params_hash: str
    approximate: bool = False
    error_budget: float = 0.0

    @property
    def D(self) -> int:
        return self.grid.shape[1]

    def points(self) -> List[TorusPoint]:
        return [TorusPoint(tuple(row)) for row in self.grid]

    def header(self) -> List[str]:
        return [f"theta_{i + 1}" for i in range(self.D)] + ["phi", "n"]

    def rows(self) -> Iterator[list]:
        for theta, value in zip(self.grid, self.values):
            yield [float(t) for t in theta] + [float(value), self.n]


@dataclass
class OrbitStats:
    s_counts: np.ndarray
    blocks: List[Tuple[int, int]]
    n: int
    theta: TorusPoint
    orbit: np.ndarray = field(repr=False, default=None)

    def s(self, k: int) -> int:
        """s^n_k(theta), with s^n_n = 0."""
        return int(self.s_counts[k])


@dataclass
class DecayFit:
    depths: List[int]
    decrements: List[float]
    log_decrements: List[float]
    slope: float
    intercept: float
    r2: float
    dropped: int


@dataclass
class ConvergenceResult:
    sample: GraphSample
    decrement: float
    converged: bool
    tolerance: float


# ---------------------------------------------------------------------------
# Exact evaluation
# ---------------------------------------------------------------------------

def phi_values(params: SystemParams, thetas: np.ndarray, n: int) -> np.ndarray:
    """phi_n at every row of thetas (shape (M, D)); serial."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    x = np.ones(len(thetas))
    for k in range(n, 0, -1):
        w = base_weights(params, rotate_array(thetas, -k, params.rho_hi, params.rho_low))
        x = np.tanh(params.kappa * x) * w
    return x


def evaluate_phi(params: SystemParams, thetas: np.ndarray, n: int) -> np.ndarray:
    """phi_values split over index chunks; bit-identical to the serial version."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    parts = ordered_map(lambda b: phi_values(params, thetas[b[0]:b[1]], n), index_chunks(len(thetas)))
    return np.concatenate(parts) if parts else np.empty(0)


def phi_n(params: SystemParams, theta: TorusPoint, n: int) -> float:
    """
    Iterated upper bounding line at depth n
    深度 n 的迭代上界线
    """
    if int(n) != n or n < 0:
        raise ConfigError(f"depth n must be a non-negative integer, got {n!r}")
    if theta.D != params.D:
        raise ConfigError(f"theta has {theta.D} coordinates, system has D={params.D}")
    return float(phi_values(params, theta.as_array()[None, :], int(n))[0])


def phi_grid(params: SystemParams, M: int, n: int) -> GraphSample:
    """phi_n on the uniform grid {i/M} (product grid for D > 1)"""
    if M < 2:
        raise ConfigError(f"grid size M must be >= 2, got {M!r}")
    if n < 0:
        raise ConfigError(f"depth n must be >= 0, got {n!r}")
    grid = grid_points(M, params.D)
    return GraphSample(grid=grid, values=evaluate_phi(params, grid, n), n=n, params_hash=params.params_hash)


def phi_sweep(params: SystemParams, M: int, n: int) -> Iterator[GraphSample]:
    """
    Yield phi_1, ..., phi_n on one fixed grid
    在固定网格上依次生成 phi_1..phi_n

    The base weights of each backward offset are computed once and reused by
    every later depth; only the current depth's values are held.
    """
    grid = grid_points(M, params.D)
    weights: List[np.ndarray] = []
    for depth in range(1, n + 1):
        weights.append(base_weights(params, rotate_array(grid, -depth, params.rho_hi, params.rho_low)))
        x = np.ones(len(grid))
        for k in range(depth, 0, -1):
            x = np.tanh(params.kappa * x) * weights[k - 1]
        yield GraphSample(grid=grid, values=x, n=depth, params_hash=params.params_hash)


def step_error_budget(consts: DerivedConstants, n: int) -> float:
    """alpha^{-lambda n}: the off-peak decrement bound applied at depth n."""
    return math.exp(-consts.lambda_rate * n * math.log(consts.alpha))


def incremental_update(params: SystemParams, consts: DerivedConstants, prev: GraphSample,
                       q: int = 1) -> Tuple[GraphSample, float]:
    """
    Advance a GraphSample one depth, recomputing only inside the peak balls
    仅在峰值球内重新计算，推进一层深度

    Grid points outside the union of B_{r_j}(tau_j), q <= j <= n+1, keep their
    previous values; the returned budget alpha^{-lambda n} bounds that error.
    """
    if prev.n < consts.m * q + 1:
        raise ConfigError(f"incremental update needs depth >= m*q+1 = {consts.m * q + 1}, got {prev.n}")
    n_next = prev.n + 1
    inside = in_peak_union(params, consts, prev.grid, q, n_next)
    values = prev.values.copy()
    if inside.any():
        values[inside] = evaluate_phi(params, prev.grid[inside], n_next)
    budget = step_error_budget(consts, prev.n)
    out = GraphSample(
        grid=prev.grid,
        values=values,
        n=n_next,
        params_hash=prev.params_hash,
        approximate=True,
        error_budget=prev.error_budget + budget,
    )
    return out, budget


def converge_phi(params: SystemParams, consts: DerivedConstants, M: int, tol: float,
                 n_max: int = 5000, q: int = 1,
                 status_callback: Optional[Callable] = None) -> ConvergenceResult:
    """
    Depth-doubling stopping rule for the phi^+ proxy
    phi^+ 近似的加倍停止准则

    Stops at the first depth whose sup off-peak decrement |phi_n - phi_{n-1}| is
    below tol, or at n_max.
    """
    status = status_callback or (lambda msg: None)
    grid = grid_points(M, params.D)
    n = consts.m * q + 1
    while True:
        n = min(n, n_max)
        upper, log_delta = evaluate_phi_decrement(params, grid, n)
        off_peak = ~in_peak_union(params, consts, grid, q, n)
        decrement = math.exp(float(np.max(log_delta[off_peak]))) if off_peak.any() else 0.0
        sample = GraphSample(grid=grid, values=upper, n=n, params_hash=params.params_hash)
        if decrement < tol:
            status(f"✅ phi_n converged at n={n} (decrement {decrement:.3e} < {tol:.3e})")
            return ConvergenceResult(sample, decrement, True, tol)
        if n >= n_max:
            status(f"⚠️ depth cap n_max={n_max} reached with decrement {decrement:.3e}")
            return ConvergenceResult(sample, decrement, False, tol)
        n *= 2


def log_cosh(z: np.ndarray) -> np.ndarray:
    """log cosh z without overflow."""
    z = np.abs(z)
    return z + np.log1p(np.exp(-2.0 * z)) - LOG_2


def _log_sinh(log_kappa: float, log_delta: np.ndarray) -> np.ndarray:
    """log sinh(kappa |delta|) from log |delta|, without forming tiny or huge intermediates."""
    with np.errstate(divide="ignore", over="ignore", invalid="ignore", under="ignore"):
        log_u = log_kappa + log_delta
        u = np.exp(np.minimum(log_u, 700.0))
        mid = np.log(np.sinh(np.minimum(u, 20.0)))
        big = u + np.log1p(-np.exp(-2.0 * u)) - LOG_2
        return np.where(log_u < -20.0, log_u, np.where(u < 20.0, mid, big))


def phi_decrement_values(params: SystemParams, thetas: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    phi_n and log |phi_n - phi_{n-1}| at every row of thetas; serial, n >= 1
    同时计算 phi_n 与 log|phi_n - phi_{n-1}|

    Both chains share the maps at offsets n-1..1, so their gap is carried
    through them with tanh(kx) - tanh(ky) = sinh(k(x - y)) / (cosh kx cosh ky)
    instead of subtracting the two results. The phi_n values are bit-identical
    to phi_values.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    kappa = float(params.kappa)
    log_kappa = math.log(kappa)
    w = base_weights(params, rotate_array(thetas, -n, params.rho_hi, params.rho_low))
    x = np.tanh(kappa * np.ones(len(thetas))) * w
    y = np.ones(len(thetas))
    # 1 - tanh(k) w, written so that w near 1 and large k keep their digits
    gap = (1.0 - w) + w * (2.0 / (np.exp(min(2.0 * kappa, 1400.0)) + 1.0))
    with np.errstate(divide="ignore"):
        log_delta = np.log(gap)
    for k in range(n - 1, 0, -1):
        w = base_weights(params, rotate_array(thetas, -k, params.rho_hi, params.rho_low))
        with np.errstate(divide="ignore", invalid="ignore"):
            log_delta = (np.log(w) + _log_sinh(log_kappa, log_delta)
                         - log_cosh(kappa * x) - log_cosh(kappa * y))
        log_delta = np.where(np.isnan(log_delta), -np.inf, log_delta)
        x = np.tanh(kappa * x) * w
        y = np.tanh(kappa * y) * w
    return x, log_delta


def evaluate_phi_decrement(params: SystemParams, thetas: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """phi_decrement_values split over index chunks."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    parts = ordered_map(lambda b: phi_decrement_values(params, thetas[b[0]:b[1]], n), index_chunks(len(thetas)))
    if not parts:
        return np.empty(0), np.empty(0)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def offpeak_log_decrements(params: SystemParams, consts: DerivedConstants, depths: Iterable[int],
                           M: int, q: int = 1) -> List[float]:
    """log of sup off-peak |phi_n - phi_{n-1}| on the M-grid, one entry per depth (-inf when none)."""
    grid = grid_points(M, params.D)
    logs = []
    for n in depths:
        if n < 1:
            raise ConfigError(f"decrement depths must be >= 1, got {n!r}")
        _, log_delta = evaluate_phi_decrement(params, grid, n)
        off_peak = ~in_peak_union(params, consts, grid, q, n)
        logs.append(float(np.max(log_delta[off_peak])) if off_peak.any() else -math.inf)
    return logs


def offpeak_decay(params: SystemParams, consts: DerivedConstants, depths: Sequence[int],
                  M: int, q: int = 1) -> DecayFit:
    """
    Fitted geometric decay rate of the sup off-peak decrement
    峰外增量上确界的几何衰减率拟合

    slope is d log(decrement) / dn, fitted on the carried log decrements;
    depths whose decrement vanished exactly are left out.
    """
    depths = [int(n) for n in depths]
    logs = offpeak_log_decrements(params, consts, depths, M, q)
    keep = [(n, v) for n, v in zip(depths, logs) if math.isfinite(v)]
    if len(keep) < 3:
        raise NumericFailure(f"only {len(keep)} depths with a non-zero off-peak decrement; nothing to fit")
    fit = linregress([n for n, _ in keep], [v for _, v in keep])
    return DecayFit(depths=depths, decrements=[math.exp(v) for v in logs], log_decrements=logs,
                    slope=float(fit.slope), intercept=float(fit.intercept),
                    r2=float(fit.rvalue ** 2), dropped=len(depths) - len(keep))


# ---------------------------------------------------------------------------
# Backward orbits
# ---------------------------------------------------------------------------

def backward_orbits(params: SystemParams, thetas: np.ndarray, n: int) -> np.ndarray:
    """
    x_k = phi_k(theta - (n-k) rho) for k = 0..n in one forward pass;
    shape (len(thetas), n + 1).
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    orbit = np.empty((len(thetas), n + 1))
    orbit[:, 0] = 1.0
    for k in range(n):
        w = base_weights(params, rotate_array(thetas, k - n, params.rho_hi, params.rho_low))
        orbit[:, k + 1] = np.tanh(params.kappa * orbit[:, k]) * w
    return orbit


def suffix_counts(below: np.ndarray) -> np.ndarray:
    """s[..., k] = #{k <= j < n : below[..., j]}, with s[..., n] = 0."""
    below = np.asarray(below, dtype=np.int64)
    counts = np.zeros(below.shape[:-1] + (below.shape[-1] + 1,), dtype=np.int64)
    counts[..., :-1] = np.cumsum(below[..., ::-1], axis=-1)[..., ::-1]
    return counts


def block_decomposition(orbit: np.ndarray, L0: float, threshold: float, n: int, q: int) -> List[Tuple[int, int]]:
    """
    Blocks {l+1..p} covering {1 <= k < n-q : x_k < L0} with x_l >= threshold,
    x_k < threshold inside, x_p < L0, and a new block begun whenever x_p
    reaches the threshold. Adjacent blocks may share an endpoint.
    """
    blocks = []
    stop = n - q
    k = 1
    while k < stop:
        if orbit[k] >= L0:
            k += 1
            continue
        l, p = k - 1, k
        while True:
            while p + 1 < stop and orbit[p + 1] < L0 and orbit[p] < threshold:
                p += 1
            blocks.append((l, p))
            if orbit[p] >= threshold and p + 1 < stop and orbit[p + 1] < L0:
                l, p = p, p + 1
                continue
            break
        k = p + 1
    return blocks


def orbit_stats(params: SystemParams, consts: DerivedConstants, theta: TorusPoint, n: int,
                q: int = 1) -> OrbitStats:
    """
    Backward-orbit statistics s^n_k and the block decomposition
    后向轨道统计量 s^n_k 与分块
    """
    if n < 1:
        raise ConfigError(f"depth n must be >= 1, got {n!r}")
    orbit = backward_orbits(params, theta.as_array()[None, :], n)[0]
    counts = suffix_counts(orbit[:n] < consts.L0)
    blocks = block_decomposition(orbit, consts.L0, consts.L0 / consts.a_eff, n, q)
    return OrbitStats(s_counts=counts, blocks=blocks, n=n, theta=theta, orbit=orbit)


# ---------------------------------------------------------------------------
# Verifiers
# ---------------------------------------------------------------------------

def _sampled_entry(entry_id: str, description: str, log_ratios: np.ndarray, desk: bool) -> ConditionEntry:
    """Entry for a sampled bound check; lhs is the largest observed ratio."""
    if log_ratios.size == 0:
        return ConditionEntry(entry_id, description, 0.0, 1.0, True, 1.0, kind="sampled",
                              status="vacuous", count=0)
    worst = float(np.max(log_ratios))
    violations = int(np.sum(log_ratios > 0.0))
    lhs = math.exp(min(worst, 700.0))
    if violations == 0:
        status = "pass"
    else:
        status = "finding" if desk else "fail"
    return ConditionEntry(entry_id, f"{description} ({violations} violations)", lhs, 1.0,
                          violations == 0, 1.0 - lhs, kind="sampled", status=status,
                          count=int(log_ratios.size))


def _log_abs(values: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.abs(values))


def sample_pairs(rng: np.random.Generator, count: int, D: int) -> Tuple[np.ndarray, np.ndarray]:
    """theta uniform, theta' = theta + delta * signs, delta log-uniform in [1e-9, 1e-1]."""
    theta = uniform_torus(rng, count, D)
    delta = np.exp(rng.uniform(math.log(1e-9), math.log(1e-1), size=count))
    signs = rng.choice([-1.0, 1.0], size=(count, D))
    other = np.mod(theta + delta[:, None] * signs, 1.0)
    return theta, other


def verify_prop41(params: SystemParams, consts: DerivedConstants, n: int, q: int, samples: int,
                  seed: int, parts: Sequence[str] = ("41i", "41ii", "41iii"),
                  status_callback: Optional[Callable] = None) -> ConditionReport:
    """
    Sampled check of the three phi_n estimates
    三个 phi_n 估计的抽样验证

    41i:   |phi_n(t) - phi_n(t')| <= beta alpha^n d(t, t')
    41ii:  |phi_n(t) - phi_{n-1}(t)| <= alpha^{-lambda (n-1)} off the peak balls
    41iii: |phi_n(t) - phi_n(t')| <= K alpha^{mq} d(t, t') with both points off the peak balls
    """
    status = status_callback or (lambda msg: None)
    unknown = set(parts) - {"41i", "41ii", "41iii"}
    if unknown:
        raise ConfigError(f"unknown parts {sorted(unknown)}")
    if set(parts) & {"41ii", "41iii"} and n < consts.m * q + 1:
        raise ConfigError(f"parts 41ii/41iii need n >= m*q+1 = {consts.m * q + 1}, got {n}")
    desk = params.kappa < consts.kappa0
    rng = make_rng(seed)
    theta, other = sample_pairs(rng, samples, params.D)
    dist = torus_distance_array(theta, other)
    log_alpha = math.log(consts.alpha)

    status(f"📐 Evaluating phi_{n} on {samples} sampled pairs...")
    at_theta = evaluate_phi(params, theta, n)
    at_other = evaluate_phi(params, other, n)
    moved = dist > 0
    log_diff = _log_abs(at_theta - at_other)
    entries = []
    if "41i" in parts:
        log_bound = math.log(consts.beta) + n * log_alpha + np.log(dist[moved])
        entries.append(_sampled_entry("41i", f"Lipschitz bound beta alpha^n at n={n}",
                                      log_diff[moved] - log_bound, desk))
    off_peak = ~in_peak_union(params, consts, theta, q, n)
    if "41ii" in parts:
        prev = evaluate_phi(params, theta[off_peak], n - 1)
        log_ratio = _log_abs(at_theta[off_peak] - prev) + consts.lambda_rate * (n - 1) * log_alpha
        entries.append(_sampled_entry("41ii", f"off-peak decrement alpha^(-lambda(n-1)) at n={n}, q={q}",
                                      log_ratio, desk))
    if "41iii" in parts:
        both = off_peak & ~in_peak_union(params, consts, other, q, n) & moved
        log_bound = math.log(consts.K_for(q)) + consts.m * q * log_alpha + np.log(dist[both])
        entries.append(_sampled_entry("41iii", f"off-peak Lipschitz bound K alpha^(mq) at n={n}, q={q}",
                                      log_diff[both] - log_bound, desk))

    notes = [
        f"seed = {seed}; pairs = {samples}; delta log-uniform in [1e-9, 1e-1]",
        "pairs with zero distance are skipped",
        "41iii applies the peak-ball hypothesis over j = q..n with the same n as the bound",
        f"desk constants (kappa < kappa0 = {consts.kappa0!r}): {desk}; violations are findings",
    ]
    report = ConditionReport(entries=entries, constants=consts, notes=notes)
    for entry in entries:
        status(f"{'✅' if entry.passed else '⚠️'} {entry.id}: {entry.status} (max ratio {entry.lhs:.3e})")
    return report


def verify_s_bound(params: SystemParams, consts: DerivedConstants, n: int, q: int, samples: int,
                   seed: int, status_callback: Optional[Callable] = None) -> ConditionReport:
    """
    Sampled check of s^n_{n-t}(theta) <= 11 t / m for t >= mq
    抽样检验 s^n_{n-t} <= 11t/m
    """
    status = status_callback or (lambda msg: None)
    if n < consts.m * q + 1:
        raise ConfigError(f"s-bound needs n >= m*q+1 = {consts.m * q + 1}, got {n}")
    thetas = uniform_torus(make_rng(seed), samples, params.D)
    eligible = thetas[~in_peak_union(params, consts, thetas, q, n)]
    status(f"📐 {len(eligible)} of {samples} sampled points satisfy the peak-ball hypothesis")

    ts = np.arange(consts.m * q, n + 1)
    limits = 11.0 * ts / consts.m
    worst = []
    for lo, hi in index_chunks(len(eligible), 256):
        orbit = backward_orbits(params, eligible[lo:hi], n)
        counts = suffix_counts(orbit[:, :n] < consts.L0)
        worst.append(np.max(counts[:, n - ts] / limits, axis=1))
    ratios = np.concatenate(worst) if worst else np.empty(0)
    desk = params.kappa < consts.kappa0
    with np.errstate(divide="ignore"):
        entry = _sampled_entry("sbound", f"s^n_(n-t) <= 11t/m for t >= mq at n={n}, q={q}", np.log(ratios), desk)
    notes = [f"seed = {seed}; sampled = {samples}; eligible = {len(eligible)}",
             f"L0 = {consts.L0!r}; block threshold L0/a_eff = {consts.L0 / consts.a_eff!r}"]
    status(f"{'✅' if entry.passed else '⚠️'} sbound: {entry.status}")
    return ConditionReport(entries=[entry], constants=consts, notes=notes)


def pinched_lower_bound(params: SystemParams, consts: DerivedConstants, theta: TorusPoint, q: int, t: int,
                        horizon: Optional[int] = None) -> float:
    """
    eps = min_{k=1..t} T^k_{theta - k rho}(L0), a lower bound for phi^+(theta)
    夹点集外 phi^+ 的下界 eps

    theta must stay outside the peak balls B_{r_j}(tau_j), q <= j <= horizon
    (default 10 t), and its backward orbit must avoid theta* for t steps.
    """
    if t < consts.m * q:
        raise ConfigError(f"t must be >= m*q = {consts.m * q}, got {t}")
    horizon = horizon or 10 * t
    point = theta.as_array()[None, :]
    if in_peak_union(params, consts, point, q, horizon)[0]:
        raise ConfigError(f"theta lies in a peak ball B_r_j(tau_j) with {q} <= j <= {horizon}")
    offsets = np.arange(1, t + 1)
    orbit = rotate_orbit(point[0], -offsets, params.rho_hi, params.rho_low)
    near = np.flatnonzero(torus_distance_array(orbit, params.star) <= PINCH_DISTANCE)
    if near.size:
        k = int(offsets[near[0]])
        raise PinchedOrbitError(f"theta = tau_{k}: the bound eps would be 0", index=k)
    w = base_weights(params, orbit)
    x = np.full(t, consts.L0)
    # chain k starts at offset -k; at offset -j every chain with k >= j advances
    for j in range(t, 0, -1):
        x[j - 1:] = np.tanh(params.kappa * x[j - 1:]) * w[j - 1]
    return float(np.min(x))
