"""
Hypothesis ledger: derived constants and condition checks
假设条件校验：常数推导与条件检查

The constant recipe is alpha = kappa, gamma = 1/2, L0 = log(kappa)/kappa,
beta = pi, m = 67, b = (1/2) min_{n<m} c n^-d, a = 2 b kappa / (D (e + 1/e)^2).
Report entry ids (5)-(13) are stable identifiers of the individual hypotheses.
"""

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from ..utils.parallel import index_chunks, ordered_map
from .errors import DiophantineViolation
from .torus_dynamics import (
    SystemParams,
    base_weights,
    fiber_values,
    rotate_orbit,
    torus_distance_array,
)

M_DEFAULT = 67
GAMMA = 0.5
BETA = math.pi
E_TERM = (math.e + 1.0 / math.e) ** 2
K_TABLE_QS = tuple(range(1, 9))


@dataclass(frozen=True)
class DerivedConstants:
    """Constants of the hypothesis ledger for one SystemParams"""

    alpha: float
    gamma: float
    L0: float
    beta: float
    m: int
    a: float
    b: float
    lambda_rate: float
    K: float
    j0: int
    kappa0: float
    c: float
    d: float
    D: int
    q: int = 1
    kappa0_binding: str = ""
    K_table: Dict[int, float] = field(default_factory=dict)

    @property
    def a_eff(self) -> float:
        """
        Rate used for the peak radii. Equals `a` whenever condition (10) holds;
        below kappa0 (desk constants) it is floored at (m+1)^d so the radii
        still decay.
        """
        return max(self.a, (self.m + 1) ** self.d)

    @property
    def desk(self) -> bool:
        return self.a < (self.m + 1) ** self.d

    @property
    def pair_rate(self) -> float:
        """gamma - (22/m)(1 + gamma), the two-orbit contraction exponent."""
        return self.gamma - 22.0 / self.m * (1.0 + self.gamma)

    def K_for(self, q: int) -> float:
        return self.K_table.get(q) or lipschitz_prefactor(self.alpha, self.gamma, self.beta, self.m, q)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["K_table"] = {str(k): v for k, v in self.K_table.items()}
        data["a_eff"] = self.a_eff
        data["desk"] = self.desk
        return data


@dataclass(frozen=True)
class ConditionEntry:
    id: str
    description: str
    lhs: float
    rhs: float
    passed: bool
    margin: float
    kind: str = "closed-form"
    status: str = ""
    count: Optional[int] = None

    def to_dict(self) -> dict:
        data = {
            "id": self.id,
            "description": self.description,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "pass": self.passed,
            "margin": self.margin,
            "kind": self.kind,
        }
        if self.status:
            data["status"] = self.status
        if self.count is not None:
            data["count"] = self.count
        return data


@dataclass
class ConditionReport:
    entries: List[ConditionEntry]
    constants: DerivedConstants
    notes: List[str] = field(default_factory=list)

    @property
    def overall(self) -> bool:
        return all(entry.passed for entry in self.entries)

    @property
    def failing(self) -> List[str]:
        return [entry.id for entry in self.entries if not entry.passed]

    def entry(self, entry_id: str) -> ConditionEntry:
        for item in self.entries:
            if item.id == entry_id:
                return item
        raise KeyError(entry_id)

    def to_dict(self) -> dict:
        return {
            "overall": self.overall,
            "entries": [entry.to_dict() for entry in self.entries],
            "constants": self.constants.to_dict(),
            "notes": list(self.notes),
        }


@dataclass(frozen=True)
class KappaThreshold:
    kappa0: float
    binding: str
    per_constraint: Dict[str, float]


def lipschitz_prefactor(alpha: float, gamma: float, beta: float, m: int, q: int) -> float:
    """K(q) = beta (1 + alpha^-mq / (1 - alpha^-(gamma - 22/m (1 + gamma))))"""
    rate = gamma - 22.0 / m * (1.0 + gamma)
    if alpha <= 1.0 or rate <= 0.0:
        return math.inf
    tail = -math.expm1(-rate * math.log(alpha))
    return beta * (1.0 + math.exp(-m * q * math.log(alpha)) / tail)


def peak_base(c: float, d: float, m: int = M_DEFAULT) -> float:
    """b = (1/2) min_{n=1}^{m-1} c n^-d; the minimum sits at n = m - 1."""
    return 0.5 * min(c * n ** (-d) for n in range(1, m))


def _a_value(b: float, kappa: float, D: int) -> float:
    return 2.0 * b * kappa / (D * E_TERM)


def _contraction_lhs(kappa: float) -> float:
    """sup of T' on [L0, 1] = kappa / cosh(log kappa)^2 = 4 kappa / (kappa + 1/kappa)^2"""
    return 4.0 * kappa / (kappa + 1.0 / kappa) ** 2


def _kappa_constraints(c: float, d: float, D: int, m: int = M_DEFAULT) -> Dict[str, Callable[[float], float]]:
    """Closed-form constraints that depend on kappa; value >= 0 means pass."""
    b = peak_base(c, d, m)
    return {
        "kappa>=16": lambda k: k - 16.0,
        "alpha>2": lambda k: k - 2.0,
        "(6)": lambda k: k ** (-GAMMA) - _contraction_lhs(k),
        "(10)": lambda k: _a_value(b, k, D) - (m + 1) ** d,
        "log-kappa": lambda k: b * math.tanh(1.0) / (2.0 * D) - math.log(k) / k,
    }


def _bisect_threshold(g: Callable[[float], float], lo: float = math.e, rel: float = 1e-9) -> float:
    """Smallest kappa >= lo with g(kappa) >= 0, for g increasing past lo."""
    if g(lo) >= 0:
        return lo
    hi = lo * 2.0
    while g(hi) < 0:
        lo, hi = hi, hi * 2.0
    while hi / lo - 1.0 > rel:
        mid = math.sqrt(lo * hi)
        if g(mid) >= 0:
            hi = mid
        else:
            lo = mid
    return hi


def minimal_kappa(c: float, d: float, D: int) -> KappaThreshold:
    """
    Smallest kappa for which every closed-form condition passes
    所有闭式条件成立的最小 kappa

    Each kappa-dependent constraint is monotone beyond e, so each gets its own
    bisection; kappa0 is the largest of those thresholds and the constraint
    attaining it is reported as binding.
    """
    thresholds = {name: _bisect_threshold(g) for name, g in _kappa_constraints(c, d, D).items()}
    binding = max(thresholds, key=lambda name: thresholds[name])
    return KappaThreshold(kappa0=thresholds[binding], binding=binding, per_constraint=thresholds)


def derive_constants(params: SystemParams, q: int = 1, with_j0: bool = True) -> DerivedConstants:
    """
    Constants of the hypothesis ledger for params
    推导假设条件中的常数
    """
    kappa = float(params.kappa)
    m = M_DEFAULT
    alpha = kappa
    b = peak_base(params.c, params.d, m)
    a = _a_value(b, kappa, params.D)
    lambda_rate = GAMMA - 11.0 / m * (1.0 + GAMMA)
    K_table = {qq: lipschitz_prefactor(alpha, GAMMA, BETA, m, qq) for qq in K_TABLE_QS}
    threshold = minimal_kappa(params.c, params.d, params.D)
    consts = DerivedConstants(
        alpha=alpha,
        gamma=GAMMA,
        L0=math.log(kappa) / kappa,
        beta=BETA,
        m=m,
        a=a,
        b=b,
        lambda_rate=lambda_rate,
        K=lipschitz_prefactor(alpha, GAMMA, BETA, m, q),
        j0=1,
        kappa0=threshold.kappa0,
        c=params.c,
        d=params.d,
        D=params.D,
        q=q,
        kappa0_binding=threshold.binding,
        K_table=K_table,
    )
    if with_j0:
        from .partition_builder import choose_j0

        consts = replace(consts, j0=choose_j0(params, consts))
    return consts


def hausdorff_finiteness_threshold(consts: DerivedConstants) -> float:
    """m^2 log(alpha/a); 0 when a >= alpha."""
    if consts.a >= consts.alpha:
        return 0.0
    return consts.m ** 2 * math.log(consts.alpha / consts.a)


def hausdorff_ratio_threshold(consts: DerivedConstants) -> float:
    """m^2 log(alpha) / log(a_eff): the exponent beyond which the cover-cost summands decay."""
    return consts.m ** 2 * math.log(consts.alpha) / math.log(consts.a_eff)


def zero_line_lower_bound(consts: DerivedConstants) -> float:
    """lambda(0) >= log(2a/b) - log 2 - 1, valid once condition (13) holds."""
    if consts.a <= 0:
        return -math.inf
    return math.log(2.0 * consts.a / consts.b) - math.log(2.0) - 1.0


# ---------------------------------------------------------------------------
# Diophantine scans
# ---------------------------------------------------------------------------

def diophantine_scan(params: SystemParams, N: int) -> Tuple[int, float, float]:
    """
    Worst n in 1..N for d(tau_n, theta*) >= c n^-d.

    Returns (n, distance, bound) at the smallest ratio distance / bound.
    """
    star = params.star

    def _chunk(bounds):
        lo, hi = bounds
        ns = np.arange(lo + 1, hi + 1)
        dist = torus_distance_array(rotate_orbit(star, ns, params.rho_hi, params.rho_low), star)
        bound = params.c * ns.astype(np.float64) ** (-params.d)
        ratio = dist / bound
        i = int(np.argmin(ratio))
        return float(ratio[i]), int(ns[i]), float(dist[i]), float(bound[i])

    results = ordered_map(_chunk, index_chunks(N, 1 << 18))
    best = min(results, key=lambda r: r[0])
    return best[1], best[2], best[3]


def certify_diophantine(params: SystemParams, horizon: int = 10 ** 6,
                        status_callback: Optional[Callable] = None) -> float:
    """
    Exhaustively confirm the Diophantine condition for n <= horizon
    穷举验证丢番图条件

    Returns the worst ratio d(tau_n, theta*) / (c n^-d); raises on violation.
    """
    status = status_callback or (lambda msg: None)
    n, dist, bound = diophantine_scan(params, horizon)
    if dist < bound:
        status(f"❌ Diophantine condition fails at n={n}")
        raise DiophantineViolation(n, dist, bound)
    status(f"✅ Diophantine condition certified for n <= {horizon} (worst n={n})")
    return dist / bound


# ---------------------------------------------------------------------------
# Condition checks
# ---------------------------------------------------------------------------

def _le(entry_id, description, lhs, rhs, kind="closed-form") -> ConditionEntry:
    return ConditionEntry(entry_id, description, float(lhs), float(rhs), bool(lhs <= rhs), float(rhs - lhs), kind)


def _ge(entry_id, description, lhs, rhs, kind="closed-form") -> ConditionEntry:
    return ConditionEntry(entry_id, description, float(lhs), float(rhs), bool(lhs >= rhs), float(lhs - rhs), kind)


def _gt(entry_id, description, lhs, rhs, kind="closed-form") -> ConditionEntry:
    return ConditionEntry(entry_id, description, float(lhs), float(rhs), bool(lhs > rhs), float(lhs - rhs), kind)


def _theta_grid(D: int, pitch: float) -> np.ndarray:
    per_axis = max(2, int(round(1.0 / pitch)))
    axes = np.arange(per_axis, dtype=np.float64) / per_axis
    mesh = np.meshgrid(*([axes] * D), indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=-1)


def reference_system_margin(params: SystemParams, consts: DerivedConstants,
                            pitch: Optional[float] = None) -> Tuple[float, float, float, int]:
    """
    Worst relative margin of (13) on a deterministic (theta, x) grid
    条件(13)的网格最差相对余量

    lhs = T_theta(x), rhs = min{L0, a x} min{1, (2/b) d(theta, theta*)}. Points
    where rhs == 0 hold trivially and are skipped. Returns
    (worst lhs/rhs - 1, theta_1, x, grid size).
    """
    if pitch is None:
        pitch = 1e-3 if params.D == 1 else 1.0 / max(4, int(round(1e6 ** (1.0 / (params.D + 1)))))
    thetas = _theta_grid(params.D, pitch)
    xs = np.linspace(0.0, 1.0, max(2, int(round(1.0 / pitch)) + 1))
    floor = min(consts.L0, 1.0)

    def _chunk(bounds):
        lo, hi = bounds
        th = thetas[lo:hi]
        factor = np.minimum(1.0, 2.0 / consts.b * torus_distance_array(th, params.star))
        lhs = fiber_values(params, th[:, None, :], xs[None, :])
        rhs = np.minimum(floor, consts.a * xs)[None, :] * factor[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(rhs > 0, lhs / rhs - 1.0, np.inf)
        i = int(np.argmin(rel))
        r, col = divmod(i, xs.size)
        return float(rel.flat[i]), float(th[r, 0]), float(xs[col])

    results = ordered_map(_chunk, index_chunks(len(thetas), 256))
    worst = min(results, key=lambda item: item[0])
    return worst[0], worst[1], worst[2], len(thetas) * xs.size


def sine_distance_margin(params: SystemParams, pitch: Optional[float] = None) -> Tuple[float, float]:
    """
    Worst sum_i sin(pi (theta_i - theta*_i)) - d(theta, theta*) on the theta grid
    正弦和下界在网格上的最差余量

    The lower bound sum_i sin(pi u_i) >= d(theta, theta*) feeds the constant
    a; it is checked here for the max metric. Returns (worst margin, theta_1).
    """
    if pitch is None:
        pitch = 1e-3 if params.D == 1 else 1.0 / max(4, int(round(1e6 ** (1.0 / params.D))))
    thetas = _theta_grid(params.D, pitch)
    margin = params.D * base_weights(params, thetas) - torus_distance_array(thetas, params.star)
    i = int(np.argmin(margin))
    return float(margin[i]), float(thetas[i, 0])


def check_conditions(params: SystemParams, consts: DerivedConstants, N: int = 10 ** 4,
                     pitch: Optional[float] = None,
                     status_callback: Optional[Callable] = None) -> ConditionReport:
    """
    Evaluate conditions (5)-(13) and the kappa0 inequalities
    检查条件(5)-(13)

    Closed-form entries use the derivative bound 4k/(e^{kx}+e^{-kx})^2; (8) and
    (12) are exhaustive over n = 1..N; (13) is grid-verified.
    """
    status = status_callback or (lambda msg: None)
    if N < consts.m:
        N = consts.m
    kappa = float(params.kappa)
    m, d = consts.m, params.d
    entries: List[ConditionEntry] = []

    entries.append(_ge("kappa>=16", "kappa >= 16", kappa, 16.0))
    entries.append(_gt("alpha>2", "alpha > 2", consts.alpha, 2.0))
    entries.append(_gt("L0>0", "L0 = log(kappa)/kappa > 0", consts.L0, 0.0))
    entries.append(_gt("L0<1", "L0 = log(kappa)/kappa < 1", 1.0, consts.L0))
    entries.append(_le("(5)", "sup T' <= alpha (fiber Lipschitz)", kappa * 1.0, consts.alpha))
    contraction = _contraction_lhs(kappa) if consts.L0 > 0 else kappa
    entries.append(_le("(6)", "sup_{x>=L0} T' <= alpha^-gamma (contraction zone)",
                       contraction, consts.alpha ** (-consts.gamma)))
    entries.append(_le("(7)", "sup |dT/dtheta| <= beta (base Lipschitz, max metric)",
                       math.pi * math.tanh(kappa), consts.beta))

    n_worst, dist, bound = diophantine_scan(params, N)
    entries.append(_ge("(8)", f"d(tau_n, theta*) >= c n^-d for n <= {N} (worst n={n_worst})",
                       dist, bound, kind="exhaustive"))
    entries.append(_gt("(9)", "m > 22 (1 + 1/gamma)", m, 22.0 * (1.0 + 1.0 / consts.gamma)))
    entries.append(_ge("(10)", "a >= (m+1)^d", consts.a, (m + 1) ** d))
    entries.append(_gt("a>1", "a > 1", consts.a, 1.0))
    entries.append(_le("(11)", "b <= c", consts.b, params.c))
    entries.append(_gt("b<1", "b < 1", 1.0, consts.b))

    ns = np.arange(1, m)
    first = torus_distance_array(rotate_orbit(params.star, ns, params.rho_hi, params.rho_low), params.star)
    i = int(np.argmin(first))
    entries.append(_gt("(12)", f"d(tau_n, theta*) > b for n < m (worst n={int(ns[i])})",
                       first[i], consts.b, kind="exhaustive"))
    entries.append(_le("log-kappa", "log(kappa)/kappa <= b tanh(1) / (2D)",
                       consts.L0, consts.b * math.tanh(1.0) / (2.0 * params.D)))

    status("📐 Sweeping the (theta, x) grid for condition (13)...")
    rel, theta_w, x_w, size = reference_system_margin(params, consts, pitch)
    entries.append(ConditionEntry(
        "(13)",
        f"T_theta(x) >= min{{L0, a x}} min{{1, (2/b) d(theta, theta*)}} (grid-verified, {size} points, "
        f"worst at theta_1={theta_w!r}, x={x_w!r})",
        rel + 1.0, 1.0, bool(rel >= 0.0), float(rel), kind="grid-verified",
    ))

    notes = [
        f"kappa0 = {consts.kappa0!r} (binding constraint {consts.kappa0_binding})",
        f"desk constants (kappa < kappa0): {consts.desk}; peak radii use a_eff = {consts.a_eff!r}",
        f"lambda_rate = {consts.lambda_rate!r}; pair contraction rate = {consts.pair_rate!r}",
        f"K(q) for q=1..8: {[consts.K_table[q] for q in K_TABLE_QS]!r}",
        f"(13) margin is relative: min over grid of lhs/rhs - 1; pitch = {pitch or 'default'}",
    ]
    threshold = hausdorff_finiteness_threshold(consts)
    if consts.a >= consts.alpha:
        notes.append("m^2 log(alpha/a) is non-positive (a >= alpha); threshold reported as 0")
    notes.append(f"m^2 log(alpha/a) = {threshold!r}; D > threshold: {params.D > threshold}")
    notes.append(f"cover-cost decay threshold m^2 log(alpha)/log(a_eff) = {hausdorff_ratio_threshold(consts)!r}")
    d0_rhs = m ** 2 * math.log(params.D * E_TERM / (2.0 * consts.b))
    notes.append(f"D0 coupling D > m^2 log(D (e+1/e)^2 / (2b)): {params.D} > {d0_rhs!r} is "
                 f"{params.D > d0_rhs} (evaluated for the given D, not solved for D0)")
    notes.append(f"lambda(0) lower bound log(2a/b) - log 2 - 1 = {zero_line_lower_bound(consts)!r}")
    sine_margin, sine_theta = sine_distance_margin(params)
    notes.append(f"sum_i sin(pi u_i) >= d(theta, theta*) under the max metric: worst margin {sine_margin!r} "
                 f"at theta_1={sine_theta!r} ({'holds' if sine_margin >= 0.0 else 'VIOLATED'} on the grid)")

    report = ConditionReport(entries=entries, constants=consts, notes=notes)
    glyph = "✅" if report.overall else "⚠️"
    status(f"{glyph} Conditions checked: {len(entries) - len(report.failing)}/{len(entries)} pass")
    return report


def closed_form_ids() -> Tuple[str, ...]:
    return ("kappa>=16", "alpha>2", "L0>0", "L0<1", "(5)", "(6)", "(7)", "(9)", "(10)",
            "a>1", "(11)", "b<1", "log-kappa")
