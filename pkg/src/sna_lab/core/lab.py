"""
Main laboratory engine tying the numerical modules together
连接各数值模块的实验室主引擎
"""

import math
from functools import cached_property
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Union

import numpy as np

from ..utils.sampling import make_rng
from . import bounding_lines, constants_gate, dimension_lab, partition_builder
from .bounding_lines import GraphSample
from .constants_gate import ConditionEntry, ConditionReport, DerivedConstants
from .dimension_lab import DensityProfile, DimensionEstimate, MeasureSample
from .errors import ConfigError
from .torus_dynamics import SystemParams, TorusPoint, wrap, zero_line_lyapunov

DECAY_MIN_R2 = 0.95

METHODS = ("box", "info", "pointwise", "density")
PROPS = ("41i", "41ii", "41iii", "sbound", "decay")


class SNALab:
    """Pinched skew-product laboratory for one SystemParams"""

    def __init__(self, params: SystemParams, q: int = 1, status_callback: Optional[Callable] = None):
        if q < 1:
            raise ConfigError(f"q must be >= 1, got {q!r}")
        self.params = params
        self.q = q
        self.status_callback = status_callback or (lambda msg: None)

    @cached_property
    def consts(self) -> DerivedConstants:
        self.status_callback("📐 Deriving constants / 推导常数...")
        return constants_gate.derive_constants(self.params, q=self.q)

    # ------------------------------------------------------------------
    # check
    # ------------------------------------------------------------------

    def check(self, N: int = 10 ** 4, pitch: Optional[float] = None, horizon: int = 10 ** 6) -> ConditionReport:
        """
        Certify the rotation, then evaluate every condition
        验证旋转向量并检查全部条件
        """
        worst = constants_gate.certify_diophantine(self.params, horizon, self.status_callback)
        report = constants_gate.check_conditions(self.params, self.consts, N=N, pitch=pitch,
                                                 status_callback=self.status_callback)
        report.notes.append(f"Diophantine condition certified for n <= {horizon}; worst ratio {worst!r}")
        report.notes.extend(self._geometry_notes(N))
        return report

    def _geometry_notes(self, N: int, j_max: int = 1000) -> List[str]:
        overlaps = partition_builder.overlap_scan(self.params, self.consts, j_max, self.status_callback)
        returns = partition_builder.check_return_times(self.params, self.consts, N)
        cost = dimension_lab.cover_cost(self.consts, float(self.params.D), 50, self.params.D)
        return [
            f"peak-ball overlaps to j={j_max}: {overlaps.overlaps}, v(j) violations {overlaps.violations[:10]}",
            f"return times to N={N}: {returns.checked} close approaches, violations {returns.violations[:10]}",
            f"cover cost at s=D={self.params.D}: "
            f"{'convergent' if cost.convergent else 'divergent'} (log ratio {cost.log_ratio!r}), "
            f"D-dimensional measure {'finite' if cost.finite_at_base_dimension else 'not shown finite'}",
        ]

    # ------------------------------------------------------------------
    # graph
    # ------------------------------------------------------------------

    def graph(self, M: int, n: int, last_only: bool = False) -> Iterator[GraphSample]:
        """
        Iterated upper bounding lines on the M-grid
        M 网格上的迭代上界线
        """
        if last_only or n == 0:
            yield bounding_lines.phi_grid(self.params, M, n)
            return
        if M < 2:
            raise ConfigError(f"grid size M must be >= 2, got {M!r}")
        for sample in bounding_lines.phi_sweep(self.params, M, n):
            self.status_callback(f"📈 depth {sample.n}/{n}")
            yield sample

    # ------------------------------------------------------------------
    # dims
    # ------------------------------------------------------------------

    def measure(self, samples: int, depth: Union[int, str], ladder: Sequence[float], seed: int,
                depth_grid: int = 2048, n_max: int = 5000, grid_sample: bool = False) -> MeasureSample:
        """
        Sample mu_phi at a proxy depth; 'auto' runs the stopping rule at tol = finest eps / 10
        以代理深度采样测度

        grid_sample pushes the uniform M-grid forward instead of random base points.
        """
        tolerance = 0.0
        if depth == "auto":
            tolerance = min(ladder) / 10.0
            result = bounding_lines.converge_phi(self.params, self.consts, depth_grid, tolerance,
                                                 n_max=n_max, q=self.q, status_callback=self.status_callback)
            n = result.sample.n
            if not result.converged:
                tolerance = result.decrement
        else:
            n = int(depth)
        self.status_callback(f"🎲 Sampling {samples} {'grid' if grid_sample else 'random'} points at depth n={n}")
        return dimension_lab.sample_measure(self.params, samples, n, seed=seed, grid=grid_sample, tolerance=tolerance)

    def dims(self, method: str, sample: MeasureSample, ladder: Sequence[float], anchors: int, seed: int,
             anchor_theta: Optional[TorusPoint] = None) -> Union[DimensionEstimate, DensityProfile]:
        """
        Run one dimension estimator on a sample
        在样本上运行维数估计
        """
        if method not in METHODS:
            raise ConfigError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
        if method == "box":
            return dimension_lab.box_dimension(sample, ladder)
        if method == "info":
            return dimension_lab.information_dimension(sample, ladder, anchors, seed,
                                                       status_callback=self.status_callback)
        anchor = self._anchor(sample, seed, anchor_theta)
        if method == "density":
            return dimension_lab.density_profile(sample, anchor, ladder, self.params.D)
        estimate = dimension_lab.pointwise_dimension(sample, anchor, ladder)
        if anchors > 1:
            slopes = dimension_lab.pointwise_survey(sample, ladder, anchors, seed)
            finite = slopes[np.isfinite(slopes)]
            if finite.size:
                q1, median, q3 = np.percentile(finite, [25, 50, 75])
                estimate.extra.update({"survey_anchors": int(finite.size), "survey_median": float(median),
                                       "survey_iqr": float(q3 - q1)})
        return estimate

    def _anchor(self, sample: MeasureSample, seed: int, theta: Optional[TorusPoint]):
        if theta is not None:
            return theta, bounding_lines.phi_n(self.params, theta, sample.n)
        index = int(make_rng(seed).integers(sample.size))
        return TorusPoint(tuple(sample.thetas[index])), float(sample.phis[index])

    # ------------------------------------------------------------------
    # lyapunov
    # ------------------------------------------------------------------

    def lyapunov(self, n: int, M: int, N: int, mode: str = "both") -> Dict[str, Any]:
        """
        Zero-line and attractor Lyapunov exponents
        零线与吸引子的李雅普诺夫指数
        """
        if mode not in ("both", "zero", "graph"):
            raise ConfigError(f"unknown lyapunov mode {mode!r}")
        out: Dict[str, Any] = {"kappa": self.params.kappa, "D": self.params.D}
        if mode in ("both", "zero"):
            out["zero_line"] = {
                "N": N,
                "birkhoff": zero_line_lyapunov(self.params, N),
                "grid": dimension_lab.graph_lyapunov(self.params, 0, M, zero_line=True).value,
                "log_kappa_minus_log_2": math.log(self.params.kappa) - math.log(2.0),
            }
        if mode in ("both", "graph"):
            estimate = dimension_lab.graph_lyapunov(self.params, n, M, status_callback=self.status_callback)
            out["graph"] = {"n": n, "M": estimate.M, "value": estimate.value, "excluded": estimate.excluded,
                            "nonpositive": estimate.value <= 1e-3}
        return out

    # ------------------------------------------------------------------
    # partition
    # ------------------------------------------------------------------

    def partition(self, samples: int, seed: int, J: Optional[int] = None) -> partition_builder.CensusResult:
        """
        Census of the Omega-partition
        Omega 划分普查
        """
        J = J or self.consts.j0 + 100
        return partition_builder.partition_census(self.params, self.consts, samples, seed, J,
                                                  status_callback=self.status_callback)

    def partition_bounds(self, census: partition_builder.CensusResult) -> Dict[str, Any]:
        """
        Limsup cover sum at s = D and the subgraph Lipschitz constants of the occupied Omega_j
        划分的覆盖和与子图 Lipschitz 常数
        """
        sums = partition_builder.limsup_cover_sums(self.consts, float(self.params.D), census.J)
        occupied = [int(row["j"]) for row in census.rows if row["j"] not in ("0", "inf")]
        return {
            "limsup_cover_sum": float(sums[-1]),
            "subgraph_log_lipschitz": {str(j): partition_builder.subgraph_lipschitz(self.consts, j) for j in occupied},
        }

    # ------------------------------------------------------------------
    # pinched
    # ------------------------------------------------------------------

    def pinched(self, theta: Optional[TorusPoint], t: int, n_check: Optional[int] = None) -> Dict[str, Any]:
        """
        Lower bound eps for phi^+ at theta, cross-checked against phi_n
        theta 处 phi^+ 的下界 eps
        """
        if theta is None:
            theta = TorusPoint(tuple(wrap(self.params.star + 0.5)))
        eps = bounding_lines.pinched_lower_bound(self.params, self.consts, theta, self.q, t)
        n_check = n_check or 10 * t
        value = bounding_lines.phi_n(self.params, theta, n_check)
        glyph = "✅" if value >= eps else "⚠️"
        self.status_callback(f"{glyph} eps = {eps:.6e}, phi_{n_check} = {value:.6e}")
        return {"theta": list(theta.coords), "q": self.q, "t": t, "epsilon": eps,
                "n_check": n_check, "phi_n": value, "holds": value >= eps}

    # ------------------------------------------------------------------
    # verify
    # ------------------------------------------------------------------

    def verify(self, prop: str, n: int, pairs: int, seed: int, depths: Sequence[int] = (),
               M: int = 1000) -> ConditionReport:
        """
        Sampled verifiers for the phi_n estimates, the s-bound and off-peak decay
        phi_n 估计、s 界与峰外衰减的抽样验证
        """
        if prop not in PROPS:
            raise ConfigError(f"unknown property {prop!r}; choose from {', '.join(PROPS)}")
        if prop == "sbound":
            return bounding_lines.verify_s_bound(self.params, self.consts, n, self.q, pairs, seed,
                                                 status_callback=self.status_callback)
        if prop == "decay":
            return self._decay_report(depths or range(50, 301, 25), M)
        return bounding_lines.verify_prop41(self.params, self.consts, n, self.q, pairs, seed, parts=(prop,),
                                            status_callback=self.status_callback)

    def _decay_report(self, depths: Sequence[int], M: int) -> ConditionReport:
        fit = bounding_lines.offpeak_decay(self.params, self.consts, depths, M, self.q)
        passed = fit.slope < 0 and fit.r2 >= DECAY_MIN_R2
        entry = ConditionEntry("decay", f"sup off-peak |phi_n - phi_(n-1)| decays geometrically "
                               f"(r2={fit.r2:.4f}, {fit.dropped} depths with a vanishing decrement)",
                               fit.slope, 0.0, passed, -fit.slope, kind="fitted",
                               status="pass" if passed else "fail", count=len(fit.depths))
        notes = [f"depths = {fit.depths}", f"log decrements = {fit.log_decrements}",
                 f"log-decrement slope {fit.slope!r}, intercept {fit.intercept!r}, grid M = {M}"]
        self.status_callback(f"{'✅' if passed else '⚠️'} decay slope {fit.slope:.4f}, r2 {fit.r2:.4f}")
        return ConditionReport(entries=[entry], constants=self.consts, notes=notes)
