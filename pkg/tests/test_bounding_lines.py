import math

import numpy as np
import pytest

from sna_lab.core.bounding_lines import (
    backward_orbits,
    block_decomposition,
    converge_phi,
    evaluate_phi,
    incremental_update,
    offpeak_decay,
    orbit_stats,
    phi_grid,
    phi_n,
    phi_decrement_values,
    phi_sweep,
    phi_values,
    pinched_lower_bound,
    step_error_budget,
    suffix_counts,
    verify_prop41,
    verify_s_bound,
)
from sna_lab.core.constants_gate import derive_constants
from sna_lab.core.errors import ConfigError, NumericFailure, PinchedOrbitError
from sna_lab.core.partition_builder import in_peak_union
from sna_lab.core.torus_dynamics import SystemParams, TorusPoint, rotate
from sna_lab.utils.sampling import grid_points, make_rng, uniform_torus


def test_depth_zero_is_the_top_line(desk_params):
    sample = phi_grid(desk_params, 64, 0)
    assert np.all(sample.values == 1.0)
    assert phi_n(desk_params, TorusPoint((0.3,)), 0) == 1.0


def test_phi_vanishes_on_the_pinched_orbit(desk_params):
    for k in range(1, 201):
        tau = rotate(desk_params.theta_star, k, desk_params)
        assert phi_n(desk_params, tau, k) == 0.0
        assert phi_n(desk_params, tau, 200) == 0.0


def test_first_line_closed_form(desk_params):
    rho = desk_params.rho.coords[0]
    theta = TorusPoint((rho + 0.5,))
    assert phi_n(desk_params, theta, 1) == pytest.approx(math.tanh(3.0), rel=1e-13)
    for t in (0.1, 0.37, 0.8):
        expected = math.tanh(3.0) * math.sin(math.pi * ((t - rho) % 1.0))
        assert phi_n(desk_params, TorusPoint((t,)), 1) == pytest.approx(expected, abs=1e-14)


def test_phi_n_validates_input(desk_params):
    with pytest.raises(ConfigError):
        phi_n(desk_params, TorusPoint((0.1,)), -1)
    with pytest.raises(ConfigError):
        phi_n(desk_params, TorusPoint((0.1, 0.2)), 3)
    with pytest.raises(ConfigError):
        phi_grid(desk_params, 1, 3)


def test_bounding_lines_decrease_monotonically(desk_params):
    previous = np.ones(1000)
    for sample in phi_sweep(desk_params, 1000, 60):
        assert np.all(sample.values <= previous + np.spacing(previous))
        previous = sample.values


def test_sweep_matches_direct_evaluation(desk_params):
    sweep = list(phi_sweep(desk_params, 257, 8))
    assert [s.n for s in sweep] == list(range(1, 9))
    for sample in sweep:
        assert np.array_equal(sample.values, phi_grid(desk_params, 257, sample.n).values)


def test_chunked_evaluation_is_bit_identical(desk_params, monkeypatch):
    thetas = (np.arange(3000) / 3000.0)[:, None]
    serial = phi_values(desk_params, thetas, 25)
    monkeypatch.setenv("SNA_CHUNK", "128")
    monkeypatch.setenv("SNA_THREADS", "4")
    assert np.array_equal(evaluate_phi(desk_params, thetas, 25), serial)


def test_grid_point_near_fifth_peak_is_pinched(desk_params):
    M = 10 ** 4
    tau5 = rotate(desk_params.theta_star, 5, desk_params).coords[0]
    index = int(round(tau5 * M)) % M
    sample = phi_grid(desk_params, M, 30)
    assert sample.values[index] < 1e-2


def test_conjugation_identity_on_approximants(desk_params):
    thetas = np.arange(1, 200) / 200.0
    rho = desk_params.rho.coords[0]
    for n in (5, 40):
        for t in thetas[::10]:
            now = phi_n(desk_params, TorusPoint((t,)), n)
            if now < 0.1:
                continue
            later = phi_n(desk_params, TorusPoint(((t + rho) % 1.0,)), n + 1)
            expected = math.tanh(3.0 * now) * math.sin(math.pi * t)
            assert later == pytest.approx(expected, abs=1e-12)


def test_error_budget_plug_in(desk_consts):
    assert step_error_budget(desk_consts, 100) == pytest.approx(7.9e-13, rel=0.05)


def test_incremental_update_needs_depth(desk_params, desk_consts):
    prev = phi_grid(desk_params, 100, 10)
    with pytest.raises(ConfigError):
        incremental_update(desk_params, desk_consts, prev)


def test_incremental_update_carries_off_peak_values(desk_params, desk_consts):
    prev = phi_grid(desk_params, 400, 68)
    updated, budget = incremental_update(desk_params, desk_consts, prev)
    assert updated.n == 69
    assert updated.approximate
    assert budget == updated.error_budget
    inside = in_peak_union(desk_params, desk_consts, prev.grid, 1, 69)
    assert np.array_equal(updated.values[~inside], prev.values[~inside])
    exact = phi_grid(desk_params, 400, 69).values
    assert np.array_equal(updated.values[inside], exact[inside])


def test_incremental_update_error_within_budget():
    params = SystemParams(kappa=1e6)
    consts = derive_constants(params)
    prev = phi_grid(params, 500, 68)
    updated, _ = incremental_update(params, consts, prev)
    exact = phi_grid(params, 500, 69).values
    assert np.max(np.abs(updated.values - exact)) <= updated.error_budget


def test_converge_phi_respects_depth_cap(desk_params, desk_consts):
    result = converge_phi(desk_params, desk_consts, 200, tol=0.0, n_max=68)
    assert not result.converged
    assert result.sample.n == 68
    loose = converge_phi(desk_params, desk_consts, 200, tol=1.0)
    assert loose.converged
    assert loose.sample.n == desk_consts.m + 1
    assert loose.decrement < 1.0


def test_carried_decrement_matches_subtraction_at_shallow_depth(desk_params):
    grid = grid_points(300)
    values, log_delta = phi_decrement_values(desk_params, grid, 5)
    assert np.array_equal(values, phi_values(desk_params, grid, 5))
    direct = np.abs(values - phi_values(desk_params, grid, 4))
    assert np.allclose(np.exp(log_delta), direct, rtol=1e-9, atol=1e-15)


def test_carried_decrement_survives_past_double_resolution(desk_params, desk_consts):
    grid = grid_points(200)
    _, log_delta = phi_decrement_values(desk_params, grid, 300)
    off_peak = ~in_peak_union(desk_params, desk_consts, grid, 1, 300)
    assert off_peak.sum() > 150
    assert np.all(np.isfinite(log_delta[off_peak]))
    assert np.max(log_delta[off_peak]) < math.log(1e-15)


def test_carried_decrement_vanishes_on_the_pinched_orbit(desk_params):
    tau = rotate(desk_params.theta_star, 1, desk_params)
    _, log_delta = phi_decrement_values(desk_params, tau.as_array()[None, :], 40)
    assert log_delta[0] == -math.inf


def test_offpeak_decrements_decay_from_depth_50_to_300(desk_params, desk_consts):
    depths = list(range(50, 301, 25))
    fit = offpeak_decay(desk_params, desk_consts, depths, 1000)
    assert fit.dropped == 0
    assert all(math.isfinite(v) for v in fit.log_decrements)
    assert fit.slope < 0
    assert fit.r2 >= 0.9
    assert fit.log_decrements[-1] < fit.log_decrements[0]


def test_offpeak_decay_needs_three_points(desk_params, desk_consts):
    with pytest.raises(NumericFailure):
        offpeak_decay(desk_params, desk_consts, [20, 40], 200)


def test_backward_orbit_ends_at_phi_n(desk_params):
    thetas = np.array([[0.13], [0.58], [0.91]])
    orbit = backward_orbits(desk_params, thetas, 40)
    assert orbit.shape == (3, 41)
    assert np.all(orbit[:, 0] == 1.0)
    assert np.array_equal(orbit[:, -1], phi_values(desk_params, thetas, 40))


def test_suffix_counts():
    counts = suffix_counts(np.array([True, False, True]))
    assert counts.tolist() == [2, 1, 1, 0]


def test_block_decomposition_on_synthetic_orbit():
    orbit = np.array([1.0, 0.9, 0.3, 0.05, 0.2, 0.8, 0.9, 0.9, 0.9, 0.9, 0.9])
    blocks = block_decomposition(orbit, L0=0.5, threshold=0.1, n=10, q=1)
    assert blocks == [(1, 2), (2, 4)]


def test_orbit_stats_far_from_zero():
    params = SystemParams(kappa=1e6)
    consts = derive_constants(params)
    stats = orbit_stats(params, consts, TorusPoint((0.5,)), 10)
    assert stats.s(10) == 0
    assert all(stats.s(k) == 0 for k in range(11))
    assert stats.blocks == []
    with pytest.raises(ConfigError):
        orbit_stats(params, consts, TorusPoint((0.5,)), 0)


def test_orbit_stats_counts_low_points(desk_params, desk_consts):
    stats = orbit_stats(desk_params, desk_consts, TorusPoint((0.27,)), 120)
    assert stats.s(120) == 0
    expected = int(np.sum(stats.orbit[:120] < desk_consts.L0))
    assert stats.s(0) == expected


def test_lipschitz_estimate_has_no_violations(desk_params, desk_consts):
    report = verify_prop41(desk_params, desk_consts, 30, 1, 2000, seed=1, parts=("41i",))
    entry = report.entry("41i")
    assert entry.passed
    assert entry.status == "pass"
    assert entry.count == 2000


def test_off_peak_estimates_report_pass_or_finding(desk_params, desk_consts):
    report = verify_prop41(desk_params, desk_consts, 100, 1, 1000, seed=2, parts=("41ii", "41iii"))
    for entry_id in ("41ii", "41iii"):
        entry = report.entry(entry_id)
        assert entry.count > 0
        assert entry.status == ("pass" if entry.passed else "finding")
    assert any("seed = 2" in note for note in report.notes)


def test_off_peak_estimates_need_depth(desk_params, desk_consts):
    with pytest.raises(ConfigError):
        verify_prop41(desk_params, desk_consts, 10, 1, 100, seed=0, parts=("41ii",))


def test_s_bound_report(desk_params, desk_consts):
    report = verify_s_bound(desk_params, desk_consts, 100, 1, 200, seed=4)
    entry = report.entry("sbound")
    assert entry.count > 0
    assert entry.status == ("pass" if entry.passed else "finding")
    with pytest.raises(ConfigError):
        verify_s_bound(desk_params, desk_consts, 30, 1, 10, seed=4)


def test_s_bound_holds_at_the_threshold_kappa(desk_consts):
    params = SystemParams(kappa=desk_consts.kappa0)
    consts = derive_constants(params)
    entry = verify_s_bound(params, consts, 200, 1, 1000, seed=4).entry("sbound")
    assert entry.status == "pass"
    assert entry.count >= 900
    assert entry.lhs <= 1.0


def test_pinched_lower_bound_holds(desk_params, desk_consts):
    theta = TorusPoint((0.5,))
    eps = pinched_lower_bound(desk_params, desk_consts, theta, 1, 200)
    assert eps > 0
    assert phi_n(desk_params, theta, 500) >= eps


def test_pinched_lower_bound_holds_across_off_peak_points(desk_params, desk_consts):
    candidates = uniform_torus(make_rng(12), 400, 1)
    thetas = candidates[~in_peak_union(desk_params, desk_consts, candidates, 1, 2000)][:100]
    assert len(thetas) == 100
    eps = np.array([pinched_lower_bound(desk_params, desk_consts, TorusPoint(tuple(theta)), 1, 200)
                    for theta in thetas])
    assert np.all(eps > 0)
    assert np.all(evaluate_phi(desk_params, thetas, 2000) >= eps)


def test_pinched_lower_bound_preconditions(desk_params, desk_consts):
    with pytest.raises(ConfigError):
        pinched_lower_bound(desk_params, desk_consts, TorusPoint((0.5,)), 1, 10)
    tau5 = rotate(desk_params.theta_star, 5, desk_params)
    with pytest.raises(ConfigError):
        pinched_lower_bound(desk_params, desk_consts, tau5, 1, 200)
    tau1 = rotate(desk_params.theta_star, 1, desk_params)
    with pytest.raises(PinchedOrbitError) as info:
        pinched_lower_bound(desk_params, desk_consts, tau1, 2, 2 * desk_consts.m)
    assert info.value.index == 1
