import math
from dataclasses import replace

import numpy as np
import pytest

from sna_lab.core.constants_gate import hausdorff_finiteness_threshold, hausdorff_ratio_threshold
from sna_lab.core.dimension_lab import (
    DENSITY_CONVENTION,
    MeasureSample,
    box_dimension,
    cover_cost,
    default_ladder,
    default_window,
    density_profile,
    geometric_ladder,
    graph_lyapunov,
    graph_variation,
    information_dimension,
    pinched_fraction,
    pointwise_dimension,
    pointwise_survey,
    sample_measure,
)
from sna_lab.core.errors import ConfigError, NumericFailure
from sna_lab.core.torus_dynamics import SystemParams, TorusPoint
from sna_lab.utils.sampling import grid_points, make_rng


@pytest.fixture(scope="module")
def line_sample():
    """Lebesgue measure on the horizontal line x = 1/2"""
    M = 100000
    return MeasureSample(grid_points(M), np.full(M, 0.5), n=0)


@pytest.fixture(scope="module")
def area_sample():
    """Lebesgue measure on T^1 x [0, 1]"""
    coords = make_rng(11).random((400000, 2))
    return MeasureSample.from_coords(coords)


def test_ladders():
    ladder = geometric_ladder(2.0 ** -3, 2.0 ** -12, 0.5)
    assert len(ladder) == 10
    assert ladder[0] == 0.125
    assert ladder[-1] == 2.0 ** -12
    assert default_ladder(1e6)[-1] == 2.0 ** -14
    assert default_ladder(1024)[-1] == 4.0 / 1024
    assert default_window(10) == (2, 8)
    assert default_window(5) == (0, 5)
    with pytest.raises(ConfigError):
        geometric_ladder(0.1, 0.2, 0.5)
    with pytest.raises(ConfigError):
        geometric_ladder(0.2, 0.1, 1.5)


def test_box_dimension_of_a_point():
    sample = MeasureSample(np.array([[0.3]]), np.array([0.5]), n=0, resolution=1e6)
    estimate = box_dimension(sample, geometric_ladder(2.0 ** -3, 2.0 ** -10))
    assert estimate.slope == 0.0


def test_box_dimension_of_a_line(line_sample):
    estimate = box_dimension(line_sample, geometric_ladder(2.0 ** -3, 2.0 ** -10))
    assert estimate.slope == pytest.approx(1.0, abs=0.05)
    assert estimate.accepted


def test_box_dimension_of_an_area(area_sample):
    estimate = box_dimension(area_sample, geometric_ladder(2.0 ** -3, 2.0 ** -7))
    assert estimate.slope == pytest.approx(2.0, abs=0.05)


def test_box_dimension_refuses_undersampled_ladder():
    sample = MeasureSample.from_coords(make_rng(0).random((100, 2)))
    with pytest.raises(NumericFailure):
        box_dimension(sample, geometric_ladder(2.0 ** -3, 2.0 ** -12))


def test_information_dimension_of_a_line(line_sample):
    estimate = information_dimension(line_sample, geometric_ladder(2.0 ** -3, 2.0 ** -10), 200, seed=1)
    assert estimate.slope == pytest.approx(1.0, abs=0.05)
    assert estimate.r2 >= 0.98
    assert estimate.seed == 1
    assert "pointwise_p10" in estimate.to_dict()


def test_information_dimension_of_an_area(area_sample):
    estimate = information_dimension(area_sample, geometric_ladder(2.0 ** -4, 2.0 ** -8), 200, seed=2)
    assert estimate.slope == pytest.approx(2.0, abs=0.05)


def test_information_slope_lies_between_anchor_percentiles(line_sample, desk_params):
    ladder = geometric_ladder(2.0 ** -3, 2.0 ** -10)
    line = information_dimension(line_sample, ladder, 200, seed=3)
    assert line.extra["pointwise_p10"] - 1e-3 <= line.slope <= line.extra["pointwise_p90"] + 1e-3
    sample = sample_measure(desk_params, 200000, 68, seed=7)
    desk = information_dimension(sample, ladder, 300, seed=7)
    assert desk.extra["pointwise_p10"] <= desk.slope <= desk.extra["pointwise_p90"]
    assert 0.8 < desk.slope < 1.4


def test_information_dimension_needs_valid_anchor_count(line_sample):
    with pytest.raises(ConfigError):
        information_dimension(line_sample, [0.1, 0.05], 0, seed=0)


def test_pointwise_dimension_on_a_line(line_sample):
    anchor = (TorusPoint((0.5,)), 0.5)
    estimate = pointwise_dimension(line_sample, anchor, geometric_ladder(2.0 ** -3, 2.0 ** -10))
    assert estimate.slope == pytest.approx(1.0, abs=0.02)
    assert estimate.flags == []
    slopes = pointwise_survey(line_sample, geometric_ladder(2.0 ** -3, 2.0 ** -10), 50, seed=5)
    assert np.nanmedian(slopes) == pytest.approx(1.0, abs=0.02)


def test_pointwise_dimension_flags_zero_anchor():
    M = 20000
    sample = MeasureSample(grid_points(M), np.zeros(M), n=0)
    estimate = pointwise_dimension(sample, (TorusPoint((0.25,)), 0.0), geometric_ladder(2.0 ** -3, 2.0 ** -9))
    assert "atypical point" in estimate.flags


def test_density_profile_of_a_line(line_sample):
    profile = density_profile(line_sample, (TorusPoint((0.5,)), 0.5), geometric_ladder(2.0 ** -3, 2.0 ** -10), 1)
    assert profile.convention == DENSITY_CONVENTION
    for _, ratio in profile.rows:
        assert ratio == pytest.approx(1.0, rel=1e-2)
    assert profile.tail_spread < 1e-2


def test_sample_measure_is_reproducible(desk_params):
    a = sample_measure(desk_params, 500, 20, seed=9)
    b = sample_measure(desk_params, 500, 20, seed=9)
    assert np.array_equal(a.thetas, b.thetas)
    assert np.array_equal(a.phis, b.phis)
    assert np.all((a.phis >= 0) & (a.phis <= 1))
    grid = sample_measure(desk_params, 256, 5, grid=True)
    assert grid.seed is None
    assert grid.size == 256


def test_pinched_fraction():
    sample = MeasureSample(np.array([[0.1], [0.2], [0.3], [0.4]]), np.array([0.0, 0.5, 1e-13, 0.3]), n=0)
    assert pinched_fraction(sample) == 0.5


def test_measure_sample_validation():
    with pytest.raises(ConfigError):
        MeasureSample(np.array([[0.1]]), np.array([1.5]), n=0)
    with pytest.raises(ConfigError):
        MeasureSample(np.array([[0.1], [0.2]]), np.array([0.5]), n=0)


def test_zero_line_mode_matches_closed_form(desk_params):
    estimate = graph_lyapunov(desk_params, 0, 100000, zero_line=True)
    assert estimate.value == pytest.approx(math.log(1.5), abs=1e-3)
    assert estimate.excluded == 1


def test_attractor_exponent_is_negative(desk_params):
    estimate = graph_lyapunov(desk_params, 200, 20000)
    assert estimate.value < 0
    assert float(estimate) == estimate.value


def test_graph_lyapunov_refuses_coarse_grid(desk_params):
    with pytest.raises(NumericFailure):
        graph_lyapunov(desk_params, 10, 50)


def test_cover_cost_desk_scale_diverges(desk_consts):
    cost = cover_cost(desk_consts, 1.0, 50, 1)
    assert not cost.convergent
    assert np.all(np.diff(cost.log_partial_sums) > 0)
    heavy = cover_cost(desk_consts, 2.0 * hausdorff_ratio_threshold(desk_consts), 50, 1)
    assert heavy.convergent
    assert np.all(np.isfinite(heavy.partial_sums))
    assert heavy.partial_sums[-1] >= heavy.partial_sums[0]


def test_cover_cost_flag_matches_closed_form(desk_consts):
    rng = make_rng(123)
    for _ in range(100):
        alpha = float(rng.uniform(1.5, 50.0))
        a = float(rng.uniform(110.0, 1e8))
        s = float(rng.uniform(0.1, 5000.0))
        consts = replace(desk_consts, alpha=alpha, a=a)
        cost = cover_cost(consts, s, 5, 1)
        assert cost.convergent == (s > hausdorff_ratio_threshold(consts))


def test_cover_cost_validates_input(desk_consts):
    with pytest.raises(ConfigError):
        cover_cost(desk_consts, 0.0, 10, 1)
    with pytest.raises(ConfigError):
        cover_cost(desk_consts, 1.0, 10, 0)


def test_cover_cost_reports_finiteness_at_the_base_dimension(desk_consts):
    weak = replace(desk_consts, a=1.0)
    threshold = hausdorff_finiteness_threshold(weak)
    assert threshold == pytest.approx(desk_consts.m ** 2 * math.log(desk_consts.alpha))
    assert not cover_cost(weak, 1.0, 5, 1).finite_at_base_dimension
    assert cover_cost(weak, 1.0, 5, int(threshold) + 1).finite_at_base_dimension
    desk = cover_cost(desk_consts, 1.0, 5, 1)
    assert desk.finite_at_base_dimension == (1 > hausdorff_finiteness_threshold(desk_consts))


def test_graph_variation(desk_params):
    assert graph_variation(desk_params, 0, 1000) == 0.0
    coarse = graph_variation(desk_params, 20, 500)
    fine = graph_variation(desk_params, 20, 1000)
    assert fine >= coarse - 1e-12
    assert graph_variation(desk_params, 40, 20000) > graph_variation(desk_params, 10, 20000) + 1.0
    with pytest.raises(ConfigError):
        graph_variation(SystemParams(kappa=3.0, D=2), 5, 100)
