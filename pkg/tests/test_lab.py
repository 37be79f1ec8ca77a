import numpy as np
import pytest

from sna_lab import SNALab
from sna_lab.core.dimension_lab import geometric_ladder
from sna_lab.core.errors import ConfigError
from sna_lab.core.torus_dynamics import SystemParams
from sna_lab.utils.sampling import grid_points


@pytest.fixture(scope="module")
def lab():
    return SNALab(SystemParams(kappa=3.0))


def test_lab_rejects_bad_offset():
    with pytest.raises(ConfigError):
        SNALab(SystemParams(kappa=3.0), q=0)


def test_check_records_certification(lab):
    report = lab.check(N=1000, pitch=0.02, horizon=10000)
    assert not report.overall
    assert any("Diophantine condition certified" in note for note in report.notes)
    assert any(note.startswith("peak-ball overlaps to j=1000") for note in report.notes)
    assert any(note.startswith("return times to N=1000") for note in report.notes)
    assert any("cover cost at s=D=1: divergent" in note for note in report.notes)


def test_graph_yields_each_depth(lab):
    samples = list(lab.graph(16, 3))
    assert [s.n for s in samples] == [1, 2, 3]
    last = list(lab.graph(16, 3, last_only=True))
    assert len(last) == 1
    assert np.array_equal(last[0].values, samples[-1].values)


def test_measure_with_auto_depth(lab):
    ladder = geometric_ladder(2.0 ** -3, 2.0 ** -8)
    sample = lab.measure(2000, "auto", ladder, seed=1, depth_grid=256, n_max=300)
    assert sample.n >= lab.consts.m + 1
    assert sample.tolerance > 0
    fixed = lab.measure(2000, 40, ladder, seed=1)
    assert fixed.n == 40
    assert fixed.tolerance == 0.0


def test_grid_sample_records_box_slopes(lab):
    ladder = geometric_ladder(2.0 ** -3, 2.0 ** -10)
    grid = lab.measure(2 ** 16, 68, ladder, seed=1, grid_sample=True)
    assert grid.seed is None
    assert np.array_equal(grid.thetas, grid_points(2 ** 16))
    random = lab.measure(2 ** 16, 68, ladder, seed=1)
    for sample in (grid, random):
        estimate = lab.dims("box", sample, ladder, 1, seed=1)
        assert set(estimate.extra) >= {"coarse_slope", "fine_slope"}
        assert 0.8 < estimate.slope < 2.0
        assert np.isfinite(estimate.extra["coarse_slope"])
        assert np.isfinite(estimate.extra["fine_slope"])


def test_pointwise_dims_include_survey(lab):
    ladder = geometric_ladder(2.0 ** -3, 2.0 ** -7)
    sample = lab.measure(20000, 60, ladder, seed=2)
    estimate = lab.dims("pointwise", sample, ladder, 20, seed=2)
    assert estimate.method == "pointwise"
    assert "survey_median" in estimate.extra
    with pytest.raises(ConfigError):
        lab.dims("fractal", sample, ladder, 20, seed=2)


def test_lyapunov_modes(lab):
    out = lab.lyapunov(200, 20000, 200000, mode="both")
    assert out["zero_line"]["birkhoff"] == pytest.approx(np.log(1.5), abs=2e-3)
    assert out["graph"]["value"] < 0
    assert "graph" not in lab.lyapunov(50, 2000, 2000, mode="zero")
    with pytest.raises(ConfigError):
        lab.lyapunov(50, 2000, 2000, mode="both-ways")


def test_pinched_cross_check(lab):
    out = lab.pinched(None, 200)
    assert out["epsilon"] > 0
    assert out["n_check"] == 2000
    assert out["holds"]


def test_partition_defaults_to_j0_plus_100(lab):
    census = lab.partition(1000, seed=0)
    assert census.J == lab.consts.j0 + 100


def test_partition_bounds_cover_the_occupied_sets(lab):
    census = lab.partition(20000, seed=3)
    bounds = lab.partition_bounds(census)
    ratio = lab.consts.a_eff ** (-1.0 / lab.consts.m)
    assert 0 < bounds["limsup_cover_sum"] <= lab.consts.b / (1 - ratio) * (1 + 1e-12)
    occupied = [row["j"] for row in census.rows[1:-1]]
    assert list(bounds["subgraph_log_lipschitz"]) == occupied
    values = list(bounds["subgraph_log_lipschitz"].values())
    assert values == sorted(values)


def test_decay_verification(lab):
    report = lab.verify("decay", 0, 0, 0, M=1000)
    entry = report.entry("decay")
    assert entry.kind == "fitted"
    assert entry.count == 11
    assert "0 depths with a vanishing decrement" in entry.description
    assert entry.lhs < 0
    with pytest.raises(ConfigError):
        lab.verify("41iv", 100, 10, 0)
