import json
import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from sna_lab.core.errors import ConfigError
from sna_lab.core.torus_dynamics import golden_rotation
from sna_lab.utils.compensated import CompensatedSum, frac_multiple, two_prod, two_sum
from sna_lab.utils.file_utils import atomic_write_text, csv_text, json_text
from sna_lab.utils.parallel import index_chunks, ordered_map, worker_count
from sna_lab.utils.sampling import grid_points, make_rng
from sna_lab.utils.validators import (
    parse_depths,
    parse_float_list,
    parse_ladder,
    parse_scale,
    validate_rho_spec,
)


def test_parse_scale():
    assert parse_scale("2^-3") == 0.125
    assert parse_scale("1e-3") == 0.001
    assert parse_scale(" 0.5 ") == 0.5
    for bad in ("abc", "-1", "0", "2^^3"):
        with pytest.raises(ConfigError):
            parse_scale(bad)


def test_parse_ladder():
    assert parse_ladder("2^-3:2^-12:0.5") == (0.125, 2.0 ** -12, 0.5)
    for bad in ("1:2:0.5", "0.5:0.1:1", "0.5:0.1"):
        with pytest.raises(ConfigError):
            parse_ladder(bad)


def test_validate_rho_spec():
    assert validate_rho_spec("golden", 1) == []
    assert validate_rho_spec("Default", 3) == []
    assert validate_rho_spec("0.1, 0.2", 2) == ["0.1", "0.2"]
    with pytest.raises(ConfigError):
        validate_rho_spec("golden", 2)
    with pytest.raises(ConfigError):
        validate_rho_spec("0.1", 2)
    with pytest.raises(ConfigError):
        validate_rho_spec("pi", 1)


def test_parse_depths_and_float_lists():
    assert parse_depths("50:300:25") == list(range(50, 301, 25))
    assert parse_depths("5,10") == [5, 10]
    with pytest.raises(ConfigError):
        parse_depths("0:3:1")
    with pytest.raises(ConfigError):
        parse_depths("a,b")
    assert parse_float_list("0.1,0.2", 2, "theta") == [0.1, 0.2]
    with pytest.raises(ConfigError):
        parse_float_list("0.1", 2, "theta")


def test_error_free_transformations():
    s, err = two_sum(1.0, 1e-17)
    assert (s, err) == (1.0, 1e-17)
    a, b = 0.1, 0.7
    p, e = two_prod(a, b)
    assert Fraction(p) + Fraction(e) == Fraction(a) * Fraction(b)


def test_compensated_sum_matches_fsum():
    values = [1.0] + [1e-16] * 1000 + [-1.0]
    total = CompensatedSum()
    for v in values:
        total.add(v)
    assert total.value == pytest.approx(math.fsum(values), rel=1e-12)
    block = CompensatedSum().add_array(np.full(10, 0.1))
    assert block.value == pytest.approx(1.0)


def test_frac_multiple_is_accurate():
    hi, lo = golden_rotation()
    mpmath.mp.prec = 200
    golden = (mpmath.sqrt(5) - 1) / 2
    ks = np.array([1, 1000, 10 ** 7, 10 ** 12])
    h, l = frac_multiple(ks, np.array([hi]), np.array([lo]))
    for k, hh, ll in zip(ks, h[:, 0], l[:, 0]):
        exact = int(k) * golden - mpmath.floor(int(k) * golden)
        diff = (float(hh) - float(exact)) + float(ll)
        assert abs(diff - round(diff)) < 1e-15


def test_json_text_is_deterministic():
    text = json_text({"b": np.float64(1.5), "a": [np.int64(2), float("nan")], "c": np.array([1.0, math.inf])})
    assert text.endswith("\n")
    payload = json.loads(text)
    assert list(payload) == ["a", "b", "c"]
    assert payload["a"] == [2, "nan"]
    assert payload["c"] == [1.0, "inf"]


def test_csv_text_uses_round_trip_floats():
    text = csv_text(["theta", "phi"], [[0.1, 1 / 3], [np.float64(0.5), np.int64(2)]])
    lines = text.splitlines()
    assert lines[0] == "theta,phi"
    assert float(lines[1].split(",")[1]) == 1 / 3
    assert lines[2] == "0.5,2"


def test_atomic_write_leaves_no_temp_files(tmp_path):
    target = atomic_write_text(tmp_path / "deep" / "out.csv", "x\n")
    assert target.read_text(encoding="utf-8") == "x\n"
    assert [p.name for p in target.parent.iterdir()] == ["out.csv"]


def test_chunks_and_ordered_map(monkeypatch):
    assert index_chunks(10, 4) == [(0, 4), (4, 8), (8, 10)]
    monkeypatch.setenv("SNA_THREADS", "4")
    assert ordered_map(lambda b: b[0], index_chunks(100, 7)) == list(range(0, 100, 7))
    monkeypatch.setenv("SNA_THREADS", "1")
    assert worker_count() == 1
    monkeypatch.setenv("SNA_THREADS", "many")
    assert worker_count() == 1


def test_sampling_helpers():
    assert np.array_equal(make_rng(5).random(4), make_rng(5).random(4))
    assert not np.array_equal(make_rng(5).random(4), make_rng(6).random(4))
    assert grid_points(4)[:, 0].tolist() == [0.0, 0.25, 0.5, 0.75]
    assert grid_points(100, 2).shape == (100, 2)
